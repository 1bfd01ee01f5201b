//! Physics-informed token transformer workbench: equation tokenization, PDE
//! data generation, operator models, training and evaluation.

pub mod container;
pub mod eqtok;
pub mod evalkit;
pub mod nn;
pub mod pde1d;
pub mod pde2d;
pub mod pipeline;
pub mod scalar;
pub mod train;

pub use scalar::Real;

pub type Tensor32 = nn::Tensor<f32>;
pub type Tensor64 = nn::Tensor<f64>;
pub type Model32 = nn::Model<f32>;
pub type Model64 = nn::Model<f64>;
