//! Differentiable building blocks, the FNO baseline and PITT.

pub mod graph;
pub mod layers;
pub mod model;
pub mod params;
pub mod spectral;
pub mod tensor;

use thiserror::Error;

pub use graph::{Graph, Var};
pub use layers::{linear_attention, positional_encoding, NumericalUpdate, TokenAttention};
pub use model::{Decomposition, FieldGrid, FnoConfig, Model, ModelConfig, ModelInput, PittConfig};
pub use params::{Linear, ParamSet};
pub use spectral::SpectralPlan;
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("configuration error: {0}")]
    Config(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn toy_pitt(dims: usize, layers: usize) -> ModelConfig {
        ModelConfig::Pitt(PittConfig {
            backbone: FnoConfig { dims, in_frames: 2, width: 6, modes1: 2, modes2: 2, layers: 3, proj_width: 5, dropout: 0.1 },
            hidden: 4,
            heads: 2,
            layers,
            tokens: 6,
            dropout: 0.1,
        })
    }

    fn toy_input(rng: &mut ChaCha8Rng, grid: FieldGrid, frames: usize, tokens: usize) -> ModelInput<f64> {
        ModelInput {
            grid,
            frames: Tensor::from_vec(grid.points(), frames, (0..grid.points() * frames).map(|_| rng.gen_range(-1.0..1.0)).collect()),
            tokens: (0..tokens).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            time: 0.7,
        }
    }

    #[test]
    fn decomposition_sums_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = Model::<f64>::new(toy_pitt(1, 2), 1).unwrap();
        let input = toy_input(&mut rng, FieldGrid::line(16), 2, 6);
        let mut g = Graph::new(&m.params.tensors);
        let d = m.decompose(&mut g, &input).unwrap();
        let sum: Vec<f64> = g.value(d.passthrough).data.iter().zip(&g.value(d.update).data).map(|(a, b)| a + b).collect();
        assert_eq!(sum, m.predict(&input).unwrap());
    }

    #[test]
    fn fno_shapes_and_zero_weights() {
        let cfg = FnoConfig { dims: 2, in_frames: 1, width: 4, modes1: 2, modes2: 2, layers: 3, proj_width: 4, dropout: 0.0 };
        let mut m = Model::<f64>::new(ModelConfig::Fno(cfg), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let small = toy_input(&mut rng, FieldGrid::plane(8, 8), 1, 0);
        let big = toy_input(&mut rng, FieldGrid::plane(16, 16), 1, 0);
        assert_eq!(m.predict(&small).unwrap().len(), 64);
        assert_eq!(m.predict(&big).unwrap().len(), 256);
        m.zero_all();
        assert!(m.predict(&big).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn modes_beyond_nyquist_rejected() {
        let cfg = FnoConfig { dims: 1, in_frames: 1, width: 4, modes1: 0, modes2: 9, layers: 3, proj_width: 4, dropout: 0.0 };
        let m = Model::<f64>::new(ModelConfig::Fno(cfg), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(matches!(m.predict(&toy_input(&mut rng, FieldGrid::line(16), 1, 0)), Err(NnError::Config(_))));
    }

    #[test]
    fn token_length_checked() {
        let m = Model::<f64>::new(toy_pitt(1, 1), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let input = toy_input(&mut rng, FieldGrid::line(16), 2, 5);
        assert!(matches!(m.predict(&input), Err(NnError::Shape(_))));
    }

    #[test]
    fn token_block_sees_order() {
        let m = Model::<f64>::new(toy_pitt(1, 1), 3).unwrap();
        let tokens = vec![-1.0, -0.5, 0.2, 0.9, 1.0, 1.0];
        let mut swapped = tokens.clone();
        swapped.swap(0, 2);
        assert_eq!(m.token_latent(&tokens).unwrap(), m.token_latent(&tokens).unwrap());
        assert_ne!(m.token_latent(&tokens).unwrap(), m.token_latent(&swapped).unwrap());
    }

    fn loss(m: &Model<f64>, params: &[Tensor<f64>], input: &ModelInput<f64>, target: &Tensor<f64>) -> (f64, Vec<Option<Tensor<f64>>>) {
        let mut g = Graph::new(params);
        let y = m.forward(&mut g, input).unwrap();
        let t = g.input(target.clone());
        let l = g.mean_square(y, t);
        (g.value(l).data[0], g.backward(l))
    }

    #[test]
    fn pitt_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for grid in [FieldGrid::line(16), FieldGrid::plane(4, 4)] {
            let m = Model::<f64>::new(toy_pitt(grid.dims(), 2), 9).unwrap();
            let input = toy_input(&mut rng, grid, 2, 6);
            let target = Tensor::from_vec(16, 1, (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let (_, grads) = loss(&m, &m.params.tensors, &input, &target);
            for (pi, p) in m.params.tensors.iter().enumerate() {
                let ga = grads[pi].as_ref().unwrap_or_else(|| panic!("no gradient for {}", m.params.name(pi)));
                let mut fd = vec![0.0; p.len()];
                for (k, f) in fd.iter_mut().enumerate() {
                    let h = 1e-5;
                    let mut plus = m.params.tensors.clone();
                    plus[pi].data[k] += h;
                    let mut minus = m.params.tensors.clone();
                    minus[pi].data[k] -= h;
                    *f = (loss(&m, &plus, &input, &target).0 - loss(&m, &minus, &input, &target).0) / (2.0 * h);
                }
                let diff: f64 = fd.iter().zip(&ga.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let scale = fd.iter().map(|a| a * a).sum::<f64>().sqrt().max(ga.norm()).max(1e-12);
                assert!(diff / scale < 1e-4, "{}: relative error {}", m.params.name(pi), diff / scale);
            }
        }
    }
}
