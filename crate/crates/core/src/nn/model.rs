use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::layers::{NumericalUpdate, TokenAttention};
use super::params::{Linear, ParamSet};
use super::spectral::SpectralPlan;
use super::tensor::Tensor;
use super::NnError;
use crate::scalar::Real;

/// Grid of a field: `n1 x n2` points, `n1 = 1` for one-dimensional data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub n1: usize,
    pub n2: usize,
}

impl FieldGrid {
    pub fn line(n: usize) -> Self {
        Self { n1: 1, n2: n }
    }

    pub fn plane(n1: usize, n2: usize) -> Self {
        Self { n1, n2 }
    }

    pub fn points(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn dims(&self) -> usize {
        if self.n1 == 1 {
            1
        } else {
            2
        }
    }

    /// Normalized coordinate channels `[points, dims]` in `[0, 1)`.
    pub fn coordinates<S: Real>(&self) -> Tensor<S> {
        let d = self.dims();
        let mut t = Tensor::zeros(self.points(), d);
        for i in 0..self.n1 {
            for j in 0..self.n2 {
                let p = i * self.n2 + j;
                *t.at_mut(p, d - 1) = S::lit(j as f64 / self.n2 as f64);
                if d == 2 {
                    *t.at_mut(p, 0) = S::lit(i as f64 / self.n1 as f64);
                }
            }
        }
        t
    }
}

/// One model evaluation: field frames as channels, equation tokens, target time.
#[derive(Debug, Clone)]
pub struct ModelInput<S> {
    pub grid: FieldGrid,
    /// `[points, frames]`.
    pub frames: Tensor<S>,
    /// Normalized token values; ignored by the FNO baseline.
    pub tokens: Vec<S>,
    pub time: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FnoConfig {
    pub dims: usize,
    pub in_frames: usize,
    pub width: usize,
    pub modes1: usize,
    pub modes2: usize,
    pub layers: usize,
    pub proj_width: usize,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PittConfig {
    pub backbone: FnoConfig,
    pub hidden: usize,
    pub heads: usize,
    pub layers: usize,
    pub tokens: usize,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Pitt(PittConfig),
    Fno(FnoConfig),
}

impl ModelConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::Pitt(_) => "pitt",
            ModelConfig::Fno(_) => "fno",
        }
    }

    pub fn backbone(&self) -> &FnoConfig {
        match self {
            ModelConfig::Pitt(p) => &p.backbone,
            ModelConfig::Fno(f) => f,
        }
    }
}

/// Lift, Fourier layers (spectral + pointwise paths), projection head.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FnoLayout {
    lift: Linear,
    spectral: Vec<(usize, usize)>,
    pointwise: Vec<Linear>,
    proj1: Linear,
    proj2: Linear,
}

impl FnoLayout {
    fn new<S: Real>(ps: &mut ParamSet<S>, prefix: &str, c: &FnoConfig, rng: &mut ChaCha8Rng) -> Result<Self, NnError> {
        if c.dims != 1 && c.dims != 2 {
            return Err(NnError::Config(format!("unsupported dimension {}", c.dims)));
        }
        if c.layers == 0 || c.width == 0 || c.in_frames == 0 || c.modes2 == 0 || (c.dims == 2 && c.modes1 == 0) {
            return Err(NnError::Config(format!("degenerate FNO configuration {c:?}")));
        }
        let lift = Linear::new(ps, &format!("{prefix}.lift"), c.in_frames + c.dims, c.width, rng);
        let modes = if c.dims == 1 { c.modes2 } else { 2 * c.modes1 * c.modes2 };
        let scale = 1.0 / (c.width * c.width) as f64;
        let mut spectral = Vec::with_capacity(c.layers);
        let mut pointwise = Vec::with_capacity(c.layers);
        for l in 0..c.layers {
            let wr = ps.add_uniform(format!("{prefix}.fourier{l}.real"), modes * c.width, c.width, scale, rng);
            let wi = ps.add_uniform(format!("{prefix}.fourier{l}.imag"), modes * c.width, c.width, scale, rng);
            spectral.push((wr, wi));
            pointwise.push(Linear::new(ps, &format!("{prefix}.pointwise{l}"), c.width, c.width, rng));
        }
        let proj1 = Linear::new(ps, &format!("{prefix}.proj1"), c.width, c.proj_width, rng);
        let proj2 = Linear::new(ps, &format!("{prefix}.proj2"), c.proj_width, 1, rng);
        Ok(Self { lift, spectral, pointwise, proj1, proj2 })
    }

    fn plan<S: Real>(&self, c: &FnoConfig, grid: FieldGrid) -> Result<Arc<SpectralPlan<S>>, NnError> {
        if grid.dims() != c.dims {
            return Err(NnError::Shape(format!("{}D model given a {}D grid", c.dims, grid.dims())));
        }
        SpectralPlan::new(grid.n1, grid.n2, c.modes1, c.modes2).map(Arc::new).map_err(NnError::Config)
    }

    /// Hidden field `[points, width]` after the Fourier layers.
    fn hidden<S: Real>(&self, g: &mut Graph<'_, S>, c: &FnoConfig, input: &ModelInput<S>) -> Result<Var, NnError> {
        let (n, f) = input.frames.shape();
        if n != input.grid.points() || f != c.in_frames {
            return Err(NnError::Shape(format!(
                "frames {:?} vs grid {:?} with {} input frames",
                input.frames.shape(),
                input.grid,
                c.in_frames
            )));
        }
        let plan = self.plan(c, input.grid)?;
        let x = g.input(input.frames.clone());
        let coords = g.input(input.grid.coordinates());
        let x = g.concat_cols(&[x, coords]);
        let mut h = self.lift.apply(g, x);
        for l in 0..c.layers {
            let (wr, wi) = self.spectral[l];
            let (wr, wi) = (g.param(wr), g.param(wi));
            let s = g.spectral(h, wr, wi, plan.clone());
            let p = self.pointwise[l].apply(g, h);
            h = g.add(s, p);
            if l + 1 < c.layers {
                h = g.gelu(h);
            }
            h = g.dropout(h, c.dropout);
        }
        Ok(h)
    }

    fn project<S: Real>(&self, g: &mut Graph<'_, S>, h: Var) -> Var {
        let p = self.proj1.apply(g, h);
        let p = g.gelu(p);
        self.proj2.apply(g, p)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PittLayout {
    backbone: FnoLayout,
    token: TokenAttention,
    embed_field: Linear,
    update: NumericalUpdate,
    out: Linear,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Layout {
    Pitt(PittLayout),
    Fno(FnoLayout),
}

/// Weights plus the index layout that maps them onto the architecture.
#[derive(Debug, Clone)]
pub struct Model<S: Real> {
    pub config: ModelConfig,
    pub params: ParamSet<S>,
    layout: Layout,
}

/// PITT prediction split into its two additive components.
pub struct Decomposition {
    pub passthrough: Var,
    pub update: Var,
}

impl<S: Real> Model<S> {
    /// Builds a model with weights drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::default();
        let layout = match &config {
            ModelConfig::Fno(c) => Layout::Fno(FnoLayout::new(&mut ps, "fno", c, &mut rng)?),
            ModelConfig::Pitt(c) => {
                let backbone = FnoLayout::new(&mut ps, "fno", &c.backbone, &mut rng)?;
                let token = TokenAttention::new(&mut ps, c.tokens, c.hidden, c.heads, c.dropout, &mut rng)?;
                let embed_field = Linear::new(&mut ps, "update.embed", c.backbone.width, c.hidden, &mut rng);
                let update = NumericalUpdate::new(&mut ps, c.hidden, c.heads, c.layers, c.dropout, &mut rng)?;
                let out = Linear::new(&mut ps, "update.out", c.hidden, 1, &mut rng);
                Layout::Pitt(PittLayout { backbone, token, embed_field, update, out })
            }
        };
        Ok(Self { config, params: ps, layout })
    }

    /// Replaces the weights, checking names and shapes.
    pub fn load_params(&mut self, params: ParamSet<S>) -> Result<(), NnError> {
        if params.names() != self.params.names() {
            return Err(NnError::Config("parameter names do not match the architecture".into()));
        }
        for (i, (a, b)) in params.tensors.iter().zip(&self.params.tensors).enumerate() {
            if a.shape() != b.shape() {
                return Err(NnError::Config(format!("parameter {} has shape {:?}, expected {:?}", params.name(i), a.shape(), b.shape())));
            }
        }
        self.params = params;
        Ok(())
    }

    pub fn is_pitt(&self) -> bool {
        matches!(self.layout, Layout::Pitt(_))
    }

    /// Prediction `[points, 1]` for one input.
    pub fn forward(&self, g: &mut Graph<'_, S>, input: &ModelInput<S>) -> Result<Var, NnError> {
        match &self.layout {
            Layout::Fno(l) => {
                let ModelConfig::Fno(c) = &self.config else { unreachable!() };
                let h = l.hidden(g, c, input)?;
                Ok(l.project(g, h))
            }
            Layout::Pitt(_) => {
                let d = self.decompose(g, input)?;
                Ok(g.add(d.passthrough, d.update))
            }
        }
    }

    /// Passthrough and update fields; [`Self::forward`] returns their sum.
    pub fn decompose(&self, g: &mut Graph<'_, S>, input: &ModelInput<S>) -> Result<Decomposition, NnError> {
        let (Layout::Pitt(l), ModelConfig::Pitt(c)) = (&self.layout, &self.config) else {
            return Err(NnError::Config("decomposition is only defined for PITT".into()));
        };
        let h = l.backbone.hidden(g, &c.backbone, input)?;
        let passthrough = l.backbone.project(g, h);
        let latent = l.token.forward(g, &input.tokens)?.latent;
        let v0 = l.embed_field.apply(g, h);
        let v = l.update.forward(g, v0, latent, input.time)?;
        let update = l.out.apply(g, v);
        Ok(Decomposition { passthrough, update })
    }

    /// Post-softmax, pre-dropout token attention weights, one `[P, P]` map per head.
    pub fn attention_weights(&self, tokens: &[S]) -> Result<Vec<Tensor<S>>, NnError> {
        let Layout::Pitt(l) = &self.layout else {
            return Err(NnError::Config("the FNO baseline has no token attention".into()));
        };
        let mut g = Graph::new(&self.params.tensors);
        let out = l.token.forward(&mut g, tokens)?;
        Ok(out.weights.iter().map(|&w| g.value(w).clone()).collect())
    }

    /// Latent equation representation `[P, hidden]` in evaluation mode.
    pub fn token_latent(&self, tokens: &[S]) -> Result<Tensor<S>, NnError> {
        let Layout::Pitt(l) = &self.layout else {
            return Err(NnError::Config("the FNO baseline has no token attention".into()));
        };
        let mut g = Graph::new(&self.params.tensors);
        let out = l.token.forward(&mut g, tokens)?;
        Ok(g.value(out.latent).clone())
    }

    /// Evaluation-mode prediction as a flat vector.
    pub fn predict(&self, input: &ModelInput<S>) -> Result<Vec<S>, NnError> {
        let mut g = Graph::new(&self.params.tensors);
        let y = self.forward(&mut g, input)?;
        Ok(g.value(y).data.clone())
    }

    /// Zeroes the output layer of every update MLP and the update projection.
    pub fn zero_update(&mut self, include_output: bool) {
        let Layout::Pitt(l) = &self.layout else { return };
        let mut targets: Vec<usize> = l.update.final_layers().flat_map(|lin| [Some(lin.w), lin.b]).flatten().collect();
        if include_output {
            targets.extend([Some(l.out.w), l.out.b].into_iter().flatten());
        }
        for i in targets {
            self.params.tensors[i].data.iter_mut().for_each(|v| *v = S::zero());
        }
    }

    /// Zeroes every parameter (the FNO of a zero model outputs zeros).
    pub fn zero_all(&mut self) {
        for t in &mut self.params.tensors {
            t.data.iter_mut().for_each(|v| *v = S::zero());
        }
    }

    /// Runs only the numerical update on an explicit `V0` and latent.
    pub fn numerical_update(&self, g: &mut Graph<'_, S>, v0: Var, latent: Var, t: S) -> Result<Var, NnError> {
        let Layout::Pitt(l) = &self.layout else {
            return Err(NnError::Config("the FNO baseline has no numerical update".into()));
        };
        l.update.forward(g, v0, latent, t)
    }
}
