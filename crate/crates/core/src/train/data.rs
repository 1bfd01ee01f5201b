use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Regime, SplitKey};
use super::TrainError;
use crate::container::{DatasetContainer, SampleData};
use crate::eqtok::{tokenize_equation, Family};
use crate::nn::{FieldGrid, ModelInput, Tensor};
use crate::scalar::Real;

/// Input frames per 1D next-step window.
pub const WINDOW_1D: usize = 10;
/// Input frames of the fixed-future regime.
pub const FIXED_FUTURE_FRAMES: usize = 41;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Val,
    Test,
}

/// Per-sample partition assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub key: SplitKey,
    pub seed: u64,
    pub assignment: Vec<Partition>,
}

impl SplitPlan {
    pub fn indices(&self, part: Partition) -> Vec<usize> {
        self.assignment.iter().enumerate().filter(|(_, p)| **p == part).map(|(i, _)| i).collect()
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let c = |p| self.assignment.iter().filter(|&&a| a == p).count();
        (c(Partition::Train), c(Partition::Val), c(Partition::Test))
    }
}

/// Splits by group (trajectory or initialization) or per sample with the
/// given train/validation fractions; the remainder is the test partition.
pub fn split_dataset(
    container: &DatasetContainer,
    key: SplitKey,
    seed: u64,
    train_frac: f64,
    val_frac: f64,
) -> Result<SplitPlan, TrainError> {
    let family = container.family();
    match key {
        SplitKey::EquationLevel if !family.is_1d() => {
            return Err(TrainError::Config(format!("equation-level split needs a 1D dataset, got {}", family.name())));
        }
        SplitKey::InitialConditionLevel if family != Family::NavierStokes => {
            return Err(TrainError::Config(format!(
                "initial-condition split needs a Navier-Stokes dataset, got {}",
                family.name()
            )));
        }
        _ => {}
    }
    let mut groups: Vec<u64> = match key {
        SplitKey::Random => (0..container.len() as u64).collect(),
        _ => container.samples.iter().map(|s| s.group).collect::<BTreeSet<_>>().into_iter().collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);
    let g = groups.len();
    let n_train = (train_frac * g as f64).round() as usize;
    let n_val = ((val_frac * g as f64).round() as usize).min(g - n_train.min(g));
    let part_of = |rank: usize| {
        if rank < n_train {
            Partition::Train
        } else if rank < n_train + n_val {
            Partition::Val
        } else {
            Partition::Test
        }
    };
    let assignment = match key {
        SplitKey::Random => {
            let mut a = vec![Partition::Test; g];
            for (rank, &s) in groups.iter().enumerate() {
                a[s as usize] = part_of(rank);
            }
            a
        }
        _ => {
            let rank: std::collections::HashMap<u64, usize> = groups.iter().enumerate().map(|(r, &k)| (k, r)).collect();
            container.samples.iter().map(|s| part_of(rank[&s.group])).collect()
        }
    };
    let plan = SplitPlan { key, seed, assignment };
    check_leakage(container, &plan)?;
    Ok(plan)
}

/// Under grouped splits no group, and no equation (spec without its target
/// time), may appear in both the training and the test partition.
pub fn check_leakage(container: &DatasetContainer, plan: &SplitPlan) -> Result<(), TrainError> {
    if plan.assignment.len() != container.len() {
        return Err(TrainError::Data("split plan does not match the dataset size".into()));
    }
    if plan.key == SplitKey::Random {
        return Ok(());
    }
    let keys = |part: Partition| -> BTreeSet<(u64, Option<String>)> {
        plan.indices(part)
            .into_iter()
            .map(|i| {
                let s = &container.samples[i];
                let eq = (plan.key == SplitKey::EquationLevel)
                    .then(|| serde_json::to_string(&s.spec.with_target_time(0.0)).expect("spec serializes"));
                (s.group, eq)
            })
            .collect()
    };
    let train = keys(Partition::Train);
    let test = keys(Partition::Test);
    let train_groups: BTreeSet<u64> = train.iter().map(|k| k.0).collect();
    let train_eqs: BTreeSet<&String> = train.iter().filter_map(|k| k.1.as_ref()).collect();
    for (group, eq) in &test {
        if train_groups.contains(group) || eq.as_ref().is_some_and(|e| train_eqs.contains(e)) {
            return Err(TrainError::Data(format!("group {group} leaks between train and test partitions")));
        }
    }
    Ok(())
}

/// Target frame indices of the supervised windows of one sample.
pub fn window_targets(regime: Regime, frames: usize, horizon_frame: usize) -> Result<Vec<usize>, TrainError> {
    let short = |need: usize| TrainError::Data(format!("trajectory with {frames} frames is shorter than the {need} the regime needs"));
    match regime {
        Regime::NextStep1d => {
            if frames < WINDOW_1D + 2 {
                return Err(short(WINDOW_1D + 2));
            }
            Ok((WINDOW_1D..frames - 1).collect())
        }
        Regime::NextStep2d => {
            if frames < 2 {
                return Err(short(2));
            }
            Ok((1..frames).collect())
        }
        Regime::FixedFuture => {
            if horizon_frame < FIXED_FUTURE_FRAMES || horizon_frame >= frames {
                return Err(short(horizon_frame.max(FIXED_FUTURE_FRAMES) + 1));
            }
            Ok(vec![horizon_frame])
        }
        Regime::SteadyState => Ok(vec![0]),
    }
}

/// One supervised pair: sample index and target frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Window {
    pub sample: usize,
    pub target: usize,
}

/// Field standardization from training-partition statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub in_mean: f64,
    pub in_std: f64,
    pub out_mean: f64,
    pub out_std: f64,
}

impl NormStats {
    pub const IDENTITY: NormStats = NormStats { in_mean: 0.0, in_std: 1.0, out_mean: 0.0, out_std: 1.0 };
}

fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
    for v in values {
        n += 1;
        let d = v - mean;
        mean += d / n as f64;
        m2 += d * (v - mean);
    }
    let std = if n > 0 { (m2 / n as f64).sqrt() } else { 0.0 };
    (mean, if std > 1e-12 { std } else { 1.0 })
}

/// Dataset bound to a regime: window enumeration, strided fields, tokens.
#[derive(Clone)]
pub struct Task<'a> {
    pub container: &'a DatasetContainer,
    pub regime: Regime,
    pub stride: usize,
    pub horizon_frame: usize,
    pub grid: FieldGrid,
    pub norm: NormStats,
    nx: usize,
    ny: usize,
    frame_dt: f64,
}

impl<'a> Task<'a> {
    pub fn new(container: &'a DatasetContainer, regime: Regime, horizon: f64, stride: usize) -> Result<Self, TrainError> {
        let family = container.family();
        if !regime.accepts(family) {
            return Err(TrainError::Config(format!("regime {} does not apply to {} data", regime.name(), family.name())));
        }
        let first = container.samples.first().ok_or_else(|| TrainError::Data("empty dataset".into()))?;
        let (nx, ny, frame_dt) = match &first.data {
            SampleData::Series1d { nx, .. } => {
                let dt = container.header.meta.get("dt").and_then(|v| v.as_f64()).ok_or_else(|| TrainError::Data("1D dataset header lacks dt".into()))?;
                (1, *nx, dt)
            }
            SampleData::Series2d { nx, ny, dt, .. } => (*nx, *ny, *dt),
            SampleData::Steady { nx, ny, .. } => (*nx, *ny, 0.0),
        };
        for s in &container.samples {
            let (a, b) = match &s.data {
                SampleData::Series1d { nx, .. } => (1, *nx),
                SampleData::Series2d { nx, ny, .. } | SampleData::Steady { nx, ny, .. } => (*nx, *ny),
            };
            if (a, b) != (nx, ny) {
                return Err(TrainError::Data("samples have differing grids".into()));
            }
        }
        let stride = stride.max(1);
        let grid = if family.is_1d() {
            FieldGrid::line(ny.div_ceil(stride))
        } else {
            FieldGrid::plane(nx.div_ceil(stride), ny.div_ceil(stride))
        };
        let horizon_frame = if regime == Regime::FixedFuture { (horizon / frame_dt).round() as usize } else { 0 };
        Ok(Self { container, regime, stride, horizon_frame, grid, norm: NormStats::IDENTITY, nx, ny, frame_dt })
    }

    pub fn with_norm(mut self, norm: NormStats) -> Self {
        self.norm = norm;
        self
    }

    /// Statistics over every field value of the given samples.
    pub fn fit_norm(&self, samples: &[usize]) -> NormStats {
        let data = |i: usize| &self.container.samples[i].data;
        if self.regime == Regime::SteadyState {
            let (in_mean, in_std) = mean_std(samples.iter().flat_map(|&i| match data(i) {
                SampleData::Steady { input, .. } => self.pooled(input),
                _ => Vec::new(),
            }));
            let (out_mean, out_std) = mean_std(samples.iter().flat_map(|&i| self.strided(data(i).frame(0))));
            NormStats { in_mean, in_std, out_mean, out_std }
        } else {
            let (m, s) = mean_std(samples.iter().flat_map(|&i| {
                let d = data(i);
                (0..d.frames()).flat_map(move |f| d.frame(f).iter().map(|&v| f64::from(v)))
            }));
            NormStats { in_mean: m, in_std: s, out_mean: m, out_std: s }
        }
    }

    pub fn frames(&self, sample: usize) -> usize {
        self.container.samples[sample].data.frames()
    }

    pub fn targets(&self, sample: usize) -> Result<Vec<usize>, TrainError> {
        window_targets(self.regime, self.frames(sample), self.horizon_frame)
    }

    /// All windows of `samples`, or `per_sample` evenly spaced ones each.
    pub fn windows(&self, samples: &[usize], per_sample: usize) -> Result<Vec<Window>, TrainError> {
        let mut out = Vec::new();
        for &s in samples {
            let t = self.targets(s)?;
            if per_sample == 0 || per_sample >= t.len() {
                out.extend(t.into_iter().map(|target| Window { sample: s, target }));
            } else {
                out.extend((0..per_sample).map(|k| Window { sample: s, target: t[k * t.len() / per_sample] }));
            }
        }
        Ok(out)
    }

    fn strided(&self, field: &[f32]) -> Vec<f64> {
        if self.stride == 1 {
            return field.iter().map(|&v| f64::from(v)).collect();
        }
        let mut out = Vec::with_capacity(self.grid.points());
        for i in (0..self.nx).step_by(self.stride) {
            for j in (0..self.ny).step_by(self.stride) {
                out.push(f64::from(field[i * self.ny + j]));
            }
        }
        out
    }

    /// Coarse input on the strided grid: each point takes the largest-magnitude
    /// value of its `stride x stride` block, so one-cell plates are not skipped.
    fn pooled(&self, field: &[f32]) -> Vec<f64> {
        if self.stride == 1 {
            return self.strided(field);
        }
        let mut out = Vec::with_capacity(self.grid.points());
        for i in (0..self.nx).step_by(self.stride) {
            for j in (0..self.ny).step_by(self.stride) {
                let mut best = 0.0f32;
                for a in i..(i + self.stride).min(self.nx) {
                    for b in j..(j + self.stride).min(self.ny) {
                        let v = field[a * self.ny + b];
                        if v.abs() > best.abs() {
                            best = v;
                        }
                    }
                }
                out.push(f64::from(best));
            }
        }
        out
    }

    /// Physical field of frame `n` (the target field for steady data).
    pub fn frame(&self, sample: usize, n: usize) -> Vec<f64> {
        self.strided(self.container.samples[sample].data.frame(n))
    }

    pub fn target(&self, w: Window) -> Vec<f64> {
        self.frame(w.sample, w.target)
    }

    /// Frame indices feeding the window with target `target`.
    pub fn input_frames(&self, target: usize) -> Vec<usize> {
        match self.regime {
            Regime::NextStep1d => (target - WINDOW_1D..target).collect(),
            Regime::NextStep2d => vec![target - 1],
            Regime::FixedFuture => (0..FIXED_FUTURE_FRAMES).collect(),
            Regime::SteadyState => Vec::new(),
        }
    }

    /// Physical input fields of a window, one per input channel.
    pub fn inputs(&self, w: Window) -> Vec<Vec<f64>> {
        match (&self.container.samples[w.sample].data, self.regime) {
            (SampleData::Steady { input, .. }, _) => vec![self.pooled(input)],
            _ => self.input_frames(w.target).into_iter().map(|n| self.frame(w.sample, n)).collect(),
        }
    }

    /// Absolute time of the target frame; the steady sentinel otherwise.
    pub fn time(&self, sample: usize, target: usize) -> f64 {
        match self.regime {
            Regime::SteadyState => self.container.samples[sample].spec.target_time(),
            _ => target as f64 * self.frame_dt,
        }
    }

    /// Normalized tokens of the sample's spec with the window's target time.
    pub fn tokens(&self, sample: usize, target: usize) -> Result<Vec<f64>, TrainError> {
        let spec = self.container.samples[sample].spec.with_target_time(self.time(sample, target));
        Ok(tokenize_equation(&spec, self.container.header.pad_len)?.normalized)
    }

    /// Normalized model input from physical input fields.
    pub fn model_input<S: Real>(&self, sample: usize, target: usize, inputs: &[Vec<f64>]) -> Result<ModelInput<S>, TrainError> {
        let n = self.grid.points();
        let f = inputs.len();
        let mut frames = Tensor::zeros(n, f);
        for (c, field) in inputs.iter().enumerate() {
            if field.len() != n {
                return Err(TrainError::Data(format!("input field has {} points, grid has {n}", field.len())));
            }
            for (p, &v) in field.iter().enumerate() {
                frames.data[p * f + c] = S::lit((v - self.norm.in_mean) / self.norm.in_std);
            }
        }
        Ok(ModelInput {
            grid: self.grid,
            frames,
            tokens: self.tokens(sample, target)?.into_iter().map(S::lit).collect(),
            time: S::lit(self.time(sample, target)),
        })
    }

    pub fn normalize_target<S: Real>(&self, field: &[f64]) -> Vec<S> {
        field.iter().map(|&v| S::lit((v - self.norm.out_mean) / self.norm.out_std)).collect()
    }

    pub fn denormalize<S: Real>(&self, field: &[S]) -> Vec<f64> {
        field.iter().map(|&v| v.to_f64_lossy() * self.norm.out_std + self.norm.out_mean).collect()
    }
}
