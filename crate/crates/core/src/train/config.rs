use serde::{Deserialize, Serialize};

use super::optim::Schedule;
use super::TrainError;
use crate::eqtok::Family;
use crate::nn::{FnoConfig, ModelConfig, PittConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Pitt,
    Fno,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    NextStep1d,
    NextStep2d,
    FixedFuture,
    SteadyState,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::NextStep1d => "next_step_1d",
            Regime::NextStep2d => "next_step_2d",
            Regime::FixedFuture => "fixed_future",
            Regime::SteadyState => "steady_state",
        }
    }

    pub fn accepts(self, family: Family) -> bool {
        match self {
            Regime::NextStep1d => family.is_1d(),
            Regime::NextStep2d | Regime::FixedFuture => family == Family::NavierStokes,
            Regime::SteadyState => family == Family::Poisson,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKey {
    EquationLevel,
    Random,
    InitialConditionLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    OneCycle,
    Step,
    Constant,
}

/// Flat training configuration; every field maps to one config-file key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub name: String,
    pub model: ModelKind,
    pub regime: Regime,
    /// Prediction horizon in seconds for the fixed-future regime.
    #[serde(default)]
    pub horizon: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub schedule: ScheduleKind,
    #[serde(default)]
    pub step_size: usize,
    #[serde(default = "one")]
    pub gamma: f64,
    pub epochs: usize,
    /// PITT hidden width, also the width of its FNO backbone; FNO width.
    pub hidden: usize,
    #[serde(default)]
    pub layers: usize,
    #[serde(default)]
    pub heads: usize,
    #[serde(default)]
    pub modes1: usize,
    pub modes2: usize,
    #[serde(default = "fno_layers")]
    pub fno_layers: usize,
    #[serde(default)]
    pub proj_width: usize,
    pub split: SplitKey,
    #[serde(default = "train_frac")]
    pub train_frac: f64,
    #[serde(default = "val_frac")]
    pub val_frac: f64,
    #[serde(default)]
    pub seed: u64,
    /// Training windows drawn per trajectory each epoch (0 = all).
    #[serde(default)]
    pub windows_per_trajectory: usize,
    /// Cap on validation examples (0 = all), chosen once per run.
    #[serde(default)]
    pub val_examples: usize,
    /// Evenly spaced test windows per trajectory (0 = all).
    #[serde(default)]
    pub test_windows_per_trajectory: usize,
    /// Keep every `spatial_stride`-th grid point along each axis.
    #[serde(default = "one_usize")]
    pub spatial_stride: usize,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn fno_layers() -> usize {
    3
}
fn train_frac() -> f64 {
    0.6
}
fn val_frac() -> f64 {
    0.2
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.batch_size == 0 || self.epochs == 0 || self.hidden == 0 || self.modes2 == 0 {
            return bad(format!("{}: batch_size, epochs, hidden and modes2 must be positive", self.name));
        }
        if !(self.learning_rate > 0.0) || self.weight_decay < 0.0 || !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("{}: invalid learning rate, weight decay or dropout", self.name));
        }
        if self.schedule == ScheduleKind::Step && (self.step_size == 0 || !(self.gamma > 0.0)) {
            return bad(format!("{}: step schedule needs step_size > 0 and gamma > 0", self.name));
        }
        if self.model == ModelKind::Pitt && (self.layers == 0 || self.heads == 0 || self.hidden % self.heads != 0) {
            return bad(format!("{}: PITT needs layers > 0 and hidden divisible by heads", self.name));
        }
        if self.regime != Regime::NextStep1d && self.modes1 == 0 {
            return bad(format!("{}: 2D regimes need modes1 > 0", self.name));
        }
        if self.regime == Regime::FixedFuture && !(self.horizon > 0.0) {
            return bad(format!("{}: fixed-future regime needs a positive horizon", self.name));
        }
        if self.train_frac <= 0.0 || self.val_frac < 0.0 || self.train_frac + self.val_frac >= 1.0 {
            return bad(format!("{}: split fractions must leave a test partition", self.name));
        }
        if self.spatial_stride == 0 {
            return bad(format!("{}: spatial_stride must be at least 1", self.name));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Schedule {
        match self.schedule {
            ScheduleKind::OneCycle => Schedule::one_cycle(),
            ScheduleKind::Step => Schedule::Step { step_size: self.step_size, gamma: self.gamma },
            ScheduleKind::Constant => Schedule::Constant,
        }
    }

    /// Number of input frames the regime feeds the model.
    pub fn in_frames(&self) -> usize {
        match self.regime {
            Regime::NextStep1d => super::data::WINDOW_1D,
            Regime::NextStep2d | Regime::SteadyState => 1,
            Regime::FixedFuture => super::data::FIXED_FUTURE_FRAMES,
        }
    }

    pub fn model_config(&self, tokens: usize) -> ModelConfig {
        let dims = if self.regime == Regime::NextStep1d { 1 } else { 2 };
        let backbone = FnoConfig {
            dims,
            in_frames: self.in_frames(),
            width: self.hidden,
            modes1: if dims == 1 { 0 } else { self.modes1 },
            modes2: self.modes2,
            layers: self.fno_layers,
            proj_width: if self.proj_width == 0 { self.hidden } else { self.proj_width },
            dropout: self.dropout,
        };
        match self.model {
            ModelKind::Fno => ModelConfig::Fno(backbone),
            ModelKind::Pitt => ModelConfig::Pitt(PittConfig {
                backbone,
                hidden: self.hidden,
                heads: self.heads,
                layers: self.layers,
                tokens,
                dropout: self.dropout,
            }),
        }
    }

    /// Parses a flat TOML document, optionally layered over a preset.
    pub fn from_toml(text: &str, base: Option<&TrainConfig>) -> Result<TrainConfig, TrainError> {
        let overrides: toml::Table = text.parse().map_err(|e: toml::de::Error| TrainError::Config(e.to_string()))?;
        let mut table = match base {
            Some(b) => toml::Table::try_from(b).map_err(|e| TrainError::Config(e.to_string()))?,
            None => toml::Table::new(),
        };
        for (k, v) in overrides {
            if k == "preset" {
                continue;
            }
            table.insert(k, v);
        }
        let cfg: TrainConfig = table.try_into().map_err(|e: toml::de::Error| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

struct Row {
    batch: usize,
    lr: f64,
    wd: f64,
    dropout: f64,
    step: Option<(usize, f64)>,
    hidden: usize,
    layers: usize,
    heads: usize,
    modes: (usize, usize),
    epochs: usize,
}

fn from_row(name: &str, model: ModelKind, regime: Regime, split: SplitKey, r: Row) -> TrainConfig {
    TrainConfig {
        name: name.to_string(),
        model,
        regime,
        horizon: 0.0,
        batch_size: r.batch,
        learning_rate: r.lr,
        weight_decay: r.wd,
        dropout: r.dropout,
        schedule: if r.step.is_some() { ScheduleKind::Step } else { ScheduleKind::OneCycle },
        step_size: r.step.map_or(0, |s| s.0),
        gamma: r.step.map_or(1.0, |s| s.1),
        epochs: r.epochs,
        hidden: r.hidden,
        layers: r.layers,
        heads: r.heads,
        modes1: r.modes.0,
        modes2: r.modes.1,
        fno_layers: 3,
        proj_width: 0,
        split,
        train_frac: 0.6,
        val_frac: 0.2,
        seed: 0,
        windows_per_trajectory: 0,
        val_examples: 0,
        test_windows_per_trajectory: 0,
        spatial_stride: 1,
    }
}

/// Names of all shipped presets.
pub const PRESETS: &[&str] = &[
    "pitt-heat",
    "pitt-burgers",
    "pitt-kdv",
    "fno-heat",
    "fno-burgers",
    "fno-kdv",
    "pitt-ns",
    "fno-ns",
    "pitt-ns-ff20",
    "pitt-ns-ff30",
    "fno-ns-ff20",
    "fno-ns-ff30",
    "pitt-poisson",
    "fno-poisson",
    "pitt-heat-desk",
    "fno-heat-desk",
    "pitt-poisson-desk",
    "fno-poisson-desk",
    "pitt-ns-tiny",
    "fno-ns-tiny",
    "pitt-heat-smoke",
    "fno-heat-smoke",
];

/// Looks up a shipped preset. Full-scale rows carry the published
/// hyperparameters; `-desk`, `-tiny` and `-smoke` rows are scaled down.
pub fn preset(name: &str) -> Result<TrainConfig, TrainError> {
    use ModelKind::*;
    use Regime::*;
    use SplitKey::*;
    let pitt_1d = |batch, wd, dropout| Row { batch, lr: 1e-3, wd, dropout, step: None, hidden: 64, layers: 1, heads: 1, modes: (0, 4), epochs: 200 };
    let fno_1d = |batch| Row { batch, lr: 1e-3, wd: 1e-8, dropout: 0.1, step: Some((50, 0.5)), hidden: 256, layers: 0, heads: 0, modes: (0, 8), epochs: 200 };
    let ff = |name: &str, model, horizon| {
        let row = match model {
            Pitt => Row { batch: 16, lr: 1e-2, wd: 1e-5, dropout: 0.0, step: None, hidden: 16, layers: 20, heads: 4, modes: (4, 4), epochs: 200 },
            Fno => Row { batch: 8, lr: 1e-3, wd: 1e-5, dropout: 0.0, step: Some((40, 0.5)), hidden: 32, layers: 0, heads: 0, modes: (6, 6), epochs: 200 },
        };
        let mut c = from_row(name, model, FixedFuture, InitialConditionLevel, row);
        c.horizon = horizon;
        c
    };
    let cfg = match name {
        "pitt-heat" | "pitt-burgers" => from_row(name, Pitt, NextStep1d, EquationLevel, pitt_1d(128, 1e-5, 0.05)),
        "pitt-kdv" => from_row(name, Pitt, NextStep1d, EquationLevel, pitt_1d(256, 1e-2, 0.5)),
        "fno-heat" | "fno-burgers" => from_row(name, Fno, NextStep1d, EquationLevel, fno_1d(32)),
        "fno-kdv" => from_row(name, Fno, NextStep1d, EquationLevel, fno_1d(4)),
        "pitt-ns" => from_row(
            name,
            Pitt,
            NextStep2d,
            InitialConditionLevel,
            Row { batch: 8, lr: 1e-4, wd: 0.0, dropout: 0.0, step: None, hidden: 32, layers: 8, heads: 4, modes: (8, 8), epochs: 100 },
        ),
        "fno-ns" => from_row(
            name,
            Fno,
            NextStep2d,
            InitialConditionLevel,
            Row { batch: 8, lr: 1e-4, wd: 1e-5, dropout: 0.0, step: Some((10, 0.5)), hidden: 64, layers: 0, heads: 0, modes: (8, 8), epochs: 100 },
        ),
        "pitt-ns-ff20" => ff(name, Pitt, 20.0),
        "pitt-ns-ff30" => ff(name, Pitt, 30.0),
        "fno-ns-ff20" => ff(name, Fno, 20.0),
        "fno-ns-ff30" => ff(name, Fno, 30.0),
        "pitt-poisson" => from_row(
            name,
            Pitt,
            SteadyState,
            Random,
            Row { batch: 128, lr: 1e-3, wd: 0.0, dropout: 0.05, step: None, hidden: 64, layers: 8, heads: 8, modes: (8, 8), epochs: 1000 },
        ),
        "fno-poisson" => from_row(
            name,
            Fno,
            SteadyState,
            Random,
            Row { batch: 128, lr: 1e-3, wd: 1e-7, dropout: 0.1, step: Some((200, 0.5)), hidden: 128, layers: 0, heads: 0, modes: (8, 8), epochs: 1000 },
        ),
        "pitt-heat-desk" => {
            let mut c = from_row(name, Pitt, NextStep1d, EquationLevel, pitt_1d(8, 1e-5, 0.05));
            c.epochs = 50;
            c.windows_per_trajectory = 2;
            c.val_examples = 240;
            c.test_windows_per_trajectory = 10;
            c
        }
        "fno-heat-desk" => {
            let mut c = from_row(name, Fno, NextStep1d, EquationLevel, fno_1d(8));
            c.hidden = 64;
            c.epochs = 50;
            c.step_size = 12;
            c.windows_per_trajectory = 2;
            c.val_examples = 240;
            c.test_windows_per_trajectory = 10;
            c
        }
        "pitt-poisson-desk" => {
            let mut c = preset("pitt-poisson")?;
            c.name = name.into();
            c.batch_size = 16;
            c.hidden = 32;
            c.layers = 2;
            c.heads = 2;
            c.modes1 = 6;
            c.modes2 = 6;
            c.epochs = 60;
            c.spatial_stride = 2;
            c
        }
        "fno-poisson-desk" => {
            let mut c = preset("fno-poisson")?;
            c.name = name.into();
            c.batch_size = 16;
            c.hidden = 32;
            c.modes1 = 6;
            c.modes2 = 6;
            c.epochs = 60;
            c.step_size = 12;
            c.spatial_stride = 2;
            c
        }
        "pitt-ns-tiny" => {
            let mut c = preset("pitt-ns")?;
            c.name = name.into();
            c.hidden = 16;
            c.layers = 2;
            c.heads = 2;
            c.modes1 = 4;
            c.modes2 = 4;
            c.learning_rate = 1e-3;
            c.epochs = 20;
            c.windows_per_trajectory = 8;
            c.val_examples = 40;
            c.test_windows_per_trajectory = 8;
            c
        }
        "fno-ns-tiny" => {
            let mut c = preset("fno-ns")?;
            c.name = name.into();
            c.hidden = 16;
            c.modes1 = 4;
            c.modes2 = 4;
            c.learning_rate = 1e-3;
            c.epochs = 20;
            c.step_size = 5;
            c.windows_per_trajectory = 8;
            c.val_examples = 40;
            c.test_windows_per_trajectory = 8;
            c
        }
        "pitt-heat-smoke" | "fno-heat-smoke" => {
            let mut c = preset(if name.starts_with("pitt") { "pitt-heat-desk" } else { "fno-heat-desk" })?;
            c.name = name.into();
            c.hidden = 8;
            c.epochs = 2;
            c.step_size = 1;
            c.windows_per_trajectory = 1;
            c.val_examples = 20;
            c.test_windows_per_trajectory = 3;
            c
        }
        other => return Err(TrainError::Config(format!("unknown preset {other:?}; available: {}", PRESETS.join(", ")))),
    };
    cfg.validate()?;
    Ok(cfg)
}
