//! Dataset presets and seeded experiment runs shared by the command line
//! and the test suites.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::container::{DatasetContainer, DatasetError};
use crate::eqtok::Family;
use crate::evalkit::{rollout, Report, RolloutRecord};
use crate::pde1d::{make_dataset_1d, paper_param_grid, Pde1dError, Solver1dConfig};
use crate::pde2d::{make_dataset_ns, make_dataset_poisson, GrfSpectrum, NsConfig, NsError, PoissonConfig, PoissonError};
use crate::train::{evaluate_mae, split_dataset, train_model, Checkpoint, MetricsReport, Partition, TrainConfig, TrainError};

/// Environment variable overriding the default output root.
pub const OUTPUT_ROOT_ENV: &str = "PITT_OUTPUT_ROOT";
pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Pde1d(#[from] Pde1dError),
    #[error(transparent)]
    Ns(#[from] NsError),
    #[error(transparent)]
    Poisson(#[from] PoissonError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Report(#[from] crate::evalkit::ReportError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Root for outputs: `$PITT_OUTPUT_ROOT` or `runs`.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

pub const DATASET_PRESETS: &[&str] = &["paper", "paper-ff", "desk", "smoke"];

/// Navier-Stokes viscosities and amplitudes of the desk grid.
pub const NS_DESK_NU: [f64; 4] = [1e-5, 1e-6, 1e-7, 1e-8];
pub const NS_DESK_AMP: [f64; 3] = [0.001, 0.005, 0.01];

/// Reduced Navier-Stokes solver used by the desk and smoke presets.
pub fn ns_desk_solver() -> NsConfig {
    NsConfig { n: 64, save_n: 32, ..NsConfig::default() }
}

/// Generates the dataset of `family` at one of [`DATASET_PRESETS`].
pub fn generate(family: Family, preset: &str, seed: u64) -> Result<DatasetContainer, PipelineError> {
    let unknown = || PipelineError::Config(format!("unknown preset {preset:?} for {}; available: {}", family.name(), DATASET_PRESETS.join(", ")));
    match family {
        Family::Heat | Family::Burgers | Family::Kdv => {
            let grid = paper_param_grid(family)?;
            let per_combo = match (family, preset) {
                (Family::Heat, "paper") => 10_000,
                (_, "paper") => 2_500,
                (Family::Burgers, "desk") => 20,
                (_, "desk") => 100,
                (_, "smoke") => 2,
                _ => return Err(unknown()),
            };
            Ok(make_dataset_1d(family, &grid, per_combo, seed, &Solver1dConfig::default())?)
        }
        Family::NavierStokes => {
            let (grid, inits, cfg) = match preset {
                "paper" => (crate::pde2d::ns::paper_ns_grid(), 1, NsConfig::default()),
                "paper-ff" => (crate::pde2d::ns::paper_ns_grid(), 5, NsConfig::default()),
                "desk" => (NS_DESK_NU.iter().flat_map(|&nu| NS_DESK_AMP.map(|a| (nu, a))).collect(), 1, ns_desk_solver()),
                "smoke" => (vec![(1e-5, 0.001), (1e-6, 0.01)], 1, NsConfig { n: 32, save_n: 16, frames: 24, t_final: 6.0, ..NsConfig::default() }),
                _ => return Err(unknown()),
            };
            Ok(make_dataset_ns(&grid, inits, seed, &cfg, &GrfSpectrum::default())?)
        }
        Family::Poisson => {
            let count = match preset {
                "paper" => 5_000,
                "desk" => 1_000,
                "smoke" => 32,
                _ => return Err(unknown()),
            };
            Ok(make_dataset_poisson(count, seed, &PoissonConfig::default())?)
        }
    }
}

/// Dataset, training configuration, seeds and output directory of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub dataset: PathBuf,
    pub config: TrainConfig,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
}

impl ExperimentManifest {
    pub fn new(dataset: PathBuf, config: TrainConfig, seeds: Vec<u64>, out: PathBuf) -> Result<Self, PipelineError> {
        if seeds.is_empty() {
            return Err(PipelineError::Config("seed list must not be empty".into()));
        }
        config.validate()?;
        Ok(Self { dataset, config, seeds, out })
    }

    /// Flat document: `dataset`, `preset`, optional `seeds` and `out`; every
    /// other key overrides a training-configuration field.
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| PipelineError::Config(e.to_string()))?;
        let mut take_str = |k: &str| table.remove(k).map(|v| v.as_str().map(str::to_string).ok_or_else(|| PipelineError::Config(format!("{k} must be a string"))));
        let dataset = take_str("dataset").ok_or_else(|| PipelineError::Config("manifest needs a dataset".into()))??;
        let preset_name = take_str("preset").transpose()?;
        let out = take_str("out").transpose()?;
        let seeds = match table.remove("seeds") {
            Some(v) => v
                .as_array()
                .ok_or_else(|| PipelineError::Config("seeds must be a list".into()))?
                .iter()
                .map(|s| s.as_integer().filter(|&s| s >= 0).map(|s| s as u64).ok_or_else(|| PipelineError::Config("seeds must be non-negative integers".into())))
                .collect::<Result<Vec<_>, _>>()?,
            None => DEFAULT_SEEDS.to_vec(),
        };
        let base = preset_name.as_deref().map(crate::train::preset).transpose()?;
        let config = TrainConfig::from_toml(&toml::to_string(&table).expect("table serializes"), base.as_ref())?;
        let out = out.map(PathBuf::from).unwrap_or_else(|| output_root().join(&config.name));
        Self::new(PathBuf::from(dataset), config, seeds, out)
    }

    pub fn checkpoint_path(&self, seed: u64) -> PathBuf {
        self.out.join(format!("{}-seed{seed}.ckpt", self.config.name))
    }
}

/// Trains one model per seed; the seed drives both the split and the weights.
pub fn train_seeds(config: &TrainConfig, seeds: &[u64], data: &DatasetContainer) -> Result<Vec<Checkpoint<f32>>, PipelineError> {
    seeds
        .iter()
        .map(|&seed| {
            let mut cfg = config.clone();
            cfg.seed = seed;
            let plan = split_dataset(data, cfg.split, seed, cfg.train_frac, cfg.val_frac)?;
            Ok(train_model::<f32>(&cfg, &plan, data)?)
        })
        .collect()
}

/// Runs a manifest and writes one checkpoint per seed.
pub fn run_manifest(manifest: &ExperimentManifest, overwrite: bool) -> Result<Vec<PathBuf>, PipelineError> {
    let data = DatasetContainer::load(&manifest.dataset)?;
    let mut paths = Vec::new();
    for &seed in &manifest.seeds {
        let path = manifest.checkpoint_path(seed);
        if path.exists() && !overwrite {
            return Err(TrainError::Exists(path.display().to_string()).into());
        }
        let ck = train_seeds(&manifest.config, &[seed], &data)?.remove(0);
        ck.save(&path, true)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Test MAE of each checkpoint, one report per model name.
pub fn evaluate_checkpoints(checkpoints: &[Checkpoint<f32>], data: &DatasetContainer) -> Result<Vec<MetricsReport>, PipelineError> {
    let mut groups: Vec<(String, Vec<u64>, Vec<f64>)> = Vec::new();
    for ck in checkpoints {
        let task = ck.task(data)?;
        let mae = evaluate_mae(ck, &task, &ck.plan, ck.config.test_windows_per_trajectory)?;
        let name = ck.config.name.clone();
        match groups.iter_mut().find(|g| g.0 == name) {
            Some(g) => {
                g.1.push(ck.config.seed);
                g.2.push(mae);
            }
            None => groups.push((name, vec![ck.config.seed], vec![mae])),
        }
    }
    Ok(groups.into_iter().map(|(name, seeds, maes)| MetricsReport::from_seeds(data.family().name(), &name, &seeds, &maes)).collect())
}

/// Rollouts of the first `count` test trajectories for every checkpoint.
pub fn rollout_checkpoints(checkpoints: &[Checkpoint<f32>], data: &DatasetContainer, count: usize) -> Result<Vec<RolloutRecord>, PipelineError> {
    let mut out = Vec::new();
    for ck in checkpoints {
        let task = ck.task(data)?;
        for sample in ck.plan.indices(Partition::Test).into_iter().take(count) {
            let mut result = rollout(ck, &task, sample)?;
            result.model = ck.config.name.clone();
            out.push(RolloutRecord { benchmark: data.family().name().into(), seed: ck.config.seed, result });
        }
    }
    Ok(out)
}

/// Mean accumulated rollout error per seed over the given records of one model.
pub fn accumulated_by_seed(records: &[RolloutRecord], model: &str) -> Vec<(u64, f64)> {
    let mut out: Vec<(u64, f64, usize)> = Vec::new();
    for r in records.iter().filter(|r| r.result.model == model) {
        match out.iter_mut().find(|o| o.0 == r.seed) {
            Some(o) => {
                o.1 += r.result.accumulated();
                o.2 += 1;
            }
            None => out.push((r.seed, r.result.accumulated(), 1)),
        }
    }
    out.into_iter().map(|(s, total, n)| (s, total / n as f64)).collect()
}

/// Generate, train, evaluate and write the metrics document into `out`.
pub fn end_to_end(family: Family, dataset_preset: &str, config: &TrainConfig, seeds: &[u64], out: &Path) -> Result<PathBuf, PipelineError> {
    let data = generate(family, dataset_preset, 0)?;
    let cks = train_seeds(config, seeds, &data)?;
    let mut report = Report { mae: evaluate_checkpoints(&cks, &data)?, ..Default::default() };
    if matches!(config.regime, crate::train::Regime::NextStep1d | crate::train::Regime::NextStep2d) {
        report.rollouts = rollout_checkpoints(&cks, &data, 1)?;
    }
    crate::evalkit::emit_report(&report, out)?;
    Ok(out.join("metrics.json"))
}
