//! Data splitting, supervised windows, optimization and evaluation.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod eval;
pub mod optim;
pub mod trainer;

use thiserror::Error;

pub use checkpoint::{Checkpoint, RngState};
pub use config::{preset, ModelKind, Regime, ScheduleKind, SplitKey, TrainConfig, PRESETS};
pub use data::{split_dataset, window_targets, NormStats, Partition, SplitPlan, Task, Window, FIXED_FUTURE_FRAMES, WINDOW_1D};
pub use eval::{evaluate_mae, mae_over, MetricsReport, Oracle, Surrogate, Zero};
pub use optim::{Adam, Schedule};
pub use trainer::{best_epoch, train_model, validation_loss, EpochRecord};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training diverged in epoch {epoch} (last finite loss {last_finite:e})")]
    Diverged { epoch: usize, last_finite: f64 },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("{0} already exists (pass --overwrite to replace it)")]
    Exists(String),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error(transparent)]
    Token(#[from] crate::eqtok::TokenError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eqtok::Family;
    use crate::pde1d::{make_dataset_1d, Solver1dConfig};

    fn heat(count: usize) -> crate::container::DatasetContainer {
        let cfg = Solver1dConfig { nx: 32, nt: 20, t_final: 0.8, internal_modes: 64, ..Default::default() };
        make_dataset_1d(Family::Heat, &[(0.0, 0.1, 0.0), (0.0, 0.5, 0.0)], count / 2, 3, &cfg).unwrap()
    }

    fn smoke(model: ModelKind) -> TrainConfig {
        let mut c = preset(if model == ModelKind::Pitt { "pitt-heat-smoke" } else { "fno-heat-smoke" }).unwrap();
        c.hidden = 4;
        c.modes2 = 4;
        c.batch_size = 4;
        c.val_examples = 8;
        c
    }

    #[test]
    fn smoke_training_is_deterministic_and_roundtrips() {
        let data = heat(10);
        let cfg = smoke(ModelKind::Pitt);
        let plan = split_dataset(&data, cfg.split, 0, cfg.train_frac, cfg.val_frac).unwrap();
        assert_eq!(plan.counts(), (6, 2, 2));
        let a = train_model::<f64>(&cfg, &plan, &data).unwrap();
        let b = train_model::<f64>(&cfg, &plan, &data).unwrap();
        assert_eq!(a.log.len(), 2);
        assert!((1..=2).contains(&a.best_epoch));
        assert!(a.log.iter().all(|r| a.best_val <= r.val_loss));
        let la: Vec<f64> = a.log.iter().map(|r| r.train_loss).collect();
        let lb: Vec<f64> = b.log.iter().map(|r| r.train_loss).collect();
        assert_eq!(la, lb);

        let mut bytes = Vec::new();
        a.write_to(&mut bytes).unwrap();
        let back = Checkpoint::<f64>::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back.model.params, a.model.params);
        assert_eq!(back.plan, a.plan);
        let task = a.task(&data).unwrap();
        let m1 = evaluate_mae(&a, &task, &a.plan, 3).unwrap();
        let m2 = evaluate_mae(&back, &task, &back.plan, 3).unwrap();
        assert_eq!(m1, m2);
        assert!(m1.is_finite() && m1 > 0.0);
    }

    #[test]
    fn oracle_and_zero_predictors() {
        let data = heat(10);
        let plan = split_dataset(&data, SplitKey::EquationLevel, 0, 0.6, 0.2).unwrap();
        let task = Task::new(&data, Regime::NextStep1d, 0.0, 1).unwrap();
        assert_eq!(evaluate_mae(&Oracle, &task, &plan, 0).unwrap(), 0.0);
        let windows = task.windows(&plan.indices(Partition::Test), 0).unwrap();
        let mean_abs: f64 = windows.iter().flat_map(|&w| task.target(w)).map(f64::abs).sum::<f64>()
            / (windows.len() * task.grid.points()) as f64;
        assert!((evaluate_mae(&Zero, &task, &plan, 0).unwrap() - mean_abs).abs() < 1e-12);
    }

    #[test]
    fn fno_smoke_runs_in_f32() {
        let data = heat(10);
        let cfg = smoke(ModelKind::Fno);
        let plan = split_dataset(&data, cfg.split, 1, cfg.train_frac, cfg.val_frac).unwrap();
        let ck = train_model::<f32>(&cfg, &plan, &data).unwrap();
        assert_eq!(ck.log.len(), 2);
        assert!(ck.best_val.is_finite());
    }

    #[test]
    fn regime_mismatch_rejected() {
        let data = heat(4);
        assert!(Task::new(&data, Regime::SteadyState, 0.0, 1).is_err());
    }
}
