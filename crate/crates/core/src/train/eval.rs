use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::data::{Partition, SplitPlan, Task, Window};
use super::TrainError;
use crate::scalar::Real;

/// Anything that maps a window's physical input fields to its target field.
pub trait Surrogate: Sync {
    fn label(&self) -> String;

    /// Physical-unit prediction of frame `target` of `sample` from `inputs`.
    fn predict(&self, task: &Task, sample: usize, target: usize, inputs: &[Vec<f64>]) -> Result<Vec<f64>, TrainError>;
}

impl<S: Real> Surrogate for Checkpoint<S> {
    fn label(&self) -> String {
        self.model.config.name().to_string()
    }

    fn predict(&self, task: &Task, sample: usize, target: usize, inputs: &[Vec<f64>]) -> Result<Vec<f64>, TrainError> {
        let task = task.clone().with_norm(self.norm);
        let input = task.model_input::<S>(sample, target, inputs)?;
        Ok(task.denormalize(&self.model.predict(&input)?))
    }
}

/// Returns the stored ground truth regardless of its inputs.
#[derive(Debug, Clone, Copy, Default)]
pub struct Oracle;

impl Surrogate for Oracle {
    fn label(&self) -> String {
        "oracle".into()
    }

    fn predict(&self, task: &Task, sample: usize, target: usize, _inputs: &[Vec<f64>]) -> Result<Vec<f64>, TrainError> {
        Ok(task.frame(sample, target))
    }
}

/// Predicts zero everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct Zero;

impl Surrogate for Zero {
    fn label(&self) -> String {
        "zero".into()
    }

    fn predict(&self, task: &Task, _sample: usize, _target: usize, _inputs: &[Vec<f64>]) -> Result<Vec<f64>, TrainError> {
        Ok(vec![0.0; task.grid.points()])
    }
}

/// Mean absolute error over every point of the given windows.
pub fn mae_over(model: &dyn Surrogate, task: &Task, windows: &[Window]) -> Result<f64, TrainError> {
    if windows.is_empty() {
        return Err(TrainError::Data("no windows to evaluate".into()));
    }
    let sums: Result<Vec<(f64, usize)>, TrainError> = windows
        .par_iter()
        .map(|&w| {
            let pred = model.predict(task, w.sample, w.target, &task.inputs(w))?;
            let truth = task.target(w);
            Ok((pred.iter().zip(&truth).map(|(a, b)| (a - b).abs()).sum(), truth.len()))
        })
        .collect();
    let (total, count) = sums?.into_iter().fold((0.0, 0), |(s, n), (a, b)| (s + a, n + b));
    Ok(total / count as f64)
}

/// Test-partition MAE; `per_sample` evenly spaced windows per trajectory (0 = all).
pub fn evaluate_mae(model: &dyn Surrogate, task: &Task, plan: &SplitPlan, per_sample: usize) -> Result<f64, TrainError> {
    let test = plan.indices(Partition::Test);
    if test.is_empty() {
        return Err(TrainError::Data("empty test partition".into()));
    }
    mae_over(model, task, &task.windows(&test, per_sample)?)
}

/// MAE of one benchmark/model pair across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub benchmark: String,
    pub model: String,
    pub n: usize,
    pub mae_mean: f64,
    /// Population standard deviation over seeds; absent for a single seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mae_std: Option<f64>,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<f64>,
}

impl MetricsReport {
    pub fn from_seeds(benchmark: &str, model: &str, seeds: &[u64], maes: &[f64]) -> Self {
        let n = maes.len();
        let mean = maes.iter().sum::<f64>() / n.max(1) as f64;
        let std = (n > 1).then(|| (maes.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n as f64).sqrt());
        Self {
            benchmark: benchmark.into(),
            model: model.into(),
            n,
            mae_mean: mean,
            mae_std: std,
            seeds: seeds.to_vec(),
            per_seed: maes.to_vec(),
        }
    }

    /// `mean ± std` in the layout of the result tables.
    pub fn cell(&self) -> String {
        match self.mae_std {
            Some(s) => format!("{:.3e} ± {:.3e}", self.mae_mean, s),
            None => format!("{:.3e}", self.mae_mean),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_statistics() {
        let r = MetricsReport::from_seeds("heat", "pitt", &[0, 1, 2, 3, 4], &[1.0; 5]);
        assert_eq!((r.n, r.mae_mean, r.mae_std), (5, 1.0, Some(0.0)));
        let r = MetricsReport::from_seeds("heat", "pitt", &[0], &[2.0]);
        assert_eq!(r.mae_std, None);
        let json = serde_json::to_string(&r).unwrap();
        assert!(!json.contains("mae_std"));
        assert_eq!(serde_json::from_str::<MetricsReport>(&json).unwrap(), r);
    }
}
