use serde::{Deserialize, Serialize};

use crate::train::{Regime, Surrogate, Task, TrainError, WINDOW_1D};

/// Magnitude beyond which a rollout counts as blown up.
pub const BLOW_UP: f64 = 1e6;

/// Autoregressive prediction of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    pub model: String,
    pub sample: usize,
    /// Time of each predicted frame.
    pub times: Vec<f64>,
    /// MAE against ground truth at each step.
    pub per_step: Vec<f64>,
    /// Running mean of `per_step`.
    pub cumulative: Vec<f64>,
    #[serde(skip)]
    pub predicted: Vec<Vec<f64>>,
    #[serde(skip)]
    pub truth: Vec<Vec<f64>>,
    /// Step at which a non-finite or oversized value appeared.
    pub blow_up: Option<usize>,
}

impl RolloutResult {
    /// Final cumulative error; infinite after a blow-up.
    pub fn accumulated(&self) -> f64 {
        if self.blow_up.is_some() {
            f64::INFINITY
        } else {
            self.cumulative.last().copied().unwrap_or(0.0)
        }
    }
}

/// Seeds with the first window of ground truth (frames 0-9 in 1D, frame 0
/// for Navier-Stokes) and feeds predictions back until the last frame.
pub fn rollout(model: &dyn Surrogate, task: &Task, sample: usize) -> Result<RolloutResult, TrainError> {
    let seed = match task.regime {
        Regime::NextStep1d => WINDOW_1D,
        Regime::NextStep2d => 1,
        r => return Err(TrainError::Config(format!("rollout needs a next-step regime, not {}", r.name()))),
    };
    let frames = task.frames(sample);
    if frames <= seed {
        return Err(TrainError::Data(format!("trajectory with {frames} frames cannot seed a rollout")));
    }
    let mut history: Vec<Vec<f64>> = (0..seed).map(|n| task.frame(sample, n)).collect();
    let mut out = RolloutResult {
        model: model.label(),
        sample,
        times: Vec::new(),
        per_step: Vec::new(),
        cumulative: Vec::new(),
        predicted: Vec::new(),
        truth: Vec::new(),
        blow_up: None,
    };
    let mut total = 0.0;
    for n in seed..frames {
        let inputs = &history[history.len() - seed..];
        let pred = model.predict(task, sample, n, inputs)?;
        if pred.iter().any(|v| !v.is_finite() || v.abs() > BLOW_UP) {
            out.blow_up = Some(n - seed);
            break;
        }
        let truth = task.frame(sample, n);
        let err = pred.iter().zip(&truth).map(|(a, b)| (a - b).abs()).sum::<f64>() / truth.len() as f64;
        total += err;
        out.times.push(task.time(sample, n));
        out.per_step.push(err);
        out.cumulative.push(total / out.per_step.len() as f64);
        out.predicted.push(pred.clone());
        out.truth.push(truth);
        history.push(pred);
    }
    Ok(out)
}
