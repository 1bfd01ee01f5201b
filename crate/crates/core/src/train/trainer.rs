use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, RngState};
use super::config::TrainConfig;
use super::data::{Partition, SplitPlan, Task, Window};
use super::optim::Adam;
use super::TrainError;
use crate::container::DatasetContainer;
use crate::nn::{Graph, Model, Tensor};
use crate::scalar::Real;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub wall_time: f64,
}

/// 1-based epoch with the lowest validation loss; ties keep the earliest.
pub fn best_epoch(val_losses: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in val_losses.iter().enumerate() {
        if v.is_finite() && best.map_or(true, |(_, b)| v < b) {
            best = Some((i + 1, v));
        }
    }
    best.map(|b| b.0)
}

fn mix(parts: &[u64]) -> u64 {
    let mut h = 0x9e37_79b9_7f4a_7c15u64;
    for &p in parts {
        h ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 31;
    }
    h
}

/// Loss and parameter gradients of one window in training mode.
fn sample_gradient<S: Real>(model: &Model<S>, task: &Task, w: Window, rng: ChaCha8Rng) -> Result<(f64, Vec<Option<Tensor<S>>>), TrainError> {
    let input = task.model_input::<S>(w.sample, w.target, &task.inputs(w))?;
    let target = task.normalize_target::<S>(&task.target(w));
    let mut g = Graph::training(&model.params.tensors, rng);
    let y = model.forward(&mut g, &input)?;
    let t = g.input(Tensor::column(target));
    let loss = g.mean_square(y, t);
    let value = g.value(loss).data[0].to_f64_lossy();
    Ok((value, g.backward(loss)))
}

/// Mean normalized squared error in evaluation mode.
pub fn validation_loss<S: Real>(model: &Model<S>, task: &Task, windows: &[Window]) -> Result<f64, TrainError> {
    if windows.is_empty() {
        return Ok(f64::NAN);
    }
    let losses: Result<Vec<f64>, TrainError> = windows
        .par_iter()
        .map(|&w| {
            let input = task.model_input::<S>(w.sample, w.target, &task.inputs(w))?;
            let y = model.predict(&input)?;
            let target = task.normalize_target::<S>(&task.target(w));
            let se: f64 = y.iter().zip(&target).map(|(a, b)| (a.to_f64_lossy() - b.to_f64_lossy()).powi(2)).sum();
            Ok(se / y.len() as f64)
        })
        .collect();
    Ok(losses?.iter().sum::<f64>() / windows.len() as f64)
}

/// Trains one model on the training partition of `plan`, keeping the weights
/// of the epoch with the lowest validation loss.
pub fn train_model<S: Real>(cfg: &TrainConfig, plan: &SplitPlan, container: &DatasetContainer) -> Result<Checkpoint<S>, TrainError> {
    cfg.validate()?;
    let task = Task::new(container, cfg.regime, cfg.horizon, cfg.spatial_stride)?;
    super::data::check_leakage(container, plan)?;
    let train_samples = plan.indices(Partition::Train);
    let val_samples = plan.indices(Partition::Val);
    if train_samples.is_empty() {
        return Err(TrainError::Data("empty training partition".into()));
    }
    let norm = task.fit_norm(&train_samples);
    let task = task.with_norm(norm);

    let mut val_windows = task.windows(&val_samples, 0)?;
    if cfg.val_examples > 0 && val_windows.len() > cfg.val_examples {
        val_windows.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(&[cfg.seed, 1])));
        val_windows.truncate(cfg.val_examples);
        val_windows.sort();
    }
    let all_train: Vec<(usize, Vec<usize>)> = train_samples.iter().map(|&s| Ok((s, task.targets(s)?))).collect::<Result<_, TrainError>>()?;

    let model_cfg = cfg.model_config(container.header.pad_len);
    let mut model = Model::<S>::new(model_cfg, cfg.seed)?;
    let mut adam = Adam::new(&model.params.tensors, cfg.weight_decay);
    let schedule = cfg.schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let per_epoch = if cfg.windows_per_trajectory == 0 {
        all_train.iter().map(|t| t.1.len()).sum::<usize>()
    } else {
        all_train.iter().map(|t| t.1.len().min(cfg.windows_per_trajectory)).sum()
    };
    let batches = per_epoch.div_ceil(cfg.batch_size);
    let total_steps = batches * cfg.epochs;
    let chunk = rayon::current_num_threads().max(1);
    info!(
        "{}: {} parameters, {} training windows per epoch, {} validation windows",
        cfg.name,
        model.params.count(),
        per_epoch,
        val_windows.len()
    );

    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, Vec<Tensor<S>>)> = None;
    let mut last_finite = f64::NAN;
    let mut step = 0usize;
    let started = Instant::now();
    for epoch in 0..cfg.epochs {
        let mut windows: Vec<Window> = Vec::with_capacity(per_epoch);
        for (s, targets) in &all_train {
            if cfg.windows_per_trajectory == 0 || cfg.windows_per_trajectory >= targets.len() {
                windows.extend(targets.iter().map(|&t| Window { sample: *s, target: t }));
            } else {
                windows.extend(targets.choose_multiple(&mut rng, cfg.windows_per_trajectory).map(|&t| Window { sample: *s, target: t }));
            }
        }
        windows.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut lr = cfg.learning_rate;
        for (b, batch) in windows.chunks(cfg.batch_size).enumerate() {
            lr = schedule.lr(cfg.learning_rate, step, total_steps, epoch);
            let mut grads: Vec<Tensor<S>> = model.params.tensors.iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect();
            let mut batch_loss = 0.0;
            for (c, part) in batch.chunks(chunk).enumerate() {
                let results: Result<Vec<_>, TrainError> = part
                    .par_iter()
                    .enumerate()
                    .map(|(k, &w)| {
                        let r = ChaCha8Rng::seed_from_u64(mix(&[cfg.seed, epoch as u64, b as u64, (c * chunk + k) as u64]));
                        sample_gradient(&model, &task, w, r)
                    })
                    .collect();
                for (loss, g) in results? {
                    batch_loss += loss;
                    for (acc, gi) in grads.iter_mut().zip(g) {
                        if let Some(gi) = gi {
                            acc.add_assign(&gi);
                        }
                    }
                }
            }
            let inv = S::one() / S::from_count(batch.len());
            grads.iter_mut().for_each(|g| g.scale_assign(inv));
            batch_loss /= batch.len() as f64;
            if !batch_loss.is_finite() || grads.iter().any(|g| g.data.iter().any(|v| !v.is_finite())) {
                return Err(TrainError::Diverged { epoch: epoch + 1, last_finite });
            }
            last_finite = batch_loss;
            adam.update(&mut model.params.tensors, &grads, lr);
            epoch_loss += batch_loss * batch.len() as f64;
            step += 1;
        }
        let train_loss = epoch_loss / windows.len().max(1) as f64;
        let val_loss = validation_loss(&model, &task, &val_windows)?;
        if !val_loss.is_finite() && !val_windows.is_empty() {
            return Err(TrainError::Diverged { epoch: epoch + 1, last_finite });
        }
        let record = EpochRecord { epoch: epoch + 1, train_loss, val_loss, lr, wall_time: started.elapsed().as_secs_f64() };
        info!("{} epoch {}: train {:.4e} val {:.4e} lr {:.2e}", cfg.name, record.epoch, train_loss, val_loss, lr);
        let score = if val_windows.is_empty() { train_loss } else { val_loss };
        if best.as_ref().map_or(true, |b| score < b.1) {
            best = Some((epoch + 1, score, model.params.tensors.clone()));
        }
        log.push(record);
    }
    let (best_epoch, best_val, weights) = best.expect("at least one epoch");
    model.params.tensors = weights;
    Ok(Checkpoint {
        config: cfg.clone(),
        family: container.family(),
        model,
        best_epoch,
        best_val,
        log,
        norm,
        plan: plan.clone(),
        dataset_hash: container.content_hash(),
        rng: RngState { seed: cfg.seed, word_pos: rng.get_word_pos() },
    })
}
