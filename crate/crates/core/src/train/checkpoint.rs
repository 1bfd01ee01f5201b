use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::data::{NormStats, SplitPlan, Task};
use super::trainer::EpochRecord;
use super::TrainError;
use crate::container::DatasetContainer;
use crate::eqtok::Family;
use crate::nn::{Model, ModelConfig, ParamSet, Tensor};
use crate::scalar::Real;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PITTCK\0\x01";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub word_pos: u128,
}

/// Trained weights plus everything needed to evaluate or resume them.
#[derive(Debug, Clone)]
pub struct Checkpoint<S: Real> {
    pub config: TrainConfig,
    pub family: Family,
    pub model: Model<S>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub log: Vec<EpochRecord>,
    pub norm: NormStats,
    pub plan: SplitPlan,
    pub dataset_hash: String,
    pub rng: RngState,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: TrainConfig,
    family: Family,
    model: ModelConfig,
    scalar: String,
    best_epoch: usize,
    best_val: f64,
    log: Vec<EpochRecord>,
    norm: NormStats,
    plan: SplitPlan,
    dataset_hash: String,
    rng: RngState,
    params: Vec<(String, usize, usize)>,
}

impl<S: Real> Checkpoint<S> {
    /// Task view of `container` with this checkpoint's regime and statistics.
    pub fn task<'a>(&self, container: &'a DatasetContainer) -> Result<Task<'a>, TrainError> {
        if container.family() != self.family {
            return Err(TrainError::Config(format!(
                "checkpoint was trained on {} data, dataset is {}",
                self.family.name(),
                container.family().name()
            )));
        }
        if container.len() != self.plan.assignment.len() {
            return Err(TrainError::Config("dataset size does not match the checkpoint's split plan".into()));
        }
        Ok(Task::new(container, self.config.regime, self.config.horizon, self.config.spatial_stride)?.with_norm(self.norm))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), TrainError> {
        let meta = Meta {
            config: self.config.clone(),
            family: self.family,
            model: self.model.config.clone(),
            scalar: S::NAME.to_string(),
            best_epoch: self.best_epoch,
            best_val: self.best_val,
            log: self.log.clone(),
            norm: self.norm,
            plan: self.plan.clone(),
            dataset_hash: self.dataset_hash.clone(),
            rng: self.rng,
            params: (0..self.model.params.len())
                .map(|i| {
                    let t = &self.model.params.tensors[i];
                    (self.model.params.name(i).to_string(), t.rows, t.cols)
                })
                .collect(),
        };
        let json = serde_json::to_vec(&meta).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_u64::<LittleEndian>(json.len() as u64)?;
        w.write_all(&json)?;
        for t in &self.model.params.tensors {
            for v in &t.data {
                w.write_f64::<LittleEndian>(v.to_f64_lossy())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, TrainError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(TrainError::Checkpoint("not a checkpoint file".into()));
        }
        let len = r.read_u64::<LittleEndian>()? as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let meta: Meta = serde_json::from_slice(&json).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        let mut params = ParamSet::default();
        for (name, rows, cols) in &meta.params {
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                data.push(S::lit(r.read_f64::<LittleEndian>()?));
            }
            params.add(name.clone(), Tensor::from_vec(*rows, *cols, data));
        }
        let mut model = Model::new(meta.model, meta.config.seed)?;
        model.load_params(params)?;
        Ok(Self {
            config: meta.config,
            family: meta.family,
            model,
            best_epoch: meta.best_epoch,
            best_val: meta.best_val,
            log: meta.log,
            norm: meta.norm,
            plan: meta.plan,
            dataset_hash: meta.dataset_hash,
            rng: meta.rng,
        })
    }

    pub fn save(&self, path: &Path, overwrite: bool) -> Result<(), TrainError> {
        if path.exists() && !overwrite {
            return Err(TrainError::Exists(path.display().to_string()));
        }
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}
