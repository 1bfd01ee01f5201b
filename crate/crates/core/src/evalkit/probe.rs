use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::eqtok::{tokenize_equation, EquationSpec};
use crate::nn::Tensor;
use crate::scalar::Real;
use crate::train::{Checkpoint, TrainError};

/// Entries below this fraction of a map's maximum count as unchanged.
pub const SUPPORT_FRACTION: f64 = 0.01;

/// Elementwise `|W(modified) - W(base)|` of the token self-attention weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionDiffMap {
    pub base: EquationSpec,
    pub modified: EquationSpec,
    /// One `[P, P]` map per head.
    pub heads: Vec<Tensor<f64>>,
}

impl AttentionDiffMap {
    pub fn max(&self) -> f64 {
        self.heads.iter().map(|h| h.max_abs()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.heads.iter().all(|h| h.data.iter().all(|&v| v == 0.0))
    }

    /// `(head, row, col)` of entries above `fraction` of the map maximum.
    pub fn support(&self, fraction: f64) -> BTreeSet<(usize, usize, usize)> {
        let max = self.max();
        let mut out = BTreeSet::new();
        if max == 0.0 {
            return out;
        }
        for (h, t) in self.heads.iter().enumerate() {
            for (k, &v) in t.data.iter().enumerate() {
                if v > fraction * max {
                    out.insert((h, k / t.cols, k % t.cols));
                }
            }
        }
        out
    }

    /// Map averaged over heads, `[P, P]`.
    pub fn mean_map(&self) -> Tensor<f64> {
        let mut m = self.heads[0].clone();
        for h in &self.heads[1..] {
            m.add_assign(h);
        }
        m.scale_assign(1.0 / self.heads.len() as f64);
        m
    }
}

/// Jaccard overlap `|a ∩ b| / |a ∪ b|`; two empty sets overlap fully.
pub fn support_overlap(a: &BTreeSet<(usize, usize, usize)>, b: &BTreeSet<(usize, usize, usize)>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        1.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

/// Evaluation-mode attention weights for both specs and their difference.
pub fn probe_attention<S: Real>(ck: &Checkpoint<S>, base: &EquationSpec, modified: &EquationSpec) -> Result<AttentionDiffMap, TrainError> {
    let crate::nn::ModelConfig::Pitt(cfg) = &ck.model.config else {
        return Err(TrainError::Config("attention probing needs a PITT checkpoint".into()));
    };
    let tokens = |spec: &EquationSpec| -> Result<Vec<S>, TrainError> {
        let seq = tokenize_equation(spec, cfg.tokens)?;
        Ok(seq.normalized.into_iter().map(S::lit).collect())
    };
    let a = ck.model.attention_weights(&tokens(base)?)?;
    let b = ck.model.attention_weights(&tokens(modified)?)?;
    let heads = a
        .iter()
        .zip(&b)
        .map(|(x, y)| {
            let data = x.data.iter().zip(&y.data).map(|(p, q)| (p.to_f64_lossy() - q.to_f64_lossy()).abs()).collect();
            Tensor::from_vec(x.rows, x.cols, data)
        })
        .collect();
    Ok(AttentionDiffMap { base: base.clone(), modified: modified.clone(), heads })
}
