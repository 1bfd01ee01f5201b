use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::scalar::Real;

/// Named parameter tensors; index order is registration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet<S> {
    names: Vec<String>,
    pub tensors: Vec<Tensor<S>>,
}

impl<S: Real> Default for ParamSet<S> {
    fn default() -> Self {
        Self { names: Vec::new(), tensors: Vec::new() }
    }
}

impl<S: Real> ParamSet<S> {
    pub fn add(&mut self, name: impl Into<String>, t: Tensor<S>) -> usize {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    /// Uniform in `[-bound, bound]`.
    pub fn add_uniform(&mut self, name: impl Into<String>, rows: usize, cols: usize, bound: f64, rng: &mut ChaCha8Rng) -> usize {
        let data = (0..rows * cols).map(|_| S::lit(rng.gen_range(-bound..=bound))).collect();
        self.add(name, Tensor::from_vec(rows, cols, data))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.index_of(name).map(move |i| &mut self.tensors[i])
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// Parameter indices grouped by name prefix up to the first `.`.
    pub fn groups(&self) -> BTreeMap<String, Vec<usize>> {
        let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, n) in self.names.iter().enumerate() {
            let key = n.split('.').next().unwrap_or(n).to_string();
            out.entry(key).or_default().push(i);
        }
        out
    }

    pub fn cast<T: Real>(&self) -> ParamSet<T> {
        ParamSet { names: self.names.clone(), tensors: self.tensors.iter().map(|t| t.cast()).collect() }
    }
}

/// Fully connected layer handle: weight `[in, out]`, optional bias `[1, out]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Linear {
    pub w: usize,
    pub b: Option<usize>,
}

impl Linear {
    pub fn new<S: Real>(ps: &mut ParamSet<S>, name: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = ps.add_uniform(format!("{name}.weight"), fan_in, fan_out, bound, rng);
        let b = ps.add_uniform(format!("{name}.bias"), 1, fan_out, bound, rng);
        Self { w, b: Some(b) }
    }

    pub fn without_bias<S: Real>(ps: &mut ParamSet<S>, name: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Self { w: ps.add_uniform(format!("{name}.weight"), fan_in, fan_out, bound, rng), b: None }
    }

    pub fn apply<S: Real>(&self, g: &mut super::Graph<'_, S>, x: super::Var) -> super::Var {
        let w = g.param(self.w);
        let y = g.matmul(x, w);
        match self.b {
            Some(b) => {
                let b = g.param(b);
                g.add_row(y, b)
            }
            None => y,
        }
    }
}
