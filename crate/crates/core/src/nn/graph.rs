//! Reverse-mode automatic differentiation on a per-sample tape.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::spectral::{SpectralCache, SpectralPlan};
use super::tensor::Tensor;
use crate::scalar::Real;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<S> {
    Input,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, S),
    AddRow(Var, Var),
    BroadcastRows(Var),
    Gelu(Var),
    Tanh(Var),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    SoftmaxRows(Var),
    InstanceNormCols(Var, Vec<S>),
    Dropout(Var, Vec<S>),
    Spectral { x: Var, wr: Var, wi: Var, plan: Arc<SpectralPlan<S>>, cache: SpectralCache<S> },
    MeanSquare(Var, Var),
}

struct Node<S> {
    op: Op<S>,
    value: Option<Tensor<S>>,
    shape: (usize, usize),
}

/// Epsilon added to the variance in instance normalization.
pub const NORM_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4;
const GELU_A: f64 = 0.044_715;

/// Tape for one forward/backward pass. Parameters are borrowed, not copied.
pub struct Graph<'p, S: Real> {
    params: &'p [Tensor<S>],
    nodes: Vec<Node<S>>,
    dropout_rng: Option<ChaCha8Rng>,
}

impl<'p, S: Real> Graph<'p, S> {
    /// Evaluation-mode tape: dropout is the identity.
    pub fn new(params: &'p [Tensor<S>]) -> Self {
        Self { params, nodes: Vec::new(), dropout_rng: None }
    }

    /// Training-mode tape: dropout masks are drawn from `rng`.
    pub fn training(params: &'p [Tensor<S>], rng: ChaCha8Rng) -> Self {
        Self { params, nodes: Vec::new(), dropout_rng: Some(rng) }
    }

    pub fn is_training(&self) -> bool {
        self.dropout_rng.is_some()
    }

    fn push(&mut self, op: Op<S>, value: Tensor<S>) -> Var {
        let shape = value.shape();
        self.nodes.push(Node { op, value: Some(value), shape });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        match (&self.nodes[v.0].op, &self.nodes[v.0].value) {
            (Op::Param(i), _) => &self.params[*i],
            (_, Some(t)) => t,
            _ => unreachable!("node value missing"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].shape
    }

    pub fn input(&mut self, t: Tensor<S>) -> Var {
        self.push(Op::Input, t)
    }

    pub fn param(&mut self, index: usize) -> Var {
        let shape = self.params[index].shape();
        self.nodes.push(Node { op: Op::Param(index), value: None, shape });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(false, self.value(b), false);
        self.push(Op::MatMul(a, b), v)
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(S, S) -> S) -> Tensor<S> {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "elementwise shape mismatch");
        Tensor::from_vec(x.rows, x.cols, x.data.iter().zip(&y.data).map(|(&p, &q)| f(p, q)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p + q);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p - q);
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p * q);
        self.push(Op::Mul(a, b), v)
    }

    pub fn scale(&mut self, a: Var, s: S) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(Op::Scale(a, s), v)
    }

    /// `a [m, n] + row [1, n]` broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert_eq!((1, x.cols), r.shape(), "bias shape mismatch");
        let mut v = x.clone();
        for chunk in v.data.chunks_mut(x.cols) {
            for (d, b) in chunk.iter_mut().zip(&r.data) {
                *d += *b;
            }
        }
        self.push(Op::AddRow(a, row), v)
    }

    /// Repeats a `[1, n]` row `m` times.
    pub fn broadcast_rows(&mut self, a: Var, m: usize) -> Var {
        let x = self.value(a);
        assert_eq!(x.rows, 1);
        let mut data = Vec::with_capacity(m * x.cols);
        for _ in 0..m {
            data.extend_from_slice(&x.data);
        }
        let v = Tensor::from_vec(m, x.cols, data);
        self.push(Op::BroadcastRows(a), v)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let (c, k) = (S::lit(GELU_C), S::lit(GELU_A));
        let half = S::lit(0.5);
        let v = self.value(a).map(|x| half * x * (S::one() + (c * (x + k * x * x * x)).tanh()));
        self.push(Op::Gelu(a), v)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.tanh());
        self.push(Op::Tanh(a), v)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(Op::Transpose(a), v)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut v = Tensor::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                v.data[r * cols + off..r * cols + off + t.cols].copy_from_slice(t.row(r));
            }
            off += t.cols;
        }
        self.push(Op::ConcatCols(parts.to_vec()), v)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.cols);
        let mut v = Tensor::zeros(x.rows, len);
        for r in 0..x.rows {
            v.data[r * len..(r + 1) * len].copy_from_slice(&x.row(r)[start..start + len]);
        }
        self.push(Op::SliceCols(a, start), v)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols, cols, "concat_rows column mismatch");
            data.extend_from_slice(&t.data);
        }
        let rows = data.len() / cols.max(1);
        self.push(Op::ConcatRows(parts.to_vec()), Tensor::from_vec(rows, cols, data))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.rows);
        let v = Tensor::from_vec(len, x.cols, x.data[start * x.cols..(start + len) * x.cols].to_vec());
        self.push(Op::SliceRows(a, start), v)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        let cols = v.cols;
        for row in v.data.chunks_mut(cols) {
            let m = row.iter().fold(S::neg_infinity(), |m, &x| m.max(x));
            let mut z = S::zero();
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                z += *x;
            }
            for x in row.iter_mut() {
                *x /= z;
            }
        }
        self.push(Op::SoftmaxRows(a), v)
    }

    /// Standardizes each column over the rows (no affine terms). A constant
    /// column, including an all-zero one, maps to zeros.
    pub fn instance_norm_cols(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let (n, d) = x.shape();
        let nn = S::from_count(n);
        let eps = S::lit(NORM_EPS);
        let mut v = x.clone();
        let mut inv = Vec::with_capacity(d);
        for c in 0..d {
            let mean = (0..n).map(|r| x.at(r, c)).sum::<S>() / nn;
            let var = (0..n).map(|r| (x.at(r, c) - mean).powi(2)).sum::<S>() / nn;
            let is = S::one() / (var + eps).sqrt();
            for r in 0..n {
                *v.at_mut(r, c) = (x.at(r, c) - mean) * is;
            }
            inv.push(is);
        }
        self.push(Op::InstanceNormCols(a, inv), v)
    }

    /// Inverted dropout; the identity on evaluation tapes or when `p == 0`.
    pub fn dropout(&mut self, a: Var, p: f64) -> Var {
        if p <= 0.0 {
            return a;
        }
        let Some(rng) = self.dropout_rng.as_mut() else {
            return a;
        };
        let n = self.nodes[a.0].shape.0 * self.nodes[a.0].shape.1;
        let keep = S::lit(1.0 / (1.0 - p));
        let mask: Vec<S> = (0..n).map(|_| if rng.gen::<f64>() < p { S::zero() } else { keep }).collect();
        let x = self.value(a);
        let v = Tensor::from_vec(x.rows, x.cols, x.data.iter().zip(&mask).map(|(&a, &m)| a * m).collect());
        self.push(Op::Dropout(a, mask), v)
    }

    pub fn spectral(&mut self, x: Var, wr: Var, wi: Var, plan: Arc<SpectralPlan<S>>) -> Var {
        let (v, cache) = plan.forward(self.value(x), self.value(wr), self.value(wi));
        self.push(Op::Spectral { x, wr, wi, plan, cache }, v)
    }

    /// Mean of `(a - b)^2` as a `[1, 1]` tensor.
    pub fn mean_square(&mut self, a: Var, b: Var) -> Var {
        let d = self.zip(a, b, |p, q| (p - q) * (p - q));
        let m = d.sum() / S::from_count(d.len());
        self.push(Op::MeanSquare(a, b), Tensor::from_vec(1, 1, vec![m]))
    }

    /// Back-propagates from scalar `root` and returns one gradient per
    /// parameter (`None` for parameters the tape never touched).
    pub fn backward(&self, root: Var) -> Vec<Option<Tensor<S>>> {
        assert_eq!(self.shape(root), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::filled(1, 1, S::one()));
        let mut out: Vec<Option<Tensor<S>>> = (0..self.params.len()).map(|_| None).collect();
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let acc = |v: Var, d: Tensor<S>, grads: &mut Vec<Option<Tensor<S>>>| match &mut grads[v.0] {
                Some(t) => t.add_assign(&d),
                slot @ None => *slot = Some(d),
            };
            match &self.nodes[idx].op {
                Op::Input => {}
                Op::Param(i) => match &mut out[*i] {
                    Some(t) => t.add_assign(&g),
                    slot @ None => *slot = Some(g),
                },
                Op::MatMul(a, b) => {
                    let da = g.matmul(false, self.value(*b), true);
                    let db = self.value(*a).matmul(true, &g, false);
                    acc(*a, da, &mut grads);
                    acc(*b, db, &mut grads);
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone(), &mut grads);
                    acc(*b, g, &mut grads);
                }
                Op::Sub(a, b) => {
                    acc(*b, g.map(|x| -x), &mut grads);
                    acc(*a, g, &mut grads);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let da = Tensor::from_vec(g.rows, g.cols, g.data.iter().zip(&y.data).map(|(&d, &q)| d * q).collect());
                    let db = Tensor::from_vec(g.rows, g.cols, g.data.iter().zip(&x.data).map(|(&d, &p)| d * p).collect());
                    acc(*a, da, &mut grads);
                    acc(*b, db, &mut grads);
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    acc(*a, g.map(|x| x * s), &mut grads);
                }
                Op::AddRow(a, row) => {
                    let mut dr = Tensor::zeros(1, g.cols);
                    for chunk in g.data.chunks(g.cols) {
                        for (d, v) in dr.data.iter_mut().zip(chunk) {
                            *d += *v;
                        }
                    }
                    acc(*row, dr, &mut grads);
                    acc(*a, g, &mut grads);
                }
                Op::BroadcastRows(a) => {
                    let mut dr = Tensor::zeros(1, g.cols);
                    for chunk in g.data.chunks(g.cols) {
                        for (d, v) in dr.data.iter_mut().zip(chunk) {
                            *d += *v;
                        }
                    }
                    acc(*a, dr, &mut grads);
                }
                Op::Gelu(a) => {
                    let (c, k) = (S::lit(GELU_C), S::lit(GELU_A));
                    let half = S::lit(0.5);
                    let three = S::lit(3.0);
                    let x = self.value(*a);
                    let d = x
                        .data
                        .iter()
                        .zip(&g.data)
                        .map(|(&x, &d)| {
                            let th = (c * (x + k * x * x * x)).tanh();
                            let dydx = half * (S::one() + th) + half * x * (S::one() - th * th) * c * (S::one() + three * k * x * x);
                            d * dydx
                        })
                        .collect();
                    acc(*a, Tensor::from_vec(g.rows, g.cols, d), &mut grads);
                }
                Op::Tanh(a) => {
                    let y = self.nodes[idx].value.as_ref().unwrap();
                    let d = y.data.iter().zip(&g.data).map(|(&y, &d)| d * (S::one() - y * y)).collect();
                    acc(*a, Tensor::from_vec(g.rows, g.cols, d), &mut grads);
                }
                Op::Transpose(a) => acc(*a, g.transpose(), &mut grads),
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        let mut d = Tensor::zeros(g.rows, w);
                        for r in 0..g.rows {
                            d.data[r * w..(r + 1) * w].copy_from_slice(&g.row(r)[off..off + w]);
                        }
                        off += w;
                        acc(p, d, &mut grads);
                    }
                }
                Op::SliceCols(a, start) => {
                    let (rows, cols) = self.shape(*a);
                    let mut d = Tensor::zeros(rows, cols);
                    for r in 0..rows {
                        d.data[r * cols + start..r * cols + start + g.cols].copy_from_slice(g.row(r));
                    }
                    acc(*a, d, &mut grads);
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let (r, c) = self.shape(p);
                        acc(p, Tensor::from_vec(r, c, g.data[off..off + r * c].to_vec()), &mut grads);
                        off += r * c;
                    }
                }
                Op::SliceRows(a, start) => {
                    let (rows, cols) = self.shape(*a);
                    let mut d = Tensor::zeros(rows, cols);
                    d.data[start * cols..start * cols + g.len()].copy_from_slice(&g.data);
                    acc(*a, d, &mut grads);
                }
                Op::SoftmaxRows(a) => {
                    let y = self.nodes[idx].value.as_ref().unwrap();
                    let mut d = g.clone();
                    for (dr, yr) in d.data.chunks_mut(g.cols).zip(y.data.chunks(g.cols)) {
                        let dot: S = dr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                        for (dv, &yv) in dr.iter_mut().zip(yr) {
                            *dv = yv * (*dv - dot);
                        }
                    }
                    acc(*a, d, &mut grads);
                }
                Op::InstanceNormCols(a, inv) => {
                    let y = self.nodes[idx].value.as_ref().unwrap();
                    let (n, dcols) = y.shape();
                    let nn = S::from_count(n);
                    let mut d = Tensor::zeros(n, dcols);
                    for c in 0..dcols {
                        let mg = (0..n).map(|r| g.at(r, c)).sum::<S>() / nn;
                        let mgy = (0..n).map(|r| g.at(r, c) * y.at(r, c)).sum::<S>() / nn;
                        for r in 0..n {
                            *d.at_mut(r, c) = inv[c] * (g.at(r, c) - mg - y.at(r, c) * mgy);
                        }
                    }
                    acc(*a, d, &mut grads);
                }
                Op::Dropout(a, mask) => {
                    let d = g.data.iter().zip(mask).map(|(&d, &m)| d * m).collect();
                    acc(*a, Tensor::from_vec(g.rows, g.cols, d), &mut grads);
                }
                Op::Spectral { x, wr, wi, plan, cache } => {
                    let (dx, dwr, dwi) = plan.backward(&g, cache, self.value(*wr), self.value(*wi));
                    acc(*x, dx, &mut grads);
                    acc(*wr, dwr, &mut grads);
                    acc(*wi, dwi, &mut grads);
                }
                Op::MeanSquare(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let f = g.data[0] * S::lit(2.0) / S::from_count(x.len());
                    let da: Vec<S> = x.data.iter().zip(&y.data).map(|(&p, &q)| f * (p - q)).collect();
                    let db = Tensor::from_vec(x.rows, x.cols, da.iter().map(|&v| -v).collect());
                    acc(*a, Tensor::from_vec(x.rows, x.cols, da), &mut grads);
                    acc(*b, db, &mut grads);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor<f64> {
        Tensor::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Finite-difference check of every elementwise and structural op.
    #[test]
    fn ops_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = vec![random(&mut rng, 4, 3), random(&mut rng, 3, 5), random(&mut rng, 1, 5)];
        let target = random(&mut rng, 5, 4);
        let loss = |ps: &[Tensor<f64>]| -> (f64, Vec<Option<Tensor<f64>>>) {
            let mut g = Graph::new(ps);
            let (a, b, bias) = (g.param(0), g.param(1), g.param(2));
            let ab = g.matmul(a, b);
            let h = g.add_row(ab, bias);
            let h = g.gelu(h);
            let s = g.softmax_rows(h);
            let n = g.instance_norm_cols(h);
            let m = g.mul(s, n);
            let t = g.tanh(m);
            let tt = g.transpose(t);
            let left = g.slice_cols(tt, 0, 2);
            let right = g.slice_cols(tt, 2, 2);
            let sw = g.concat_cols(&[right, left]);
            let top = g.slice_rows(sw, 0, 2);
            let bot = g.slice_rows(sw, 2, 3);
            let rs = g.concat_rows(&[bot, top]);
            let sc = g.scale(rs, 1.7);
            let br = g.broadcast_rows(bias, 4);
            let brt = g.transpose(br);
            let mix = g.sub(sc, brt);
            let tgt = g.input(target.clone());
            let l = g.mean_square(mix, tgt);
            (g.value(l).data[0], g.backward(l))
        };
        let (_, grads) = loss(&params);
        for (pi, p) in params.iter().enumerate() {
            let ga = grads[pi].as_ref().unwrap();
            for k in 0..p.len() {
                let h = 1e-6;
                let mut plus = params.clone();
                plus[pi].data[k] += h;
                let mut minus = params.clone();
                minus[pi].data[k] -= h;
                let fd = (loss(&plus).0 - loss(&minus).0) / (2.0 * h);
                assert!((fd - ga.data[k]).abs() < 1e-7, "param {pi}[{k}]: fd {fd} vs {}", ga.data[k]);
            }
        }
    }

    #[test]
    fn instance_norm_zero_and_constant_columns() {
        let p = vec![Tensor::from_vec(3, 2, vec![0.0, 2.0, 0.0, 2.0, 0.0, 2.0])];
        let mut g = Graph::new(&p);
        let x = g.param(0);
        let y = g.instance_norm_cols(x);
        assert!(g.value(y).data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dropout_only_in_training() {
        let p = vec![Tensor::filled(10, 10, 1.0f64)];
        let mut g = Graph::new(&p);
        let x = g.param(0);
        assert_eq!(g.dropout(x, 0.5), x);
        let mut g = Graph::training(&p, ChaCha8Rng::seed_from_u64(0));
        let x = g.param(0);
        let y = g.dropout(x, 0.5);
        let v = g.value(y);
        assert!(v.data.iter().all(|&a| a == 0.0 || a == 2.0));
        assert!(v.data.iter().any(|&a| a == 0.0));
    }
}
