use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::params::{Linear, ParamSet};
use super::tensor::Tensor;
use super::NnError;
use crate::scalar::Real;

/// Softmax-free attention `Q (K~^T V~) / n` with `K~`, `V~` standardized
/// per column over the `n` sequence rows. `Q`, `K`: `[n, dk]`; `V`: `[n, dv]`.
pub fn linear_attention<S: Real>(g: &mut Graph<'_, S>, q: Var, k: Var, v: Var) -> Result<Var, NnError> {
    let (n, dk) = g.shape(q);
    if n == 0 {
        return Err(NnError::Shape("linear attention over an empty sequence".into()));
    }
    if g.shape(k) != (n, dk) || g.shape(v).0 != n {
        return Err(NnError::Shape(format!(
            "linear attention shapes Q {:?}, K {:?}, V {:?}",
            g.shape(q),
            g.shape(k),
            g.shape(v)
        )));
    }
    let kn = g.instance_norm_cols(k);
    let vn = g.instance_norm_cols(v);
    // (Q K~^T) V~ equals Q (K~^T V~) and is cheaper when n < dk, dv.
    let kt = g.transpose(kn);
    let out = if n < dk {
        let qk = g.matmul(q, kt);
        g.matmul(qk, vn)
    } else {
        let ktv = g.matmul(kt, vn);
        g.matmul(q, ktv)
    };
    Ok(g.scale(out, S::one() / S::from_count(n)))
}

/// Fixed sinusoidal position table `[len, width]`.
pub fn positional_encoding<S: Real>(len: usize, width: usize) -> Tensor<S> {
    let mut t = Tensor::zeros(len, width);
    for p in 0..len {
        for i in 0..width {
            let freq = 10000f64.powf(-((i / 2 * 2) as f64) / width as f64);
            let a = p as f64 * freq;
            *t.at_mut(p, i) = S::lit(if i % 2 == 0 { a.sin() } else { a.cos() });
        }
    }
    t
}

/// Single multi-head softmax self-attention layer over the equation tokens.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenAttention {
    pub tokens: usize,
    pub width: usize,
    pub heads: usize,
    pub dropout: f64,
    embed: Linear,
    query: Linear,
    key: Linear,
    value: Linear,
    out: Linear,
}

/// Latent equation representation plus the per-head attention weights.
pub struct TokenAttentionOutput {
    pub latent: Var,
    pub weights: Vec<Var>,
}

impl TokenAttention {
    pub fn new<S: Real>(
        ps: &mut ParamSet<S>,
        tokens: usize,
        width: usize,
        heads: usize,
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, NnError> {
        if heads == 0 || width % heads != 0 {
            return Err(NnError::Config(format!("width {width} is not divisible into {heads} heads")));
        }
        Ok(Self {
            tokens,
            width,
            heads,
            dropout,
            embed: Linear::new(ps, "token.embed", 1, width, rng),
            query: Linear::new(ps, "token.query", width, width, rng),
            // A key bias only shifts each softmax row and has no effect.
            key: Linear::without_bias(ps, "token.key", width, width, rng),
            value: Linear::new(ps, "token.value", width, width, rng),
            out: Linear::new(ps, "token.out", width, width, rng),
        })
    }

    /// `tokens` are the normalized ids in `[-1, 1]`.
    pub fn forward<S: Real>(&self, g: &mut Graph<'_, S>, tokens: &[S]) -> Result<TokenAttentionOutput, NnError> {
        if tokens.len() != self.tokens {
            return Err(NnError::Shape(format!("expected {} tokens, got {}", self.tokens, tokens.len())));
        }
        let t = g.input(Tensor::column(tokens.to_vec()));
        let e = self.embed.apply(g, t);
        let pe = g.input(positional_encoding(self.tokens, self.width));
        let e = g.add(e, pe);
        let q = self.query.apply(g, e);
        let k = self.key.apply(g, e);
        let v = self.value.apply(g, e);
        let hd = self.width / self.heads;
        let scale = S::one() / S::from_count(hd).sqrt();
        let mut heads = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * hd, hd);
            let kh = g.slice_cols(k, h * hd, hd);
            let vh = g.slice_cols(v, h * hd, hd);
            let kt = g.transpose(kh);
            let s = g.matmul(qh, kt);
            let s = g.scale(s, scale);
            let w = g.softmax_rows(s);
            weights.push(w);
            heads.push(g.matmul(w, vh));
        }
        let cat = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads) };
        let o = self.out.apply(g, cat);
        let latent = g.dropout(o, self.dropout);
        Ok(TokenAttentionOutput { latent, weights })
    }
}

/// Residual linear-attention update layers driven by the latent equation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NumericalUpdate {
    pub width: usize,
    pub heads: usize,
    pub layers: usize,
    pub dropout: f64,
    query: Linear,
    key: Linear,
    time1: Linear,
    time2: Linear,
    mlp1: Vec<Linear>,
    mlp2: Vec<Linear>,
}

impl NumericalUpdate {
    pub fn new<S: Real>(
        ps: &mut ParamSet<S>,
        width: usize,
        heads: usize,
        layers: usize,
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, NnError> {
        if layers == 0 {
            return Err(NnError::Config("numerical update needs at least one layer".into()));
        }
        if heads == 0 || width % heads != 0 {
            return Err(NnError::Config(format!("width {width} is not divisible into {heads} heads")));
        }
        let query = Linear::new(ps, "update.query", width, width, rng);
        let key = Linear::new(ps, "update.key", width, width, rng);
        let time1 = Linear::new(ps, "update.time1", 1, width, rng);
        let time2 = Linear::new(ps, "update.time2", width, width, rng);
        let mut mlp1 = Vec::with_capacity(layers);
        let mut mlp2 = Vec::with_capacity(layers);
        for l in 0..layers {
            mlp1.push(Linear::new(ps, &format!("update.layer{l}.fc1"), 2 * width, width, rng));
            mlp2.push(Linear::new(ps, &format!("update.layer{l}.fc2"), width, width, rng));
        }
        Ok(Self { width, heads, layers, dropout, query, key, time1, time2, mlp1, mlp2 })
    }

    /// Output layer of each update MLP; zeroing these makes the block the identity.
    pub fn final_layers(&self) -> impl Iterator<Item = &Linear> {
        self.mlp2.iter()
    }

    /// One multi-head linear attention pass. Channels form the sequence axis:
    /// the latent equation supplies `[width, P]` queries and keys and the
    /// field supplies `[width, N]` values, split across heads by channel.
    pub fn attend<S: Real>(&self, g: &mut Graph<'_, S>, th1: Var, th2: Var, v: Var) -> Result<Var, NnError> {
        let hd = self.width / self.heads;
        let vt = g.transpose(v);
        let mut parts = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let q = g.slice_rows(th1, h * hd, hd);
            let k = g.slice_rows(th2, h * hd, hd);
            let vh = g.slice_rows(vt, h * hd, hd);
            parts.push(linear_attention(g, q, k, vh)?);
        }
        let z = if parts.len() == 1 { parts[0] } else { g.concat_rows(&parts) };
        Ok(g.transpose(z))
    }

    /// `V_l = V_{l-1} + MLP([Dropout(LA(T_h1, T_h2, V_{l-1})), MLP_t(l t / L)])`.
    pub fn forward<S: Real>(&self, g: &mut Graph<'_, S>, v0: Var, latent: Var, t: S) -> Result<Var, NnError> {
        let (n, w) = g.shape(v0);
        if w != self.width || g.shape(latent).1 != self.width {
            return Err(NnError::Shape(format!("update width {} vs inputs {:?}, {:?}", self.width, g.shape(v0), g.shape(latent))));
        }
        let q = self.query.apply(g, latent);
        let k = self.key.apply(g, latent);
        let th1 = g.transpose(q);
        let th2 = g.transpose(k);
        let mut v = v0;
        for l in 0..self.layers {
            let x = self.attend(g, th1, th2, v)?;
            let x = g.dropout(x, self.dropout);
            let frac = S::from_count(l + 1) * t / S::from_count(self.layers);
            let tin = g.input(Tensor::filled(1, 1, frac));
            let te = self.time1.apply(g, tin);
            let te = g.tanh(te);
            let te = self.time2.apply(g, te);
            let tb = g.broadcast_rows(te, n);
            let cat = g.concat_cols(&[x, tb]);
            let h = self.mlp1[l].apply(g, cat);
            let h = g.gelu(h);
            let h = self.mlp2[l].apply(g, h);
            v = g.add(v, h);
        }
        Ok(v)
    }
}
