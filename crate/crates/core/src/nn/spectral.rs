//! Truncated-Fourier convolution with a hand-written adjoint.
//!
//! A field is stored as `[n1 * n2, channels]` (row-major grid, `n2` fastest).
//! The transform keeps wavenumbers `k2 < m2` along the fast axis (real
//! transform) and `k1 in [0, m1) u [n1 - m1, n1)` along the slow axis. A
//! one-dimensional field is the special case `n1 = 1`.
//!
//! The inverse matches a real inverse FFT applied to a spectrum that is zero
//! outside the kept block, so the layer is the usual FNO spectral
//! convolution expressed with dense DFT matrices.

use super::tensor::Tensor;
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct SpectralPlan<S> {
    pub n1: usize,
    pub n2: usize,
    pub m2: usize,
    k1: Vec<usize>,
    c1: Tensor<S>,
    s1: Tensor<S>,
    c2: Tensor<S>,
    s2: Tensor<S>,
    weight2: Vec<S>,
}

/// Intermediate spectra needed by the backward pass.
#[derive(Debug, Clone)]
pub struct SpectralCache<S> {
    xr: Tensor<S>,
    xi: Tensor<S>,
}

impl<S: Real> SpectralPlan<S> {
    pub fn new(n1: usize, n2: usize, m1: usize, m2: usize) -> Result<Self, String> {
        if m2 == 0 || m2 > n2 / 2 {
            return Err(format!("{m2} modes exceed the Nyquist limit {} of a {n2}-point axis", n2 / 2));
        }
        let k1: Vec<usize> = if n1 == 1 {
            vec![0]
        } else {
            if m1 == 0 || 2 * m1 > n1 {
                return Err(format!("{m1} modes exceed the Nyquist limit {} of a {n1}-point axis", n1 / 2));
            }
            (0..m1).chain(n1 - m1..n1).collect()
        };
        let tau = 2.0 * std::f64::consts::PI;
        let mut c1 = Tensor::zeros(k1.len(), n1);
        let mut s1 = Tensor::zeros(k1.len(), n1);
        for (a, &k) in k1.iter().enumerate() {
            for i in 0..n1 {
                let th = tau * ((k * i) % n1) as f64 / n1 as f64;
                *c1.at_mut(a, i) = S::lit(th.cos());
                *s1.at_mut(a, i) = S::lit(th.sin());
            }
        }
        let mut c2 = Tensor::zeros(m2, n2);
        let mut s2 = Tensor::zeros(m2, n2);
        for k in 0..m2 {
            for j in 0..n2 {
                let th = tau * ((k * j) % n2) as f64 / n2 as f64;
                *c2.at_mut(k, j) = S::lit(th.cos());
                *s2.at_mut(k, j) = S::lit(th.sin());
            }
        }
        let weight2 = (0..m2).map(|k| if k == 0 { S::one() } else { S::lit(2.0) }).collect();
        Ok(Self { n1, n2, m2, k1, c1, s1, c2, s2, weight2 })
    }

    /// Number of retained complex modes.
    pub fn modes(&self) -> usize {
        self.k1.len() * self.m2
    }

    fn points(&self) -> usize {
        self.n1 * self.n2
    }

    /// Real/imaginary spectrum `[M1, m2 * C]` of a real field `[n1 * n2, C]`.
    fn analyze(&self, x: &Tensor<S>) -> (Tensor<S>, Tensor<S>) {
        let c = x.cols;
        let mut ar = Tensor::zeros(self.n1, self.m2 * c);
        let mut ai = Tensor::zeros(self.n1, self.m2 * c);
        for i in 0..self.n1 {
            let xi = rows(x, i * self.n2, self.n2);
            let r = self.c2.matmul(false, &xi, false);
            let s = self.s2.matmul(false, &xi, false);
            ar.data[i * self.m2 * c..(i + 1) * self.m2 * c].copy_from_slice(&r.data);
            for (d, v) in ai.data[i * self.m2 * c..(i + 1) * self.m2 * c].iter_mut().zip(&s.data) {
                *d = -*v;
            }
        }
        let mut xr = self.c1.matmul(false, &ar, false);
        xr.add_matmul(S::one(), &self.s1, false, &ai, false);
        let mut xi = self.c1.matmul(false, &ai, false);
        xi.add_matmul(-S::one(), &self.s1, false, &ar, false);
        (xr, xi)
    }

    /// Adjoint of [`Self::analyze`].
    fn analyze_adjoint(&self, dxr: &Tensor<S>, dxi: &Tensor<S>, channels: usize) -> Tensor<S> {
        let mut dar = self.c1.matmul(true, dxr, false);
        dar.add_matmul(-S::one(), &self.s1, true, dxi, false);
        let mut dai = self.s1.matmul(true, dxr, false);
        dai.add_matmul(S::one(), &self.c1, true, dxi, false);
        let mut dx = Tensor::zeros(self.points(), channels);
        let w = self.m2 * channels;
        for i in 0..self.n1 {
            let r = Tensor::from_vec(self.m2, channels, dar.data[i * w..(i + 1) * w].to_vec());
            let s = Tensor::from_vec(self.m2, channels, dai.data[i * w..(i + 1) * w].to_vec());
            let mut block = self.c2.matmul(true, &r, false);
            block.add_matmul(-S::one(), &self.s2, true, &s, false);
            dx.data[i * self.n2 * channels..(i + 1) * self.n2 * channels].copy_from_slice(&block.data);
        }
        dx
    }

    /// Real field `[n1 * n2, C]` from a truncated spectrum `[M1, m2 * C]`.
    fn synthesize(&self, yr: &Tensor<S>, yi: &Tensor<S>, channels: usize) -> Tensor<S> {
        let mut br = self.c1.matmul(true, yr, false);
        br.add_matmul(-S::one(), &self.s1, true, yi, false);
        let mut bi = self.s1.matmul(true, yr, false);
        bi.add_matmul(S::one(), &self.c1, true, yi, false);
        let scale = S::one() / S::from_count(self.points());
        let w = self.m2 * channels;
        let mut y = Tensor::zeros(self.points(), channels);
        for i in 0..self.n1 {
            let mut r = Tensor::from_vec(self.m2, channels, br.data[i * w..(i + 1) * w].to_vec());
            let mut s = Tensor::from_vec(self.m2, channels, bi.data[i * w..(i + 1) * w].to_vec());
            for k in 0..self.m2 {
                let f = self.weight2[k] * scale;
                for ch in 0..channels {
                    *r.at_mut(k, ch) *= f;
                    *s.at_mut(k, ch) *= f;
                }
            }
            let mut block = self.c2.matmul(true, &r, false);
            block.add_matmul(-S::one(), &self.s2, true, &s, false);
            y.data[i * self.n2 * channels..(i + 1) * self.n2 * channels].copy_from_slice(&block.data);
        }
        y
    }

    /// Adjoint of [`Self::synthesize`].
    fn synthesize_adjoint(&self, dy: &Tensor<S>) -> (Tensor<S>, Tensor<S>) {
        let channels = dy.cols;
        let scale = S::one() / S::from_count(self.points());
        let w = self.m2 * channels;
        let mut dbr = Tensor::zeros(self.n1, w);
        let mut dbi = Tensor::zeros(self.n1, w);
        for i in 0..self.n1 {
            let dyi = rows(dy, i * self.n2, self.n2);
            let r = self.c2.matmul(false, &dyi, false);
            let s = self.s2.matmul(false, &dyi, false);
            for k in 0..self.m2 {
                let f = self.weight2[k] * scale;
                for ch in 0..channels {
                    dbr.data[i * w + k * channels + ch] = f * r.at(k, ch);
                    dbi.data[i * w + k * channels + ch] = -f * s.at(k, ch);
                }
            }
        }
        let mut dyr = self.c1.matmul(false, &dbr, false);
        dyr.add_matmul(S::one(), &self.s1, false, &dbi, false);
        let mut dyi = self.c1.matmul(false, &dbi, false);
        dyi.add_matmul(-S::one(), &self.s1, false, &dbr, false);
        (dyr, dyi)
    }

    /// Applies the layer. Weights are `[modes * c_in, c_out]`, mode-major.
    pub fn forward(&self, x: &Tensor<S>, wr: &Tensor<S>, wi: &Tensor<S>) -> (Tensor<S>, SpectralCache<S>) {
        assert_eq!(x.rows, self.points(), "field has {} points, plan expects {}", x.rows, self.points());
        let cin = x.cols;
        let cout = wr.cols;
        assert_eq!(wr.rows, self.modes() * cin);
        let (xr, xi) = self.analyze(x);
        let mut yr = Tensor::zeros(self.k1.len(), self.m2 * cout);
        let mut yi = Tensor::zeros(self.k1.len(), self.m2 * cout);
        for a in 0..self.k1.len() {
            for b in 0..self.m2 {
                let mode = a * self.m2 + b;
                let vr = &xr.data[a * self.m2 * cin + b * cin..][..cin];
                let vi = &xi.data[a * self.m2 * cin + b * cin..][..cin];
                let or = &mut yr.data[a * self.m2 * cout + b * cout..][..cout];
                let oi = &mut yi.data[a * self.m2 * cout + b * cout..][..cout];
                for c in 0..cin {
                    let row_r = wr.row(mode * cin + c);
                    let row_i = wi.row(mode * cin + c);
                    let (pr, pi) = (vr[c], vi[c]);
                    for o in 0..cout {
                        or[o] += pr * row_r[o] - pi * row_i[o];
                        oi[o] += pr * row_i[o] + pi * row_r[o];
                    }
                }
            }
        }
        (self.synthesize(&yr, &yi, cout), SpectralCache { xr, xi })
    }

    /// Gradients with respect to `(x, wr, wi)`.
    pub fn backward(
        &self,
        dy: &Tensor<S>,
        cache: &SpectralCache<S>,
        wr: &Tensor<S>,
        wi: &Tensor<S>,
    ) -> (Tensor<S>, Tensor<S>, Tensor<S>) {
        let cout = dy.cols;
        let cin = wr.rows / self.modes();
        let (dyr, dyi) = self.synthesize_adjoint(dy);
        let mut dwr = Tensor::zeros(wr.rows, cout);
        let mut dwi = Tensor::zeros(wr.rows, cout);
        let mut dxr = Tensor::zeros(self.k1.len(), self.m2 * cin);
        let mut dxi = Tensor::zeros(self.k1.len(), self.m2 * cin);
        for a in 0..self.k1.len() {
            for b in 0..self.m2 {
                let mode = a * self.m2 + b;
                let xoff = a * self.m2 * cin + b * cin;
                let yoff = a * self.m2 * cout + b * cout;
                let gr = &dyr.data[yoff..yoff + cout];
                let gi = &dyi.data[yoff..yoff + cout];
                for c in 0..cin {
                    let (pr, pi) = (cache.xr.data[xoff + c], cache.xi.data[xoff + c]);
                    let row = (mode * cin + c) * cout;
                    let (mut sr, mut si) = (S::zero(), S::zero());
                    for o in 0..cout {
                        let (wro, wio) = (wr.data[row + o], wi.data[row + o]);
                        dwr.data[row + o] += pr * gr[o] + pi * gi[o];
                        dwi.data[row + o] += pr * gi[o] - pi * gr[o];
                        sr += gr[o] * wro + gi[o] * wio;
                        si += gi[o] * wro - gr[o] * wio;
                    }
                    dxr.data[xoff + c] = sr;
                    dxi.data[xoff + c] = si;
                }
            }
        }
        (self.analyze_adjoint(&dxr, &dxi, cin), dwr, dwi)
    }
}

fn rows<S: Real>(x: &Tensor<S>, start: usize, count: usize) -> Tensor<S> {
    Tensor::from_vec(count, x.cols, x.data[start * x.cols..(start + count) * x.cols].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde2d::Fft2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rustfft::num_complex::Complex;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor<f64> {
        Tensor::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Reference: full FFT, per-mode complex mixing, zero the rest, inverse FFT.
    fn fft_reference(x: &Tensor<f64>, wr: &Tensor<f64>, wi: &Tensor<f64>, n1: usize, n2: usize, m1: usize, m2: usize) -> Tensor<f64> {
        let fft = Fft2::<f64>::new(n1, n2);
        let cin = x.cols;
        let cout = wr.cols;
        let k1: Vec<usize> = if n1 == 1 { vec![0] } else { (0..m1).chain(n1 - m1..n1).collect() };
        let spectra: Vec<Vec<Complex<f64>>> =
            (0..cin).map(|c| fft.forward_real(&(0..n1 * n2).map(|p| x.at(p, c)).collect::<Vec<_>>())).collect();
        let mut out = Tensor::zeros(n1 * n2, cout);
        for o in 0..cout {
            let mut full = vec![Complex::new(0.0, 0.0); n1 * n2];
            for (a, &ka) in k1.iter().enumerate() {
                for kb in 0..m2 {
                    let mode = a * m2 + kb;
                    let mut acc = Complex::new(0.0, 0.0);
                    for c in 0..cin {
                        let w = Complex::new(wr.at(mode * cin + c, o), wi.at(mode * cin + c, o));
                        acc += spectra[c][ka * n2 + kb] * w;
                    }
                    full[ka * n2 + kb] = acc;
                }
            }
            // Hermitian completion makes the inverse FFT real, matching irfft.
            let mut herm = full.clone();
            for ka in 0..n1 {
                for kb in 1..n2 {
                    let (ra, rb) = ((n1 - ka) % n1, n2 - kb);
                    if kb < m2 {
                        herm[ra * n2 + rb] = full[ka * n2 + kb].conj();
                    }
                }
            }
            // The zero column is symmetrized, which is what a real inverse
            // transform does with an arbitrary complex k2 = 0 column.
            for ka in 0..n1 {
                let ra = (n1 - ka) % n1;
                herm[ka * n2] = (full[ka * n2] + full[ra * n2].conj()) * 0.5;
            }
            let y = fft.inverse_real(&herm);
            for p in 0..n1 * n2 {
                *out.at_mut(p, o) = y[p];
            }
        }
        out
    }

    #[test]
    fn one_dimensional_matches_fft() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (n, m, cin, cout) = (16, 4, 3, 2);
        let plan = SpectralPlan::<f64>::new(1, n, 0, m).unwrap();
        let x = random(&mut rng, n, cin);
        let wr = random(&mut rng, m * cin, cout);
        let wi = random(&mut rng, m * cin, cout);
        let (y, _) = plan.forward(&x, &wr, &wi);
        let reference = fft_reference(&x, &wr, &wi, 1, n, 0, m);
        for (a, b) in y.data.iter().zip(&reference.data) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn two_dimensional_matches_fft() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n1, n2, m1, m2, cin, cout) = (8, 6, 2, 3, 2, 2);
        let plan = SpectralPlan::<f64>::new(n1, n2, m1, m2).unwrap();
        let x = random(&mut rng, n1 * n2, cin);
        let wr = random(&mut rng, plan.modes() * cin, cout);
        let wi = random(&mut rng, plan.modes() * cin, cout);
        let (y, _) = plan.forward(&x, &wr, &wi);
        let reference = fft_reference(&x, &wr, &wi, n1, n2, m1, m2);
        for (a, b) in y.data.iter().zip(&reference.data) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (n1, n2, m1, m2, cin, cout) = (6, 8, 2, 3, 2, 3);
        let plan = SpectralPlan::<f64>::new(n1, n2, m1, m2).unwrap();
        let x = random(&mut rng, n1 * n2, cin);
        let wr = random(&mut rng, plan.modes() * cin, cout);
        let wi = random(&mut rng, plan.modes() * cin, cout);
        let dy = random(&mut rng, n1 * n2, cout);
        let (y, cache) = plan.forward(&x, &wr, &wi);
        let (dx, _, _) = plan.backward(&dy, &cache, &wr, &wi);
        // <dy, A x> = <A^T dy, x> since the layer is linear in x.
        let lhs: f64 = y.data.iter().zip(&dy.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = dx.data.iter().zip(&x.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn rejects_modes_beyond_nyquist() {
        assert!(SpectralPlan::<f64>::new(1, 16, 0, 9).is_err());
        assert!(SpectralPlan::<f64>::new(8, 16, 5, 4).is_err());
        assert!(SpectralPlan::<f64>::new(8, 16, 4, 8).is_ok());
    }
}
