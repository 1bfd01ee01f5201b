//! Pseudo-spectral vorticity solver on the periodic unit square.
//!
//! `w_t + u . grad w = nu lap w + f`, `u = (psi_y, -psi_x)`, `-lap psi = w`.
//! Diffusion is Crank-Nicolson, the dealiased advection term uses Heun's
//! predictor-corrector.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::grf::{sample_grf_vorticity, GrfSpectrum};
use super::{wavenumber, Fft2};
use crate::container::{DatasetContainer, DatasetError, DatasetHeader, Sample, SampleData};
use crate::eqtok::{tokenize_equation, EquationSpec, Family, NavierStokesSpec, TokenError, PAD_2D};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum NsError {
    #[error("non-finite vorticity at step {step} (t = {time:.4}, CFL = {cfl:.3})")]
    NonFinite { step: usize, time: f64, cfl: f64 },
    #[error("solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NsConfig {
    /// Internal grid size.
    pub n: usize,
    /// Saved grid size; `n` must be a multiple of it.
    pub save_n: usize,
    pub t_final: f64,
    /// Saved frames after the initial one.
    pub frames: usize,
    pub cfl: f64,
    pub dt_max: f64,
}

impl Default for NsConfig {
    fn default() -> Self {
        Self { n: 256, save_n: 64, t_final: 30.0, frames: 120, cfl: 0.5, dt_max: 0.05 }
    }
}

impl NsConfig {
    fn validate(&self) -> Result<(), NsError> {
        if self.n < 4 || self.save_n == 0 || self.n % self.save_n != 0 || self.frames == 0 {
            return Err(NsError::Config(format!("n = {}, save_n = {}, frames = {}", self.n, self.save_n, self.frames)));
        }
        if !(self.t_final > 0.0 && self.cfl > 0.0 && self.dt_max > 0.0) {
            return Err(NsError::Config("t_final, cfl and dt_max must be positive".into()));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.n / self.save_n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NsTrajectory<S> {
    /// Row-major `[frames + 1, save_n, save_n]`.
    pub w: Vec<S>,
    pub nu: f64,
    pub amp: f64,
    pub t: Vec<f64>,
    /// Initial vorticity on the internal grid.
    pub w0: Vec<S>,
    pub save_n: usize,
}

impl<S: Real> NsTrajectory<S> {
    pub fn frame(&self, k: usize) -> &[S] {
        let p = self.save_n * self.save_n;
        &self.w[k * p..(k + 1) * p]
    }
}

/// Spectral operators for an `n x n` periodic grid on the unit square.
pub struct NsOperators<S: Real> {
    n: usize,
    fft: Fft2<S>,
    /// `2 pi kx`, `2 pi ky` with the Nyquist entry zeroed.
    kx: Vec<S>,
    ky: Vec<S>,
    /// `|2 pi k|^2` per mode (Nyquist included).
    lap: Vec<S>,
    dealias: Vec<bool>,
}

impl<S: Real> NsOperators<S> {
    pub fn new(n: usize) -> Self {
        let tau = 2.0 * std::f64::consts::PI;
        let mut kx = Vec::with_capacity(n * n);
        let mut ky = Vec::with_capacity(n * n);
        let mut lap = Vec::with_capacity(n * n);
        let mut dealias = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (wavenumber(i, n), wavenumber(j, n));
                let nyq = |x: f64| if x.abs() as usize == n / 2 { 0.0 } else { x };
                kx.push(S::lit(tau * nyq(a)));
                ky.push(S::lit(tau * nyq(b)));
                lap.push(S::lit(tau * tau * (a * a + b * b)));
                let cut = n as f64 / 3.0;
                dealias.push(a.abs() <= cut && b.abs() <= cut);
            }
        }
        Self { n, fft: Fft2::new(n, n), kx, ky, lap, dealias }
    }

    pub fn fft(&self) -> &Fft2<S> {
        &self.fft
    }

    /// Velocity components `(u1, u2) = (psi_x2, -psi_x1)` in spectral space.
    pub fn velocity_hat(&self, wh: &[Complex<S>]) -> (Vec<Complex<S>>, Vec<Complex<S>>) {
        let i_unit = Complex::new(S::zero(), S::one());
        let mut u1 = Vec::with_capacity(wh.len());
        let mut u2 = Vec::with_capacity(wh.len());
        for m in 0..wh.len() {
            let psi = if self.lap[m] == S::zero() { Complex::new(S::zero(), S::zero()) } else { wh[m] / self.lap[m] };
            u1.push(i_unit * psi * self.ky[m]);
            u2.push(-(i_unit * psi * self.kx[m]));
        }
        (u1, u2)
    }

    /// Physical-space velocity field.
    pub fn velocity(&self, wh: &[Complex<S>]) -> (Vec<S>, Vec<S>) {
        let (u1, u2) = self.velocity_hat(wh);
        (self.fft.inverse_real(&u1), self.fft.inverse_real(&u2))
    }

    /// Spectral divergence of a physical velocity field, returned in physical space.
    pub fn divergence(&self, u1: &[S], u2: &[S]) -> Vec<S> {
        let i_unit = Complex::new(S::zero(), S::one());
        let a = self.fft.forward_real(u1);
        let b = self.fft.forward_real(u2);
        let d: Vec<_> = (0..a.len()).map(|m| i_unit * (a[m] * self.kx[m] + b[m] * self.ky[m])).collect();
        self.fft.inverse_real(&d)
    }

    /// Dealiased `u . grad w` in spectral space.
    fn advection_hat(&self, wh: &[Complex<S>]) -> Vec<Complex<S>> {
        let i_unit = Complex::new(S::zero(), S::one());
        let (u1, u2) = self.velocity(wh);
        let wx: Vec<_> = wh.iter().zip(&self.kx).map(|(w, k)| i_unit * *w * *k).collect();
        let wy: Vec<_> = wh.iter().zip(&self.ky).map(|(w, k)| i_unit * *w * *k).collect();
        let wx = self.fft.inverse_real(&wx);
        let wy = self.fft.inverse_real(&wy);
        let adv: Vec<S> = (0..u1.len()).map(|m| u1[m] * wx[m] + u2[m] * wy[m]).collect();
        let mut h = self.fft.forward_real(&adv);
        for (v, keep) in h.iter_mut().zip(&self.dealias) {
            if !keep {
                *v = Complex::new(S::zero(), S::zero());
            }
        }
        h
    }

    fn max_speed(&self, wh: &[Complex<S>]) -> f64 {
        let (u1, u2) = self.velocity(wh);
        u1.iter().zip(&u2).fold(0.0f64, |m, (a, b)| m.max((*a * *a + *b * *b).sqrt().to_f64_lossy()))
    }

    /// One Crank-Nicolson / Heun step.
    fn step(&self, wh: &mut [Complex<S>], fh: &[Complex<S>], nu: S, dt: S) {
        let half = S::lit(0.5);
        let adv = self.advection_hat(wh);
        let mut tilde = Vec::with_capacity(wh.len());
        for m in 0..wh.len() {
            let d = half * dt * nu * self.lap[m];
            tilde.push((wh[m] * (S::one() - d) + (fh[m] - adv[m]) * dt) / (S::one() + d));
        }
        let adv2 = self.advection_hat(&tilde);
        for m in 0..wh.len() {
            let d = half * dt * nu * self.lap[m];
            wh[m] = (wh[m] * (S::one() - d) + (fh[m] - (adv[m] + adv2[m]) * half) * dt) / (S::one() + d);
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// `A (sin(2 pi (x1 + x2)) + cos(2 pi (x1 + x2)))` on the `n x n` grid.
pub fn forcing_field<S: Real>(amp: f64, n: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let arg = 2.0 * std::f64::consts::PI * (i as f64 + j as f64) / n as f64;
            out.push(S::lit(amp * (arg.sin() + arg.cos())));
        }
    }
    out
}

/// Takes every `stride`-th point in both directions.
pub fn downsample<S: Copy>(field: &[S], n: usize, stride: usize) -> Vec<S> {
    let m = n / stride;
    let mut out = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            out.push(field[i * stride * n + j * stride]);
        }
    }
    out
}

/// Integrates from `w0` (on the internal `n x n` grid) and saves `frames + 1`
/// evenly spaced frames downsampled to `save_n x save_n`.
pub fn solve_ns<S: Real>(nu: f64, amp: f64, w0: &[S], cfg: &NsConfig) -> Result<NsTrajectory<S>, NsError> {
    cfg.validate()?;
    if !(nu > 0.0) {
        return Err(NsError::Config(format!("viscosity must be positive, got {nu}")));
    }
    if w0.len() != cfg.n * cfg.n {
        return Err(NsError::Config(format!("initial field has {} points, expected {}", w0.len(), cfg.n * cfg.n)));
    }
    let ops = NsOperators::<S>::new(cfg.n);
    let fh = ops.fft.forward_real(&forcing_field::<S>(amp, cfg.n));
    let mut wh = ops.fft.forward_real(w0);
    let interval = cfg.t_final / cfg.frames as f64;
    let dx = 1.0 / cfg.n as f64;
    let stride = cfg.stride();

    let mut w = downsample(w0, cfg.n, stride);
    let mut t = vec![0.0];
    let mut step = 0;
    for k in 0..cfg.frames {
        let speed = ops.max_speed(&wh);
        let dt = (cfg.cfl * dx / speed.max(1e-12)).min(cfg.dt_max).min(interval);
        let substeps = (interval / dt).ceil().max(1.0) as usize;
        let h = interval / substeps as f64;
        for _ in 0..substeps {
            ops.step(&mut wh, &fh, S::lit(nu), S::lit(h));
            step += 1;
        }
        let field = ops.fft.inverse_real(&wh);
        if field.iter().any(|v| !v.is_finite()) {
            return Err(NsError::NonFinite { step, time: (k + 1) as f64 * interval, cfl: speed * h / dx });
        }
        w.extend(downsample(&field, cfg.n, stride));
        t.push((k + 1) as f64 * interval);
    }
    Ok(NsTrajectory { w, nu, amp, t, w0: w0.to_vec(), save_n: cfg.save_n })
}

/// Viscosities `{1, 2, ..., 9} x 10^e` for `e = -9..-6`, plus `1e-5`.
pub fn paper_viscosities() -> Vec<f64> {
    let mut out = Vec::new();
    for e in -9..=-6 {
        for m in 1..=9 {
            out.push(format!("{m}e{e}").parse().unwrap());
        }
    }
    out.push(1e-5);
    out
}

/// Forcing amplitudes `0.001, 0.002, ..., 0.01`.
pub fn paper_amplitudes() -> Vec<f64> {
    (1..=10).map(|m| format!("0.{:03}", m).parse::<f64>().unwrap()).collect()
}

/// Full `(nu, A)` grid of the benchmark.
pub fn paper_ns_grid() -> Vec<(f64, f64)> {
    let amps = paper_amplitudes();
    paper_viscosities().into_iter().flat_map(|nu| amps.iter().map(move |&a| (nu, a))).collect()
}

/// Generates `inits_per_combo` trajectories for every `(nu, A)` pair.
/// Trajectory `i` draws its initial vorticity from seed `seed + i`.
pub fn make_dataset_ns(
    grid: &[(f64, f64)],
    inits_per_combo: usize,
    seed: u64,
    cfg: &NsConfig,
    spectrum: &GrfSpectrum,
) -> Result<DatasetContainer, NsError> {
    if inits_per_combo == 0 {
        return Err(NsError::Config("at least one initialization per combination".into()));
    }
    cfg.validate()?;
    let jobs: Vec<(usize, f64, f64)> = grid
        .iter()
        .flat_map(|&(nu, amp)| std::iter::repeat((nu, amp)).take(inits_per_combo))
        .enumerate()
        .map(|(i, (nu, amp))| (i, nu, amp))
        .collect();
    let samples: Result<Vec<Sample>, NsError> = jobs
        .par_iter()
        .map(|&(index, nu, amp)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
            let w0: Vec<f64> = sample_grf_vorticity(&mut rng, cfg.n, spectrum);
            let traj = solve_ns(nu, amp, &w0, cfg)?;
            let spec = EquationSpec::NavierStokes(NavierStokesSpec { nu, amp, target_time: cfg.t_final });
            let tokens = tokenize_equation(&spec, PAD_2D)?.ids;
            Ok(Sample {
                group: index as u64,
                spec,
                tokens,
                data: SampleData::Series2d {
                    frames: cfg.frames + 1,
                    nx: cfg.save_n,
                    ny: cfg.save_n,
                    dt: cfg.t_final / cfg.frames as f64,
                    w: traj.w.iter().map(|&v| v as f32).collect(),
                },
            })
        })
        .collect();
    let mut header = DatasetHeader::new(Family::NavierStokes, PAD_2D, seed);
    header.meta.insert("solver".into(), serde_json::to_value(cfg).unwrap());
    header.meta.insert("grf_spectrum".into(), serde_json::to_value(spectrum).unwrap());
    header.meta.insert("inits_per_combo".into(), inits_per_combo.into());
    header.meta.insert("param_grid".into(), serde_json::to_value(grid).unwrap());
    Ok(DatasetContainer::new(header, samples?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_mode(n: usize) -> Vec<f64> {
        let mut w = Vec::with_capacity(n * n);
        for i in 0..n {
            for _ in 0..n {
                w.push((2.0 * std::f64::consts::PI * i as f64 / n as f64).sin());
            }
        }
        w
    }

    #[test]
    fn single_mode_decays_exactly() {
        let cfg = NsConfig { n: 32, save_n: 16, t_final: 5.0, frames: 10, ..Default::default() };
        let nu = 1e-3;
        let traj = solve_ns(nu, 0.0, &single_mode(32), &cfg).unwrap();
        let decay = (-4.0 * std::f64::consts::PI.powi(2) * nu * 5.0).exp();
        let expect: Vec<f64> = downsample(&single_mode(32), 32, 2).iter().map(|v| v * decay).collect();
        let err = traj.frame(10).iter().zip(&expect).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn velocity_is_divergence_free() {
        let ops = NsOperators::<f64>::new(32);
        let w: Vec<f64> = sample_grf_vorticity(&mut ChaCha8Rng::seed_from_u64(1), 32, &GrfSpectrum::default());
        let (u1, u2) = ops.velocity(&ops.fft().forward_real(&w));
        let div = ops.divergence(&u1, &u2);
        assert!(div.iter().all(|d| d.abs() < 1e-10));
    }

    #[test]
    fn enstrophy_decreases_under_pure_diffusion() {
        let cfg = NsConfig { n: 32, save_n: 32, t_final: 1.0, frames: 5, ..Default::default() };
        let w0: Vec<f64> = sample_grf_vorticity(&mut ChaCha8Rng::seed_from_u64(4), 32, &GrfSpectrum::default());
        let traj = solve_ns(0.05, 0.0, &w0, &cfg).unwrap();
        let ens: Vec<f64> = (0..=5).map(|k| traj.frame(k).iter().map(|v| v * v).sum()).collect();
        assert!(ens.windows(2).all(|p| p[1] < p[0]), "{ens:?}");
    }

    #[test]
    fn downsampling_is_exact_stride() {
        let cfg = NsConfig { n: 32, save_n: 8, t_final: 0.5, frames: 2, ..Default::default() };
        let w0: Vec<f64> = sample_grf_vorticity(&mut ChaCha8Rng::seed_from_u64(5), 32, &GrfSpectrum::default());
        let traj = solve_ns(1e-4, 0.005, &w0, &cfg).unwrap();
        assert_eq!(traj.frame(0), downsample(&w0, 32, 4).as_slice());
        assert_eq!(traj.w.len(), 3 * 64);
    }

    #[test]
    fn paper_grid_size() {
        assert_eq!(paper_viscosities().len(), 37);
        assert_eq!(paper_amplitudes().len(), 10);
        assert_eq!(paper_ns_grid().len(), 370);
        assert_eq!(paper_amplitudes()[2], 0.003);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = NsConfig { n: 30, save_n: 16, ..Default::default() };
        assert!(matches!(solve_ns(1e-3, 0.0, &vec![0.0; 900], &cfg), Err(NsError::Config(_))));
        let cfg = NsConfig { n: 16, save_n: 16, ..Default::default() };
        assert!(matches!(solve_ns(0.0, 0.0, &vec![0.0; 256], &cfg), Err(NsError::Config(_))));
    }
}
