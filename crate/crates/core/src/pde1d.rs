//! 1D Heat / Burgers / KdV trajectories with sinusoidal forcing.
//!
//! Solves `u_t + (alpha u^2 - beta u_x + gamma u_xx)_x = forcing(t, x)` on a
//! periodic domain. Spatial derivatives are pseudo-spectral on an internal
//! grid; the stiff linear part is integrated exactly with an integrating
//! factor and the advection/forcing part with RK4. Frames are restricted to
//! the save grid by spectral truncation.

use std::sync::Arc;

use log::warn;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::container::{DatasetContainer, DatasetError, DatasetHeader, Sample, SampleData};
use crate::eqtok::{tokenize_equation, EquationSpec, Family, OneDSpec, TokenError, PAD_1D};
use crate::scalar::Real;

pub const FORCING_TERMS: usize = 5;
pub const DOMAIN_LENGTH: f64 = 16.0;
pub const AMPLITUDE_MAX: f64 = 0.25;
pub const OMEGA_MAX: f64 = 0.4;
pub const WAVENUMBERS: [u8; 3] = [1, 2, 3];

#[derive(Debug, Error)]
pub enum Pde1dError {
    #[error("forcing parameter {name}[{index}] = {value} outside {range}")]
    Forcing { name: &'static str, index: usize, value: f64, range: &'static str },
    #[error("forcing parameter lists have inconsistent lengths")]
    ForcingShape,
    #[error("{0} is not a 1D family")]
    Family(&'static str),
    #[error("solution blew up at t = {time:.4} (max |u| = {max_abs:e})")]
    BlowUp { time: f64, max_abs: f64 },
    #[error("solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Parameters of `sum_j A_j sin(omega_j t + 2 pi l_j x / L + phi_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingParams {
    pub amplitude: Vec<f64>,
    pub omega: Vec<f64>,
    pub wavenumber: Vec<u8>,
    pub phase: Vec<f64>,
    pub domain_length: f64,
}

impl ForcingParams {
    pub fn new(
        amplitude: Vec<f64>,
        omega: Vec<f64>,
        wavenumber: Vec<u8>,
        phase: Vec<f64>,
        domain_length: f64,
    ) -> Result<Self, Pde1dError> {
        let p = Self { amplitude, omega, wavenumber, phase, domain_length };
        p.validate()?;
        Ok(p)
    }

    /// Forcing with every amplitude zero.
    pub fn zero(terms: usize) -> Self {
        Self {
            amplitude: vec![0.0; terms],
            omega: vec![0.0; terms],
            wavenumber: vec![1; terms],
            phase: vec![0.0; terms],
            domain_length: DOMAIN_LENGTH,
        }
    }

    pub fn terms(&self) -> usize {
        self.amplitude.len()
    }

    pub fn validate(&self) -> Result<(), Pde1dError> {
        let n = self.amplitude.len();
        if self.omega.len() != n || self.wavenumber.len() != n || self.phase.len() != n {
            return Err(Pde1dError::ForcingShape);
        }
        if !(self.domain_length > 0.0 && self.domain_length.is_finite()) {
            return Err(Pde1dError::Config(format!("domain length {}", self.domain_length)));
        }
        let tau = 2.0 * std::f64::consts::PI;
        for j in 0..n {
            let checks: [(&'static str, f64, bool, &'static str); 4] = [
                ("A", self.amplitude[j], self.amplitude[j].abs() <= AMPLITUDE_MAX, "[-0.25, 0.25]"),
                ("omega", self.omega[j], self.omega[j].abs() <= OMEGA_MAX, "[-0.4, 0.4]"),
                ("l", f64::from(self.wavenumber[j]), WAVENUMBERS.contains(&self.wavenumber[j]), "{1, 2, 3}"),
                ("phi", self.phase[j], (0.0..tau).contains(&self.phase[j]), "[0, 2pi)"),
            ];
            for (name, value, ok, range) in checks {
                if !ok {
                    return Err(Pde1dError::Forcing { name, index: j, value, range });
                }
            }
        }
        Ok(())
    }
}

/// Draws `J = 5` forcing terms.
pub fn sample_forcing<R: Rng>(rng: &mut R) -> ForcingParams {
    let tau = 2.0 * std::f64::consts::PI;
    let mut p = ForcingParams::zero(FORCING_TERMS);
    for j in 0..FORCING_TERMS {
        p.amplitude[j] = rng.gen_range(-AMPLITUDE_MAX..AMPLITUDE_MAX);
        p.omega[j] = rng.gen_range(-OMEGA_MAX..OMEGA_MAX);
        p.wavenumber[j] = WAVENUMBERS[rng.gen_range(0..WAVENUMBERS.len())];
        p.phase[j] = rng.gen_range(0.0..tau);
    }
    p
}

/// Evaluates the forcing at time `t` on the points `x`.
pub fn forcing_eval<S: Real>(p: &ForcingParams, t: S, x: &[S]) -> Vec<S> {
    let mut out = vec![S::zero(); x.len()];
    let two_pi_over_l = S::TAU() / S::lit(p.domain_length);
    for j in 0..p.terms() {
        let a = S::lit(p.amplitude[j]);
        let w = S::lit(p.omega[j]);
        let l = S::lit(f64::from(p.wavenumber[j]));
        let phi = S::lit(p.phase[j]);
        for (o, &xi) in out.iter_mut().zip(x) {
            *o += a * (w * t + two_pi_over_l * l * xi + phi).sin();
        }
    }
    out
}

/// Grid and integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Solver1dConfig {
    pub nx: usize,
    pub nt: usize,
    pub t_final: f64,
    pub internal_modes: usize,
    /// Advective CFL target for the explicit part.
    pub cfl: f64,
    /// Upper bound on the internal step.
    pub dt_max: f64,
}

impl Default for Solver1dConfig {
    fn default() -> Self {
        Self { nx: 100, nt: 100, t_final: 4.0, internal_modes: 256, cfl: 0.4, dt_max: 0.01 }
    }
}

impl Solver1dConfig {
    fn validate(&self) -> Result<(), Pde1dError> {
        if self.nx < 4 || self.nt < 1 || self.internal_modes < self.nx {
            return Err(Pde1dError::Config(format!(
                "nx = {}, nt = {}, internal modes = {}",
                self.nx, self.nt, self.internal_modes
            )));
        }
        if !(self.t_final > 0.0 && self.dt_max > 0.0 && self.cfl > 0.0) {
            return Err(Pde1dError::Config("t_final, dt_max and cfl must be positive".into()));
        }
        Ok(())
    }
}

/// Saved solution frames on the save grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory1D<S> {
    /// Row-major `[nt + 1, nx]`.
    pub u: Vec<S>,
    pub x: Vec<S>,
    pub t: Vec<S>,
    pub spec: OneDSpec,
}

impl<S: Real> Trajectory1D<S> {
    pub fn nx(&self) -> usize {
        self.x.len()
    }

    pub fn frame(&self, n: usize) -> &[S] {
        let nx = self.nx();
        &self.u[n * nx..(n + 1) * nx]
    }
}

/// Uniform periodic grid `x_i = i L / n`.
pub fn periodic_grid<S: Real>(n: usize, length: f64) -> Vec<S> {
    (0..n).map(|i| S::lit(length * i as f64 / n as f64)).collect()
}

/// Spectral integrator for the flux-form equation.
pub struct Integrator1d<S: Real> {
    n: usize,
    length: f64,
    alpha: S,
    /// Linear symbol `-beta k^2 + i gamma k^3` per internal mode.
    linear: Vec<Complex<S>>,
    /// `-i k` per mode, zeroed outside the 2/3 dealiasing band.
    ddx: Vec<Complex<S>>,
    fwd: Arc<dyn Fft<S>>,
    inv: Arc<dyn Fft<S>>,
    x: Vec<S>,
}

impl<S: Real> Integrator1d<S> {
    pub fn new(n: usize, length: f64, alpha: f64, beta: f64, gamma: f64) -> Self {
        let mut planner = FftPlanner::new();
        let cutoff = n / 3;
        let mut linear = Vec::with_capacity(n);
        let mut ddx = Vec::with_capacity(n);
        for m in 0..n {
            let mi = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
            let k = 2.0 * std::f64::consts::PI * mi / length;
            linear.push(Complex::new(S::lit(-beta * k * k), S::lit(gamma * k * k * k)));
            let keep = (mi.abs() as usize) <= cutoff && !(n % 2 == 0 && m == n / 2);
            ddx.push(if keep { Complex::new(S::zero(), S::lit(-k)) } else { Complex::new(S::zero(), S::zero()) });
        }
        Self {
            n,
            length,
            alpha: S::lit(alpha),
            linear,
            ddx,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            x: periodic_grid(n, length),
        }
    }

    pub fn grid(&self) -> &[S] {
        &self.x
    }

    pub fn to_spectral(&self, u: &[S]) -> Vec<Complex<S>> {
        let mut buf: Vec<Complex<S>> = u.iter().map(|&v| Complex::new(v, S::zero())).collect();
        self.fwd.process(&mut buf);
        buf
    }

    pub fn to_physical(&self, uh: &[Complex<S>]) -> Vec<S> {
        let mut buf = uh.to_vec();
        self.inv.process(&mut buf);
        let scale = S::one() / S::from_count(self.n);
        buf.iter().map(|c| c.re * scale).collect()
    }

    /// Explicit part: `-(alpha u^2)_x + forcing(t)` in spectral space.
    fn explicit(&self, uh: &[Complex<S>], t: S, forcing: Option<&ForcingParams>) -> Vec<Complex<S>> {
        let mut out = vec![Complex::new(S::zero(), S::zero()); self.n];
        if self.alpha != S::zero() {
            let u = self.to_physical(uh);
            let sq: Vec<S> = u.iter().map(|&v| self.alpha * v * v).collect();
            let sqh = self.to_spectral(&sq);
            for ((o, s), dx) in out.iter_mut().zip(&sqh).zip(&self.ddx) {
                *o = *s * *dx;
            }
        }
        if let Some(f) = forcing {
            let fh = self.to_spectral(&forcing_eval(f, t, &self.x));
            for (o, v) in out.iter_mut().zip(&fh) {
                *o = *o + *v;
            }
        }
        out
    }

    /// One integrating-factor RK4 step of size `h` from time `t`.
    pub fn step(&self, uh: &mut [Complex<S>], t: S, h: S, forcing: Option<&ForcingParams>) {
        let half = h / S::lit(2.0);
        let e: Vec<Complex<S>> = self.linear.iter().map(|l| (*l * h).exp()).collect();
        let e2: Vec<Complex<S>> = self.linear.iter().map(|l| (*l * half).exp()).collect();

        let a = self.explicit(uh, t, forcing);
        let ua: Vec<_> = (0..self.n).map(|m| e2[m] * (uh[m] + a[m] * half)).collect();
        let b = self.explicit(&ua, t + half, forcing);
        let ub: Vec<_> = (0..self.n).map(|m| e2[m] * uh[m] + b[m] * half).collect();
        let c = self.explicit(&ub, t + half, forcing);
        let uc: Vec<_> = (0..self.n).map(|m| e[m] * uh[m] + e2[m] * c[m] * h).collect();
        let d = self.explicit(&uc, t + h, forcing);
        let sixth = h / S::lit(6.0);
        let two = S::lit(2.0);
        for m in 0..self.n {
            uh[m] = e[m] * uh[m] + (e[m] * a[m] + e2[m] * (b[m] + c[m]) * two + d[m]) * sixth;
        }
    }

    /// Samples the band-limited interpolant of `uh` on `nx` points, keeping
    /// only modes strictly below the save-grid Nyquist.
    pub fn restrict(&self, uh: &[Complex<S>], nx: usize, plan: &dyn Fft<S>) -> Vec<S> {
        let keep = (nx - 1) / 2;
        let scale = S::one() / S::from_count(self.n);
        let mut buf = vec![Complex::new(S::zero(), S::zero()); nx];
        buf[0] = uh[0] * scale;
        for k in 1..=keep.min(self.n / 2 - 1) {
            buf[k] = uh[k] * scale;
            buf[nx - k] = uh[self.n - k] * scale;
        }
        plan.process(&mut buf);
        buf.iter().map(|c| c.re).collect()
    }

    /// Largest stable explicit step for the current state.
    pub fn stable_dt(&self, uh: &[Complex<S>], cfl: f64) -> f64 {
        let alpha = self.alpha.to_f64_lossy().abs();
        if alpha == 0.0 {
            return f64::INFINITY;
        }
        let umax = self.to_physical(uh).iter().fold(0.0f64, |m, v| m.max(v.to_f64_lossy().abs()));
        let dx = self.length / self.n as f64;
        cfl * dx / (2.0 * alpha * umax + 1e-12)
    }
}

/// Integrates from an explicit initial state sampled on the internal grid.
pub fn integrate_1d<S: Real>(
    spec: &OneDSpec,
    u0_internal: &[S],
    forcing: Option<&ForcingParams>,
    cfg: &Solver1dConfig,
) -> Result<Vec<Vec<S>>, Pde1dError> {
    cfg.validate()?;
    let integ = Integrator1d::<S>::new(cfg.internal_modes, spec.forcing.domain_length, spec.alpha, spec.beta, spec.gamma);
    let save_plan = FftPlanner::new().plan_fft_inverse(cfg.nx);
    let mut uh = integ.to_spectral(u0_internal);
    let interval = cfg.t_final / cfg.nt as f64;
    let mut frames = Vec::with_capacity(cfg.nt + 1);
    frames.push(integ.restrict(&uh, cfg.nx, save_plan.as_ref()));
    for n in 0..cfg.nt {
        let dt = cfg.dt_max.min(integ.stable_dt(&uh, cfg.cfl)).min(interval);
        let substeps = (interval / dt).ceil().max(1.0) as usize;
        let h = interval / substeps as f64;
        for s in 0..substeps {
            let t = n as f64 * interval + s as f64 * h;
            integ.step(&mut uh, S::lit(t), S::lit(h), forcing);
        }
        let frame = integ.restrict(&uh, cfg.nx, save_plan.as_ref());
        let max_abs = frame.iter().fold(0.0f64, |m, v| m.max(v.to_f64_lossy().abs()));
        if !max_abs.is_finite() || max_abs > 1e6 {
            return Err(Pde1dError::BlowUp { time: (n + 1) as f64 * interval, max_abs });
        }
        frames.push(frame);
    }
    Ok(frames)
}

/// Solves one forced trajectory starting from `u(0, x) = forcing(0, x)`.
pub fn solve_1d<S: Real>(spec: &OneDSpec, cfg: &Solver1dConfig) -> Result<Trajectory1D<S>, Pde1dError> {
    if !spec.family.is_1d() {
        return Err(Pde1dError::Family(spec.family.name()));
    }
    spec.forcing.validate()?;
    let length = spec.forcing.domain_length;
    let internal_x: Vec<S> = periodic_grid(cfg.internal_modes, length);
    let u0 = forcing_eval(&spec.forcing, S::zero(), &internal_x);
    let mut frames = integrate_1d(spec, &u0, Some(&spec.forcing), cfg)?;

    let x: Vec<S> = periodic_grid(cfg.nx, length);
    // Frame zero is the forcing itself, evaluated directly on the save grid.
    frames[0] = forcing_eval(&spec.forcing, S::zero(), &x);
    let u = frames.concat();
    let t = (0..=cfg.nt).map(|n| S::lit(cfg.t_final * n as f64 / cfg.nt as f64)).collect();
    Ok(Trajectory1D { u, x, t, spec: spec.clone() })
}

/// `(alpha, beta, gamma)` for a family.
pub type Coefficients = (f64, f64, f64);

pub const DIFFUSION_VALUES: [f64; 6] = [0.01, 0.05, 0.1, 0.2, 0.5, 1.0];
pub const ADVECTION_VALUES: [f64; 6] = [0.01, 0.05, 0.1, 0.2, 0.5, 1.0];
pub const KDV_ADVECTION: f64 = 0.01;
pub const DISPERSION_VALUES: [f64; 6] = [2.0, 4.0, 6.0, 8.0, 10.0, 12.0];

/// Coefficient combinations used for each family's datasets.
pub fn paper_param_grid(family: Family) -> Result<Vec<Coefficients>, Pde1dError> {
    match family {
        Family::Heat => Ok(DIFFUSION_VALUES.iter().map(|&b| (0.0, b, 0.0)).collect()),
        Family::Burgers => Ok(ADVECTION_VALUES
            .iter()
            .flat_map(|&a| DIFFUSION_VALUES.iter().map(move |&b| (a, b, 0.0)))
            .collect()),
        Family::Kdv => Ok(DISPERSION_VALUES.iter().map(|&g| (KDV_ADVECTION, 0.0, g)).collect()),
        other => Err(Pde1dError::Family(other.name())),
    }
}

/// Resample attempts before a sample is reported as failed.
const MAX_RESAMPLES: u64 = 16;

/// Generates `count_per_combo` forced trajectories per coefficient triple.
///
/// Sample `i` (global index) draws its forcing from seed `seed + i`; a
/// blow-up moves to a fresh stream and is logged.
pub fn make_dataset_1d(
    family: Family,
    param_grid: &[Coefficients],
    count_per_combo: usize,
    seed: u64,
    cfg: &Solver1dConfig,
) -> Result<DatasetContainer, Pde1dError> {
    if !family.is_1d() {
        return Err(Pde1dError::Family(family.name()));
    }
    let jobs: Vec<(usize, Coefficients)> = param_grid
        .iter()
        .flat_map(|&c| std::iter::repeat(c).take(count_per_combo))
        .enumerate()
        .collect();

    let samples: Result<Vec<Sample>, Pde1dError> = jobs
        .par_iter()
        .map(|&(index, (alpha, beta, gamma))| {
            let mut attempt = 0u64;
            loop {
                let stream = seed.wrapping_add(index as u64).wrapping_add(attempt << 40);
                let mut rng = ChaCha8Rng::seed_from_u64(stream);
                let spec = OneDSpec {
                    family,
                    alpha,
                    beta,
                    gamma,
                    forcing: sample_forcing(&mut rng),
                    target_time: cfg.t_final,
                };
                match solve_1d::<f64>(&spec, cfg) {
                    Ok(traj) => {
                        let eq = EquationSpec::OneD(spec);
                        let tokens = tokenize_equation(&eq, PAD_1D)?;
                        return Ok(Sample {
                            group: index as u64,
                            spec: eq,
                            tokens: tokens.ids,
                            data: SampleData::Series1d {
                                frames: cfg.nt + 1,
                                nx: cfg.nx,
                                u: traj.u.iter().map(|&v| v as f32).collect(),
                            },
                        });
                    }
                    Err(Pde1dError::BlowUp { time, max_abs }) if attempt < MAX_RESAMPLES => {
                        warn!(
                            "sample {index} ({}, alpha={alpha}, beta={beta}, gamma={gamma}) blew up at t={time:.3} \
                             (max |u| {max_abs:e}); resampling",
                            family.name()
                        );
                        attempt += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
        })
        .collect();

    let mut header = DatasetHeader::new(family, PAD_1D, seed);
    header.meta.insert("solver".into(), serde_json::to_value(cfg).expect("config serializes"));
    header.meta.insert("count_per_combo".into(), count_per_combo.into());
    header.meta.insert("param_grid".into(), serde_json::to_value(param_grid).expect("grid serializes"));
    header.meta.insert("x".into(), serde_json::to_value(periodic_grid::<f64>(cfg.nx, DOMAIN_LENGTH)).unwrap());
    header.meta.insert("dt".into(), (cfg.t_final / cfg.nt as f64).into());
    Ok(DatasetContainer::new(header, samples?)?)
}
