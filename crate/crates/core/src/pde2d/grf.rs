use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::{wavenumber, Fft2};
use crate::scalar::Real;

/// Spectral covariance of the initial vorticity field:
/// `sqrt_eig(k) = n^2 sqrt(2) sigma (4 pi^2 |k|^2 + tau^2)^(-alpha / 2)`
/// with `sigma = tau^(alpha - 1)` in two dimensions and the zero mode removed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrfSpectrum {
    pub alpha: f64,
    pub tau: f64,
    pub sigma: f64,
}

impl Default for GrfSpectrum {
    fn default() -> Self {
        let (alpha, tau) = (2.5, 7.0);
        Self { alpha, tau, sigma: tau.powf(0.5 * (2.0 * alpha - 2.0)) }
    }
}

impl GrfSpectrum {
    /// Square root of the covariance eigenvalue for mode `(i, j)` on `n x n`.
    pub fn sqrt_eig(&self, i: usize, j: usize, n: usize) -> f64 {
        if i == 0 && j == 0 {
            return 0.0;
        }
        let (kx, ky) = (wavenumber(i, n), wavenumber(j, n));
        let lap = 4.0 * std::f64::consts::PI.powi(2) * (kx * kx + ky * ky);
        (n * n) as f64 * std::f64::consts::SQRT_2 * self.sigma * (lap + self.tau * self.tau).powf(-self.alpha / 2.0)
    }

    /// Standard deviation of the field at any single grid point.
    pub fn pointwise_std(&self, n: usize) -> f64 {
        let mut sum = 0.0;
        for i in 0..n {
            for j in 0..n {
                sum += self.sqrt_eig(i, j, n).powi(2);
            }
        }
        sum.sqrt() / (n * n) as f64
    }
}

/// Draws a periodic zero-mean Gaussian random field on an `n x n` grid.
pub fn sample_grf_vorticity<S: Real, R: Rng>(rng: &mut R, n: usize, spectrum: &GrfSpectrum) -> Vec<S> {
    assert!(n.is_power_of_two(), "GRF grid size must be a power of two");
    let mut coeffs = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let s = spectrum.sqrt_eig(i, j, n);
            coeffs.push(Complex::new(S::lit(s * re), S::lit(s * im)));
        }
    }
    Fft2::new(n, n).inverse_real(&coeffs)
}
