//! 2D data generation: periodic Navier-Stokes vorticity trajectories and
//! steady-state Poisson capacitor problems.

pub mod grf;
pub mod ns;
pub mod poisson;

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::scalar::Real;

pub use grf::{sample_grf_vorticity, GrfSpectrum};
pub use ns::{make_dataset_ns, solve_ns, NsConfig, NsError, NsTrajectory};
pub use poisson::{
    field_magnitude, make_dataset_poisson, solve_poisson, BoundaryKind, EdgeCondition, Plate, PoissonConfig,
    PoissonError, PoissonProblem, PoissonSetup,
};

/// Complex 2D FFT on a row-major `rows x cols` buffer.
pub struct Fft2<S: Real> {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<S>>,
    row_inv: Arc<dyn Fft<S>>,
    col_fwd: Arc<dyn Fft<S>>,
    col_inv: Arc<dyn Fft<S>>,
}

impl<S: Real> Fft2<S> {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut p = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: p.plan_fft_forward(cols),
            row_inv: p.plan_fft_inverse(cols),
            col_fwd: p.plan_fft_forward(rows),
            col_inv: p.plan_fft_inverse(rows),
        }
    }

    fn apply(&self, buf: &mut [Complex<S>], row: &dyn Fft<S>, col: &dyn Fft<S>) {
        assert_eq!(buf.len(), self.rows * self.cols);
        row.process(buf);
        let mut column = vec![Complex::new(S::zero(), S::zero()); self.rows];
        for j in 0..self.cols {
            for i in 0..self.rows {
                column[i] = buf[i * self.cols + j];
            }
            col.process(&mut column);
            for i in 0..self.rows {
                buf[i * self.cols + j] = column[i];
            }
        }
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, buf: &mut [Complex<S>]) {
        self.apply(buf, self.row_fwd.as_ref(), self.col_fwd.as_ref());
    }

    /// Inverse transform including the `1 / (rows cols)` factor.
    pub fn inverse(&self, buf: &mut [Complex<S>]) {
        self.apply(buf, self.row_inv.as_ref(), self.col_inv.as_ref());
        let scale = S::one() / S::from_count(self.rows * self.cols);
        for v in buf.iter_mut() {
            *v = *v * scale;
        }
    }

    pub fn forward_real(&self, x: &[S]) -> Vec<Complex<S>> {
        let mut buf: Vec<_> = x.iter().map(|&v| Complex::new(v, S::zero())).collect();
        self.forward(&mut buf);
        buf
    }

    pub fn inverse_real(&self, xh: &[Complex<S>]) -> Vec<S> {
        let mut buf = xh.to_vec();
        self.inverse(&mut buf);
        buf.iter().map(|c| c.re).collect()
    }
}

/// Integer FFT wavenumber of index `i` on an `n`-point grid, with the
/// Nyquist index mapped to `-n/2`.
pub fn wavenumber(i: usize, n: usize) -> f64 {
    if i < n / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}
