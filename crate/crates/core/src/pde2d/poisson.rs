//! Steady-state Poisson problems with capacitor plates.
//!
//! The potential lives on an `nx x ny` node grid (row-major, `x` index
//! outermost) with equal spacing `h` in both directions. Interior nodes use
//! the 5-point Laplacian, plates are internal Dirichlet constraints, and each
//! of the four edges is either Dirichlet (fixed value) or Neumann (one-sided
//! outward difference equals the edge value). The linear system is solved
//! by banded LU with iterative refinement.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::container::{DatasetContainer, DatasetError, DatasetHeader, Sample, SampleData};
use crate::eqtok::{tokenize_equation, EquationSpec, Family, TokenError, PAD_2D};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum PoissonError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("no convergence after {iterations} refinement steps (residual {residual:e}, tolerance {tol:e})")]
    NoConvergence { iterations: usize, residual: f64, tol: f64 },
    #[error("zero pivot at row {0}")]
    Singular(usize),
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
}

/// Boundary kind plus its constant data (value or outward normal derivative).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeCondition {
    pub kind: BoundaryKind,
    pub value: f64,
}

impl EdgeCondition {
    pub fn dirichlet(value: f64) -> Self {
        Self { kind: BoundaryKind::Dirichlet, value }
    }

    pub fn neumann(value: f64) -> Self {
        Self { kind: BoundaryKind::Neumann, value }
    }
}

/// Horizontal plate covering nodes `(x..x + width, y)` held at `charge`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plate {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub charge: f64,
}

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;
pub const BOTTOM: usize = 2;
pub const TOP: usize = 3;

/// Boundary conditions (left, right, bottom, top) and plate geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonSetup {
    pub edges: [EdgeCondition; 4],
    pub plates: Vec<Plate>,
}

impl PoissonSetup {
    /// Edge kinds from a 4-bit code: bit `e` set means edge `e` is Neumann.
    pub fn from_combination(code: u8, plates: Vec<Plate>) -> Self {
        let mut edges = [EdgeCondition::dirichlet(0.0); 4];
        for (e, edge) in edges.iter_mut().enumerate() {
            if code >> e & 1 == 1 {
                *edge = EdgeCondition::neumann(0.0);
            }
        }
        Self { edges, plates }
    }

    pub fn combination(&self) -> u8 {
        self.edges
            .iter()
            .enumerate()
            .map(|(e, c)| u8::from(c.kind == BoundaryKind::Neumann) << e)
            .sum()
    }

    pub fn validate_values(&self) -> Result<(), PoissonError> {
        if self.edges.iter().any(|e| !e.value.is_finite()) || self.plates.iter().any(|p| !p.charge.is_finite()) {
            return Err(PoissonError::Invalid("non-finite boundary or plate value".into()));
        }
        Ok(())
    }

    pub fn validate(&self, nx: usize, ny: usize) -> Result<(), PoissonError> {
        self.validate_values()?;
        for (i, p) in self.plates.iter().enumerate() {
            if p.width == 0 || p.x == 0 || p.y == 0 || p.x + p.width >= nx || p.y >= ny - 1 {
                return Err(PoissonError::Invalid(format!("plate {i} {p:?} does not lie strictly inside {nx}x{ny}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonProblem<S> {
    pub nx: usize,
    pub ny: usize,
    pub h: S,
    pub setup: PoissonSetup,
    /// Source term, `nx * ny` values.
    pub g: Vec<S>,
}

impl<S: Real> PoissonProblem<S> {
    /// Source-free problem on the unit-width domain, `h = 1 / (nx - 1)`.
    pub fn new(nx: usize, ny: usize, setup: PoissonSetup) -> Self {
        Self { nx, ny, h: S::one() / S::from_count(nx - 1), setup, g: vec![S::zero(); nx * ny] }
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    /// Plate potential per node, `None` off plates. Later plates win overlaps.
    pub fn plate_map(&self) -> Vec<Option<S>> {
        let mut map = vec![None; self.nx * self.ny];
        for p in &self.setup.plates {
            for i in p.x..p.x + p.width {
                map[self.index(i, p.y)] = Some(S::lit(p.charge));
            }
        }
        map
    }

    /// Model input: plate potentials and Dirichlet edge values, zero elsewhere.
    pub fn input_field(&self) -> Vec<S> {
        let mut out = vec![S::zero(); self.nx * self.ny];
        for i in 0..self.nx {
            for j in 0..self.ny {
                if let Some(NodeKind::Dirichlet(v)) = self.boundary_kind(i, j) {
                    out[self.index(i, j)] = v;
                }
            }
        }
        for (o, p) in out.iter_mut().zip(self.plate_map()) {
            if let Some(v) = p {
                *o = v;
            }
        }
        out
    }

    fn boundary_kind(&self, i: usize, j: usize) -> Option<NodeKind<S>> {
        let (nx, ny) = (self.nx, self.ny);
        let on_x = if i == 0 {
            Some(LEFT)
        } else if i == nx - 1 {
            Some(RIGHT)
        } else {
            None
        };
        let on_y = if j == 0 {
            Some(BOTTOM)
        } else if j == ny - 1 {
            Some(TOP)
        } else {
            None
        };
        let edges = &self.setup.edges;
        let pick = |e: usize| -> NodeKind<S> {
            let c = edges[e];
            match c.kind {
                BoundaryKind::Dirichlet => NodeKind::Dirichlet(S::lit(c.value)),
                BoundaryKind::Neumann => NodeKind::Neumann { edge: e, flux: S::lit(c.value) },
            }
        };
        match (on_x, on_y) {
            (None, None) => None,
            (Some(e), None) | (None, Some(e)) => Some(pick(e)),
            // Corners: Dirichlet wins; the vertical edge breaks ties.
            (Some(ex), Some(ey)) => match (pick(ex), pick(ey)) {
                (d @ NodeKind::Dirichlet(_), _) => Some(d),
                (_, d @ NodeKind::Dirichlet(_)) => Some(d),
                (n, _) => Some(n),
            },
        }
    }

    fn node_equation(&self, i: usize, j: usize, plates: &[Option<S>], pinned: Option<usize>) -> Equation<S> {
        let idx = self.index(i, j);
        if let Some(v) = plates[idx] {
            return Equation::Fixed(v);
        }
        if pinned == Some(idx) {
            return Equation::Fixed(S::zero());
        }
        match self.boundary_kind(i, j) {
            Some(NodeKind::Dirichlet(v)) => Equation::Fixed(v),
            Some(NodeKind::Neumann { edge, flux }) => {
                let inward = match edge {
                    LEFT => self.index(1, j),
                    RIGHT => self.index(self.nx - 2, j),
                    BOTTOM => self.index(i, 1),
                    _ => self.index(i, self.ny - 2),
                };
                Equation::Neumann { inward, rhs: flux * self.h }
            }
            None => Equation::Interior,
        }
    }

    fn pinned_node(&self) -> Option<usize> {
        let any_dirichlet = self.setup.edges.iter().any(|e| e.kind == BoundaryKind::Dirichlet);
        if any_dirichlet || !self.setup.plates.is_empty() {
            None
        } else {
            Some(0)
        }
    }

    /// `A u - b` for every node, with interior rows in Laplacian units.
    pub fn residual(&self, u: &[S]) -> Vec<S> {
        let plates = self.plate_map();
        let pinned = self.pinned_node();
        let h2 = self.h * self.h;
        let mut r = vec![S::zero(); u.len()];
        for i in 0..self.nx {
            for j in 0..self.ny {
                let idx = self.index(i, j);
                r[idx] = match self.node_equation(i, j, &plates, pinned) {
                    Equation::Fixed(v) => u[idx] - v,
                    Equation::Neumann { inward, rhs } => u[idx] - u[inward] - rhs,
                    Equation::Interior => {
                        let lap = u[idx + self.ny] + u[idx - self.ny] + u[idx + 1] + u[idx - 1] - S::lit(4.0) * u[idx];
                        lap / h2 - self.g[idx]
                    }
                };
            }
        }
        r
    }

    /// Max-norm of `lap_h u - g` over unconstrained interior nodes.
    pub fn interior_residual(&self, u: &[S]) -> f64 {
        let plates = self.plate_map();
        let pinned = self.pinned_node();
        let r = self.residual(u);
        let mut worst = 0.0f64;
        for i in 0..self.nx {
            for j in 0..self.ny {
                if let Equation::Interior = self.node_equation(i, j, &plates, pinned) {
                    worst = worst.max(r[self.index(i, j)].to_f64_lossy().abs());
                }
            }
        }
        worst
    }
}

#[derive(Clone, Copy)]
enum NodeKind<S> {
    Dirichlet(S),
    Neumann { edge: usize, flux: S },
}

enum Equation<S> {
    Fixed(S),
    Neumann { inward: usize, rhs: S },
    Interior,
}

/// Dense band storage for a matrix with half-bandwidth `bw`.
struct BandMatrix<S> {
    n: usize,
    bw: usize,
    data: Vec<S>,
}

impl<S: Real> BandMatrix<S> {
    fn new(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![S::zero(); n * (2 * bw + 1)] }
    }

    fn at(&mut self, r: usize, c: usize) -> &mut S {
        let w = 2 * self.bw + 1;
        &mut self.data[r * w + (c + self.bw - r)]
    }

    fn get(&self, r: usize, c: usize) -> S {
        let w = 2 * self.bw + 1;
        self.data[r * w + (c + self.bw - r)]
    }

    /// In-place LU without pivoting.
    fn factor(&mut self) -> Result<(), PoissonError> {
        let (n, bw) = (self.n, self.bw);
        for k in 0..n {
            let pivot = self.get(k, k);
            if pivot == S::zero() {
                return Err(PoissonError::Singular(k));
            }
            let last = (k + bw).min(n - 1);
            for r in k + 1..=last {
                let f = self.get(r, k) / pivot;
                if f == S::zero() {
                    continue;
                }
                *self.at(r, k) = f;
                for c in k + 1..=last {
                    let v = self.get(k, c);
                    if v != S::zero() {
                        *self.at(r, c) -= f * v;
                    }
                }
            }
        }
        Ok(())
    }

    fn solve(&self, b: &mut [S]) {
        let (n, bw) = (self.n, self.bw);
        for r in 0..n {
            let start = r.saturating_sub(bw);
            let mut acc = b[r];
            for c in start..r {
                acc -= self.get(r, c) * b[c];
            }
            b[r] = acc;
        }
        for r in (0..n).rev() {
            let end = (r + bw).min(n - 1);
            let mut acc = b[r];
            for c in r + 1..=end {
                acc -= self.get(r, c) * b[c];
            }
            b[r] = acc / self.get(r, r);
        }
    }
}

/// Solves the problem; the interior residual must reach `tol`.
pub fn solve_poisson<S: Real>(p: &PoissonProblem<S>, tol: f64) -> Result<Vec<S>, PoissonError> {
    const MAX_REFINEMENTS: usize = 8;
    if p.nx < 3 || p.ny < 3 || p.g.len() != p.nx * p.ny {
        return Err(PoissonError::Invalid(format!("grid {}x{} with {} source values", p.nx, p.ny, p.g.len())));
    }
    p.setup.validate(p.nx, p.ny)?;
    let n = p.nx * p.ny;
    let plates = p.plate_map();
    let pinned = p.pinned_node();
    let h2 = p.h * p.h;
    let mut a = BandMatrix::new(n, p.ny);
    let mut rhs = vec![S::zero(); n];
    // Interior rows are scaled by h^2 so all rows have O(1) entries.
    for i in 0..p.nx {
        for j in 0..p.ny {
            let idx = p.index(i, j);
            match p.node_equation(i, j, &plates, pinned) {
                Equation::Fixed(v) => {
                    *a.at(idx, idx) = S::one();
                    rhs[idx] = v;
                }
                Equation::Neumann { inward, rhs: r } => {
                    *a.at(idx, idx) = S::one();
                    *a.at(idx, inward) = -S::one();
                    rhs[idx] = r;
                }
                Equation::Interior => {
                    *a.at(idx, idx) = S::lit(-4.0);
                    for nb in [idx + p.ny, idx - p.ny, idx + 1, idx - 1] {
                        *a.at(idx, nb) = S::one();
                    }
                    rhs[idx] = p.g[idx] * h2;
                }
            }
        }
    }
    a.factor()?;
    let mut u = rhs.clone();
    a.solve(&mut u);
    let scale_rows = |r: &mut [S]| {
        for i in 0..p.nx {
            for j in 0..p.ny {
                let idx = p.index(i, j);
                if let Equation::Interior = p.node_equation(i, j, &plates, pinned) {
                    r[idx] *= h2;
                }
            }
        }
    };
    let mut residual = p.interior_residual(&u);
    let mut iterations = 0;
    while residual > tol && iterations < MAX_REFINEMENTS {
        let mut r = p.residual(&u);
        scale_rows(&mut r);
        a.solve(&mut r);
        for (ui, di) in u.iter_mut().zip(&r) {
            *ui -= *di;
        }
        residual = p.interior_residual(&u);
        iterations += 1;
    }
    if residual > tol {
        return Err(PoissonError::NoConvergence { iterations, residual, tol });
    }
    // Constrained values are reproduced exactly rather than up to round-off.
    for i in 0..p.nx {
        for j in 0..p.ny {
            if let Equation::Fixed(v) = p.node_equation(i, j, &plates, pinned) {
                u[p.index(i, j)] = v;
            }
        }
    }
    Ok(u)
}

/// Gradient magnitude: central differences inside, one-sided on edges.
pub fn field_magnitude<S: Real>(u: &[S], nx: usize, ny: usize, h: S) -> Vec<S> {
    assert_eq!(u.len(), nx * ny);
    let at = |i: usize, j: usize| u[i * ny + j];
    let two = S::lit(2.0);
    let diff = |lo: S, hi: S, span: S| (hi - lo) / span;
    let mut out = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            let gx = if i == 0 {
                diff(at(0, j), at(1, j), h)
            } else if i == nx - 1 {
                diff(at(nx - 2, j), at(nx - 1, j), h)
            } else {
                diff(at(i - 1, j), at(i + 1, j), two * h)
            };
            let gy = if j == 0 {
                diff(at(i, 0), at(i, 1), h)
            } else if j == ny - 1 {
                diff(at(i, ny - 2), at(i, ny - 1), h)
            } else {
                diff(at(i, j - 1), at(i, j + 1), two * h)
            };
            out.push((gx * gx + gy * gy).sqrt());
        }
    }
    out
}

/// Geometry sampling ranges for generated capacitor problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonConfig {
    pub nx: usize,
    pub ny: usize,
    pub plates: usize,
    pub width_min: usize,
    pub width_max: usize,
    pub margin: usize,
    pub charge_min: f64,
    pub charge_max: f64,
    pub tol: f64,
}

impl Default for PoissonConfig {
    fn default() -> Self {
        Self { nx: 100, ny: 60, plates: 2, width_min: 10, width_max: 40, margin: 5, charge_min: 0.5, charge_max: 1.0, tol: 1e-8 }
    }
}

/// Samples plates on distinct rows at least two apart. Charges are rounded
/// to two decimals so their tokens stay short.
pub fn sample_plates<R: Rng>(rng: &mut R, cfg: &PoissonConfig) -> Vec<Plate> {
    let mut plates: Vec<Plate> = Vec::with_capacity(cfg.plates);
    while plates.len() < cfg.plates {
        let width = rng.gen_range(cfg.width_min..=cfg.width_max);
        let x = rng.gen_range(cfg.margin..=cfg.nx - cfg.margin - width);
        let y = rng.gen_range(cfg.margin..cfg.ny - cfg.margin);
        let magnitude: f64 = rng.gen_range(cfg.charge_min..=cfg.charge_max);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let charge = (sign * magnitude * 100.0).round() / 100.0;
        if plates.iter().all(|p| p.y.abs_diff(y) >= 2) {
            plates.push(Plate { x, y, width, charge });
        }
    }
    plates
}

/// Generates `count` capacitor samples; sample `i` uses boundary combination
/// `i mod 16` and geometry drawn from seed `seed + i`.
pub fn make_dataset_poisson(count: usize, seed: u64, cfg: &PoissonConfig) -> Result<DatasetContainer, PoissonError> {
    if count == 0 {
        return Err(PoissonError::Invalid("count must be at least 1".into()));
    }
    if cfg.nx < 2 * cfg.margin + cfg.width_max + 1 || cfg.ny < 2 * cfg.margin + 2 {
        return Err(PoissonError::Invalid("plate ranges do not fit the grid".into()));
    }
    let samples: Result<Vec<Sample>, PoissonError> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let setup = PoissonSetup::from_combination((i % 16) as u8, sample_plates(&mut rng, cfg));
            let problem = PoissonProblem::<f64>::new(cfg.nx, cfg.ny, setup.clone());
            let u = solve_poisson(&problem, cfg.tol)?;
            let target = field_magnitude(&u, cfg.nx, cfg.ny, problem.h);
            let spec = EquationSpec::Poisson(setup);
            let tokens = tokenize_equation(&spec, PAD_2D)?.ids;
            Ok(Sample {
                group: i as u64,
                spec,
                tokens,
                data: SampleData::Steady {
                    nx: cfg.nx,
                    ny: cfg.ny,
                    input: problem.input_field().iter().map(|&v| v as f32).collect(),
                    target: target.iter().map(|&v| v as f32).collect(),
                },
            })
        })
        .collect();
    let mut header = DatasetHeader::new(Family::Poisson, PAD_2D, seed);
    header.meta.insert("geometry".into(), serde_json::to_value(cfg).unwrap());
    header.meta.insert("h".into(), (1.0 / (cfg.nx - 1) as f64).into());
    Ok(DatasetContainer::new(header, samples?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all(kind: BoundaryKind, value: f64) -> [EdgeCondition; 4] {
        [EdgeCondition { kind, value }; 4]
    }

    #[test]
    fn constant_dirichlet_gives_constant() {
        let setup = PoissonSetup { edges: all(BoundaryKind::Dirichlet, 0.7), plates: vec![] };
        let p = PoissonProblem::<f64>::new(20, 12, setup);
        let u = solve_poisson(&p, 1e-9).unwrap();
        assert!(u.iter().all(|v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn all_neumann_without_plates_is_gauge_fixed() {
        let setup = PoissonSetup { edges: all(BoundaryKind::Neumann, 0.0), plates: vec![] };
        let p = PoissonProblem::<f64>::new(12, 10, setup);
        let u = solve_poisson(&p, 1e-9).unwrap();
        assert!(u.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn residual_and_boundaries_hold_for_mixed_problem() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = PoissonConfig::default();
        for code in [0u8, 5, 10, 15] {
            let setup = PoissonSetup::from_combination(code, sample_plates(&mut rng, &cfg));
            let p = PoissonProblem::<f64>::new(cfg.nx, cfg.ny, setup);
            let u = solve_poisson(&p, 1e-8).unwrap();
            assert!(p.interior_residual(&u) <= 1e-8);
            for j in 0..cfg.ny {
                let (l, r) = (u[p.index(0, j)], u[p.index(cfg.nx - 1, j)]);
                if code & 1 == 0 {
                    assert_eq!(l, 0.0);
                } else if j > 0 && j < cfg.ny - 1 {
                    assert!((l - u[p.index(1, j)]).abs() < 1e-10);
                }
                if code & 2 == 0 {
                    assert_eq!(r, 0.0);
                }
            }
            for (v, m) in u.iter().zip(p.plate_map()) {
                if let Some(c) = m {
                    assert_eq!(*v, c);
                }
            }
        }
    }

    #[test]
    fn rejects_plate_on_boundary() {
        let setup = PoissonSetup::from_combination(0, vec![Plate { x: 0, y: 5, width: 4, charge: 1.0 }]);
        let p = PoissonProblem::<f64>::new(20, 12, setup);
        assert!(matches!(solve_poisson(&p, 1e-8), Err(PoissonError::Invalid(_))));
    }

    #[test]
    fn field_magnitude_cases() {
        let (nx, ny) = (7, 5);
        let h = 0.5;
        assert!(field_magnitude(&vec![3.0; nx * ny], nx, ny, h).iter().all(|&v| v == 0.0));
        let ramp: Vec<f64> = (0..nx).flat_map(|i| std::iter::repeat(i as f64 * h).take(ny)).collect();
        assert!(field_magnitude(&ramp, nx, ny, h).iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn stratified_combinations() {
        let cfg = PoissonConfig::default();
        let c = make_dataset_poisson(16, 1, &cfg).unwrap();
        let mut seen: Vec<u8> = c
            .samples
            .iter()
            .map(|s| match &s.spec {
                EquationSpec::Poisson(p) => p.combination(),
                _ => unreachable!(),
            })
            .collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..16).collect::<Vec<u8>>());
    }
}
