//! Instantaneous spectrum of `H(s) = a(s)·H_p + b(s)·Σ_j σ^x_j`.
//!
//! `H_p` is diagonal in the computational basis with entries equal to the
//! QUBO energy of each basis bitstring. The driver carries a `+` sign, so
//! its ground state is `(|0⟩ - |1⟩)^{⊗n} / 2^{n/2}` with energy `-n`;
//! measurement statistics are the same as under the `-Σσ^x` convention.
//!
//! Small problems (`n ≤ 12`) are diagonalized densely; larger ones up to
//! the 20-qubit cap use a restarted block Lanczos solver with matrix-free
//! products.

use std::ops::{AddAssign, Mul};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::coloring_qubo::QuboProblem;
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, uniform};
use crate::schedules::Schedule;

pub const MAX_QUBITS: usize = 20;
pub const DENSE_MAX_QUBITS: usize = 12;
pub const DEGENERACY_TOLERANCE: f64 = 1e-7;
pub const DEFAULT_GRID_POINTS: usize = 100;
pub const DEFAULT_LEVELS: usize = 15;

/// Diagonal of the problem Hamiltonian over all `2^n` basis states.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemDiagonal {
    n_qubits: usize,
    values: Vec<f64>,
}

impl ProblemDiagonal {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let dim = values.len();
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::param("values", format!("length {dim} is not 2^n with n >= 1")));
        }
        Ok(ProblemDiagonal {
            n_qubits: dim.trailing_zeros() as usize,
            values,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn build_problem_diagonal(q: &QuboProblem) -> Result<ProblemDiagonal> {
    build_problem_diagonal_capped(q, MAX_QUBITS)
}

pub fn build_problem_diagonal_capped(q: &QuboProblem, cap: usize) -> Result<ProblemDiagonal> {
    let n = q.n_vars();
    if n > cap {
        return Err(Error::SizeLimit {
            what: "state-vector problem diagonal",
            n_vars: n,
            limit: cap,
        });
    }
    let dim = 1usize << n;
    let mut values = vec![q.offset(); dim];
    for (i, &qi) in q.linear().iter().enumerate() {
        if qi != 0.0 {
            let mask = 1 << i;
            values.iter_mut().enumerate().filter(|(x, _)| x & mask != 0).for_each(|(_, v)| *v += qi);
        }
    }
    for &(i, j, qij) in q.quadratic() {
        let mask = (1 << i) | (1 << j);
        values
            .iter_mut()
            .enumerate()
            .filter(|(x, _)| x & mask == mask)
            .for_each(|(_, v)| *v += qij);
    }
    ProblemDiagonal::from_values(values)
}

/// `a·diag + b·Σσ^x` as a matrix-free operator.
#[derive(Debug, Clone, Copy)]
pub struct Hamiltonian<'a> {
    pub diag: &'a ProblemDiagonal,
    pub a: f64,
    pub b: f64,
}

impl<'a> Hamiltonian<'a> {
    pub fn at(s: f64, sched: &Schedule, diag: &'a ProblemDiagonal) -> Self {
        let (a, b) = sched.at(s);
        Hamiltonian { diag, a, b }
    }

    pub fn dim(&self) -> usize {
        self.diag.dim()
    }

    /// Upper bound on the operator norm.
    pub fn norm_bound(&self) -> f64 {
        self.a.abs() * self.diag.max_abs() + self.b.abs() * self.diag.n_qubits as f64
    }

    /// `y = H x`.
    pub fn apply_into<T>(&self, x: &[T], y: &mut [T])
    where
        T: Copy + Default + AddAssign + Mul<f64, Output = T>,
    {
        let n = self.diag.n_qubits;
        for (i, (yi, (&xi, &d))) in y.iter_mut().zip(x.iter().zip(&self.diag.values)).enumerate() {
            let mut flips = T::default();
            for j in 0..n {
                flips += x[i ^ (1 << j)];
            }
            *yi = xi * (self.a * d);
            *yi += flips * self.b;
        }
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let dim = self.dim();
        let n = self.diag.n_qubits;
        let mut m = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = self.a * self.diag.values[i];
            for j in 0..n {
                m[(i, i ^ (1 << j))] += self.b;
            }
        }
        m
    }
}

pub fn apply_hamiltonian<T>(s: f64, sched: &Schedule, diag: &ProblemDiagonal, state: &[T]) -> Result<Vec<T>>
where
    T: Copy + Default + AddAssign + Mul<f64, Output = T>,
{
    if state.len() != diag.dim() {
        return Err(Error::LengthMismatch {
            expected: diag.dim(),
            actual: state.len(),
        });
    }
    let mut out = vec![T::default(); state.len()];
    Hamiltonian::at(s, sched, diag).apply_into(state, &mut out);
    Ok(out)
}

/// The `m` lowest eigenvalues of `H(s)`, ascending, degeneracies included.
pub fn lowest_eigenvalues(s: f64, sched: &Schedule, diag: &ProblemDiagonal, m: usize) -> Result<Vec<f64>> {
    if m == 0 || m > diag.dim() {
        return Err(Error::param("m", format!("need 1 <= m <= {}, got {m}", diag.dim())));
    }
    let h = Hamiltonian::at(s, sched, diag);
    if diag.n_qubits() <= DENSE_MAX_QUBITS {
        Ok(lowest_dense(&h, m))
    } else {
        lowest_block_lanczos(&h, m, &LanczosOptions::default()).map_err(|e| match e {
            Error::NoConvergence { residual, .. } => Error::NoConvergence { s, residual },
            other => other,
        })
    }
}

pub fn lowest_dense(h: &Hamiltonian<'_>, m: usize) -> Vec<f64> {
    let mut eig: Vec<f64> = h.dense().symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    eig.truncate(m);
    eig
}

#[derive(Debug, Clone)]
pub struct LanczosOptions {
    /// Extra block columns beyond `m`; bounds the degeneracy the solver resolves.
    pub guard: usize,
    /// Krylov blocks per restart cycle.
    pub depth: usize,
    pub max_restarts: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            guard: 6,
            depth: 6,
            max_restarts: 200,
            tolerance: 1e-9,
            seed: 0x5eed,
        }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Orthogonalizes `v` against `basis` twice; returns the remaining norm.
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) -> f64 {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, v);
            v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= c * qi);
        }
    }
    norm(v)
}

/// Restarted block Lanczos with full reorthogonalization and Rayleigh–Ritz
/// extraction. Residuals are `‖H x - θ x‖` of the `m` lowest Ritz pairs.
pub fn lowest_block_lanczos(h: &Hamiltonian<'_>, m: usize, opts: &LanczosOptions) -> Result<Vec<f64>> {
    let dim = h.dim();
    let block = (m + opts.guard).min(dim);
    let mut rng = rng_from_seed(opts.seed);
    let mut start: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..dim).map(|_| uniform(&mut rng) - 0.5).collect())
        .collect();
    let mut worst = f64::INFINITY;
    for _ in 0..opts.max_restarts {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut images: Vec<Vec<f64>> = Vec::new();
        let mut frontier = std::mem::take(&mut start);
        for _ in 0..opts.depth {
            let mut added = Vec::new();
            for mut v in frontier {
                let r = orthogonalize(&mut v, &basis);
                if r > 1e-10 {
                    v.iter_mut().for_each(|x| *x /= r);
                    basis.push(v.clone());
                    added.push(v);
                }
            }
            if added.is_empty() || basis.len() >= dim {
                break;
            }
            frontier = added
                .iter()
                .map(|v| {
                    let mut hv = vec![0.0; dim];
                    h.apply_into(v, &mut hv);
                    images.push(hv.clone());
                    hv
                })
                .collect();
        }
        // Complete images for vectors added in the last round.
        while images.len() < basis.len() {
            let mut hv = vec![0.0; dim];
            h.apply_into(&basis[images.len()], &mut hv);
            images.push(hv);
        }
        let k = basis.len();
        let projected = DMatrix::from_fn(k, k, |i, j| dot(&basis[i], &images[j]));
        let projected = (&projected + projected.transpose()) * 0.5;
        let eig = SymmetricEigen::new(projected);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let keep = block.min(k);
        let mut ritz_values = Vec::with_capacity(keep);
        worst = 0.0;
        for (rank, &col) in order.iter().take(keep).enumerate() {
            let theta = eig.eigenvalues[col];
            let y = eig.eigenvectors.column(col);
            let mut x = vec![0.0; dim];
            let mut hx = vec![0.0; dim];
            for (idx, &c) in y.iter().enumerate() {
                x.iter_mut().zip(&basis[idx]).for_each(|(a, b)| *a += c * b);
                hx.iter_mut().zip(&images[idx]).for_each(|(a, b)| *a += c * b);
            }
            if rank < m {
                let res: f64 = hx
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| (a - theta * b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                worst = worst.max(res / theta.abs().max(1.0));
            }
            ritz_values.push(theta);
            start.push(x);
        }
        if k >= dim || worst <= opts.tolerance {
            ritz_values.truncate(m);
            return Ok(ritz_values);
        }
    }
    Err(Error::NoConvergence { s: f64::NAN, residual: worst })
}

/// `n` equally spaced points from 0 to 1 inclusive.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        n => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn default_grid() -> Vec<f64> {
    uniform_grid(DEFAULT_GRID_POINTS)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTable {
    pub grid: Vec<f64>,
    pub levels: Vec<Vec<f64>>,
}

impl SpectrumTable {
    pub fn new(grid: Vec<f64>, levels: Vec<Vec<f64>>) -> Result<Self> {
        if grid.len() != levels.len() || grid.is_empty() {
            return Err(Error::param("levels", "one level row per grid point required"));
        }
        let m = levels[0].len();
        if levels.iter().any(|row| row.len() != m) {
            return Err(Error::param("levels", "level count must be constant across the grid"));
        }
        Ok(SpectrumTable { grid, levels })
    }

    pub fn n_levels(&self) -> usize {
        self.levels[0].len()
    }

    /// `s,level_0,...,level_{m-1}` with one row per grid point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s");
        for i in 0..self.n_levels() {
            out.push_str(&format!(",level_{i}"));
        }
        out.push('\n');
        for (s, row) in self.grid.iter().zip(&self.levels) {
            out.push_str(&s.to_string());
            for e in row {
                out.push_str(&format!(",{e}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn spectrum_sweep(sched: &Schedule, diag: &ProblemDiagonal, grid: &[f64], m: usize) -> Result<SpectrumTable> {
    if grid.is_empty() {
        return Err(Error::param("grid", "empty"));
    }
    if let Some(s) = grid.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::param("grid", format!("s = {s} outside [0, 1]")));
    }
    let levels = grid
        .par_iter()
        .map(|&s| lowest_eigenvalues(s, sched, diag, m))
        .collect::<Result<Vec<_>>>()?;
    SpectrumTable::new(grid.to_vec(), levels)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MinGap {
    pub s: f64,
    pub gap: f64,
}

/// Minimum over the grid of (first level more than `tolerance` above the
/// ground value) minus the ground value.
pub fn min_gap(table: &SpectrumTable) -> Result<MinGap> {
    min_gap_with_tolerance(table, DEGENERACY_TOLERANCE)
}

pub fn min_gap_with_tolerance(table: &SpectrumTable, tolerance: f64) -> Result<MinGap> {
    if table.n_levels() < 2 {
        return Err(Error::param("table", "need at least two levels"));
    }
    let mut best: Option<MinGap> = None;
    for (&s, row) in table.grid.iter().zip(&table.levels) {
        let ground = row[0];
        if let Some(&e) = row.iter().find(|&&e| e - ground > tolerance) {
            let gap = e - ground;
            if best.map_or(true, |b| gap < b.gap) {
                best = Some(MinGap { s, gap });
            }
        }
    }
    best.ok_or(Error::NoGap { tolerance })
}

/// Minimum over the grid of `level[manifold] - level[0]`: the gap between
/// the lowest `manifold` levels (e.g. the states that become the degenerate
/// ground space at `s = 1`) and the rest of the spectrum.
pub fn min_manifold_gap(table: &SpectrumTable, manifold: usize) -> Result<MinGap> {
    if manifold == 0 || manifold >= table.n_levels() {
        return Err(Error::param("manifold", format!("need 1 <= manifold < {}", table.n_levels())));
    }
    table
        .grid
        .iter()
        .zip(&table.levels)
        .map(|(&s, row)| MinGap {
            s,
            gap: row[manifold] - row[0],
        })
        .min_by(|a, b| a.gap.total_cmp(&b.gap))
        .ok_or(Error::NoGap { tolerance: 0.0 })
}

/// Number of levels within `tolerance` of the lowest one.
pub fn ground_degeneracy(levels: &[f64], tolerance: f64) -> usize {
    levels.iter().take_while(|&&e| e - levels[0] <= tolerance).count()
}
