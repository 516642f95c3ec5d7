//! State-vector simulation of forward and reverse anneals.
//!
//! Integrates `i dψ/dt = H(s(t)) ψ` (ħ = 1) with the fourth-order
//! commutator-free Magnus scheme
//!
//! ```text
//! U(t + h, t) ≈ exp(-ih(a₁H₁ + a₂H₂)) · exp(-ih(a₂H₁ + a₁H₂))
//! ```
//!
//! where `H₁`, `H₂` are sampled at the two Gauss nodes of the step. Each
//! factor is again of the form `αH_p + βΣσ^x`, so exponentials are applied
//! matrix-free with a short Lanczos recurrence. Steps never straddle a path
//! waypoint, because `s(t)` has a kink there.
//!
//! Path time is in schedule units; the integrator multiplies it by
//! [`EvolveOptions::time_scale`] to get Hamiltonian time.

use num_complex::Complex64;
use nalgebra::{DMatrix, SymmetricEigen};

use crate::bits::Bits;
use crate::coloring_qubo::{QuboProblem, Sample};
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, uniform};
use crate::schedules::{AnnealPath, PathKind, Schedule};
use crate::spectrum::{ProblemDiagonal, MAX_QUBITS};

/// Time scale at which the P5 two-coloring forward anneal on the linear
/// schedule is well into its adiabatic plateau (valid mass ≈ 0.9996; 0.985
/// at half this value, 0.87 at a quarter).
pub const ADIABATIC_TIME_SCALE: f64 = 2.0;

/// Largest Hamiltonian-time step.
pub const DEFAULT_MAX_DT: f64 = 0.25;

/// Per-step norm drift allowed before the step is split.
pub const DRIFT_BOUND: f64 = 1e-6;

pub const DEFAULT_SHOTS: usize = 1000;

const KRYLOV_MAX_DIM: usize = 40;
const MAX_REFINEMENTS: u32 = 24;
const NORM_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl QuantumState {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        let dim = amplitudes.len();
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::param("amplitudes", format!("length {dim} is not 2^n with n >= 1")));
        }
        let state = QuantumState {
            n_qubits: dim.trailing_zeros() as usize,
            amplitudes,
        };
        let norm = state.norm();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::param("amplitudes", format!("norm {norm} is not 1")));
        }
        Ok(state)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `⟨ψ|a·H_p + b·Σσ^x|ψ⟩`.
    pub fn energy(&self, diag: &ProblemDiagonal, a: f64, b: f64) -> f64 {
        let op = Exponent::new(diag, a, b);
        let mut hpsi = vec![Complex64::default(); self.dim()];
        op.apply(&self.amplitudes, &mut hpsi);
        inner(&self.amplitudes, &hpsi).re
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &QuantumState) -> f64 {
        inner(&self.amplitudes, &other.amplitudes).norm_sqr()
    }

    pub fn conj(&self) -> QuantumState {
        QuantumState {
            n_qubits: self.n_qubits,
            amplitudes: self.amplitudes.iter().map(|a| a.conj()).collect(),
        }
    }

    /// Largest elementwise distance, ignoring nothing (phase-sensitive).
    pub fn max_distance(&self, other: &QuantumState) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }
}

fn check_qubits(n: usize) -> Result<()> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::SizeLimit {
            what: "state-vector simulation",
            n_vars: n,
            limit: MAX_QUBITS,
        });
    }
    Ok(())
}

/// Ground state of `+Σσ^x`: `((|0⟩ - |1⟩)/√2)^{⊗n}`.
pub fn driver_ground(n: usize) -> Result<QuantumState> {
    check_qubits(n)?;
    let amp = (0.5f64).powf(n as f64 / 2.0);
    let amplitudes = (0..1usize << n)
        .map(|i| {
            let sign = if i.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            Complex64::new(sign * amp, 0.0)
        })
        .collect();
    Ok(QuantumState { n_qubits: n, amplitudes })
}

pub fn basis_state(bits: &Bits) -> Result<QuantumState> {
    check_qubits(bits.len())?;
    let mut amplitudes = vec![Complex64::default(); 1 << bits.len()];
    amplitudes[bits.to_index()] = Complex64::new(1.0, 0.0);
    Ok(QuantumState {
        n_qubits: bits.len(),
        amplitudes,
    })
}

fn inner(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// `α·diag + β·Σσ^x` on complex vectors.
struct Exponent<'a> {
    diag: &'a [f64],
    n: usize,
    alpha: f64,
    beta: f64,
}

impl<'a> Exponent<'a> {
    fn new(diag: &'a ProblemDiagonal, alpha: f64, beta: f64) -> Self {
        Exponent {
            diag: diag.values(),
            n: diag.n_qubits(),
            alpha,
            beta,
        }
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        for ((yi, xi), d) in y.iter_mut().zip(x).zip(self.diag) {
            *yi = xi * (self.alpha * d);
        }
        if self.beta == 0.0 {
            return;
        }
        for j in 0..self.n {
            let half = 1usize << j;
            for (yb, xb) in y.chunks_exact_mut(2 * half).zip(x.chunks_exact(2 * half)) {
                let (y0, y1) = yb.split_at_mut(half);
                let (x0, x1) = xb.split_at(half);
                for i in 0..half {
                    y0[i] += x1[i] * self.beta;
                    y1[i] += x0[i] * self.beta;
                }
            }
        }
    }
}

/// Scratch space reused across Krylov exponentials.
struct Krylov {
    basis: Vec<Vec<Complex64>>,
    w: Vec<Complex64>,
}

impl Krylov {
    fn new(dim: usize) -> Self {
        Krylov {
            basis: Vec::new(),
            w: vec![Complex64::default(); dim],
        }
    }

    /// `psi ← exp(-iτ·op) psi`. Returns `false` if the recurrence does not
    /// reach `tol` within the Krylov dimension cap.
    fn expm(&mut self, op: &Exponent<'_>, tau: f64, psi: &mut [Complex64], tol: f64) -> bool {
        let dim = psi.len();
        let psi_norm = norm(psi);
        if psi_norm == 0.0 || tau == 0.0 {
            return true;
        }
        let max_m = KRYLOV_MAX_DIM.min(dim);
        while self.basis.len() < max_m {
            self.basis.push(vec![Complex64::default(); dim]);
        }
        self.basis[0]
            .iter_mut()
            .zip(psi.iter())
            .for_each(|(v, p)| *v = p / psi_norm);
        let mut alphas: Vec<f64> = Vec::with_capacity(max_m);
        let mut betas: Vec<f64> = Vec::with_capacity(max_m);
        for j in 0..max_m {
            op.apply(&self.basis[j], &mut self.w);
            let alpha = inner(&self.basis[j], &self.w).re;
            alphas.push(alpha);
            {
                let (done, _) = self.basis.split_at(j + 1);
                let vj = &done[j];
                self.w.iter_mut().zip(vj).for_each(|(w, v)| *w -= v * alpha);
                if j > 0 {
                    let b = betas[j - 1];
                    self.w.iter_mut().zip(&done[j - 1]).for_each(|(w, v)| *w -= v * b);
                }
                // One pass of full reorthogonalization keeps the basis
                // orthonormal to working precision, which the norm bound needs.
                for v in done {
                    let c = inner(v, &self.w);
                    self.w.iter_mut().zip(v).for_each(|(w, vi)| *w -= vi * c);
                }
            }
            let beta = norm(&self.w);
            let m = j + 1;
            let coeffs = tridiagonal_expm_e1(&alphas, &betas, tau);
            let breakdown = beta <= 1e-13 * (1.0 + alpha.abs());
            let error = beta * coeffs[m - 1].norm() * psi_norm;
            if breakdown || error <= tol || m == max_m && m == dim {
                psi.iter_mut().for_each(|p| *p = Complex64::default());
                for (c, v) in coeffs.iter().zip(&self.basis) {
                    let c = c * psi_norm;
                    psi.iter_mut().zip(v).for_each(|(p, vi)| *p += vi * c);
                }
                return true;
            }
            if m == max_m {
                return false;
            }
            betas.push(beta);
            let inv = 1.0 / beta;
            let (_, tail) = self.basis.split_at_mut(j + 1);
            tail[0].iter_mut().zip(&self.w).for_each(|(v, w)| *v = w * inv);
        }
        false
    }
}

/// `exp(-iτT) e₁` for the symmetric tridiagonal `T` with diagonal `alphas`
/// and off-diagonal `betas[..m-1]`.
fn tridiagonal_expm_e1(alphas: &[f64], betas: &[f64], tau: f64) -> Vec<Complex64> {
    let m = alphas.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alphas[i]
        } else if i + 1 == j {
            betas[i]
        } else if j + 1 == i {
            betas[j]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let q = &eig.eigenvectors;
    (0..m)
        .map(|i| {
            (0..m)
                .map(|k| {
                    let phase = Complex64::from_polar(1.0, -tau * eig.eigenvalues[k]);
                    phase * (q[(i, k)] * q[(0, k)])
                })
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOptions {
    /// Hamiltonian time per unit of path time.
    pub time_scale: f64,
    /// Largest step in Hamiltonian time.
    pub max_dt: f64,
    /// Absolute error target for each Krylov exponential.
    pub krylov_tolerance: f64,
    pub drift_bound: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            time_scale: ADIABATIC_TIME_SCALE,
            max_dt: DEFAULT_MAX_DT,
            krylov_tolerance: 1e-12,
            drift_bound: DRIFT_BOUND,
        }
    }
}

impl EvolveOptions {
    pub fn with_time_scale(time_scale: f64) -> Self {
        EvolveOptions {
            time_scale,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.time_scale >= 0.0 && self.time_scale.is_finite()) {
            return Err(Error::param("time_scale", format!("must be finite and >= 0, got {}", self.time_scale)));
        }
        if !(self.max_dt > 0.0 && self.max_dt.is_finite()) {
            return Err(Error::param("max_dt", format!("must be positive, got {}", self.max_dt)));
        }
        if !(self.krylov_tolerance > 0.0) || !(self.drift_bound > 0.0) {
            return Err(Error::param("krylov_tolerance", "tolerances must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub state: QuantumState,
    /// Largest per-step norm drift seen before renormalization.
    pub max_drift: f64,
    pub steps: usize,
    pub min_dt: f64,
}

struct Stepper<'a> {
    diag: &'a ProblemDiagonal,
    sched: &'a Schedule,
    opts: &'a EvolveOptions,
    krylov: Krylov,
    trial: Vec<Complex64>,
    max_drift: f64,
    steps: usize,
    min_dt: f64,
}

const GAUSS_OFFSET: f64 = 0.288_675_134_594_812_9; // √3 / 6
const CF4_A1: f64 = (3.0 - 2.0 * 1.732_050_807_568_877_2) / 12.0;
const CF4_A2: f64 = (3.0 + 2.0 * 1.732_050_807_568_877_2) / 12.0;

impl Stepper<'_> {
    /// Advances `psi` by `h` starting at local time `u` of a segment whose
    /// `s` runs linearly from `s0` at rate `rate` per unit Hamiltonian time.
    fn step(&mut self, psi: &mut Vec<Complex64>, u: f64, h: f64, s0: f64, rate: f64, depth: u32) -> Result<()> {
        let s1 = (s0 + rate * (u + h * (0.5 - GAUSS_OFFSET))).clamp(0.0, 1.0);
        let s2 = (s0 + rate * (u + h * (0.5 + GAUSS_OFFSET))).clamp(0.0, 1.0);
        let (a1, b1) = self.sched.at(s1);
        let (a2, b2) = self.sched.at(s2);
        let first = Exponent::new(self.diag, CF4_A2 * a1 + CF4_A1 * a2, CF4_A2 * b1 + CF4_A1 * b2);
        let second = Exponent::new(self.diag, CF4_A1 * a1 + CF4_A2 * a2, CF4_A1 * b1 + CF4_A2 * b2);
        self.trial.clone_from(psi);
        let tol = self.opts.krylov_tolerance;
        let ok = self.krylov.expm(&first, h, &mut self.trial, tol) && self.krylov.expm(&second, h, &mut self.trial, tol);
        let drift = if ok { (norm(&self.trial) - 1.0).abs() } else { f64::INFINITY };
        if drift <= self.opts.drift_bound {
            let inv = 1.0 / norm(&self.trial);
            psi.iter_mut().zip(&self.trial).for_each(|(p, t)| *p = t * inv);
            self.max_drift = self.max_drift.max(drift);
            self.steps += 1;
            self.min_dt = self.min_dt.min(h);
            return Ok(());
        }
        if depth >= MAX_REFINEMENTS {
            return Err(Error::StepUnderflow { drift, dt: h });
        }
        log::debug!("splitting step of {h:e} at drift {drift:e}");
        self.step(psi, u, h / 2.0, s0, rate, depth + 1)?;
        self.step(psi, u + h / 2.0, h / 2.0, s0, rate, depth + 1)
    }
}

pub fn evolve(
    state: &QuantumState,
    path: &AnnealPath,
    sched: &Schedule,
    diag: &ProblemDiagonal,
    opts: &EvolveOptions,
) -> Result<Evolution> {
    opts.validate()?;
    if state.dim() != diag.dim() {
        return Err(Error::LengthMismatch {
            expected: diag.dim(),
            actual: state.dim(),
        });
    }
    let mut stepper = Stepper {
        diag,
        sched,
        opts,
        krylov: Krylov::new(state.dim()),
        trial: Vec::with_capacity(state.dim()),
        max_drift: 0.0,
        steps: 0,
        min_dt: f64::INFINITY,
    };
    let mut psi = state.amplitudes.clone();
    for seg in path.waypoints().windows(2) {
        let duration = (seg[1].t - seg[0].t) * opts.time_scale;
        if duration <= 0.0 {
            continue;
        }
        let n_steps = (duration / opts.max_dt).ceil().max(1.0) as usize;
        let h = duration / n_steps as f64;
        let rate = (seg[1].s - seg[0].s) / duration;
        for k in 0..n_steps {
            stepper.step(&mut psi, k as f64 * h, h, seg[0].s, rate, 0)?;
        }
    }
    Ok(Evolution {
        state: QuantumState {
            n_qubits: state.n_qubits,
            amplitudes: psi,
        },
        max_drift: stepper.max_drift,
        steps: stepper.steps,
        min_dt: stepper.min_dt,
    })
}

/// `shots` i.i.d. basis indices drawn from `probs` (need not be normalized).
pub fn sample_indices(probs: &[f64], shots: usize, seed: u64) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in probs {
        acc += p.max(0.0);
        cdf.push(acc);
    }
    let mut rng = rng_from_seed(seed);
    (0..shots)
        .map(|_| {
            let u = uniform(&mut rng) * acc;
            cdf.partition_point(|&c| c <= u).min(probs.len() - 1)
        })
        .collect()
}

/// Born-rule measurement in the computational basis.
pub fn sample(state: &QuantumState, shots: usize, seed: u64) -> Vec<Bits> {
    sample_indices(&state.probabilities(), shots, seed)
        .into_iter()
        .map(|i| Bits::from_index(i, state.n_qubits))
        .collect()
}

/// Draws `shots` samples from an output distribution and scores them.
pub fn samples_from_distribution(problem: &QuboProblem, probs: &[f64], shots: usize, seed: u64) -> Result<Vec<Sample>> {
    if probs.len() != 1usize << problem.n_vars() {
        return Err(Error::LengthMismatch {
            expected: 1 << problem.n_vars(),
            actual: probs.len(),
        });
    }
    sample_indices(probs, shots, seed)
        .into_iter()
        .map(|i| problem.sample(Bits::from_index(i, problem.n_vars())))
        .collect()
}

/// Output distribution of a forward anneal from the driver ground state.
pub fn forward_distribution(
    diag: &ProblemDiagonal,
    sched: &Schedule,
    total_time: f64,
    opts: &EvolveOptions,
) -> Result<Vec<f64>> {
    let path = crate::schedules::make_forward_path(total_time)?;
    let start = driver_ground(diag.n_qubits())?;
    Ok(evolve(&start, &path, sched, diag, opts)?.state.probabilities())
}

/// Output distribution of a reverse anneal from basis state `initial`.
pub fn reverse_distribution(
    diag: &ProblemDiagonal,
    sched: &Schedule,
    path: &AnnealPath,
    initial: &Bits,
    opts: &EvolveOptions,
) -> Result<Vec<f64>> {
    if path.kind() != PathKind::Reverse {
        return Err(Error::param("path", "reverse anneal needs a reverse path"));
    }
    if initial.len() != diag.n_qubits() {
        return Err(Error::LengthMismatch {
            expected: diag.n_qubits(),
            actual: initial.len(),
        });
    }
    let start = basis_state(initial)?;
    Ok(evolve(&start, path, sched, diag, opts)?.state.probabilities())
}

pub fn forward_anneal(
    problem: &QuboProblem,
    diag: &ProblemDiagonal,
    sched: &Schedule,
    total_time: f64,
    shots: usize,
    seed: u64,
    opts: &EvolveOptions,
) -> Result<Vec<Sample>> {
    check_shots(shots)?;
    let probs = forward_distribution(diag, sched, total_time, opts)?;
    samples_from_distribution(problem, &probs, shots, seed)
}

#[allow(clippy::too_many_arguments)]
pub fn reverse_anneal(
    problem: &QuboProblem,
    diag: &ProblemDiagonal,
    sched: &Schedule,
    path: &AnnealPath,
    initial: &Bits,
    shots: usize,
    seed: u64,
    opts: &EvolveOptions,
) -> Result<Vec<Sample>> {
    check_shots(shots)?;
    let probs = reverse_distribution(diag, sched, path, initial, opts)?;
    samples_from_distribution(problem, &probs, shots, seed)
}

fn check_shots(shots: usize) -> Result<()> {
    if shots == 0 {
        return Err(Error::param("shots", "must be at least 1"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coloring_qubo::build_coloring_qubo;
    use crate::graphs::Graph;
    use crate::schedules::{
        linear_schedule, make_forward_path, make_reverse_path, steep_surrogate_schedule, Waypoint,
    };
    use crate::spectrum::{build_problem_diagonal, Hamiltonian};

    fn p5() -> (QuboProblem, ProblemDiagonal) {
        let q = build_coloring_qubo(&Graph::path(5).unwrap(), 2, 1.0).unwrap();
        let d = build_problem_diagonal(&q).unwrap();
        (q, d)
    }

    fn random_diag(n: usize, seed: u64) -> ProblemDiagonal {
        let mut rng = rng_from_seed(seed);
        ProblemDiagonal::from_values((0..1 << n).map(|_| 4.0 * uniform(&mut rng) - 1.0).collect()).unwrap()
    }

    fn kron_oracle(diag: &ProblemDiagonal, a: f64, b: f64) -> DMatrix<f64> {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let id = DMatrix::<f64>::identity(2, 2);
        let n = diag.n_qubits();
        let mut h = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag.values())) * a;
        for j in 0..n {
            // Qubit j is bit j of the index, i.e. the (n-1-j)-th factor from the left.
            let mut op = DMatrix::<f64>::identity(1, 1);
            for f in (0..n).rev() {
                op = op.kronecker(if f == j { &x } else { &id });
            }
            h += op * b;
        }
        h
    }

    #[test]
    fn driver_ground_examples() {
        let g = driver_ground(1).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((g.amplitudes()[0] - Complex64::new(r, 0.0)).norm() < 1e-15);
        assert!((g.amplitudes()[1] - Complex64::new(-r, 0.0)).norm() < 1e-15);
        let g = driver_ground(3).unwrap();
        for p in g.probabilities() {
            assert!((p - 0.125).abs() < 1e-15);
        }
        assert!(driver_ground(0).is_err());
    }

    #[test]
    fn driver_ground_is_eigenstate_at_s0() {
        let (_, d) = p5();
        let g = driver_ground(10).unwrap();
        let hpsi = crate::spectrum::apply_hamiltonian(0.0, &linear_schedule(), &d, g.amplitudes()).unwrap();
        for (h, p) in hpsi.iter().zip(g.amplitudes()) {
            assert!((h - p * -10.0).norm() < 1e-12);
        }
    }

    #[test]
    fn basis_state_examples() {
        let s = basis_state(&Bits::zeros(2)).unwrap();
        assert_eq!(s.amplitudes()[0], Complex64::new(1.0, 0.0));
        assert_eq!(s.norm(), 1.0);
        let bits: Bits = "0110".parse().unwrap();
        let s = basis_state(&bits).unwrap();
        for b in sample(&s, 200, 3) {
            assert_eq!(b, bits);
        }
    }

    #[test]
    fn apply_matches_kronecker_oracle() {
        for n in 1..=6 {
            let d = random_diag(n, n as u64);
            let (a, b) = (0.37, 0.81);
            let dense = kron_oracle(&d, a, b);
            let mut rng = rng_from_seed(100 + n as u64);
            let x: Vec<Complex64> = (0..1 << n)
                .map(|_| Complex64::new(uniform(&mut rng) - 0.5, uniform(&mut rng) - 0.5))
                .collect();
            let mut y = vec![Complex64::default(); 1 << n];
            Exponent::new(&d, a, b).apply(&x, &mut y);
            let hm = Hamiltonian { diag: &d, a, b };
            assert!((hm.dense() - &dense).abs().max() < 1e-12);
            assert!((&dense - dense.transpose()).abs().max() == 0.0);
            for i in 0..1 << n {
                let expect: Complex64 = (0..1 << n).map(|j| x[j] * dense[(i, j)]).sum();
                assert!((y[i] - expect).norm() < 1e-12, "n={n} i={i}");
            }
        }
    }

    #[test]
    fn krylov_matches_dense_exponential() {
        let d = random_diag(5, 9);
        let (a, b) = (0.6, 0.9);
        let tau = 0.7;
        let dense = kron_oracle(&d, a, b);
        let eig = SymmetricEigen::new(dense);
        let start = driver_ground(5).unwrap();
        let mut psi = start.amplitudes().to_vec();
        let mut k = Krylov::new(32);
        assert!(k.expm(&Exponent::new(&d, a, b), tau, &mut psi, 1e-13));
        let q = &eig.eigenvectors;
        for i in 0..32 {
            let mut expect = Complex64::default();
            for m in 0..32 {
                let proj: f64 = (0..32).map(|j| q[(j, m)] * start.amplitudes()[j].re).sum();
                expect += Complex64::from_polar(1.0, -tau * eig.eigenvalues[m]) * (q[(i, m)] * proj);
            }
            assert!((psi[i] - expect).norm() < 1e-11);
        }
    }

    #[test]
    fn zero_duration_leaves_state() {
        let (_, d) = p5();
        let start = driver_ground(10).unwrap();
        let path = make_forward_path(1e-12).unwrap();
        let out = evolve(&start, &path, &linear_schedule(), &d, &EvolveOptions::default()).unwrap();
        assert!(out.state.max_distance(&start) < 1e-9);
        let frozen = EvolveOptions::with_time_scale(0.0);
        let out = evolve(&start, &make_forward_path(100.0).unwrap(), &linear_schedule(), &d, &frozen).unwrap();
        assert_eq!(out.state, start);
    }

    #[test]
    fn norm_drift_bounded() {
        let (_, d) = p5();
        let start = driver_ground(10).unwrap();
        let out = evolve(&start, &make_forward_path(100.0).unwrap(), &linear_schedule(), &d, &EvolveOptions::default())
            .unwrap();
        assert!(out.max_drift <= DRIFT_BOUND, "drift {}", out.max_drift);
        assert!((out.state.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pause_preserves_eigenstate_energy() {
        let d = random_diag(6, 4);
        let sched = linear_schedule();
        let s_pause = 0.4;
        let h = Hamiltonian::at(s_pause, &sched, &d);
        let eig = SymmetricEigen::new(h.dense());
        let (idx, e0) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, &e)| (i, e))
            .unwrap();
        let amps = eig.eigenvectors.column(idx).iter().map(|&c| Complex64::new(c, 0.0)).collect();
        let start = QuantumState::new(amps).unwrap();
        let path = AnnealPath::new(
            PathKind::Custom,
            vec![Waypoint { t: 0.0, s: s_pause }, Waypoint { t: 50.0, s: s_pause }],
        )
        .unwrap();
        let out = evolve(&start, &path, &sched, &d, &EvolveOptions::default()).unwrap();
        let (a, b) = sched.at(s_pause);
        assert!((out.state.energy(&d, a, b) - e0).abs() < 1e-8);
        assert!((out.state.fidelity(&start) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn time_reversal_round_trip() {
        let d = random_diag(6, 11);
        let sched = steep_surrogate_schedule();
        let path = make_reverse_path(0.37, 100.0).unwrap();
        let opts = EvolveOptions::with_time_scale(0.3);
        let start = basis_state(&Bits::from_index(13, 6)).unwrap();
        let there = evolve(&start, &path, &sched, &d, &opts).unwrap().state;
        assert!(there.fidelity(&start) < 0.99, "path should move the state");
        let back = evolve(&there.conj(), &path.mirrored(), &sched, &d, &opts).unwrap().state.conj();
        assert!(back.max_distance(&start) < 1e-5, "{}", back.max_distance(&start));
    }

    #[test]
    fn step_size_convergence() {
        let (_, d) = p5();
        let start = driver_ground(10).unwrap();
        let path = make_forward_path(100.0).unwrap();
        let coarse = EvolveOptions::with_time_scale(0.5);
        let fine = EvolveOptions {
            max_dt: DEFAULT_MAX_DT / 4.0,
            ..coarse.clone()
        };
        let a = evolve(&start, &path, &linear_schedule(), &d, &coarse).unwrap().state;
        let b = evolve(&start, &path, &linear_schedule(), &d, &fine).unwrap().state;
        assert!(a.max_distance(&b) < 1e-6, "{}", a.max_distance(&b));
    }

    #[test]
    fn adiabatic_forward_reaches_valid_manifold() {
        let (q, d) = p5();
        let probs = forward_distribution(&d, &linear_schedule(), 100.0, &EvolveOptions::default()).unwrap();
        let valid: f64 = probs
            .iter()
            .enumerate()
            .filter(|(i, _)| q.validate(&Bits::from_index(*i, 10)).unwrap())
            .map(|(_, p)| p)
            .sum();
        assert!(valid >= 0.8, "valid mass {valid}");
    }

    #[test]
    fn single_vertex_forward_majority_one() {
        let q = build_coloring_qubo(&Graph::empty(1).unwrap(), 1, 1.0).unwrap();
        let d = build_problem_diagonal(&q).unwrap();
        let samples = forward_anneal(&q, &d, &linear_schedule(), 100.0, 100, 5, &EvolveOptions::default()).unwrap();
        let ones = samples.iter().filter(|s| s.bits.get(0)).count();
        assert!(ones > 50, "{ones}");
    }

    #[test]
    fn sampling_statistics() {
        let g = driver_ground(2).unwrap();
        let shots = 100_000;
        let draws = sample(&g, shots, 2024);
        let mut counts = [0usize; 4];
        for b in &draws {
            counts[b.to_index()] += 1;
        }
        let sigma = (shots as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - 25_000.0).abs() < 5.0 * sigma, "{counts:?}");
        }
        // Chi-square against a skewed distribution, 7 degrees of freedom.
        let probs = [0.3, 0.05, 0.1, 0.15, 0.0, 0.2, 0.12, 0.08];
        let draws = sample_indices(&probs, shots, 77);
        let mut counts = [0usize; 8];
        draws.iter().for_each(|&i| counts[i] += 1);
        assert_eq!(counts[4], 0);
        let chi2: f64 = probs
            .iter()
            .zip(&counts)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, &c)| (c as f64 - p * shots as f64).powi(2) / (p * shots as f64))
            .sum();
        assert!(chi2 < 24.3, "chi-square {chi2}"); // p = 0.001 critical value, 6 dof
    }

    #[test]
    fn sampling_deterministic_per_seed() {
        let probs = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(sample_indices(&probs, 50, 9), sample_indices(&probs, 50, 9));
        assert_ne!(sample_indices(&probs, 50, 9), sample_indices(&probs, 50, 10));
    }

    #[test]
    fn reverse_anneal_retains_ground_state_at_high_s_prime() {
        let (q, d) = p5();
        let sched = steep_surrogate_schedule();
        let ground = q.encode(&[0, 1, 0, 1, 0]).unwrap();
        let path = make_reverse_path(0.95, 100.0).unwrap();
        for ts in [0.1, ADIABATIC_TIME_SCALE] {
            let opts = EvolveOptions::with_time_scale(ts);
            let samples = reverse_anneal(&q, &d, &sched, &path, &ground, 1000, 1, &opts).unwrap();
            let same = samples.iter().filter(|s| s.bits == ground).count();
            assert!(same >= 990, "time scale {ts}: {same}");
        }
    }

    #[test]
    fn reverse_anneal_near_one_is_identity() {
        let (q, d) = p5();
        let initial = Bits::from_index(37, 10);
        let path = make_reverse_path(0.999_999, 100.0).unwrap();
        let samples =
            reverse_anneal(&q, &d, &steep_surrogate_schedule(), &path, &initial, 200, 4, &EvolveOptions::default())
                .unwrap();
        assert!(samples.iter().all(|s| s.bits == initial));
    }

    #[test]
    fn reverse_anneal_escapes_invalid_minimum() {
        let (q, d) = p5();
        // Lowest-energy invalid bitstring in index order.
        let (idx, _) = d
            .values()
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0.5)
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let initial = Bits::from_index(idx, 10);
        assert!(!q.validate(&initial).unwrap());
        let path = make_reverse_path(0.44, 100.0).unwrap();
        let opts = EvolveOptions::with_time_scale(0.1);
        let samples = reverse_anneal(&q, &d, &steep_surrogate_schedule(), &path, &initial, 1000, 8, &opts).unwrap();
        assert!(samples.iter().any(|s| s.valid));
        for s in &samples {
            assert_eq!(s.valid, s.energy.abs() < 1e-9);
        }
    }

    #[test]
    fn reverse_requires_reverse_path() {
        let (q, d) = p5();
        let fwd = make_forward_path(10.0).unwrap();
        let r = reverse_anneal(&q, &d, &linear_schedule(), &fwd, &Bits::zeros(10), 1, 0, &EvolveOptions::default());
        assert!(r.is_err());
    }

    #[test]
    fn evolution_is_deterministic() {
        let (q, d) = p5();
        let opts = EvolveOptions::with_time_scale(0.1);
        let a = forward_anneal(&q, &d, &steep_surrogate_schedule(), 100.0, 100, 3, &opts).unwrap();
        let b = forward_anneal(&q, &d, &steep_surrogate_schedule(), 100.0, 100, 3, &opts).unwrap();
        assert_eq!(a, b);
    }
}
