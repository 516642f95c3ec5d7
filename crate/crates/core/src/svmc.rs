//! Spin-vector Monte Carlo: a classical stand-in for annealing dynamics.
//!
//! Each spin is a planar rotor at angle `θ_i`, with `z_i = cos θ_i` and
//! `x_i = sin θ_i`. At annealing parameter `s` the configuration energy is
//!
//! ```text
//! E(θ; s) = a(s)·E_ising(cos θ) − b(s)·Σ_i sin θ_i,   θ_i ∈ [0, π].
//! ```
//!
//! The quantum driver is `+Σσ^x`, whose classical minimum points along −x.
//! Substituting `θ → −θ` maps that onto the interval `[0, π]` used here,
//! with the driver term changing sign and all `z` components unchanged, so
//! the two parameterizations give identical bit statistics.
//!
//! Metropolis sweeps propose a fresh uniform angle for each spin in index
//! order. Along each path segment `s` moves linearly, one small step per
//! sweep. The final bits are the sign projection: bit 0 iff `cos θ ≥ 0`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::coloring_qubo::IsingProblem;
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, uniform, Rng};
use crate::schedules::{AnnealPath, PathKind, Schedule};

/// Calibrated so that P5 two-coloring forward runs end valid in most runs and
/// reverse runs at s′ = 0.95 keep a ground state (see the module tests).
pub const DEFAULT_BETA: f64 = 20.0;
pub const DEFAULT_SWEEPS_PER_WAYPOINT: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmcParams {
    pub sweeps_per_waypoint: usize,
    pub beta: f64,
}

impl Default for SvmcParams {
    fn default() -> Self {
        SvmcParams {
            sweeps_per_waypoint: DEFAULT_SWEEPS_PER_WAYPOINT,
            beta: DEFAULT_BETA,
        }
    }
}

impl SvmcParams {
    pub fn validate(&self) -> Result<()> {
        if self.sweeps_per_waypoint == 0 {
            return Err(Error::param("sweeps_per_waypoint", "must be at least 1"));
        }
        if !(self.beta > 0.0) || self.beta.is_nan() {
            return Err(Error::param("beta", format!("must be positive, got {}", self.beta)));
        }
        Ok(())
    }
}

/// Rotor angles with cached projections.
#[derive(Debug, Clone, PartialEq)]
pub struct RotorConfiguration {
    angles: Vec<f64>,
    z: Vec<f64>,
    x: Vec<f64>,
}

impl RotorConfiguration {
    pub fn from_angles(angles: Vec<f64>) -> Result<Self> {
        if let Some(bad) = angles.iter().find(|t| !(0.0..=PI).contains(*t)) {
            return Err(Error::param("angles", format!("{bad} outside [0, π]")));
        }
        let z = angles.iter().map(|t| t.cos()).collect();
        let x = angles.iter().map(|t| t.sin()).collect();
        Ok(RotorConfiguration { angles, z, x })
    }

    /// All rotors along the driver minimum.
    pub fn driver_minimum(n: usize) -> Self {
        RotorConfiguration::from_angles(vec![FRAC_PI_2; n]).expect("in range")
    }

    /// Bit 0 ↦ θ = 0 (spin +1), bit 1 ↦ θ = π (spin −1).
    pub fn from_bits(bits: &Bits) -> Self {
        let angles = bits.as_slice().iter().map(|&b| if b == 0 { 0.0 } else { PI }).collect();
        RotorConfiguration::from_angles(angles).expect("in range")
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn to_bits(&self) -> Bits {
        Bits::from_bools(self.z.iter().map(|&z| z < 0.0))
    }

    pub fn energy(&self, ising: &IsingProblem, a: f64, b: f64) -> f64 {
        a * ising.energy_continuous(&self.z) - b * self.x.iter().sum::<f64>()
    }
}

/// Reusable sampler state for one Ising problem.
pub struct Svmc<'a> {
    ising: &'a IsingProblem,
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl<'a> Svmc<'a> {
    pub fn new(ising: &'a IsingProblem) -> Self {
        Svmc {
            ising,
            neighbors: ising.neighbors(),
        }
    }

    /// One Metropolis sweep at fixed `(a, b)`; returns the number of
    /// accepted moves.
    pub fn sweep(&self, rotors: &mut RotorConfiguration, a: f64, b: f64, beta: f64, rng: &mut Rng) -> usize {
        let mut accepted = 0;
        for i in 0..rotors.angles.len() {
            let field = self.ising.h[i] + self.neighbors[i].iter().map(|&(j, c)| c * rotors.z[j]).sum::<f64>();
            let theta = PI * uniform(rng);
            let (x_new, z_new) = theta.sin_cos();
            let delta = a * field * (z_new - rotors.z[i]) - b * (x_new - rotors.x[i]);
            if delta <= 0.0 || uniform(rng) < (-beta * delta).exp() {
                rotors.angles[i] = theta;
                rotors.z[i] = z_new;
                rotors.x[i] = x_new;
                accepted += 1;
            }
        }
        accepted
    }

    /// Anneals `rotors` along `path`, `params.sweeps_per_waypoint` sweeps per
    /// segment.
    pub fn anneal(
        &self,
        rotors: &mut RotorConfiguration,
        sched: &Schedule,
        path: &AnnealPath,
        params: &SvmcParams,
        rng: &mut Rng,
    ) {
        let sweeps = params.sweeps_per_waypoint;
        for seg in path.waypoints().windows(2) {
            let (s0, s1) = (seg[0].s, seg[1].s);
            for k in 0..sweeps {
                let s = s0 + (s1 - s0) * (k + 1) as f64 / sweeps as f64;
                let (a, b) = sched.at(s);
                self.sweep(rotors, a, b, params.beta, rng);
            }
        }
    }
}

/// One seeded SVMC run. Forward paths start at the driver minimum and must
/// not be given an initial state; reverse paths start from `initial`.
pub fn svmc_run(
    ising: &IsingProblem,
    sched: &Schedule,
    path: &AnnealPath,
    initial: Option<&Bits>,
    params: &SvmcParams,
    seed: u64,
) -> Result<Bits> {
    params.validate()?;
    let n = ising.n_spins();
    let mut rotors = match (path.kind(), initial) {
        (PathKind::Reverse, None) => return Err(Error::MissingInitial),
        (PathKind::Forward, Some(_)) => {
            return Err(Error::param("initial", "forward runs start from the driver minimum"))
        }
        (_, Some(bits)) => {
            if bits.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: bits.len(),
                });
            }
            RotorConfiguration::from_bits(bits)
        }
        (_, None) => RotorConfiguration::driver_minimum(n),
    };
    let mut rng = rng_from_seed(seed);
    Svmc::new(ising).anneal(&mut rotors, sched, path, params, &mut rng);
    Ok(rotors.to_bits())
}
