//! Experiment configuration, JSON on disk.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coloring_qubo::DEFAULT_PENALTY;
use crate::error::{Error, Result};
use crate::heuristic::{BackendConfig, FeedPolicy};
use crate::schedules::{reverse_distance_grid, Schedule, DEFAULT_ANNEAL_TIME};

/// Hamiltonian time per schedule unit for desk-scale experiments. Fast
/// enough that reverse anneals from invalid states leave their basin with
/// a few percent probability per cycle, while valid seeds at large s′ are
/// retained.
pub const DESK_TIME_SCALE: f64 = 0.1;

/// Problems above this size run on SVMC by default; single-core state-vector
/// sweeps beyond it take hours.
pub const DESK_STATEVECTOR_MAX_QUBITS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceSpec {
    /// One batch of `count` graphs per vertex count.
    pub n_vertices: Vec<usize>,
    pub p: f64,
    pub count: usize,
    pub seed: u64,
    pub penalty: f64,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        InstanceSpec {
            n_vertices: vec![5],
            p: 0.5,
            count: 20,
            seed: 42,
            penalty: DEFAULT_PENALTY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instances: InstanceSpec,
    pub backend: BackendConfig,
    /// `linear`, `steep`, or a path to an `s,a,b` CSV.
    pub schedule: String,
    pub s_prime_grid: Vec<f64>,
    pub scaling_s_prime: f64,
    pub forward_shots: usize,
    /// RA samples per (problem, s′); each sample is one iterated cycle.
    pub ra_samples: usize,
    pub shots_per_cycle: usize,
    pub reverse_time: f64,
    pub policy: FeedPolicy,
    /// Baseline: also run the random-seed series at (problem, s′) points
    /// where assisted RA found nothing valid. Off by default, which skips
    /// those points as the original protocol does.
    pub baseline_all_s_prime: bool,
    /// Master seed for every stage except instance generation.
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            instances: InstanceSpec::default(),
            backend: BackendConfig {
                time_scale: DESK_TIME_SCALE,
                statevector_max_qubits: DESK_STATEVECTOR_MAX_QUBITS,
                ..Default::default()
            },
            schedule: "steep".to_string(),
            s_prime_grid: reverse_distance_grid(),
            scaling_s_prime: 0.44,
            forward_shots: 10,
            ra_samples: 100,
            shots_per_cycle: 1,
            reverse_time: DEFAULT_ANNEAL_TIME,
            policy: FeedPolicy::FeedLast,
            baseline_all_s_prime: false,
            seed: 2024,
            output_dir: PathBuf::from("ralab-out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            context: path.display().to_string(),
            source,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every invariant and resolves the schedule, so that a bad
    /// config fails before any compute starts.
    pub fn validate(&self) -> Result<Schedule> {
        let inst = &self.instances;
        if inst.n_vertices.is_empty() || inst.n_vertices.contains(&0) {
            return Err(Error::param("instances.n_vertices", "need at least one positive vertex count"));
        }
        if !(0.0..=1.0).contains(&inst.p) {
            return Err(Error::param("instances.p", format!("edge probability {} not in [0, 1]", inst.p)));
        }
        if inst.count == 0 {
            return Err(Error::param("instances.count", "must be at least 1"));
        }
        if !(inst.penalty > 0.0 && inst.penalty.is_finite()) {
            return Err(Error::param("instances.penalty", format!("must be positive, got {}", inst.penalty)));
        }
        if self.s_prime_grid.is_empty() {
            return Err(Error::param("s_prime_grid", "must not be empty"));
        }
        for &s in self.s_prime_grid.iter().chain([&self.scaling_s_prime]) {
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::param("s_prime_grid", format!("reverse distance {s} not in (0, 1)")));
            }
        }
        if self.forward_shots == 0 || self.ra_samples == 0 || self.shots_per_cycle == 0 {
            return Err(Error::param("forward_shots", "shot and sample budgets must be at least 1"));
        }
        if !(self.reverse_time > 0.0 && self.reverse_time.is_finite()) {
            return Err(Error::param("reverse_time", format!("must be positive, got {}", self.reverse_time)));
        }
        self.backend.validate()?;
        Schedule::resolve(&self.schedule)
    }

    /// SHA-256 of the canonical JSON form, excluding `output_dir` so that
    /// replays into a different directory hash identically.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        value.as_object_mut().expect("object").remove("output_dir");
        hash_json(&value)
    }
}

/// Hex SHA-256 of a JSON value; object keys serialize in sorted order.
pub fn hash_json(value: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(value).expect("json serializes")))
}
