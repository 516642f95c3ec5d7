//! Forward-annealing-assisted iterated reverse annealing.
//!
//! A problem is first sampled by forward annealing. If any sample is valid
//! the run stops. Otherwise the lowest-energy sample seeds a chain of
//! reverse-anneal cycles, each cycle's output becoming the next cycle's
//! input, until a valid bitstring appears or the cycle budget runs out.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::coloring_qubo::{qubo_to_ising, IsingProblem, QuboProblem, Sample};
use crate::dynamics::{self, EvolveOptions, ADIABATIC_TIME_SCALE, DEFAULT_MAX_DT};
use crate::error::{Error, Result};
use crate::rng::{below, derive_seed, rng_from_seed, stage};
use crate::schedules::{make_forward_path, make_reverse_path, AnnealPath, Schedule, DEFAULT_ANNEAL_TIME};
use crate::spectrum::{build_problem_diagonal, ProblemDiagonal, MAX_QUBITS};
use crate::svmc::{svmc_run, SvmcParams};

const ENERGY_TIE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Statevector,
    Svmc,
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BackendKind::Statevector => "statevector",
            BackendKind::Svmc => "svmc",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capability {
    pub kind: BackendKind,
    pub max_qubits: usize,
}

/// A sampler bound to one problem and schedule.
pub trait SamplerBackend: Send + Sync {
    fn capability(&self) -> Capability;
    fn problem(&self) -> &QuboProblem;
    fn schedule(&self) -> &Schedule;
    fn forward(&self, shots: usize, seed: u64) -> Result<Vec<Sample>>;
    fn reverse(&self, path: &AnnealPath, initial: &Bits, shots: usize, seed: u64) -> Result<Vec<Sample>>;
}

fn path_key(path: &AnnealPath) -> Vec<u64> {
    path.waypoints().iter().flat_map(|w| [w.t.to_bits(), w.s.to_bits()]).collect()
}

/// Bounded FIFO memo of reverse-anneal output distributions.
struct DistributionCache {
    capacity: usize,
    entries: HashMap<(Vec<u64>, usize), Arc<Vec<f64>>>,
    order: VecDeque<(Vec<u64>, usize)>,
}

impl DistributionCache {
    fn get(&self, key: &(Vec<u64>, usize)) -> Option<Arc<Vec<f64>>> {
        self.entries.get(key).cloned()
    }

    fn insert(&mut self, key: (Vec<u64>, usize), value: Arc<Vec<f64>>) {
        if self.capacity == 0 || self.entries.contains_key(&key) {
            return;
        }
        while self.entries.len() >= self.capacity {
            match self.order.pop_front() {
                Some(old) => {
                    self.entries.remove(&old);
                }
                None => break,
            }
        }
        self.order.push_back(key.clone());
        self.entries.insert(key, value);
    }
}

/// Total cached probabilities across all entries (≈ 128 MiB).
const CACHE_BUDGET: usize = 1 << 24;

/// Exact Schrödinger evolution. Output distributions are deterministic
/// functions of (path, initial state), so they are memoized; sampling from
/// a cached distribution is bit-identical to re-evolving.
pub struct StateVectorBackend {
    problem: QuboProblem,
    diag: ProblemDiagonal,
    sched: Schedule,
    opts: EvolveOptions,
    forward_time: f64,
    forward_dist: OnceLock<Arc<Vec<f64>>>,
    cache: Mutex<DistributionCache>,
}

impl StateVectorBackend {
    pub fn new(problem: QuboProblem, sched: Schedule, opts: EvolveOptions, forward_time: f64) -> Result<Self> {
        let diag = build_problem_diagonal(&problem)?;
        let capacity = (CACHE_BUDGET / diag.dim()).max(1);
        Ok(StateVectorBackend {
            problem,
            diag,
            sched,
            opts,
            forward_time,
            forward_dist: OnceLock::new(),
            cache: Mutex::new(DistributionCache {
                capacity,
                entries: HashMap::new(),
                order: VecDeque::new(),
            }),
        })
    }

    pub fn options(&self) -> &EvolveOptions {
        &self.opts
    }

    pub fn forward_distribution(&self) -> Result<Arc<Vec<f64>>> {
        if let Some(d) = self.forward_dist.get() {
            return Ok(d.clone());
        }
        let d = Arc::new(dynamics::forward_distribution(&self.diag, &self.sched, self.forward_time, &self.opts)?);
        Ok(self.forward_dist.get_or_init(|| d).clone())
    }

    pub fn reverse_distribution(&self, path: &AnnealPath, initial: &Bits) -> Result<Arc<Vec<f64>>> {
        let key = (path_key(path), initial.to_index());
        if let Some(d) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(d);
        }
        let d = Arc::new(dynamics::reverse_distribution(&self.diag, &self.sched, path, initial, &self.opts)?);
        self.cache.lock().expect("cache lock").insert(key, d.clone());
        Ok(d)
    }
}

impl SamplerBackend for StateVectorBackend {
    fn capability(&self) -> Capability {
        Capability {
            kind: BackendKind::Statevector,
            max_qubits: MAX_QUBITS,
        }
    }

    fn problem(&self) -> &QuboProblem {
        &self.problem
    }

    fn schedule(&self) -> &Schedule {
        &self.sched
    }

    fn forward(&self, shots: usize, seed: u64) -> Result<Vec<Sample>> {
        check_shots(shots)?;
        dynamics::samples_from_distribution(&self.problem, &self.forward_distribution()?, shots, seed)
    }

    fn reverse(&self, path: &AnnealPath, initial: &Bits, shots: usize, seed: u64) -> Result<Vec<Sample>> {
        check_shots(shots)?;
        let d = self.reverse_distribution(path, initial)?;
        dynamics::samples_from_distribution(&self.problem, &d, shots, seed)
    }
}

/// Spin-vector Monte Carlo; one independent seeded run per shot.
pub struct SvmcBackend {
    problem: QuboProblem,
    ising: IsingProblem,
    sched: Schedule,
    params: SvmcParams,
    forward_time: f64,
}

impl SvmcBackend {
    pub fn new(problem: QuboProblem, sched: Schedule, params: SvmcParams, forward_time: f64) -> Result<Self> {
        params.validate()?;
        let ising = qubo_to_ising(&problem);
        Ok(SvmcBackend {
            problem,
            ising,
            sched,
            params,
            forward_time,
        })
    }

    fn runs(&self, path: &AnnealPath, initial: Option<&Bits>, shots: usize, seed: u64) -> Result<Vec<Sample>> {
        check_shots(shots)?;
        (0..shots as u64)
            .map(|i| {
                let bits = svmc_run(
                    &self.ising,
                    &self.sched,
                    path,
                    initial,
                    &self.params,
                    derive_seed(seed, &[stage::SHOT, i]),
                )?;
                self.problem.sample(bits)
            })
            .collect()
    }
}

impl SamplerBackend for SvmcBackend {
    fn capability(&self) -> Capability {
        Capability {
            kind: BackendKind::Svmc,
            max_qubits: usize::MAX,
        }
    }

    fn problem(&self) -> &QuboProblem {
        &self.problem
    }

    fn schedule(&self) -> &Schedule {
        &self.sched
    }

    fn forward(&self, shots: usize, seed: u64) -> Result<Vec<Sample>> {
        self.runs(&make_forward_path(self.forward_time)?, None, shots, seed)
    }

    fn reverse(&self, path: &AnnealPath, initial: &Bits, shots: usize, seed: u64) -> Result<Vec<Sample>> {
        if initial.len() != self.problem.n_vars() {
            return Err(Error::LengthMismatch {
                expected: self.problem.n_vars(),
                actual: initial.len(),
            });
        }
        self.runs(path, Some(initial), shots, seed)
    }
}

fn check_shots(shots: usize) -> Result<()> {
    if shots == 0 {
        return Err(Error::param("shots", "must be at least 1"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    /// State vector while the problem fits `statevector_max_qubits`, else SVMC.
    Auto,
    Statevector,
    Svmc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendChoice,
    /// Routing threshold for `auto`; the state-vector hard cap is 20.
    pub statevector_max_qubits: usize,
    pub time_scale: f64,
    pub max_dt: f64,
    /// Forward anneal duration in schedule units.
    pub forward_time: f64,
    pub svmc: SvmcParams,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendChoice::Auto,
            statevector_max_qubits: MAX_QUBITS,
            time_scale: ADIABATIC_TIME_SCALE,
            max_dt: DEFAULT_MAX_DT,
            forward_time: DEFAULT_ANNEAL_TIME,
            svmc: SvmcParams::default(),
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<()> {
        if self.statevector_max_qubits == 0 || self.statevector_max_qubits > MAX_QUBITS {
            return Err(Error::param(
                "statevector_max_qubits",
                format!("must be in 1..={MAX_QUBITS}, got {}", self.statevector_max_qubits),
            ));
        }
        if !(self.time_scale >= 0.0 && self.time_scale.is_finite()) {
            return Err(Error::param("time_scale", format!("must be finite and >= 0, got {}", self.time_scale)));
        }
        if !(self.max_dt > 0.0 && self.max_dt.is_finite()) {
            return Err(Error::param("max_dt", format!("must be positive, got {}", self.max_dt)));
        }
        if !(self.forward_time > 0.0 && self.forward_time.is_finite()) {
            return Err(Error::param("forward_time", format!("must be positive, got {}", self.forward_time)));
        }
        self.svmc.validate()
    }

    pub fn evolve_options(&self) -> EvolveOptions {
        EvolveOptions {
            time_scale: self.time_scale,
            max_dt: self.max_dt,
            ..Default::default()
        }
    }
}

pub struct SelectedBackend {
    pub backend: Box<dyn SamplerBackend>,
    /// True when the state vector was preferred but the problem did not fit.
    pub substituted: bool,
}

impl SelectedBackend {
    pub fn kind(&self) -> BackendKind {
        self.backend.capability().kind
    }
}

pub fn build_backend(problem: &QuboProblem, sched: &Schedule, cfg: &BackendConfig) -> Result<SelectedBackend> {
    cfg.validate()?;
    let n = problem.n_vars();
    let (use_statevector, substituted) = match cfg.kind {
        BackendChoice::Svmc => (false, false),
        BackendChoice::Statevector => (n <= MAX_QUBITS, n > MAX_QUBITS),
        BackendChoice::Auto => (n <= cfg.statevector_max_qubits, n > cfg.statevector_max_qubits),
    };
    if substituted {
        log::info!("problem with {n} variables routed to the SVMC backend");
    }
    let backend: Box<dyn SamplerBackend> = if use_statevector {
        Box::new(StateVectorBackend::new(
            problem.clone(),
            sched.clone(),
            cfg.evolve_options(),
            cfg.forward_time,
        )?)
    } else {
        Box::new(SvmcBackend::new(problem.clone(), sched.clone(), cfg.svmc, cfg.forward_time)?)
    };
    Ok(SelectedBackend { backend, substituted })
}

/// Lowest energy, ties broken by the lexicographically smallest bitstring.
fn best_sample(samples: &[Sample]) -> Option<&Sample> {
    samples.iter().min_by(|a, b| {
        if (a.energy - b.energy).abs() <= ENERGY_TIE {
            a.bits.cmp(&b.bits)
        } else {
            a.energy.total_cmp(&b.energy)
        }
    })
}

/// A uniformly random valid sample if there is one, else the lowest-energy
/// sample.
pub fn select_initial(samples: &[Sample], seed: u64) -> Result<Bits> {
    if samples.is_empty() {
        return Err(Error::param("samples", "cannot select from an empty sample list"));
    }
    let valid: Vec<&Sample> = samples.iter().filter(|s| s.valid).collect();
    if !valid.is_empty() {
        let mut rng = rng_from_seed(seed);
        return Ok(valid[below(&mut rng, valid.len() as u64) as usize].bits.clone());
    }
    Ok(best_sample(samples).expect("non-empty").bits.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedPolicy {
    /// Each cycle's output, valid or not, seeds the next cycle.
    #[default]
    FeedLast,
    /// Extension: seed each cycle with the lowest-energy bitstring seen so far.
    KeepBest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    pub cycle: usize,
    pub input: Bits,
    pub output: Bits,
    pub energy: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOptions {
    pub cycles: usize,
    /// Shots per cycle; with more than one the lowest-energy shot is kept.
    pub shots_per_cycle: usize,
    pub policy: FeedPolicy,
    pub halt_on_valid: bool,
}

/// Runs iterated reverse annealing from `start`. Cycle `i` draws its shots
/// with seed `derive_seed(seed, &[i])`.
pub fn iterate_reverse(
    backend: &dyn SamplerBackend,
    path: &AnnealPath,
    start: &Bits,
    opts: &ChainOptions,
    seed: u64,
) -> Result<Vec<Cycle>> {
    let mut cycles = Vec::with_capacity(opts.cycles);
    let mut input = start.clone();
    let mut best: Option<(f64, Bits)> = None;
    for i in 0..opts.cycles {
        let shots = backend.reverse(path, &input, opts.shots_per_cycle, derive_seed(seed, &[i as u64]))?;
        let out = best_sample(&shots).expect("at least one shot").clone();
        cycles.push(Cycle {
            cycle: i,
            input: input.clone(),
            output: out.bits.clone(),
            energy: out.energy,
            valid: out.valid,
        });
        if out.valid && opts.halt_on_valid {
            break;
        }
        input = match opts.policy {
            FeedPolicy::FeedLast => out.bits,
            FeedPolicy::KeepBest => {
                let start_energy = backend.problem().energy(start)?;
                let current = best.get_or_insert((start_energy, start.clone()));
                if out.energy < current.0 - ENERGY_TIE {
                    *current = (out.energy, out.bits);
                }
                current.1.clone()
            }
        };
    }
    Ok(cycles)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardSummary {
    pub shots: usize,
    pub valid: usize,
    pub unique_valid: usize,
    pub min_energy: f64,
}

impl ForwardSummary {
    pub fn from_samples(samples: &[Sample]) -> Self {
        let valid: Vec<&Bits> = samples.iter().filter(|s| s.valid).map(|s| &s.bits).collect();
        ForwardSummary {
            shots: samples.len(),
            valid: valid.len(),
            unique_valid: valid.into_iter().collect::<HashSet<_>>().len(),
            min_energy: samples.iter().map(|s| s.energy).fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    SolvedByForward,
    SolvedByRa,
    Exhausted,
    /// A sampler error stopped the run; see `error`.
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Forward,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub master: u64,
    pub forward: Option<u64>,
    pub select: Option<u64>,
    pub random_initial: Option<u64>,
    pub reverse: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub problem_id: String,
    pub k: usize,
    pub n_vars: usize,
    pub backend: BackendKind,
    pub substituted: bool,
    pub seed_source: SeedSource,
    /// Absent when the forward stage did not run.
    pub forward: Option<ForwardSummary>,
    pub seed_bits: Option<Bits>,
    pub s_prime: f64,
    pub policy: FeedPolicy,
    pub cycles: Vec<Cycle>,
    pub outcome: Outcome,
    pub error: Option<String>,
    pub seeds: RunSeeds,
    pub schedule: String,
    pub path: AnnealPath,
    pub config_hash: String,
}

impl RunRecord {
    /// Re-checks outcome, chain and validity claims against the oracle.
    pub fn verify(&self, problem: &QuboProblem) -> Result<()> {
        let bad = |what: &str| Err(Error::param("record", what.to_string()));
        for c in &self.cycles {
            if problem.validate(&c.output)? != c.valid {
                return bad("stored validity disagrees with the validator");
            }
        }
        if self.policy == FeedPolicy::FeedLast {
            if let (Some(first), Some(seed)) = (self.cycles.first(), &self.seed_bits) {
                if &first.input != seed {
                    return bad("first cycle input is not the seed bitstring");
                }
            }
            for w in self.cycles.windows(2) {
                if w[1].input != w[0].output {
                    return bad("cycle chain is broken");
                }
            }
        }
        let last_valid = self.cycles.last().is_some_and(|c| c.valid);
        let consistent = match self.outcome {
            Outcome::SolvedByForward => self.cycles.is_empty() && self.forward.as_ref().is_some_and(|f| f.valid > 0),
            Outcome::SolvedByRa => last_valid && self.cycles[..self.cycles.len() - 1].iter().all(|c| !c.valid),
            Outcome::Exhausted => self.cycles.iter().all(|c| !c.valid),
            Outcome::Aborted => self.error.is_some(),
        };
        if !consistent {
            return bad("outcome inconsistent with samples");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicParams {
    pub s_prime: f64,
    pub forward_shots: usize,
    pub max_cycles: usize,
    pub shots_per_cycle: usize,
    pub policy: FeedPolicy,
    /// Reverse anneal duration in schedule units.
    pub reverse_time: f64,
}

impl Default for HeuristicParams {
    fn default() -> Self {
        HeuristicParams {
            s_prime: 0.44,
            forward_shots: dynamics::DEFAULT_SHOTS,
            max_cycles: 100,
            shots_per_cycle: 1,
            policy: FeedPolicy::FeedLast,
            reverse_time: DEFAULT_ANNEAL_TIME,
        }
    }
}

impl HeuristicParams {
    fn path(&self) -> Result<AnnealPath> {
        if self.shots_per_cycle == 0 {
            return Err(Error::param("shots_per_cycle", "must be at least 1"));
        }
        make_reverse_path(self.s_prime, self.reverse_time)
    }
}

fn check_capacity(backend: &dyn SamplerBackend) -> Result<()> {
    let cap = backend.capability();
    let n = backend.problem().n_vars();
    if n > cap.max_qubits {
        return Err(Error::SizeLimit {
            what: "sampler backend",
            n_vars: n,
            limit: cap.max_qubits,
        });
    }
    Ok(())
}

fn blank_record(backend: &SelectedBackend, params: &HeuristicParams, path: AnnealPath, seeds: RunSeeds, source: SeedSource) -> RunRecord {
    let problem = backend.backend.problem();
    RunRecord {
        problem_id: String::new(),
        k: problem.k(),
        n_vars: problem.n_vars(),
        backend: backend.kind(),
        substituted: backend.substituted,
        seed_source: source,
        forward: None,
        seed_bits: None,
        s_prime: params.s_prime,
        policy: params.policy,
        cycles: Vec::new(),
        outcome: Outcome::Exhausted,
        error: None,
        seeds,
        schedule: backend.backend.schedule().name().to_string(),
        path,
        config_hash: String::new(),
    }
}

fn run_chain(record: &mut RunRecord, backend: &dyn SamplerBackend, params: &HeuristicParams, start: Bits) {
    let opts = ChainOptions {
        cycles: params.max_cycles,
        shots_per_cycle: params.shots_per_cycle,
        policy: params.policy,
        halt_on_valid: true,
    };
    record.seed_bits = Some(start.clone());
    match iterate_reverse(backend, &record.path, &start, &opts, record.seeds.reverse) {
        Ok(cycles) => {
            record.outcome = if cycles.last().is_some_and(|c| c.valid) {
                Outcome::SolvedByRa
            } else {
                Outcome::Exhausted
            };
            record.cycles = cycles;
        }
        Err(e) => {
            record.outcome = Outcome::Aborted;
            record.error = Some(e.to_string());
        }
    }
}

/// Forward stage, then (if it found nothing valid) iterated RA seeded with
/// the lowest-energy forward sample.
pub fn assisted_reverse_anneal(backend: &SelectedBackend, params: &HeuristicParams, seed: u64) -> Result<RunRecord> {
    check_capacity(backend.backend.as_ref())?;
    if params.forward_shots == 0 {
        return Err(Error::param("forward_shots", "must be at least 1"));
    }
    let seeds = RunSeeds {
        master: seed,
        forward: Some(derive_seed(seed, &[stage::FORWARD])),
        select: Some(derive_seed(seed, &[stage::SELECT])),
        random_initial: None,
        reverse: derive_seed(seed, &[stage::REVERSE]),
    };
    let mut record = blank_record(backend, params, params.path()?, seeds, SeedSource::Forward);
    let samples = match backend.backend.forward(params.forward_shots, record.seeds.forward.unwrap()) {
        Ok(s) => s,
        Err(e) => {
            record.outcome = Outcome::Aborted;
            record.error = Some(e.to_string());
            return Ok(record);
        }
    };
    let summary = ForwardSummary::from_samples(&samples);
    let solved = summary.valid > 0;
    record.forward = Some(summary);
    if solved {
        record.outcome = Outcome::SolvedByForward;
        return Ok(record);
    }
    let start = select_initial(&samples, record.seeds.select.unwrap())?;
    run_chain(&mut record, backend.backend.as_ref(), params, start);
    Ok(record)
}

/// Iterated RA from a uniformly random bitstring; no forward stage. Shares
/// the reverse-stage seed with [`assisted_reverse_anneal`] for pairing.
pub fn random_initial_baseline(backend: &SelectedBackend, params: &HeuristicParams, seed: u64) -> Result<RunRecord> {
    check_capacity(backend.backend.as_ref())?;
    let random_seed = derive_seed(seed, &[stage::RANDOM_INITIAL]);
    let seeds = RunSeeds {
        master: seed,
        forward: None,
        select: None,
        random_initial: Some(random_seed),
        reverse: derive_seed(seed, &[stage::REVERSE]),
    };
    let mut record = blank_record(backend, params, params.path()?, seeds, SeedSource::Random);
    let start = random_bits(backend.backend.problem().n_vars(), random_seed);
    run_chain(&mut record, backend.backend.as_ref(), params, start);
    Ok(record)
}

pub fn random_bits(n: usize, seed: u64) -> Bits {
    let mut rng = rng_from_seed(seed);
    Bits::from_bools((0..n).map(|_| below(&mut rng, 2) == 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coloring_qubo::build_coloring_qubo;
    use crate::graphs::Graph;
    use crate::schedules::steep_surrogate_schedule;

    fn sample(q: &QuboProblem, s: &str) -> Sample {
        q.sample(s.parse().unwrap()).unwrap()
    }

    fn p5() -> QuboProblem {
        build_coloring_qubo(&Graph::path(5).unwrap(), 2, 1.0).unwrap()
    }

    fn desk_backend(q: &QuboProblem, forward_time: f64) -> SelectedBackend {
        let cfg = BackendConfig {
            time_scale: 0.1,
            forward_time,
            ..Default::default()
        };
        build_backend(q, &steep_surrogate_schedule(), &cfg).unwrap()
    }

    #[test]
    fn select_single_valid() {
        let q = p5();
        let mut samples: Vec<Sample> = (0..9).map(|_| sample(&q, "1111111111")).collect();
        samples.insert(4, sample(&q, "1001100110"));
        assert!(samples[4].valid);
        assert_eq!(select_initial(&samples, 1).unwrap().to_string(), "1001100110");
    }

    #[test]
    fn select_lowest_energy_invalid() {
        let q = p5();
        let samples: Vec<Sample> = ["0000000000", "1010101010", "1001100101"]
            .iter()
            .map(|s| sample(&q, s))
            .collect();
        let energies: Vec<f64> = samples.iter().map(|s| s.energy).collect();
        assert!(samples.iter().all(|s| !s.valid));
        let chosen = select_initial(&samples, 3).unwrap();
        let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(q.energy(&chosen).unwrap(), min);
    }

    #[test]
    fn select_tie_breaks_lexicographically() {
        let q = p5();
        // Two distinct energy-1 bitstrings (one monochromatic edge each).
        let a = sample(&q, "1010011001");
        let b = sample(&q, "0110011010");
        assert_eq!(a.energy, 1.0);
        assert_eq!(b.energy, 1.0);
        for order in [vec![a.clone(), b.clone()], vec![b.clone(), a.clone()]] {
            assert_eq!(select_initial(&order, 0).unwrap().to_string(), "0110011010");
        }
        assert!(select_initial(&[], 0).is_err());
    }

    #[test]
    fn select_valid_is_uniform_over_valid() {
        let q = p5();
        let samples = vec![sample(&q, "1001100110"), sample(&q, "0110011001"), sample(&q, "0000000000")];
        let mut seen = HashSet::new();
        for seed in 0..50 {
            let b = select_initial(&samples, seed).unwrap();
            assert!(q.validate(&b).unwrap());
            seen.insert(b);
        }
        assert_eq!(seen.len(), 2);
    }

    #[test]
    fn forward_success_exits_early() {
        let q = p5();
        let backend = desk_backend(&q, 100.0);
        let params = HeuristicParams {
            forward_shots: 100,
            ..Default::default()
        };
        let rec = assisted_reverse_anneal(&backend, &params, 5).unwrap();
        assert_eq!(rec.outcome, Outcome::SolvedByForward);
        assert!(rec.cycles.is_empty());
        rec.verify(&q).unwrap();
    }

    #[test]
    fn zero_cycle_budget_is_exhausted() {
        let q = p5();
        let backend = desk_backend(&q, 0.01);
        let params = HeuristicParams {
            forward_shots: 5,
            max_cycles: 0,
            ..Default::default()
        };
        let rec = (0..20)
            .map(|seed| assisted_reverse_anneal(&backend, &params, seed).unwrap())
            .find(|r| r.outcome != Outcome::SolvedByForward)
            .expect("a budget-starved forward stage fails");
        assert_eq!(rec.outcome, Outcome::Exhausted);
        assert!(rec.cycles.is_empty());
        assert!(rec.seed_bits.is_some());
        rec.verify(&q).unwrap();
    }

    #[test]
    fn random_baseline_is_deterministic_and_has_no_forward_stage() {
        let q = p5();
        let backend = desk_backend(&q, 100.0);
        let params = HeuristicParams {
            max_cycles: 10,
            ..Default::default()
        };
        let a = random_initial_baseline(&backend, &params, 9).unwrap();
        let b = random_initial_baseline(&backend, &params, 9).unwrap();
        assert!(a.forward.is_none());
        assert_eq!(a.seed_source, SeedSource::Random);
        assert_eq!(a, b);
        a.verify(&q).unwrap();
        let text = serde_json::to_string(&a).unwrap();
        let back: RunRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn backends_share_record_schema() {
        let q = p5();
        let sched = steep_surrogate_schedule();
        let params = HeuristicParams {
            forward_shots: 3,
            max_cycles: 3,
            ..Default::default()
        };
        let mut keys = Vec::new();
        for kind in [BackendChoice::Statevector, BackendChoice::Svmc] {
            let cfg = BackendConfig {
                kind,
                time_scale: 0.1,
                forward_time: 0.01,
                svmc: SvmcParams {
                    sweeps_per_waypoint: 20,
                    ..Default::default()
                },
                ..Default::default()
            };
            let backend = build_backend(&q, &sched, &cfg).unwrap();
            let rec = random_initial_baseline(&backend, &params, 1).unwrap();
            rec.verify(&q).unwrap();
            let v = serde_json::to_value(&rec).unwrap();
            keys.push(v.as_object().unwrap().keys().cloned().collect::<Vec<_>>());
        }
        assert_eq!(keys[0], keys[1]);
    }

    #[test]
    fn oversized_problem_falls_back_to_svmc() {
        let g = Graph::path(7).unwrap();
        let q = build_coloring_qubo(&g, 3, 1.0).unwrap();
        assert_eq!(q.n_vars(), 21);
        let sel = build_backend(&q, &steep_surrogate_schedule(), &BackendConfig::default()).unwrap();
        assert_eq!(sel.kind(), BackendKind::Svmc);
        assert!(sel.substituted);
        let cfg = BackendConfig {
            statevector_max_qubits: 8,
            ..Default::default()
        };
        let sel = build_backend(&p5(), &steep_surrogate_schedule(), &cfg).unwrap();
        assert_eq!(sel.kind(), BackendKind::Svmc);
        let sel = build_backend(&p5(), &steep_surrogate_schedule(), &BackendConfig::default()).unwrap();
        assert_eq!(sel.kind(), BackendKind::Statevector);
        assert!(!sel.substituted);
    }

    #[test]
    fn keep_best_never_feeds_worse_input() {
        let q = p5();
        let backend = desk_backend(&q, 100.0);
        let path = make_reverse_path(0.3, 100.0).unwrap();
        let start: Bits = "1010101010".parse().unwrap();
        let opts = ChainOptions {
            cycles: 15,
            shots_per_cycle: 1,
            policy: FeedPolicy::KeepBest,
            halt_on_valid: false,
        };
        let cycles = iterate_reverse(backend.backend.as_ref(), &path, &start, &opts, 4).unwrap();
        let mut best = q.energy(&start).unwrap();
        for c in &cycles {
            let e = q.energy(&c.input).unwrap();
            assert!(e <= best + 1e-12);
            best = best.min(e).min(c.energy);
        }
    }

    #[test]
    fn cached_and_fresh_distributions_agree() {
        let q = p5();
        let backend = desk_backend(&q, 100.0);
        let path = make_reverse_path(0.44, 100.0).unwrap();
        let start: Bits = "1010011001".parse().unwrap();
        let first = backend.backend.reverse(&path, &start, 50, 2).unwrap();
        let second = backend.backend.reverse(&path, &start, 50, 2).unwrap();
        assert_eq!(first, second);
        let sched = steep_surrogate_schedule();
        let fresh = dynamics::reverse_anneal(
            &q,
            &build_problem_diagonal(&q).unwrap(),
            &sched,
            &path,
            &start,
            50,
            2,
            &EvolveOptions::with_time_scale(0.1),
        )
        .unwrap();
        assert_eq!(first, fresh);
    }
}
