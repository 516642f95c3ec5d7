//! Batch protocols: reverse-distance sweep, scaling by qubit count, and the
//! random-initial-state baseline.
//!
//! Every random stream derives from the master seed and the instance key
//! `(n_vertices, index)`, never from batch position, so adding instances or
//! sizes does not perturb existing ones. The sweep and the baseline use the
//! same reverse-stage seeds, which pairs their assisted series exactly.

pub mod config;
pub mod run;

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::coloring_qubo::{build_coloring_qubo, QuboProblem};
use crate::error::Result;
use crate::graphs::{generate_er, greedy_color_largest_first, Graph};
use crate::heuristic::{
    build_backend, iterate_reverse, random_bits, select_initial, BackendKind, ChainOptions, ForwardSummary,
    SeedSource, SelectedBackend,
};
use crate::rng::{derive_seed, stage};
use crate::schedules::{make_reverse_path, Schedule};

pub use config::{ExperimentConfig, InstanceSpec};

#[derive(Debug, Clone)]
pub struct Instance {
    pub id: String,
    pub n_vertices: usize,
    pub index: usize,
    pub graph: Graph,
    pub coloring: Vec<usize>,
    pub problem: QuboProblem,
}

impl Instance {
    fn seed(&self, master: u64, stage: u64, extra: &[u64]) -> u64 {
        let mut path = vec![stage, self.n_vertices as u64, self.index as u64];
        path.extend_from_slice(extra);
        derive_seed(master, &path)
    }
}

/// ER graphs with `k` from largest-first greedy coloring.
pub fn generate_instances(spec: &InstanceSpec) -> Result<Vec<Instance>> {
    let mut out = Vec::with_capacity(spec.n_vertices.len() * spec.count);
    for &n in &spec.n_vertices {
        for index in 0..spec.count {
            let seed = derive_seed(spec.seed, &[stage::INSTANCE, n as u64, index as u64]);
            let graph = generate_er(n, spec.p, seed)?;
            let greedy = greedy_color_largest_first(&graph);
            let problem = build_coloring_qubo(&graph, greedy.k, spec.penalty)?;
            out.push(Instance {
                id: format!("n{n:02}-{index:03}"),
                n_vertices: n,
                index,
                graph,
                coloring: greedy.coloring,
                problem,
            });
        }
    }
    Ok(out)
}

/// Forward-stage outcome that decides which pair of result cases a problem
/// feeds: valid seed (cases A/B: total and unique counts) or invalid seed
/// (cases C/D).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CaseFamily {
    #[serde(rename = "A/B")]
    ValidSeed,
    #[serde(rename = "C/D")]
    InvalidSeed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemRecord {
    pub problem_id: String,
    pub graph: Graph,
    pub k: usize,
    pub n_vars: usize,
    pub backend: Option<BackendKind>,
    pub substituted: bool,
    pub forward: Option<ForwardSummary>,
    pub seed_bits: Option<Bits>,
    pub case: Option<CaseFamily>,
    pub error: Option<String>,
    pub config_hash: String,
}

/// One reverse-anneal sample (= one iterated cycle).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaSampleRecord {
    pub problem_id: String,
    pub seed_source: SeedSource,
    pub s_prime: f64,
    pub cycle: usize,
    pub input: Bits,
    pub bits: Bits,
    pub energy: f64,
    pub valid: bool,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub problem_id: String,
    pub n_vars: usize,
    pub backend: BackendKind,
    pub case: CaseFamily,
    pub s_prime: f64,
    pub samples: usize,
    pub total_valid: usize,
    pub unique_valid: usize,
}

/// Valid count and distinct valid bitstrings among `samples`.
pub fn count_valid(samples: &[RaSampleRecord]) -> (usize, usize) {
    let valid: Vec<&Bits> = samples.iter().filter(|s| s.valid).map(|s| &s.bits).collect();
    let unique = valid.iter().collect::<HashSet<_>>().len();
    (valid.len(), unique)
}

struct Prepared<'a> {
    inst: &'a Instance,
    backend: SelectedBackend,
    record: ProblemRecord,
    seed_bits: Bits,
}

fn base_record(inst: &Instance, hash: &str) -> ProblemRecord {
    ProblemRecord {
        problem_id: inst.id.clone(),
        graph: inst.graph.clone(),
        k: inst.problem.k(),
        n_vars: inst.problem.n_vars(),
        backend: None,
        substituted: false,
        forward: None,
        seed_bits: None,
        case: None,
        error: None,
        config_hash: hash.to_string(),
    }
}

/// Backend selection, forward stage, and seed selection for one problem.
/// Failures come back as a record carrying the error.
fn prepare<'a>(
    inst: &'a Instance,
    cfg: &ExperimentConfig,
    sched: &Schedule,
    hash: &str,
) -> std::result::Result<Prepared<'a>, ProblemRecord> {
    let mut record = base_record(inst, hash);
    let fail = |mut record: ProblemRecord, e: crate::Error| {
        log::warn!("problem {}: {e}", inst.id);
        record.error = Some(e.to_string());
        record
    };
    let backend = match build_backend(&inst.problem, sched, &cfg.backend) {
        Ok(b) => b,
        Err(e) => return Err(fail(record, e)),
    };
    record.backend = Some(backend.kind());
    record.substituted = backend.substituted;
    let forward = match backend
        .backend
        .forward(cfg.forward_shots, inst.seed(cfg.seed, stage::FORWARD, &[]))
    {
        Ok(s) => s,
        Err(e) => return Err(fail(record, e)),
    };
    let seed_bits = match select_initial(&forward, inst.seed(cfg.seed, stage::SELECT, &[])) {
        Ok(b) => b,
        Err(e) => return Err(fail(record, e)),
    };
    let summary = ForwardSummary::from_samples(&forward);
    record.case = Some(if summary.valid > 0 {
        CaseFamily::ValidSeed
    } else {
        CaseFamily::InvalidSeed
    });
    record.forward = Some(summary);
    record.seed_bits = Some(seed_bits.clone());
    Ok(Prepared {
        inst,
        backend,
        record,
        seed_bits,
    })
}

impl Prepared<'_> {
    /// `cfg.ra_samples` iterated cycles at `s_prime` from `start`; the chain
    /// does not stop at the first valid sample.
    fn series(
        &self,
        cfg: &ExperimentConfig,
        s_prime: f64,
        start: &Bits,
        source: SeedSource,
    ) -> Result<Vec<RaSampleRecord>> {
        let path = make_reverse_path(s_prime, cfg.reverse_time)?;
        let opts = ChainOptions {
            cycles: cfg.ra_samples,
            shots_per_cycle: cfg.shots_per_cycle,
            policy: cfg.policy,
            halt_on_valid: false,
        };
        let seed = self.inst.seed(cfg.seed, stage::REVERSE, &[s_prime.to_bits()]);
        let cycles = iterate_reverse(self.backend.backend.as_ref(), &path, start, &opts, seed)?;
        Ok(cycles
            .into_iter()
            .map(|c| RaSampleRecord {
                problem_id: self.inst.id.clone(),
                seed_source: source,
                s_prime,
                cycle: c.cycle,
                input: c.input,
                bits: c.output,
                energy: c.energy,
                valid: c.valid,
                config_hash: self.record.config_hash.clone(),
            })
            .collect())
    }

    fn summary_row(&self, s_prime: f64, samples: &[RaSampleRecord]) -> SummaryRow {
        let (total_valid, unique_valid) = count_valid(samples);
        SummaryRow {
            problem_id: self.inst.id.clone(),
            n_vars: self.record.n_vars,
            backend: self.backend.kind(),
            case: self.record.case.expect("prepared"),
            s_prime,
            samples: samples.len(),
            total_valid,
            unique_valid,
        }
    }
}

fn mark_failed(record: &mut ProblemRecord, e: crate::Error) {
    log::warn!("problem {}: {e}", record.problem_id);
    record.error = Some(e.to_string());
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub problems: Vec<ProblemRecord>,
    pub samples: Vec<RaSampleRecord>,
    pub summary: Vec<SummaryRow>,
}

/// For each problem: one forward stage, then `ra_samples` iterated RA
/// cycles at every s′ of the grid from the selected seed.
pub fn sweep_reverse_distance(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    let sched = cfg.validate()?;
    let hash = cfg.hash();
    let instances = generate_instances(&cfg.instances)?;
    let per_problem: Vec<(ProblemRecord, Vec<RaSampleRecord>, Vec<SummaryRow>)> = instances
        .par_iter()
        .map(|inst| {
            let prep = match prepare(inst, cfg, &sched, &hash) {
                Ok(p) => p,
                Err(record) => return (record, Vec::new(), Vec::new()),
            };
            let mut samples = Vec::new();
            let mut rows = Vec::new();
            for &s_prime in &cfg.s_prime_grid {
                match prep.series(cfg, s_prime, &prep.seed_bits, SeedSource::Forward) {
                    Ok(series) => {
                        rows.push(prep.summary_row(s_prime, &series));
                        samples.extend(series);
                    }
                    Err(e) => {
                        let mut record = prep.record;
                        mark_failed(&mut record, e);
                        return (record, samples, rows);
                    }
                }
            }
            (prep.record, samples, rows)
        })
        .collect();
    let mut out = SweepOutput {
        problems: Vec::new(),
        samples: Vec::new(),
        summary: Vec::new(),
    };
    for (p, s, r) in per_problem {
        out.problems.push(p);
        out.samples.extend(s);
        out.summary.extend(r);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n_vars: usize,
    pub problems: usize,
    pub forward_avg_valid: f64,
    pub forward_avg_unique: f64,
    pub ra_avg_valid: f64,
    pub ra_avg_unique: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingOutput {
    pub problems: Vec<ProblemRecord>,
    pub samples: Vec<RaSampleRecord>,
    pub summary: Vec<SummaryRow>,
    pub groups: Vec<ScalingRow>,
}

/// Forward stage plus RA at `scaling_s_prime` for every problem, averaged
/// per logical qubit count. Sizes with no problems produce no row.
pub fn scaling_run(cfg: &ExperimentConfig) -> Result<ScalingOutput> {
    let mut single = cfg.clone();
    single.s_prime_grid = vec![cfg.scaling_s_prime];
    let sweep = sweep_reverse_distance(&single)?;
    let mut groups: BTreeMap<usize, Vec<(&ProblemRecord, &SummaryRow)>> = BTreeMap::new();
    for p in &sweep.problems {
        if let Some(row) = sweep.summary.iter().find(|r| r.problem_id == p.problem_id) {
            groups.entry(p.n_vars).or_default().push((p, row));
        }
    }
    let rows = groups
        .into_iter()
        .map(|(n_vars, members)| {
            let n = members.len() as f64;
            let avg = |f: &dyn Fn(&(&ProblemRecord, &SummaryRow)) -> usize| {
                members.iter().map(|m| f(m) as f64).sum::<f64>() / n
            };
            ScalingRow {
                n_vars,
                problems: members.len(),
                forward_avg_valid: avg(&|m| m.0.forward.as_ref().map_or(0, |f| f.valid)),
                forward_avg_unique: avg(&|m| m.0.forward.as_ref().map_or(0, |f| f.unique_valid)),
                ra_avg_valid: avg(&|m| m.1.total_valid),
                ra_avg_unique: avg(&|m| m.1.unique_valid),
            }
        })
        .collect();
    Ok(ScalingOutput {
        problems: sweep.problems,
        samples: sweep.samples,
        summary: sweep.summary,
        groups: rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineProblemRow {
    pub problem_id: String,
    pub s_prime: f64,
    pub best_bitstring: usize,
    pub random_bitstring: usize,
    /// False when the random series was skipped because assisted RA found
    /// nothing valid here; `random_bitstring` is then 0.
    pub random_evaluated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub s_prime: f64,
    pub problems: usize,
    pub best_bitstring: f64,
    pub random_bitstring: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutput {
    pub problems: Vec<ProblemRecord>,
    pub samples: Vec<RaSampleRecord>,
    pub per_problem: Vec<BaselineProblemRow>,
    pub averages: Vec<BaselineRow>,
}

/// Assisted RA versus RA from a random bitstring, over the problems whose
/// forward stage found nothing valid. Both series use the same reverse
/// seeds at each s′. Unless `baseline_all_s_prime` is set, the random series
/// runs only where assisted RA found at least one valid sample; averages
/// are over all invalid-seed problems either way.
pub fn baseline_run(cfg: &ExperimentConfig) -> Result<BaselineOutput> {
    let sched = cfg.validate()?;
    let hash = cfg.hash();
    let instances = generate_instances(&cfg.instances)?;
    type PerProblem = (ProblemRecord, Vec<RaSampleRecord>, Vec<BaselineProblemRow>);
    let per_problem: Vec<PerProblem> = instances
        .par_iter()
        .map(|inst| {
            let prep = match prepare(inst, cfg, &sched, &hash) {
                Ok(p) => p,
                Err(record) => return (record, Vec::new(), Vec::new()),
            };
            if prep.record.case != Some(CaseFamily::InvalidSeed) {
                return (prep.record, Vec::new(), Vec::new());
            }
            let random = random_bits(inst.problem.n_vars(), inst.seed(cfg.seed, stage::RANDOM_INITIAL, &[]));
            let mut samples = Vec::new();
            let mut rows = Vec::new();
            for &s_prime in &cfg.s_prime_grid {
                let both = prep
                    .series(cfg, s_prime, &prep.seed_bits, SeedSource::Forward)
                    .and_then(|a| {
                        let b = if cfg.baseline_all_s_prime || count_valid(&a).0 > 0 {
                            Some(prep.series(cfg, s_prime, &random, SeedSource::Random)?)
                        } else {
                            None
                        };
                        Ok((a, b))
                    });
                match both {
                    Ok((assisted, baseline)) => {
                        rows.push(BaselineProblemRow {
                            problem_id: inst.id.clone(),
                            s_prime,
                            best_bitstring: count_valid(&assisted).0,
                            random_bitstring: baseline.as_deref().map_or(0, |b| count_valid(b).0),
                            random_evaluated: baseline.is_some(),
                        });
                        let baseline = baseline.unwrap_or_default();
                        samples.extend(assisted);
                        samples.extend(baseline);
                    }
                    Err(e) => {
                        let mut record = prep.record;
                        mark_failed(&mut record, e);
                        return (record, samples, rows);
                    }
                }
            }
            (prep.record, samples, rows)
        })
        .collect();
    let mut out = BaselineOutput {
        problems: Vec::new(),
        samples: Vec::new(),
        per_problem: Vec::new(),
        averages: Vec::new(),
    };
    for (p, s, r) in per_problem {
        out.problems.push(p);
        out.samples.extend(s);
        out.per_problem.extend(r);
    }
    for &s_prime in &cfg.s_prime_grid {
        let rows: Vec<&BaselineProblemRow> = out.per_problem.iter().filter(|r| r.s_prime == s_prime).collect();
        if rows.is_empty() {
            continue;
        }
        let n = rows.len() as f64;
        out.averages.push(BaselineRow {
            s_prime,
            problems: rows.len(),
            best_bitstring: rows.iter().map(|r| r.best_bitstring as f64).sum::<f64>() / n,
            random_bitstring: rows.iter().map(|r| r.random_bitstring as f64).sum::<f64>() / n,
        });
    }
    Ok(out)
}
