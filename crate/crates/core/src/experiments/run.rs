//! Invocations, output files, manifests, and replay.
//!
//! An [`Invocation`] is the complete, serializable description of one CLI
//! run. [`execute`] writes its outputs plus a `manifest.json` that embeds
//! the invocation itself and the SHA-256 of every output, so [`replay`] can
//! rerun it and compare byte for byte. Nothing time- or host-dependent goes
//! into any output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{hash_json, ExperimentConfig};
use super::{baseline_run, generate_instances, scaling_run, sweep_reverse_distance};
use crate::coloring_qubo::{build_coloring_qubo, DEFAULT_PENALTY};
use crate::error::{Error, Result};
use crate::graphs::Graph;
use crate::heuristic::{
    assisted_reverse_anneal, build_backend, random_initial_baseline, BackendConfig, HeuristicParams,
};
use crate::schedules::Schedule;
use crate::spectrum::{
    build_problem_diagonal, ground_degeneracy, min_gap, min_manifold_gap, spectrum_sweep, uniform_grid, MinGap,
    SpectrumTable, DEGENERACY_TOLERANCE,
};

pub const MANIFEST_FILE: &str = "manifest.json";

const SAMPLE_ACCOUNTING: &str =
    "each RA sample is one iterated reverse-anneal cycle; ra_samples cycles are run per (problem, s_prime)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumParams {
    pub graph: Graph,
    pub k: usize,
    pub penalty: f64,
    pub schedule: String,
    pub levels: usize,
    /// Number of evenly spaced points on [0, 1], endpoints included.
    pub grid: usize,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        SpectrumParams {
            graph: Graph::path(5).expect("valid"),
            k: 2,
            penalty: DEFAULT_PENALTY,
            schedule: "linear".into(),
            levels: 15,
            grid: 100,
        }
    }
}

impl SpectrumParams {
    pub fn validate(&self) -> Result<Schedule> {
        if self.levels == 0 {
            return Err(Error::param("levels", "must be at least 1"));
        }
        if self.grid < 2 {
            return Err(Error::param("grid", "need at least 2 points"));
        }
        build_coloring_qubo(&self.graph, self.k, self.penalty)?;
        Schedule::resolve(&self.schedule)
    }
}

/// One heuristic run on a single graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealParams {
    pub graph: Graph,
    pub k: usize,
    pub penalty: f64,
    pub schedule: String,
    pub backend: BackendConfig,
    pub heuristic: HeuristicParams,
    /// Start RA from a random bitstring instead of the forward stage.
    pub random_initial: bool,
    pub seed: u64,
}

impl Default for AnnealParams {
    fn default() -> Self {
        AnnealParams {
            graph: Graph::path(5).expect("valid"),
            k: 2,
            penalty: DEFAULT_PENALTY,
            schedule: "steep".into(),
            backend: BackendConfig::default(),
            heuristic: HeuristicParams::default(),
            random_initial: false,
            seed: 2024,
        }
    }
}

impl AnnealParams {
    pub fn validate(&self) -> Result<Schedule> {
        build_coloring_qubo(&self.graph, self.k, self.penalty)?;
        self.backend.validate()?;
        Schedule::resolve(&self.schedule)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "snake_case")]
pub enum Invocation {
    Generate(ExperimentConfig),
    Spectrum(SpectrumParams),
    Anneal(AnnealParams),
    Sweep(ExperimentConfig),
    Scaling(ExperimentConfig),
    Baseline(ExperimentConfig),
}

impl Invocation {
    pub fn command(&self) -> &'static str {
        match self {
            Invocation::Generate(_) => "generate",
            Invocation::Spectrum(_) => "spectrum",
            Invocation::Anneal(_) => "anneal",
            Invocation::Sweep(_) => "sweep",
            Invocation::Scaling(_) => "scaling",
            Invocation::Baseline(_) => "baseline",
        }
    }

    /// Everything that can be checked without running the computation.
    pub fn validate(&self) -> Result<()> {
        match self {
            Invocation::Spectrum(p) => p.validate().map(drop),
            Invocation::Anneal(p) => p.validate().map(drop),
            Invocation::Generate(c) | Invocation::Sweep(c) | Invocation::Scaling(c) | Invocation::Baseline(c) => {
                c.validate().map(drop)
            }
        }
    }

    pub fn config_hash(&self) -> String {
        match self {
            Invocation::Generate(c) | Invocation::Sweep(c) | Invocation::Scaling(c) | Invocation::Baseline(c) => {
                c.hash()
            }
            other => hash_json(&serde_json::to_value(other).expect("invocation serializes")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub invocation: Invocation,
    pub config_hash: String,
    pub seeds: serde_json::Value,
    pub notes: Vec<String>,
    pub outputs: Vec<OutputFile>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            context: path.display().to_string(),
            source,
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn jsonl<T: Serialize>(records: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("record serializes");
        out.push(b'\n');
    }
    out
}

fn csv_bytes<T: Serialize>(rows: &[T], context: &str) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|source| Error::Csv {
            context: context.to_string(),
            source,
        })?;
    }
    w.into_inner().map_err(|e| Error::Config(format!("{context}: {e}")))
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializes");
    v.push(b'\n');
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// Degeneracy of the ground level at the last grid point (s = 1).
    pub final_degeneracy: usize,
    /// Gap between that many lowest levels and the next one; `None` when the
    /// table has no level above the manifold.
    pub manifold_gap: Option<MinGap>,
    /// Gap from the ground level to the first level above it, at any s.
    pub adjacent_gap: Option<MinGap>,
}

pub fn gap_report(table: &SpectrumTable) -> GapReport {
    let last = table.levels.last().expect("non-empty table");
    let final_degeneracy = ground_degeneracy(last, DEGENERACY_TOLERANCE);
    GapReport {
        final_degeneracy,
        manifold_gap: min_manifold_gap(table, final_degeneracy).ok(),
        adjacent_gap: min_gap(table).ok(),
    }
}

/// Computes all outputs of `inv` in memory, as (file name, contents) pairs.
pub fn compute(inv: &Invocation) -> Result<Vec<(String, Vec<u8>)>> {
    inv.validate()?;
    let mut files = Vec::new();
    match inv {
        Invocation::Generate(cfg) => {
            #[derive(Serialize)]
            struct InstanceLine<'a> {
                problem_id: &'a str,
                graph: &'a Graph,
                k: usize,
                n_vars: usize,
                coloring: &'a [usize],
            }
            let instances = generate_instances(&cfg.instances)?;
            let lines: Vec<InstanceLine> = instances
                .iter()
                .map(|i| InstanceLine {
                    problem_id: &i.id,
                    graph: &i.graph,
                    k: i.problem.k(),
                    n_vars: i.problem.n_vars(),
                    coloring: &i.coloring,
                })
                .collect();
            files.push(("instances.jsonl".into(), jsonl(&lines)));
        }
        Invocation::Spectrum(p) => {
            let sched = p.validate()?;
            let q = build_coloring_qubo(&p.graph, p.k, p.penalty)?;
            let diag = build_problem_diagonal(&q)?;
            let table = spectrum_sweep(&sched, &diag, &uniform_grid(p.grid), p.levels)?;
            files.push(("spectrum.csv".into(), table.to_csv().into_bytes()));
            files.push(("min_gap.json".into(), pretty(&gap_report(&table))));
        }
        Invocation::Anneal(p) => {
            let sched = p.validate()?;
            let q = build_coloring_qubo(&p.graph, p.k, p.penalty)?;
            let backend = build_backend(&q, &sched, &p.backend)?;
            let record = if p.random_initial {
                random_initial_baseline(&backend, &p.heuristic, p.seed)?
            } else {
                assisted_reverse_anneal(&backend, &p.heuristic, p.seed)?
            };
            files.push(("run.jsonl".into(), jsonl(&[record])));
        }
        Invocation::Sweep(cfg) => {
            let out = sweep_reverse_distance(cfg)?;
            files.push(("problems.jsonl".into(), jsonl(&out.problems)));
            files.push(("samples.jsonl".into(), jsonl(&out.samples)));
            files.push(("summary.csv".into(), csv_bytes(&out.summary, "summary.csv")?));
        }
        Invocation::Scaling(cfg) => {
            let out = scaling_run(cfg)?;
            files.push(("problems.jsonl".into(), jsonl(&out.problems)));
            files.push(("samples.jsonl".into(), jsonl(&out.samples)));
            files.push(("summary.csv".into(), csv_bytes(&out.summary, "summary.csv")?));
            files.push(("scaling.csv".into(), csv_bytes(&out.groups, "scaling.csv")?));
        }
        Invocation::Baseline(cfg) => {
            let out = baseline_run(cfg)?;
            files.push(("problems.jsonl".into(), jsonl(&out.problems)));
            files.push(("samples.jsonl".into(), jsonl(&out.samples)));
            files.push(("baseline_problems.csv".into(), csv_bytes(&out.per_problem, "baseline_problems.csv")?));
            files.push(("baseline.csv".into(), csv_bytes(&out.averages, "baseline.csv")?));
        }
    }
    Ok(files)
}

fn seeds_of(inv: &Invocation) -> serde_json::Value {
    match inv {
        Invocation::Generate(c) | Invocation::Sweep(c) | Invocation::Scaling(c) | Invocation::Baseline(c) => {
            serde_json::json!({
                "master": c.seed,
                "instances": c.instances.seed,
                "derivation": "derive_seed(master, [stage, n_vertices, index, extra]); stages: \
                               instance=1 forward=2 select=3 reverse=4 random_initial=5; \
                               reverse extra = s_prime bits, shared by assisted and random series",
            })
        }
        Invocation::Anneal(p) => serde_json::json!({ "master": p.seed }),
        Invocation::Spectrum(_) => serde_json::json!({}),
    }
}

/// Runs `inv`, writes its outputs and `manifest.json` under `out_dir`.
pub fn execute(inv: &Invocation, out_dir: &Path) -> Result<Manifest> {
    let files = compute(inv)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut outputs = Vec::with_capacity(files.len());
    for (name, bytes) in &files {
        let path = out_dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        outputs.push(OutputFile {
            file: name.clone(),
            sha256: sha256_hex(bytes),
        });
    }
    let mut notes = Vec::new();
    if matches!(inv, Invocation::Sweep(_) | Invocation::Scaling(_) | Invocation::Baseline(_)) {
        notes.push(SAMPLE_ACCOUNTING.to_string());
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: inv.command().to_string(),
        invocation: inv.clone(),
        config_hash: inv.config_hash(),
        seeds: seeds_of(inv),
        notes,
        outputs,
    };
    let path = out_dir.join(MANIFEST_FILE);
    fs::write(&path, pretty(&manifest)).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub out_dir: PathBuf,
    pub matched: Vec<String>,
    pub mismatched: Vec<String>,
}

impl ReplayReport {
    pub fn is_exact(&self) -> bool {
        self.mismatched.is_empty()
    }
}

/// Re-executes the manifest's invocation into `out_dir` and compares every
/// output hash with the recorded one.
pub fn replay(manifest_path: &Path, out_dir: &Path) -> Result<ReplayReport> {
    let recorded = Manifest::load(manifest_path)?;
    let fresh = execute(&recorded.invocation, out_dir)?;
    let mut matched = Vec::new();
    let mut mismatched = Vec::new();
    for old in &recorded.outputs {
        match fresh.outputs.iter().find(|o| o.file == old.file) {
            Some(new) if new.sha256 == old.sha256 => matched.push(old.file.clone()),
            _ => mismatched.push(old.file.clone()),
        }
    }
    for new in &fresh.outputs {
        if !recorded.outputs.iter().any(|o| o.file == new.file) {
            mismatched.push(new.file.clone());
        }
    }
    Ok(ReplayReport {
        out_dir: out_dir.to_path_buf(),
        matched,
        mismatched,
    })
}
