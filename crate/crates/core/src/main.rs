use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ralab::experiments::run::{execute, replay, AnnealParams, Invocation, SpectrumParams, MANIFEST_FILE};
use ralab::experiments::ExperimentConfig;
use ralab::graphs::Graph;
use ralab::heuristic::{BackendChoice, FeedPolicy};
use ralab::{Error, Result};

/// Reverse-annealing experiments for graph coloring.
#[derive(Parser)]
#[command(name = "ralab", version)]
struct Cli {
    /// Worker threads for problem-level parallelism.
    #[arg(long, env = "RALAB_WORKERS", global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured random instances.
    Generate(BatchArgs),
    /// Lowest eigenvalues of H(s) along a grid.
    Spectrum(SpectrumArgs),
    /// One forward + iterated reverse anneal run on a single graph.
    Anneal(AnnealArgs),
    /// Valid counts over the reverse-distance grid.
    Sweep(BatchArgs),
    /// Forward vs assisted RA averages grouped by qubit count.
    Scaling(BatchArgs),
    /// Assisted RA vs RA from random bitstrings.
    Baseline(BatchArgs),
    /// Re-run a manifest and compare output hashes.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Auto,
    Statevector,
    Svmc,
}

impl From<BackendArg> for BackendChoice {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Auto => BackendChoice::Auto,
            BackendArg::Statevector => BackendChoice::Statevector,
            BackendArg::Svmc => BackendChoice::Svmc,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    FeedLast,
    KeepBest,
}

impl From<PolicyArg> for FeedPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::FeedLast => FeedPolicy::FeedLast,
            PolicyArg::KeepBest => FeedPolicy::KeepBest,
        }
    }
}

#[derive(Args)]
struct BatchArgs {
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated vertex counts.
    #[arg(long, value_delimiter = ',')]
    n_vertices: Option<Vec<usize>>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    instance_seed: Option<u64>,
    /// `linear`, `steep`, or a CSV path.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long)]
    time_scale: Option<f64>,
    /// Comma-separated reverse distances.
    #[arg(long, value_delimiter = ',')]
    s_prime: Option<Vec<f64>>,
    #[arg(long)]
    forward_shots: Option<usize>,
    #[arg(long)]
    ra_samples: Option<usize>,
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
}

impl BatchArgs {
    fn resolve(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value.clone() {
                    $field = v.into();
                }
            };
        }
        set!(cfg.seed, self.seed);
        set!(cfg.instances.n_vertices, self.n_vertices);
        set!(cfg.instances.count, self.count);
        set!(cfg.instances.p, self.p);
        set!(cfg.instances.seed, self.instance_seed);
        set!(cfg.schedule, self.schedule);
        set!(cfg.backend.kind, self.backend);
        set!(cfg.backend.time_scale, self.time_scale);
        set!(cfg.s_prime_grid, self.s_prime);
        set!(cfg.forward_shots, self.forward_shots);
        set!(cfg.ra_samples, self.ra_samples);
        set!(cfg.policy, self.policy);
        set!(cfg.output_dir, self.out_dir);
        let out = cfg.output_dir.clone();
        Ok((cfg, out))
    }
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        context: path.display().to_string(),
        source,
    })
}

#[derive(Args)]
struct SpectrumArgs {
    /// JSON spectrum parameters; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Graph file `{"n": .., "edges": [[u, v], ..]}`.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    penalty: Option<f64>,
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long, default_value = "ralab-out")]
    out_dir: PathBuf,
}

impl SpectrumArgs {
    fn resolve(&self) -> Result<SpectrumParams> {
        let mut p: SpectrumParams = match &self.config {
            Some(path) => load_json(path)?,
            None => SpectrumParams::default(),
        };
        if let Some(path) = &self.graph {
            p.graph = Graph::load(path)?;
        }
        p.k = self.k.unwrap_or(p.k);
        p.penalty = self.penalty.unwrap_or(p.penalty);
        p.schedule = self.schedule.clone().unwrap_or(p.schedule);
        p.levels = self.levels.unwrap_or(p.levels);
        p.grid = self.grid.unwrap_or(p.grid);
        Ok(p)
    }
}

#[derive(Args)]
struct AnnealArgs {
    /// JSON anneal parameters; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long)]
    time_scale: Option<f64>,
    #[arg(long)]
    forward_time: Option<f64>,
    #[arg(long)]
    s_prime: Option<f64>,
    #[arg(long)]
    forward_shots: Option<usize>,
    #[arg(long)]
    max_cycles: Option<usize>,
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    /// Seed RA with a random bitstring instead of the forward stage.
    #[arg(long)]
    random_initial: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "ralab-out")]
    out_dir: PathBuf,
}

impl AnnealArgs {
    fn resolve(&self) -> Result<AnnealParams> {
        let mut p: AnnealParams = match &self.config {
            Some(path) => load_json(path)?,
            None => AnnealParams::default(),
        };
        if let Some(path) = &self.graph {
            p.graph = Graph::load(path)?;
        }
        p.k = self.k.unwrap_or(p.k);
        p.schedule = self.schedule.clone().unwrap_or(p.schedule);
        if let Some(b) = self.backend {
            p.backend.kind = b.into();
        }
        p.backend.time_scale = self.time_scale.unwrap_or(p.backend.time_scale);
        p.backend.forward_time = self.forward_time.unwrap_or(p.backend.forward_time);
        p.heuristic.s_prime = self.s_prime.unwrap_or(p.heuristic.s_prime);
        p.heuristic.forward_shots = self.forward_shots.unwrap_or(p.heuristic.forward_shots);
        p.heuristic.max_cycles = self.max_cycles.unwrap_or(p.heuristic.max_cycles);
        if let Some(policy) = self.policy {
            p.heuristic.policy = policy.into();
        }
        p.random_initial |= self.random_initial;
        p.seed = self.seed.unwrap_or(p.seed);
        Ok(p)
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::Config("worker count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let (inv, out_dir) = match cli.command {
        Command::Replay { manifest, out_dir } => {
            let report = replay(&manifest, &out_dir)?;
            for f in &report.matched {
                println!("match     {f}");
            }
            for f in &report.mismatched {
                println!("MISMATCH  {f}");
            }
            return if report.is_exact() {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{}: {} output(s) differ",
                    manifest.display(),
                    report.mismatched.len()
                )))
            };
        }
        Command::Spectrum(a) => (Invocation::Spectrum(a.resolve()?), a.out_dir),
        Command::Anneal(a) => (Invocation::Anneal(a.resolve()?), a.out_dir.clone()),
        Command::Generate(a) => {
            let (cfg, out) = a.resolve()?;
            (Invocation::Generate(cfg), out)
        }
        Command::Sweep(a) => {
            let (cfg, out) = a.resolve()?;
            (Invocation::Sweep(cfg), out)
        }
        Command::Scaling(a) => {
            let (cfg, out) = a.resolve()?;
            (Invocation::Scaling(cfg), out)
        }
        Command::Baseline(a) => {
            let (cfg, out) = a.resolve()?;
            (Invocation::Baseline(cfg), out)
        }
    };
    inv.validate()?;
    let manifest = execute(&inv, &out_dir)?;
    for f in &manifest.outputs {
        println!("{}", out_dir.join(&f.file).display());
    }
    println!("{}", out_dir.join(MANIFEST_FILE).display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = format!("{e:?}");
            let kind = kind.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Error");
            eprintln!("error[{kind}]: {e}");
            ExitCode::FAILURE
        }
    }
}
