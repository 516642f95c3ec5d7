//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line
//! (written past the test harness's output capture) and the test fails if
//! any criterion does.

use std::collections::{BTreeSet, HashSet};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use ralab::coloring_qubo::{brute_force_solve, build_coloring_qubo, qubo_to_ising, QuboProblem};
use ralab::dynamics::{
    basis_state, driver_ground, evolve, forward_distribution, reverse_anneal, samples_from_distribution,
    EvolveOptions, QuantumState, ADIABATIC_TIME_SCALE, DRIFT_BOUND,
};
use ralab::experiments::config::{DESK_TIME_SCALE, ExperimentConfig};
use ralab::experiments::run::{execute, replay, AnnealParams, Invocation, SpectrumParams, MANIFEST_FILE};
use ralab::experiments::{baseline_run, sweep_reverse_distance};
use ralab::graphs::{generate_er, greedy_color_largest_first, Graph};
use ralab::heuristic::{
    assisted_reverse_anneal, build_backend, random_bits, BackendChoice, BackendConfig, HeuristicParams, Outcome,
};
use ralab::rng::{derive_seed, rng_from_seed, uniform};
use ralab::schedules::{
    linear_schedule, make_forward_path, make_reverse_path, steep_surrogate_schedule, AnnealPath, PathKind, Waypoint,
};
use ralab::spectrum::{
    build_problem_diagonal, default_grid, ground_degeneracy, lowest_dense, min_manifold_gap, spectrum_sweep,
    Hamiltonian, ProblemDiagonal,
};
use ralab::svmc::{svmc_run, SvmcParams};
use ralab::Bits;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: f64, what: &str) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit, || {
        format!("{what} took {:.1}s, limit {limit}s", elapsed.as_secs_f64())
    })
}

fn p5() -> (QuboProblem, ProblemDiagonal) {
    let q = build_coloring_qubo(&Graph::path(5).unwrap(), 2, 1.0).unwrap();
    let d = build_problem_diagonal(&q).unwrap();
    (q, d)
}

fn index_bits(i: usize, n: usize) -> Bits {
    Bits::from_index(i, n)
}

/// All colorings of `g` with `k` colors, proper or not, as color vectors.
fn all_colorings(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|c| {
                (0..k).map(move |color| {
                    let mut next = c.clone();
                    next.push(color);
                    next
                })
            })
            .collect();
    }
    out
}

fn oracle_equivalence() -> Check {
    let start = Instant::now();
    let mut rng = rng_from_seed(101);
    let mut instances = 0;
    let mut checked = 0usize;
    for i in 0..60u64 {
        let n = 2 + (i % 5) as usize;
        let p = uniform(&mut rng);
        let g = generate_er(n, p, derive_seed(101, &[i])).unwrap();
        let k = 1 + (i as usize) % (12 / n);
        let q = build_coloring_qubo(&g, k, 1.0).unwrap();
        assert!(q.n_vars() <= 12);
        let proper: HashSet<Bits> = all_colorings(n, k)
            .into_iter()
            .filter(|c| g.is_proper_coloring(c))
            .map(|c| q.encode(&c).unwrap())
            .collect();
        for idx in 0..1usize << q.n_vars() {
            let bits = index_bits(idx, q.n_vars());
            let valid = q.validate(&bits).unwrap();
            let zero = q.energy(&bits).unwrap().abs() < 1e-9;
            let encoded = proper.contains(&bits);
            ensure(valid == zero && zero == encoded, || {
                format!("instance {i} bits {bits}: validate={valid} zero_energy={zero} proper_encoding={encoded}")
            })?;
            checked += 1;
        }
        instances += 1;
    }
    within(start.elapsed(), 10.0, "enumeration")?;
    Ok(format!(
        "{instances} instances, {checked} bitstrings, 0 mismatches, {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

fn qubo_ising_consistency() -> Check {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let g = generate_er(4 + (i % 5) as usize, 0.5, derive_seed(202, &[i])).unwrap();
        let k = greedy_color_largest_first(&g).k + (i % 2) as usize;
        let q = build_coloring_qubo(&g, k, 1.0 + (i % 3) as f64).unwrap();
        let ising = qubo_to_ising(&q);
        for j in 0..1000u64 {
            let bits = random_bits(q.n_vars(), derive_seed(202, &[i, j]));
            let diff = (q.energy(&bits).unwrap() - ising.energy(&bits.spins()).unwrap()).abs();
            worst = worst.max(diff);
        }
    }
    ensure(worst <= 1e-9, || format!("max |E_qubo - E_ising| = {worst:e}"))?;
    within(start.elapsed(), 5.0, "consistency check")?;
    Ok(format!("20 instances x 1000 bitstrings, max diff {worst:e}"))
}

fn spectrum_endpoints() -> Check {
    let start = Instant::now();
    let (q, d) = p5();
    let sched = linear_schedule();
    let at0 = lowest_dense(&Hamiltonian::at(0.0, &sched, &d), 3);
    let at1 = lowest_dense(&Hamiltonian::at(1.0, &sched, &d), 3);
    let brute = brute_force_solve(&q).unwrap();
    let mut energies: Vec<f64> = (0..1usize << 10).map(|i| q.energy(&index_bits(i, 10)).unwrap()).collect();
    energies.sort_by(f64::total_cmp);
    let (e0, e2) = (energies[0], energies[2]);
    ensure((at0[0] + 10.0).abs() <= 1e-8, || format!("s=0 ground {} != -10", at0[0]))?;
    ensure(brute.ground.len() == 2 && e0 == 0.0 && e2 >= 1.0, || {
        format!("enumeration: {} ground states, E0 {e0}, E2 {e2}", brute.ground.len())
    })?;
    ensure((at1[0] - e0).abs() <= 1e-7 && (at1[1] - e0).abs() <= 1e-7, || {
        format!("s=1 lowest two {at1:?}")
    })?;
    ensure(at1[2] >= 1.0 - 1e-7, || format!("s=1 third level {}", at1[2]))?;
    within(start.elapsed(), 30.0, "dense endpoints")?;
    Ok(format!("s=0: {:.10}; s=1: {:?}", at0[0], at1))
}

fn spectrum_shape() -> Check {
    let (_, d) = p5();
    let grid = default_grid();
    ensure(grid.len() == 100, || format!("grid has {} points", grid.len()))?;
    let linear = spectrum_sweep(&linear_schedule(), &d, &grid, 3).unwrap();
    let steep = spectrum_sweep(&steep_surrogate_schedule(), &d, &grid, 3).unwrap();
    let degeneracy = ground_degeneracy(linear.levels.last().unwrap(), 1e-7);
    ensure(degeneracy == 2, || format!("ground degeneracy at s=1 is {degeneracy}"))?;
    let lin = min_manifold_gap(&linear, degeneracy).unwrap();
    let stp = min_manifold_gap(&steep, degeneracy).unwrap();
    ensure(lin.gap > 0.0 && lin.s > 0.5 && lin.s < 0.95, || {
        format!("linear min gap {:.4} at s={:.3}", lin.gap, lin.s)
    })?;
    ensure(stp.s < lin.s, || format!("steep min gap at s={:.3} not below linear s={:.3}", stp.s, lin.s))?;
    Ok(format!(
        "degeneracy 2 at s=1; linear gap {:.4} at s={:.3}; steep gap {:.4} at s={:.3}",
        lin.gap, lin.s, stp.gap, stp.s
    ))
}

fn dynamics_invariants() -> Check {
    let (_, d) = p5();
    let sched = linear_schedule();
    let forward = evolve(
        &driver_ground(10).unwrap(),
        &make_forward_path(100.0).unwrap(),
        &sched,
        &d,
        &EvolveOptions::default(),
    )
    .unwrap();
    let drift = forward.max_drift.max((forward.state.norm() - 1.0).abs());
    ensure(drift <= DRIFT_BOUND, || format!("norm drift {drift:e}"))?;

    // Pause at fixed s: energy expectation of an arbitrary superposition.
    let s_pause = 0.6;
    let (a, b) = sched.at(s_pause);
    let mut rng = rng_from_seed(5);
    let raw: Vec<num_complex::Complex64> =
        (0..1024).map(|_| num_complex::Complex64::new(uniform(&mut rng) - 0.5, uniform(&mut rng) - 0.5)).collect();
    let norm = raw.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let start = QuantumState::new(raw.into_iter().map(|c| c / norm).collect()).unwrap();
    let pause = AnnealPath::new(
        PathKind::Custom,
        vec![Waypoint { t: 0.0, s: s_pause }, Waypoint { t: 30.0, s: s_pause }],
    )
    .unwrap();
    let paused = evolve(&start, &pause, &sched, &d, &EvolveOptions::default()).unwrap().state;
    let de = (paused.energy(&d, a, b) - start.energy(&d, a, b)).abs();
    ensure(de <= 1e-8, || format!("pause energy changed by {de:e}"))?;

    let q6 = build_coloring_qubo(&Graph::path(3).unwrap(), 2, 1.0).unwrap();
    let d6 = build_problem_diagonal(&q6).unwrap();
    let steep = steep_surrogate_schedule();
    let path = make_reverse_path(0.37, 100.0).unwrap();
    let opts = EvolveOptions::with_time_scale(0.3);
    let psi0 = basis_state(&Bits::from_index(13, 6)).unwrap();
    let there = evolve(&psi0, &path, &steep, &d6, &opts).unwrap().state;
    let back = evolve(&there.conj(), &path.mirrored(), &steep, &d6, &opts).unwrap().state.conj();
    let dist = back.max_distance(&psi0);
    ensure(dist <= 1e-5, || format!("round trip distance {dist:e}"))?;
    Ok(format!("drift {drift:.1e}; pause dE {de:.1e}; round trip {dist:.1e}"))
}

fn adiabatic_limit() -> Check {
    let (q, d) = p5();
    let opts = EvolveOptions::with_time_scale(ADIABATIC_TIME_SCALE);
    let probs = forward_distribution(&d, &linear_schedule(), 100.0, &opts).unwrap();
    let mass: f64 = probs
        .iter()
        .enumerate()
        .filter(|(i, _)| q.validate(&index_bits(*i, 10)).unwrap())
        .map(|(_, p)| p)
        .sum();
    let shots = samples_from_distribution(&q, &probs, 1000, 6).unwrap();
    let valid = shots.iter().filter(|s| s.valid).count();
    ensure(mass >= 0.8, || format!("valid mass {mass:.4}"))?;
    ensure(valid >= 750, || format!("{valid} of 1000 shots valid"))?;
    Ok(format!("valid mass {mass:.4}; {valid}/1000 shots valid"))
}

fn case_a_mechanism() -> Check {
    let (q, d) = p5();
    let seed_bits = q.encode(&[0, 1, 0, 1, 0]).unwrap();
    let path = make_reverse_path(0.93, 100.0).unwrap();
    let opts = EvolveOptions::with_time_scale(DESK_TIME_SCALE);
    let shots = reverse_anneal(&q, &d, &steep_surrogate_schedule(), &path, &seed_bits, 1000, 7, &opts).unwrap();
    let kept = shots.iter().filter(|s| s.bits == seed_bits).count();
    let unique: BTreeSet<&Bits> = shots.iter().filter(|s| s.valid).map(|s| &s.bits).collect();
    ensure(kept >= 990, || format!("{kept}/1000 returned the seed"))?;
    ensure(unique.len() == 1, || format!("{} unique valid bitstrings", unique.len()))?;
    Ok(format!("{kept}/1000 returned the seed; unique valid = 1"))
}

/// Master seed for the golden Case C run; at these settings most seeds
/// exhaust 50 cycles (see the notes in the README).
const GOLDEN_SEED: u64 = 13;

fn case_c_golden() -> Check {
    let start = Instant::now();
    let (q, _) = p5();
    let cfg = BackendConfig {
        time_scale: DESK_TIME_SCALE,
        forward_time: 0.01,
        ..Default::default()
    };
    let params = HeuristicParams {
        s_prime: 0.44,
        forward_shots: 10,
        max_cycles: 50,
        ..Default::default()
    };
    let backend = build_backend(&q, &steep_surrogate_schedule(), &cfg).unwrap();
    let run = assisted_reverse_anneal(&backend, &params, GOLDEN_SEED).unwrap();
    let again = assisted_reverse_anneal(&build_backend(&q, &steep_surrogate_schedule(), &cfg).unwrap(), &params, GOLDEN_SEED)
        .unwrap();
    let fwd_valid = run.forward.as_ref().map(|f| f.valid).unwrap_or(usize::MAX);
    ensure(fwd_valid == 0, || format!("forward stage found {fwd_valid} valid"))?;
    ensure(run.outcome == Outcome::SolvedByRa && run.cycles.len() <= 50, || {
        format!("outcome {:?} after {} cycles", run.outcome, run.cycles.len())
    })?;
    ensure(run == again, || "rerun with the same seed differs".into())?;
    run.verify(&q).map_err(|e| e.to_string())?;
    within(start.elapsed(), 60.0, "golden run")?;
    Ok(format!(
        "forward 0 valid of 10; solved by RA at cycle {}; deterministic; {:.1}s",
        run.cycles.len(),
        start.elapsed().as_secs_f64()
    ))
}

fn baseline_direction() -> Check {
    let mut cfg = ExperimentConfig::default();
    cfg.instances.count = 150;
    let out = baseline_run(&cfg).unwrap();
    let problems = out.averages.first().map_or(0, |r| r.problems);
    ensure(problems >= 20, || format!("only {problems} invalid-seed problems"))?;
    let mut compared = Vec::new();
    for row in &out.averages {
        if row.best_bitstring > 0.0 || row.random_bitstring > 0.0 {
            ensure(row.best_bitstring >= row.random_bitstring, || {
                format!(
                    "s'={}: assisted {:.3} < random {:.3}",
                    row.s_prime, row.best_bitstring, row.random_bitstring
                )
            })?;
            compared.push(format!("{}: {:.2}>={:.2}", row.s_prime, row.best_bitstring, row.random_bitstring));
        }
    }
    ensure(!compared.is_empty(), || "no s' with any valid sample".into())?;
    Ok(format!("{} instances, {problems} invalid-seed problems; {}", cfg.instances.count, compared.join(", ")))
}

fn schema<T: serde::Serialize>(record: &T) -> BTreeSet<String> {
    serde_json::to_value(record).unwrap().as_object().unwrap().keys().cloned().collect()
}

fn svmc_substitutability() -> Check {
    let mut cfg = ExperimentConfig::default();
    cfg.instances.n_vertices = vec![15];
    cfg.instances.count = 1;
    cfg.backend.kind = BackendChoice::Svmc;
    cfg.ra_samples = 20;
    let big = sweep_reverse_distance(&cfg).unwrap();
    let p = &big.problems[0];
    ensure(p.error.is_none(), || format!("sweep error: {:?}", p.error))?;
    ensure(p.n_vars >= 30, || format!("only {} variables", p.n_vars))?;
    ensure(big.summary.len() == cfg.s_prime_grid.len(), || format!("{} summary rows", big.summary.len()))?;

    let mut small = ExperimentConfig::default();
    small.instances.n_vertices = vec![3];
    small.instances.count = 1;
    small.s_prime_grid = vec![0.93];
    small.ra_samples = 2;
    let sv = sweep_reverse_distance(&small).unwrap();
    ensure(schema(&big.problems[0]) == schema(&sv.problems[0]), || "problem record schema differs".into())?;
    ensure(schema(&big.samples[0]) == schema(&sv.samples[0]), || "sample record schema differs".into())?;
    ensure(schema(&big.summary[0]) == schema(&sv.summary[0]), || "summary schema differs".into())?;

    let (q, _) = p5();
    let ising = qubo_to_ising(&q);
    let path = make_forward_path(100.0).unwrap();
    let valid = (0..100u64)
        .filter(|&i| {
            let bits =
                svmc_run(&ising, &linear_schedule(), &path, None, &SvmcParams::default(), derive_seed(10, &[i])).unwrap();
            q.validate(&bits).unwrap()
        })
        .count();
    ensure(valid >= 50, || format!("P5 SVMC forward {valid}/100 valid"))?;
    Ok(format!(
        "15-vertex sweep on svmc: {} vars, {} samples, schemas match statevector; P5 forward {valid}/100 valid",
        p.n_vars,
        big.samples.len()
    ))
}

fn replay_exact() -> Check {
    let mut batch = ExperimentConfig::default();
    batch.instances.n_vertices = vec![3, 4];
    batch.instances.count = 2;
    batch.s_prime_grid = vec![0.44, 0.65];
    batch.ra_samples = 4;
    let invocations = vec![
        Invocation::Generate(batch.clone()),
        Invocation::Spectrum(SpectrumParams {
            levels: 4,
            grid: 12,
            ..Default::default()
        }),
        Invocation::Anneal(AnnealParams {
            graph: Graph::path(4).unwrap(),
            heuristic: HeuristicParams {
                forward_shots: 5,
                max_cycles: 5,
                ..Default::default()
            },
            backend: BackendConfig {
                time_scale: DESK_TIME_SCALE,
                ..Default::default()
            },
            ..Default::default()
        }),
        Invocation::Sweep(batch.clone()),
        Invocation::Scaling(batch.clone()),
        Invocation::Baseline(ExperimentConfig {
            baseline_all_s_prime: true,
            ..batch
        }),
    ];
    let mut files = 0;
    for inv in &invocations {
        let first = tempfile::tempdir().unwrap();
        let second = tempfile::tempdir().unwrap();
        let manifest = execute(inv, first.path()).map_err(|e| format!("{}: {e}", inv.command()))?;
        let report = replay(&first.path().join(MANIFEST_FILE), second.path()).map_err(|e| e.to_string())?;
        ensure(report.is_exact(), || format!("{}: mismatched {:?}", inv.command(), report.mismatched))?;
        for name in manifest.outputs.iter().map(|o| o.file.as_str()).chain([MANIFEST_FILE]) {
            let a = std::fs::read(first.path().join(name)).unwrap();
            let b = std::fs::read(second.path().join(name)).unwrap();
            ensure(a == b, || format!("{}: {name} differs", inv.command()))?;
            files += 1;
        }
    }
    Ok(format!("{} commands replayed, {files} files byte-identical", invocations.len()))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Check); 11] = [
        ("1 oracle validity equivalence", oracle_equivalence),
        ("2 qubo/ising consistency", qubo_ising_consistency),
        ("3 spectrum endpoints", spectrum_endpoints),
        ("4 spectrum shape", spectrum_shape),
        ("5 dynamics invariants", dynamics_invariants),
        ("6 adiabatic limit", adiabatic_limit),
        ("7 valid-seed retention", case_a_mechanism),
        ("8 invalid-seed golden run", case_c_golden),
        ("9 baseline direction", baseline_direction),
        ("10 svmc substitutability", svmc_substitutability),
        ("11 replay", replay_exact),
    ];
    let mut failed = Vec::new();
    let mut out = std::io::stdout();
    for (name, check) in criteria {
        let start = Instant::now();
        let result = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(r) => r,
            Err(panic) => Err(panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let secs = start.elapsed().as_secs_f64();
        let line = match &result {
            Ok(detail) => format!("PASS  {name}: {detail} [{secs:.1}s]"),
            Err(why) => format!("FAIL  {name}: {why} [{secs:.1}s]"),
        };
        writeln!(out, "{line}").unwrap();
        out.flush().unwrap();
        if result.is_err() {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
