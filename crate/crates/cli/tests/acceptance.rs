//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//! Run with `cargo test --release -p beso-cli --test acceptance`.

use beso_cli::commands::{cmd_solve, compare_rows, fenchel_probe, validate_suites, CompareOptions, OracleName};
use beso_cli::RunConfig;
use beso_core::convex::ScalarConvex;
use beso_core::functional::{
    complementarity_residual, domain_point, eval_gap, eval_psi_star, noise_free, psi_star_integrand_route, vi_multiplier, Problem,
};
use beso_core::reference::{dense_heat_kkt, h_distance};
use beso_core::solver::{path_seed, solve_expectation, solve_path, solve_path_from, Estimate, PathOutcome, SolverConfig};
use beso_core::transform::{bform_energy_check, inverse_transform, polynomial_test_process, weighted_b};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::time::Instant;

const INSTANCES: [&str; 8] = ["heat", "log_entropy", "tv", "porous", "obstacle", "fdvi", "scalar", "zero"];

type Verdict = anyhow::Result<(bool, String)>;

fn load(name: &str) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.json"));
    RunConfig::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn setup(name: &str) -> anyhow::Result<(RunConfig, Problem, SolverConfig)> {
    let cfg = load(name);
    let p = cfg.build_problem()?;
    let s = cfg.solver_config()?;
    Ok((cfg, p, s))
}

fn neg(rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    rows.into_iter().map(|r| r.into_iter().map(|v| -v).collect()).collect()
}

fn gap_certificate() -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for name in INSTANCES {
        let (cfg, p, s) = setup(name)?;
        let start = Instant::now();
        let rep = solve_expectation(&p, &s, 8, cfg.paths.base_seed)?;
        let secs = start.elapsed().as_secs_f64();
        let mut worst = 0.0_f64;
        let mut all = rep.records.len() == 8;
        for r in &rep.records {
            match &r.outcome {
                PathOutcome::Solved(sol) => worst = worst.max(sol.report.gap / (1.0 + sol.report.g1.abs())),
                _ => all = false,
            }
        }
        let pass = all && worst <= 1e-6 && secs <= 60.0;
        ok &= pass;
        notes.push(format!("{name} {worst:.1e}/{secs:.1}s"));
    }
    Ok((ok, format!("max relative gap per instance: {}", notes.join(", "))))
}

fn gap_nonnegativity() -> Verdict {
    let mut worst = f64::INFINITY;
    let mut ok = true;
    for name in INSTANCES {
        let (cfg, p, s) = setup(name)?;
        // 10³ random feasible pairs
        let suite = validate_suites(&cfg)?.into_iter().find(|x| x.name == "gap").expect("gap suite");
        ok &= suite.passed;
        // and pairs near the solution, where the gap is small
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ctx = p.sample_context(path_seed(cfg.paths.base_seed, 0))?;
        let sol = solve_path(&p, &ctx, &s)?;
        for i in 0..60 {
            let amp = 10f64.powi(-(2 + i % 6));
            let xs: Vec<Vec<f64>> = sol.x[1..]
                .iter()
                .map(|row| domain_point(&p, &row.iter().map(|v| v + amp * rng.random_range(-1.0..1.0)).collect::<Vec<_>>()))
                .collect();
            let proc = inverse_transform(&ctx, &xs);
            let rep = eval_gap(&p, &ctx, &proc, &neg(weighted_b(&ctx, &proc)))?;
            worst = worst.min(rep.gap / (1.0 + rep.g1.abs() + rep.g2.abs()));
        }
    }
    ok &= worst >= -1e-8;
    Ok((ok, format!("random pairs pass on every instance; smallest scaled gap near the solutions {worst:.2e}")))
}

fn energy_identity() -> Verdict {
    let start = Instant::now();
    let mut det = 0.0_f64;
    for name in INSTANCES {
        let (_, p, _) = setup(name)?;
        let ctx = noise_free(&p).deterministic_context();
        let e = bform_energy_check(&ctx, &polynomial_test_process(&ctx));
        det = det.max((e.lhs - e.rhs_identity).abs() / (1.0 + e.lhs.abs()));
    }
    let (cfg, p, _) = setup("heat")?;
    let levels = [16usize, 32, 64];
    let mut stats = Vec::new();
    for &n in &levels {
        let pn = p.with_time(beso_core::grid::TimeGrid::uniform(n, p.time.horizon())?);
        let d: Vec<f64> = (0..10_000)
            .filter_map(|i| pn.sample_context(path_seed(cfg.paths.base_seed, i)).ok())
            .map(|ctx| {
                let e = bform_energy_check(&ctx, &polynomial_test_process(&ctx));
                e.lhs - e.rhs_identity - e.martingale.unwrap_or(0.0)
            })
            .collect();
        stats.push(Estimate::from_samples(&d));
    }
    let secs = start.elapsed().as_secs_f64();
    // the mean is an O(Δt) defect once it is resolved beyond 3 SE
    let resolved = stats.iter().all(|e| e.mean.abs() > 3.0 * e.std_error);
    let halving = stats.windows(2).all(|w| w[0].mean.abs() / w[1].mean.abs() >= 1.5);
    let ok = det <= 1e-10 && resolved && halving && secs <= 120.0;
    let means: Vec<String> = levels
        .iter()
        .zip(&stats)
        .map(|(n, e)| format!("N={n} {:.2e}±{:.1e}", e.mean, e.std_error))
        .collect();
    Ok((ok, format!("deterministic defect {det:.1e}; noisy mean defect {} ({secs:.1}s)", means.join(", "))))
}

fn linear_oracles() -> Verdict {
    let mut cfg = load("heat");
    cfg.grid.m = Some(8);
    cfg.grid.n = 16;
    let p = cfg.build_problem()?;
    let s = cfg.solver_config()?;
    let mut err = 0.0_f64;
    for i in 0..8 {
        let ctx = p.sample_context(path_seed(cfg.paths.base_seed, i))?;
        let dense = dense_heat_kkt(&ctx, 1.0)?;
        let sol = solve_path(&p, &ctx, &s)?;
        for (a, b) in dense.iter().flatten().zip(sol.proc.y.iter().flatten()) {
            err = err.max((a - b).abs());
        }
    }
    let cfg = load("heat");
    let opts = CompareOptions {
        levels: Some(vec![32, 64, 128]),
        n_ref: Some(1024),
        eps: None,
    };
    let rows = compare_rows(&cfg, OracleName::ImplicitEuler, &opts)?;
    let factors: Vec<f64> = rows[1..].iter().map(|r| r.factor).collect();
    let ok = err <= 1e-6 && factors.iter().all(|f| *f >= 1.5);
    Ok((ok, format!("dense KKT max error {err:.1e}; implicit Euler factors {factors:.3?}")))
}

fn scalar_order() -> Verdict {
    let mut cfg = load("scalar");
    cfg.paths.n_paths = 1000;
    let start = Instant::now();
    let opts = CompareOptions {
        levels: Some(vec![64, 128, 256]),
        ..Default::default()
    };
    let rows = compare_rows(&cfg, OracleName::Exact, &opts)?;
    let secs = start.elapsed().as_secs_f64();
    let order = beso_core::reference::observed_order(&rows);
    Ok((order >= 0.9 && secs <= 60.0, format!("observed strong order {order:.3} ({secs:.1}s)")))
}

fn catalog() -> Vec<ScalarConvex> {
    vec![
        ScalarConvex::Quadratic(1.0),
        ScalarConvex::Quadratic(0.3),
        ScalarConvex::PowerNorm(1.5),
        ScalarConvex::PowerNorm(3.0),
        ScalarConvex::AbsValue,
        ScalarConvex::LogEntropy,
        ScalarConvex::ExpGrowth { a0: 1.0, a1: 0.5, p: 1.0 },
        ScalarConvex::ExpGrowth { a0: 0.5, a1: 0.2, p: 2.0 },
        ScalarConvex::Indicator { lo: -1.0, hi: 2.0 },
        ScalarConvex::nonneg(),
        ScalarConvex::huber(0.1),
        ScalarConvex::Envelope { base: Box::new(ScalarConvex::LogEntropy), eps: 0.5 },
        ScalarConvex::Envelope { base: Box::new(ScalarConvex::PowerNorm(3.0)), eps: 0.2 },
    ]
}

fn fenchel_suite() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failed = Vec::new();
    let (mut fy, mut moreau, mut fd) = (0.0_f64, 0.0_f64, 0.0_f64);
    for f in catalog() {
        let p = fenchel_probe(&f, 1000, &mut rng);
        if !p.passed() {
            failed.push(format!("{f:?}"));
        }
        fy = fy.min(p.min_fy);
        moreau = moreau.max(p.max_moreau);
        fd = fd.max(p.max_fd);
    }
    Ok((
        failed.is_empty(),
        format!(
            "{} integrands: min FY {fy:.1e}, Moreau {moreau:.1e}, derivative {fd:.1e}{}",
            catalog().len(),
            if failed.is_empty() { String::new() } else { format!("; failing {}", failed.join(", ")) }
        ),
    ))
}

fn psi_star_routes() -> Verdict {
    let mut worst = 0.0_f64;
    for name in ["log_entropy", "heat"] {
        let (cfg, p, s) = setup(name)?;
        let ctx = p.sample_context(path_seed(cfg.paths.base_seed, 0))?;
        let sol = solve_path(&p, &ctx, &s)?;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let random: Vec<Vec<f64>> = (0..20).map(|_| (0..p.dim()).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        for v in sol.u.iter().chain(&random) {
            let a = eval_psi_star(&p, v)?;
            let b = psi_star_integrand_route(&p, &a.witness).expect("parabolic instance");
            worst = worst.max((a.value - b).abs() / (1.0 + a.value.abs()));
        }
    }
    Ok((worst <= 1e-8, format!("max relative disagreement {worst:.1e}")))
}

fn obstacle_complementarity() -> Verdict {
    let (cfg, p, s) = setup("obstacle")?;
    let (mut comp, mut low) = (0.0_f64, f64::INFINITY);
    let mut certified = true;
    for i in 0..cfg.paths.n_paths {
        let ctx = p.sample_context(path_seed(cfg.paths.base_seed, i))?;
        let sol = solve_path(&p, &ctx, &s)?;
        certified &= sol.report.certified;
        for (z, u) in sol.gap.witnesses.iter().zip(&sol.u) {
            let eta = vi_multiplier(&p, z, u).expect("obstacle instance");
            let scale = 1.0 + u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            comp = comp.max(complementarity_residual(z, &eta, 1e-10) / scale);
        }
        low = low.min(sol.x.iter().flatten().cloned().fold(f64::INFINITY, f64::min));
    }
    Ok((certified && comp <= 1e-6 && low >= -1e-8, format!("complementarity {comp:.1e}, min X {low:.1e}")))
}

fn tv_smoothing() -> Verdict {
    let cfg = load("tv");
    let start = Instant::now();
    let rows = compare_rows(&cfg, OracleName::SmoothedTv, &CompareOptions::default())?;
    let secs = start.elapsed().as_secs_f64();
    let d: Vec<f64> = rows.iter().map(|r| r.discrepancy).collect();
    let ok = d.windows(2).all(|w| w[1] < w[0]) && secs <= 120.0 && cfg.grid.m == Some(32) && cfg.grid.n == 64;
    let shown: Vec<String> = d.iter().map(|v| format!("{v:.2e}")).collect();
    Ok((ok, format!("discrepancy at eps 0.1, 0.01, 0.001: {} ({secs:.1}s)", shown.join(", "))))
}

fn uniqueness() -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;
    for name in INSTANCES {
        let (cfg, p, s) = setup(name)?;
        let ctx = p.sample_context(path_seed(cfg.paths.base_seed, 0))?;
        let a = solve_path(&p, &ctx, &s)?;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<Vec<f64>> = (0..ctx.steps())
            .map(|_| domain_point(&p, &(0..p.dim()).map(|_| 2.0 * rng.random_range(-1.0..1.0)).collect::<Vec<_>>()))
            .collect();
        let init = inverse_transform(&ctx, &xs);
        let b = solve_path_from(&p, &ctx, &s, Some(&init))?;
        let d = h_distance(&p.space, &p.time, &a.x[1..], &b.x[1..]);
        ok &= d <= 10.0 * s.tol_gap;
        notes.push(format!("{name} {d:.0e}"));
    }
    Ok((ok, format!("H-distance between initializations: {}", notes.join(", "))))
}

fn determinism() -> Verdict {
    let mut same = true;
    for name in ["heat", "tv", "fdvi"] {
        let mut bytes = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir()?;
            let mut cfg = load(name);
            cfg.output.directory = dir.path().to_path_buf();
            cmd_solve(&cfg, true)?;
            bytes.push(std::fs::read(dir.path().join("gaps.csv"))?);
        }
        same &= bytes[0] == bytes[1];
    }
    Ok((same, "gaps.csv of heat, tv, fdvi identical across two runs".into()))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 11] = [
        ("duality-gap certificate", gap_certificate),
        ("gap nonnegativity", gap_nonnegativity),
        ("energy identity", energy_identity),
        ("linear oracle equivalence", linear_oracles),
        ("exact scalar SDE order", scalar_order),
        ("Fenchel/prox suite", fenchel_suite),
        ("psi* two routes", psi_star_routes),
        ("obstacle complementarity", obstacle_complementarity),
        ("TV smoothing trend", tv_smoothing),
        ("uniqueness probe", uniqueness),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {:>2} {}  {name}: {detail} [{:.1}s]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
