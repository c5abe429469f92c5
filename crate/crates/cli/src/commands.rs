//! The `solve`, `validate`, `compare` and `sweep` commands.

use crate::config::{ConfigError, Format, RunConfig};
use crate::output;
use beso_core::convex::{ConvexSet, ScalarConvex};
use beso_core::functional::{domain_point, eval_gap, noise_free, InstanceKind, Problem};
use beso_core::grid::LinearMap;
use beso_core::reference::{observed_order, refinement_study, smoothed_tv_problem, smoothing_ladder, Discrepancy, Oracle};
use beso_core::solver::{solve_expectation, ExpectationReport, PathOutcome};
use beso_core::transform::{
    apply_b_weak, bform_energy_check, inverse_transform, polynomial_test_process, strong_pairing, weighted_b, DiscreteProcess,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};

/// How a command ended when it ran to completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Some path was not certified or some check failed.
    ChecksFailed(String),
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub tol_gap: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(p) = &self.out {
            cfg.output.directory = p.clone();
        }
        if let Some(n) = self.paths {
            cfg.paths.n_paths = n;
        }
        if let Some(s) = self.seed {
            cfg.paths.base_seed = s;
        }
        if let Some(t) = self.tol_gap {
            cfg.solver.tol_gap = t;
        }
    }
}

fn say(quiet: bool, msg: impl AsRef<str>) {
    if !quiet {
        println!("{}", msg.as_ref());
    }
}

fn out_dir(cfg: &RunConfig) -> anyhow::Result<&Path> {
    let d = cfg.output.directory.as_path();
    std::fs::create_dir_all(d)?;
    Ok(d)
}

fn run_paths(cfg: &RunConfig, problem: &Problem) -> anyhow::Result<ExpectationReport> {
    let solver = cfg.solver_config()?;
    if cfg.paths.n_paths == 0 {
        return Err(ConfigError("paths.n_paths must be positive".into()).into());
    }
    Ok(solve_expectation(problem, &solver, cfg.paths.n_paths, cfg.paths.base_seed)?)
}

fn certified_count(report: &ExpectationReport) -> usize {
    report
        .records
        .iter()
        .filter(|r| matches!(&r.outcome, PathOutcome::Solved(s) if s.report.certified))
        .count()
}

fn certification(report: &ExpectationReport) -> Outcome {
    let ok = certified_count(report);
    if ok == report.records.len() {
        Outcome::Success
    } else {
        Outcome::ChecksFailed(format!(
            "{} of {} paths not certified ({} rejected, {} failed)",
            report.records.len() - ok,
            report.records.len(),
            report.rejected,
            report.failed
        ))
    }
}

/// Solves every path and writes `gaps.csv`, `traj.csv`, `summary.json` and
/// `effective_config.json` as requested by the output block.
pub fn cmd_solve(cfg: &RunConfig, quiet: bool) -> anyhow::Result<Outcome> {
    let problem = cfg.build_problem()?;
    let report = run_paths(cfg, &problem)?;
    let dir = out_dir(cfg)?;
    if cfg.output.wants(Format::Csv) {
        output::write_gaps(&dir.join("gaps.csv"), &report)?;
        output::write_trajectories(&dir.join("traj.csv"), &problem, &report)?;
    }
    let summary = output::Summary::new(&problem, &report);
    if cfg.output.wants(Format::Json) {
        output::write_text(&dir.join("effective_config.json"), &cfg.to_json())?;
        output::write_json(&dir.join("summary.json"), &summary)?;
    }
    say(
        quiet,
        format!(
            "{}: {} paths, {} certified, max gap {:.3e}, mean gap {:.3e}",
            summary.instance,
            summary.n_paths,
            certified_count(&report),
            summary.max_gap,
            summary.mean_gap
        ),
    );
    for f in &summary.failures {
        say(quiet, format!("  {f}"));
    }
    Ok(certification(&report))
}

/// One named check of `validate`.
#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn integrands(problem: &Problem) -> Vec<ScalarConvex> {
    match &problem.kind {
        InstanceKind::Parabolic(j) | InstanceKind::PorousMedia(j) => vec![j.clone()],
        InstanceKind::TvFlow => vec![ScalarConvex::AbsValue],
        InstanceKind::ObstacleVi => vec![ScalarConvex::Quadratic(1.0), ScalarConvex::nonneg()],
        InstanceKind::ScalarLinear(a) if *a > 0.0 => vec![ScalarConvex::Quadratic(*a)],
        _ => vec![],
    }
}

const PROBES: usize = 1000;

/// Worst cases of the Fenchel-Young, Moreau and finite-difference checks
/// over random probes of one integrand.
#[derive(Debug, Clone, Default)]
pub struct FenchelProbe {
    /// Smallest relative Fenchel-Young gap.
    pub min_fy: f64,
    pub max_moreau: f64,
    /// Largest relative mismatch between derivative and central difference.
    pub max_fd: f64,
    pub errors: Vec<String>,
}

impl FenchelProbe {
    pub fn passed(&self) -> bool {
        self.errors.is_empty() && self.min_fy >= -1e-10 && self.max_moreau <= 1e-8 && self.max_fd <= 1e-5
    }
}

pub fn fenchel_probe(f: &ScalarConvex, probes: usize, rng: &mut ChaCha8Rng) -> FenchelProbe {
    let mut out = FenchelProbe::default();
    for _ in 0..probes {
        let u: f64 = rng.random_range(-4.0..4.0);
        let v: f64 = rng.random_range(-4.0..4.0);
        let (fu, fv) = (f.eval(u), f.conjugate(v));
        if fu.is_finite() && fv.is_finite() {
            out.min_fy = out.min_fy.min(f.fenchel_young_gap(u, v) / (1.0 + fu.abs() + fv.abs()));
        }
        let tau: f64 = rng.random_range(0.05..4.0);
        match f.moreau_identity_residual(v, tau) {
            Ok(r) => out.max_moreau = out.max_moreau.max(r / (1.0 + v.abs())),
            Err(e) => out.errors.push(e.to_string()),
        }
        if let Some(d) = f.derivative(u) {
            let h = 1e-6 * (1.0 + u.abs());
            let (a, b) = (f.eval(u + h), f.eval(u - h));
            if a.is_finite() && b.is_finite() && u.abs() > 2.0 * h {
                out.max_fd = out.max_fd.max(((a - b) / (2.0 * h) - d).abs() / (1.0 + d.abs()));
            }
        }
    }
    out
}

fn fenchel_suite(problem: &Problem, rng: &mut ChaCha8Rng) -> SuiteResult {
    let mut worst = FenchelProbe::default();
    for f in integrands(problem) {
        let p = fenchel_probe(&f, PROBES, rng);
        worst.min_fy = worst.min_fy.min(p.min_fy);
        worst.max_moreau = worst.max_moreau.max(p.max_moreau);
        worst.max_fd = worst.max_fd.max(p.max_fd);
        worst.errors.extend(p.errors);
    }
    let mut errors = std::mem::take(&mut worst.errors);
    if let InstanceKind::FiniteDimVi { set, .. } = &problem.kind {
        for _ in 0..PROBES {
            let z: Vec<f64> = (0..set.dim()).map(|_| rng.random_range(-3.0..3.0)).collect();
            let p = set.project(&z);
            let n: Vec<f64> = z.iter().zip(&p).map(|(a, b)| a - b).collect();
            if !set.normal_cone_contains(&p, &n, 1e-8) {
                errors.push(format!("projection of {z:?} fails the normal-cone test"));
                break;
            }
        }
        if let ConvexSet::Polytope { .. } = set {
            // support through a projection of a far point: h_K(v) ≥ (v, P(Rv))
            let v: Vec<f64> = (0..set.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let far: Vec<f64> = v.iter().map(|x| 1e3 * x).collect();
            let p = set.project(&far);
            let lower: f64 = v.iter().zip(&p).map(|(a, b)| a * b).sum();
            if set.support(&v) < lower - 1e-8 {
                errors.push("support function below a feasible pairing".into());
            }
        }
    }
    worst.errors = errors;
    SuiteResult {
        name: "fenchel",
        passed: worst.passed(),
        detail: format!(
            "min FY gap {:.2e}, max Moreau residual {:.2e}, max derivative mismatch {:.2e}{}",
            worst.min_fy,
            worst.max_moreau,
            worst.max_fd,
            if worst.errors.is_empty() { String::new() } else { format!("; {}", worst.errors.join("; ")) }
        ),
    }
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize, amp: f64) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| amp * rng.random_range(-1.0..1.0)).collect()).collect()
}

fn adjoint_suite(problem: &Problem, seed: u64, rng: &mut ChaCha8Rng) -> anyhow::Result<SuiteResult> {
    let mut worst_grad = 0.0_f64;
    if let Some(g) = problem.space.grid() {
        for _ in 0..100 {
            let v: Vec<f64> = (0..g.dim_in()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..g.dim_out()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lhs: f64 = g.apply(&v).iter().zip(&w).map(|(a, b)| a * b).sum();
            let rhs: f64 = v.iter().zip(g.apply_adjoint(&w)).map(|(a, b)| a * b).sum();
            worst_grad = worst_grad.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
        }
    }
    let ctx = problem.sample_context(seed)?;
    let mut worst_weak = 0.0_f64;
    for _ in 0..20 {
        let proc = DiscreteProcess::from_rows(random_rows(rng, ctx.steps(), ctx.dim(), 1.0));
        let theta = random_rows(rng, ctx.steps(), ctx.dim(), 1.0);
        let weak = apply_b_weak(&ctx, &proc, &theta).total();
        let strong = strong_pairing(&ctx, &proc, &theta);
        worst_weak = worst_weak.max((weak - strong).abs() / (1.0 + strong.abs()));
    }
    Ok(SuiteResult {
        name: "adjoint",
        passed: worst_grad <= 1e-12 && worst_weak <= 1e-9,
        detail: format!("gradient adjoint mismatch {worst_grad:.2e}, weak/strong mismatch {worst_weak:.2e}"),
    })
}

fn energy_suite(problem: &Problem) -> SuiteResult {
    // exact only without noise; the noisy identity holds in expectation
    let ctx = noise_free(problem).deterministic_context();
    let e = bform_energy_check(&ctx, &polynomial_test_process(&ctx));
    let defect = (e.lhs - e.rhs_identity).abs() / (1.0 + e.lhs.abs());
    let bound = e.lhs - e.rhs_bound;
    SuiteResult {
        name: "energy",
        passed: defect <= 1e-10 && bound >= -1e-10 * (1.0 + e.lhs.abs()),
        detail: format!("identity defect {defect:.2e}, coercivity margin {bound:.3e}"),
    }
}

fn gap_suite(problem: &Problem, seed: u64, rng: &mut ChaCha8Rng) -> anyhow::Result<SuiteResult> {
    let mut worst = f64::INFINITY;
    for i in 0..PROBES as u64 {
        let ctx = problem.sample_context(seed.wrapping_add(i % 4))?;
        let xs: Vec<Vec<f64>> = random_rows(rng, ctx.steps(), ctx.dim(), 0.5)
            .iter()
            .map(|z| domain_point(problem, z))
            .collect();
        let proc = inverse_transform(&ctx, &xs);
        let u: Vec<Vec<f64>> = weighted_b(&ctx, &proc).into_iter().map(|r| r.into_iter().map(|v| -v).collect()).collect();
        let rep = eval_gap(problem, &ctx, &proc, &u)?;
        if rep.gap.is_finite() {
            worst = worst.min(rep.gap / (1.0 + rep.g1.abs() + rep.g2.abs()));
        }
    }
    Ok(SuiteResult {
        name: "gap",
        passed: worst >= -1e-8,
        detail: format!("smallest relative gap over random feasible pairs {worst:.3e}"),
    })
}

/// Runs the property suites on the configured instance.
pub fn validate_suites(cfg: &RunConfig) -> anyhow::Result<Vec<SuiteResult>> {
    let problem = cfg.build_problem()?;
    cfg.solver_config()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.paths.base_seed);
    Ok(vec![
        SuiteResult {
            name: "hypothesis",
            passed: true,
            detail: format!("lambda = {} > nu = {}, delta = {}", problem.lambda, problem.nu(), problem.delta()),
        },
        energy_suite(&problem),
        fenchel_suite(&problem, &mut rng),
        adjoint_suite(&problem, cfg.paths.base_seed, &mut rng)?,
        gap_suite(&problem, cfg.paths.base_seed, &mut rng)?,
    ])
}

pub fn cmd_validate(cfg: &RunConfig, quiet: bool) -> anyhow::Result<Outcome> {
    let suites = validate_suites(cfg)?;
    for s in &suites {
        say(quiet, format!("{:<10} {}  {}", s.name, if s.passed { "pass" } else { "FAIL" }, s.detail));
    }
    let failed: Vec<&str> = suites.iter().filter(|s| !s.passed).map(|s| s.name).collect();
    Ok(if failed.is_empty() {
        Outcome::Success
    } else {
        Outcome::ChecksFailed(format!("suites failed: {}", failed.join(", ")))
    })
}

/// Reference for `compare`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OracleName {
    Exact,
    ImplicitEuler,
    SmoothedTv,
}

#[derive(Debug, Clone, Default)]
pub struct CompareOptions {
    /// Time-step counts; defaults to `N/4, N/2, N` of the config.
    pub levels: Option<Vec<usize>>,
    /// Steps of the reference path; defaults to `8 max(levels)` for the
    /// implicit Euler oracle and `max(levels)` for the exact one.
    pub n_ref: Option<usize>,
    /// Smoothing parameters; defaults to `0.1, 0.01, 0.001`.
    pub eps: Option<Vec<f64>>,
}

pub fn compare_rows(cfg: &RunConfig, oracle: OracleName, opts: &CompareOptions) -> anyhow::Result<Vec<Discrepancy>> {
    let problem = cfg.build_problem()?;
    let solver = cfg.solver_config()?;
    let n = cfg.grid.n;
    let levels = opts.levels.clone().unwrap_or_else(|| vec![(n / 4).max(1), (n / 2).max(1), n]);
    let top = levels.iter().copied().max().unwrap_or(n);
    let incompatible = |e: beso_core::Error| -> anyhow::Error {
        match e {
            beso_core::Error::IncompatibleOracle { .. } => ConfigError(e.to_string()).into(),
            other => other.into(),
        }
    };
    let rows = match oracle {
        OracleName::Exact => refinement_study(&problem, &solver, Oracle::Exact, &levels, opts.n_ref.unwrap_or(top), cfg.paths.n_paths, cfg.paths.base_seed),
        OracleName::ImplicitEuler => refinement_study(
            &problem,
            &solver,
            Oracle::ImplicitEuler,
            &levels,
            opts.n_ref.unwrap_or(8 * top),
            cfg.paths.n_paths,
            cfg.paths.base_seed,
        ),
        OracleName::SmoothedTv => {
            let eps = opts.eps.clone().unwrap_or_else(|| vec![0.1, 0.01, 0.001]);
            smoothing_ladder(&problem, &solver, &eps, cfg.paths.n_paths, cfg.paths.base_seed)
        }
    }
    .map_err(incompatible)?;
    Ok(rows)
}

/// Writes `compare.csv` and reports the observed order.
pub fn cmd_compare(cfg: &RunConfig, oracle: OracleName, opts: &CompareOptions, quiet: bool) -> anyhow::Result<Outcome> {
    let rows = compare_rows(cfg, oracle, opts)?;
    let dir = out_dir(cfg)?;
    output::write_compare(&dir.join("compare.csv"), &rows)?;
    for r in &rows {
        say(quiet, format!("{:>12.4e}  {:.6e}  {:.3}", r.resolution, r.discrepancy, r.factor));
    }
    if oracle != OracleName::SmoothedTv {
        say(quiet, format!("observed order {:.3}", observed_order(&rows)));
    }
    Ok(Outcome::Success)
}

/// Parameter varied by `sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    /// Time steps.
    N,
    /// Interior grid nodes.
    M,
    Paths,
    Lambda,
    /// Smoothing parameter of the Huber-regularized TV flow.
    Eps,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::N => "n",
            Self::M => "m",
            Self::Paths => "paths",
            Self::Lambda => "lambda",
            Self::Eps => "eps",
        }
    }
}

fn as_count(v: f64, what: &str) -> Result<usize, ConfigError> {
    if v >= 1.0 && v.fract() == 0.0 && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(ConfigError(format!("{what} must be a positive integer, got {v}")))
    }
}

/// Runs the solver once per value; returns the reports in value order.
pub fn sweep_runs(cfg: &RunConfig, param: SweepParam, values: &[f64]) -> anyhow::Result<Vec<(f64, ExpectationReport)>> {
    let mut out = Vec::with_capacity(values.len());
    for &v in values {
        let mut c = cfg.clone();
        match param {
            SweepParam::N => c.grid.n = as_count(v, "n")?,
            SweepParam::M => c.grid.m = Some(as_count(v, "m")?),
            SweepParam::Paths => c.paths.n_paths = as_count(v, "paths")?,
            SweepParam::Lambda => c.instance.set_lambda(v),
            SweepParam::Eps => {}
        }
        let mut problem = c.build_problem()?;
        if param == SweepParam::Eps {
            if !matches!(problem.kind, InstanceKind::TvFlow) {
                return Err(ConfigError("an eps sweep needs a tv_flow instance".into()).into());
            }
            if !(v > 0.0) {
                return Err(ConfigError(format!("eps must be positive, got {v}")).into());
            }
            problem = smoothed_tv_problem(&problem, v)?;
        }
        let report = run_paths(&c, &problem)?;
        out.push((v, report));
    }
    Ok(out)
}

/// Writes `sweep.csv` (one aggregate row per value) and `sweep_gaps.csv`
/// (every path of every value).
pub fn cmd_sweep(cfg: &RunConfig, param: SweepParam, values: &[f64], quiet: bool) -> anyhow::Result<Outcome> {
    if values.is_empty() {
        return Err(ConfigError("sweep needs at least one value".into()).into());
    }
    let runs = sweep_runs(cfg, param, values)?;
    let dir = out_dir(cfg)?;
    let rows: Vec<Vec<String>> = runs.iter().map(|(v, r)| output::sweep_row(param.name(), *v, r)).collect();
    output::write_sweep(&dir.join("sweep.csv"), &rows)?;
    output::write_sweep_gaps(&dir.join("sweep_gaps.csv"), param.name(), &runs)?;
    if cfg.output.wants(Format::Json) {
        output::write_text(&dir.join("effective_config.json"), &cfg.to_json())?;
    }
    let mut failing = Vec::new();
    for (v, r) in &runs {
        say(
            quiet,
            format!("{}={v:<10} certified={} max gap {:.3e} energy {:.6e}", param.name(), r.all_certified, r.max_gap, r.energy.mean),
        );
        if certification(r) != Outcome::Success {
            failing.push(format!("{}={v}", param.name()));
        }
    }
    Ok(if failing.is_empty() {
        Outcome::Success
    } else {
        Outcome::ChecksFailed(format!("not certified at {}", failing.join(", ")))
    })
}
