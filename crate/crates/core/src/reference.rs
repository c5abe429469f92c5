//! Independent reference schemes for cross-checking the solver.
//!
//! The step engines here avoid the solver's resolvents where an
//! alternative exists: dense LU for quadratic integrands, the primal-dual
//! proximal iteration for nonquadratic gradient integrands, projected
//! Gauss-Seidel for the obstacle problem.

use crate::convex::ScalarConvex;
use crate::error::{Error, Result};
use crate::functional::{InstanceKind, Problem};
use crate::grid::{SpaceGrid1D, StateSpace, TimeGrid};
use crate::linalg::norm_inf;
use crate::resolvent::{parabolic_primal_dual, resolvent_vi_diag, ResolveOptions};
use crate::solver::{path_seed, solve_path, with_thread_cap, SolverConfig};
use crate::transform::{DiscreteProcess, TransformContext};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

fn reference_options() -> ResolveOptions {
    ResolveOptions {
        tol: 1e-11,
        max_iters: 2000,
        fixed_steps: None,
    }
}

fn dense_quadratic_step(g: &SpaceGrid1D, a: f64, c: &[f64], r: &[f64]) -> Result<Vec<f64>> {
    let mut m = g.laplacian().to_dense() * a;
    for i in 0..c.len() {
        m[(i, i)] += c[i];
    }
    m.lu()
        .solve(&nalgebra::DVector::from_column_slice(r))
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::Breakdown("singular step matrix".into()))
}

/// Projected Gauss-Seidel for `min ½ X'(L + C)X - r'X`, `X ≥ 0`.
fn obstacle_pgs(g: &SpaceGrid1D, c: &[f64], r: &[f64]) -> Result<Vec<f64>> {
    let m = g.nodes();
    let l = g.laplacian();
    let mut x = vec![0.0; m];
    for sweep in 0..200_000 {
        let mut change = 0.0_f64;
        for i in 0..m {
            let mut s = r[i];
            if i > 0 {
                s -= l.lower[i - 1] * x[i - 1];
            }
            if i + 1 < m {
                s -= l.upper[i] * x[i + 1];
            }
            let v = (s / (l.diag[i] + c[i])).max(0.0);
            change = change.max((v - x[i]).abs());
            x[i] = v;
        }
        if change <= 1e-14 * (1.0 + norm_inf(&x)) {
            return Ok(x);
        }
        if sweep == 199_999 {
            return Err(Error::NotConverged {
                what: "projected Gauss-Seidel",
                iters: sweep,
                residual: change,
            });
        }
    }
    Ok(x)
}

/// Solves `c X - r + ∂φ(X) ∋ 0` with the reference engines.
fn reference_step(problem: &Problem, c: &[f64], r: &[f64], warm: &[f64]) -> Result<Vec<f64>> {
    let opts = reference_options();
    match (&problem.kind, &problem.space) {
        (InstanceKind::Parabolic(ScalarConvex::Quadratic(a)), StateSpace::L2(g)) => dense_quadratic_step(g, *a, c, r),
        (InstanceKind::Parabolic(j), StateSpace::L2(g)) => Ok(parabolic_primal_dual(g, j, c, r, Some(warm), &opts)?.x),
        (InstanceKind::TvFlow, StateSpace::L2(g)) => {
            Ok(parabolic_primal_dual(g, &ScalarConvex::AbsValue, c, r, Some(warm), &opts)?.x)
        }
        (InstanceKind::ObstacleVi, StateSpace::L2(g)) => obstacle_pgs(g, c, r),
        (InstanceKind::FiniteDimVi { a0, set }, _) => resolvent_vi_diag(a0, set, c, r, Some(warm), &opts),
        (InstanceKind::ScalarLinear(a), _) => Ok(vec![r[0] / (c[0] + a)]),
        _ => Ok(problem.resolve(c, r, Some(warm), &opts)?.x),
    }
}

/// The whole-path linear system of the quadratic instance `j = a z²/2`,
/// `P X_k + e^{W_k} (ℬy)_k = 0` with `P = a DᵀD + δ`, assembled densely in
/// the unknowns `y_1..y_N` and solved by LU. Returns the rows `y_k`.
pub fn dense_heat_kkt(ctx: &TransformContext, a: f64) -> Result<Vec<Vec<f64>>> {
    let g = ctx
        .space
        .grid()
        .ok_or_else(|| Error::InvalidInstance("dense KKT needs a spatial grid".into()))?;
    let m = g.nodes();
    let n = ctx.steps();
    let mut p = g.laplacian().to_dense() * a;
    for i in 0..m {
        p[(i, i)] += ctx.delta;
    }
    let coef: Vec<f64> = ctx.mu_field.iter().map(|mu| mu + ctx.nu + ctx.delta).collect();
    let c = DMatrix::from_diagonal(&DVector::from_column_slice(&coef));
    let x = DVector::from_column_slice(&ctx.x);
    let mut big = DMatrix::zeros(n * m, n * m);
    let mut rhs = DVector::zeros(n * m);
    for k in 1..=n {
        let dt = ctx.time.dt(k);
        let e = DMatrix::from_diagonal(&DVector::from_vec(ctx.exp_w(k)));
        let diag = &p * &e + &e * (DMatrix::identity(m, m) / dt + &c);
        let r0 = (k - 1) * m;
        big.view_mut((r0, r0), (m, m)).copy_from(&diag);
        if k > 1 {
            big.view_mut((r0, r0 - m), (m, m)).copy_from(&(-&e / dt));
        }
        rhs.rows_mut(r0, m).copy_from(&(-(&p * &e + &e * &c) * &x));
    }
    let y = big.lu().solve(&rhs).ok_or_else(|| Error::Breakdown("singular dense KKT system".into()))?;
    Ok((0..n).map(|k| y.rows(k * m, m).iter().copied().collect()).collect())
}

/// Implicit Euler for `dy/dt + e^{-W} A(e^W (y + x)) + (μ + λ)(y + x) ∋ 0`
/// in the transformed variable.
pub fn implicit_euler_transformed(problem: &Problem, ctx: &TransformContext) -> Result<DiscreteProcess> {
    let n = ctx.steps();
    let dim = ctx.dim();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut y_prev = vec![0.0; dim];
    let mut x_prev = ctx.x.clone();
    for k in 1..=n {
        let dt = ctx.time.dt(k);
        let e = ctx.exp_w(k);
        // multiply the step by e^{W_k}: c X - e^{W_k}(y_{k-1} + x)/Δt + ∂φ(X) ∋ 0
        let c: Vec<f64> = ctx.mu_field.iter().map(|m| 1.0 / dt + m + ctx.lambda).collect();
        let r: Vec<f64> = (0..dim).map(|i| e[i] * (y_prev[i] + ctx.x[i]) / dt).collect();
        let x = reference_step(problem, &c, &r, &x_prev)?;
        let y: Vec<f64> = (0..dim).map(|i| x[i] / e[i] - ctx.x[i]).collect();
        x_prev = x;
        y_prev = y.clone();
        rows.push(y);
    }
    Ok(DiscreteProcess::from_rows(rows))
}

/// `X(t_k) = x exp(W(t_k) - μ t_k - (a + λ) t_k)`, `k = 0..=N`, for the
/// scalar linear equation (`μ = ½ μ_1² e_1²`).
pub fn exact_scalar_linear(ctx: &TransformContext, a: f64) -> Vec<f64> {
    let mu = ctx.mu_field[0];
    ctx.time
        .points()
        .iter()
        .zip(&ctx.path.w)
        .map(|(t, w)| ctx.x[0] * (w[0] - mu * t - (a + ctx.lambda) * t).exp())
        .collect()
}

fn states(ctx: &TransformContext, proc: &DiscreteProcess) -> Vec<Vec<f64>> {
    crate::transform::forward_transform(ctx, proc)
}

/// Implicit Euler on the Huber-smoothed total variation flow; returns
/// `X(t_k)` for `k = 1..=N`.
pub fn tv_flow_smoothed(problem: &Problem, ctx: &TransformContext, eps: f64) -> Result<Vec<Vec<f64>>> {
    if !matches!(problem.kind, InstanceKind::TvFlow) {
        return Err(Error::IncompatibleOracle {
            oracle: "smoothed-tv".into(),
            instance: problem.kind.name().into(),
        });
    }
    let smoothed = smoothed_tv_problem(problem, eps)?;
    let sol = solve_path(&smoothed, ctx, &SolverConfig::default())?;
    Ok(sol.x[1..].to_vec())
}

/// The TV instance with `|·|` replaced by its Moreau envelope.
pub fn smoothed_tv_problem(problem: &Problem, eps: f64) -> Result<Problem> {
    let j = ScalarConvex::huber(eps);
    j.validate()?;
    Problem::new(
        InstanceKind::Parabolic(j),
        problem.space.clone(),
        problem.time.clone(),
        problem.noise.clone(),
        problem.x.clone(),
        problem.lambda,
    )
}

/// Implicit Euler with the variational-inequality resolvent in each step;
/// returns `X(t_k)` for `k = 1..=N`.
pub fn projected_scheme_fdvi(problem: &Problem, ctx: &TransformContext) -> Result<Vec<Vec<f64>>> {
    if !matches!(problem.kind, InstanceKind::FiniteDimVi { .. }) {
        return Err(Error::IncompatibleOracle {
            oracle: "projected-scheme".into(),
            instance: problem.kind.name().into(),
        });
    }
    let proc = implicit_euler_transformed(problem, ctx)?;
    Ok(states(ctx, &proc))
}

/// `(Σ Δt_k |a_k - b_k|²_H)^{1/2}` over rows `k = 1..=N`.
pub fn h_distance(space: &StateSpace, time: &TimeGrid, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(k, (x, y))| {
            let d: Vec<f64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
            time.dt(k + 1) * space.norm_sq(&d)
        })
        .sum::<f64>()
        .sqrt()
}

/// Reference against which [`refinement_study`] measures the solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Oracle {
    /// Closed-form scalar solution; strong error at the final time.
    Exact,
    /// Implicit Euler on the finest grid.
    ImplicitEuler,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discrepancy {
    /// Time steps `N` (or `ε` for the smoothing ladder).
    pub resolution: f64,
    pub discrepancy: f64,
    /// `discrepancy(previous) / discrepancy(this)`; `NaN` on the first row.
    pub factor: f64,
}

fn with_factors(rows: Vec<(f64, f64)>) -> Vec<Discrepancy> {
    let mut out = Vec::with_capacity(rows.len());
    let mut prev: Option<f64> = None;
    for (resolution, discrepancy) in rows {
        out.push(Discrepancy {
            resolution,
            discrepancy,
            factor: prev.map_or(f64::NAN, |p| p / discrepancy),
        });
        prev = Some(discrepancy);
    }
    out
}

/// Observed order `log2` of the mean factor between successive halvings.
pub fn observed_order(rows: &[Discrepancy]) -> f64 {
    let n = rows.len();
    if n < 2 {
        return f64::NAN;
    }
    let first = rows[0];
    let last = rows[n - 1];
    (first.discrepancy / last.discrepancy).ln() / (last.resolution / first.resolution).ln()
}

/// Solver discrepancy at each `N` in `levels` against `oracle`, averaged
/// (root mean square) over `n_paths` paths. All levels use restrictions of
/// one fine path with `n_ref` steps per sample, which every level must
/// divide.
pub fn refinement_study(
    problem: &Problem,
    cfg: &SolverConfig,
    oracle: Oracle,
    levels: &[usize],
    n_ref: usize,
    n_paths: usize,
    base_seed: u64,
) -> Result<Vec<Discrepancy>> {
    if let (Oracle::Exact, k) = (oracle, &problem.kind) {
        if !matches!(k, InstanceKind::ScalarLinear(_)) {
            return Err(Error::IncompatibleOracle {
                oracle: "exact".into(),
                instance: k.name().into(),
            });
        }
    }
    let fine_time = TimeGrid::uniform(n_ref, problem.time.horizon())?;
    let fine = problem.with_time(fine_time.clone());
    let per_path: Vec<Result<Option<Vec<f64>>>> = with_thread_cap(|| {
        (0..n_paths)
            .into_par_iter()
            .map(|i| {
                let seed = path_seed(base_seed, i);
                let path = match problem.noise.sample_path(&fine_time, problem.dim(), seed) {
                    Ok(p) => p,
                    Err(Error::PathRejected { .. }) => return Ok(None),
                    Err(e) => return Err(e),
                };
                let fine_ctx = fine.context(path.clone())?;
                let reference: Vec<Vec<f64>> = match oracle {
                    Oracle::Exact => {
                        let a = match problem.kind {
                            InstanceKind::ScalarLinear(a) => a,
                            _ => unreachable!(),
                        };
                        exact_scalar_linear(&fine_ctx, a).into_iter().map(|v| vec![v]).collect()
                    }
                    Oracle::ImplicitEuler => {
                        let proc = implicit_euler_transformed(&fine, &fine_ctx)?;
                        let mut rows = vec![fine_ctx.x.clone()];
                        rows.extend(states(&fine_ctx, &proc));
                        rows
                    }
                };
                let mut errs = Vec::with_capacity(levels.len());
                for &n in levels {
                    if n == 0 || n_ref % n != 0 {
                        return Err(Error::InvalidGrid(format!("level {n} does not divide {n_ref}")));
                    }
                    let factor = n_ref / n;
                    let coarse = problem.with_time(fine_time.coarsen(factor)?);
                    let ctx = coarse.context(path.subsample(factor)?)?;
                    let sol = solve_path(&coarse, &ctx, cfg)?;
                    let restricted: Vec<Vec<f64>> = reference.iter().step_by(factor).cloned().collect();
                    let e = match oracle {
                        Oracle::Exact => (sol.x[n][0] - restricted[n][0]).powi(2),
                        Oracle::ImplicitEuler => h_distance(&coarse.space, &coarse.time, &sol.x[1..], &restricted[1..]).powi(2),
                    };
                    errs.push(e);
                }
                Ok(Some(errs))
            })
            .collect()
    });
    let mut sums = vec![0.0; levels.len()];
    let mut count = 0usize;
    for r in per_path {
        if let Some(errs) = r? {
            for (s, e) in sums.iter_mut().zip(errs) {
                *s += e;
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidInstance("every path was rejected".into()));
    }
    Ok(with_factors(
        levels
            .iter()
            .zip(sums)
            .map(|(&n, s)| (n as f64, (s / count as f64).sqrt()))
            .collect(),
    ))
}

/// Distance between the TV solution and its smoothed approximations for
/// each `ε`, root mean square over paths.
pub fn smoothing_ladder(problem: &Problem, cfg: &SolverConfig, eps: &[f64], n_paths: usize, base_seed: u64) -> Result<Vec<Discrepancy>> {
    if !matches!(problem.kind, InstanceKind::TvFlow) {
        return Err(Error::IncompatibleOracle {
            oracle: "smoothed-tv".into(),
            instance: problem.kind.name().into(),
        });
    }
    let per_path: Vec<Result<Option<Vec<f64>>>> = with_thread_cap(|| {
        (0..n_paths)
            .into_par_iter()
            .map(|i| {
                let ctx = match problem.sample_context(path_seed(base_seed, i)) {
                    Ok(c) => c,
                    Err(Error::PathRejected { .. }) => return Ok(None),
                    Err(e) => return Err(e),
                };
                let exact = solve_path(problem, &ctx, cfg)?;
                let mut out = Vec::with_capacity(eps.len());
                for &e in eps {
                    let xe = tv_flow_smoothed(problem, &ctx, e)?;
                    out.push(h_distance(&problem.space, &problem.time, &exact.x[1..], &xe).powi(2));
                }
                Ok(Some(out))
            })
            .collect()
    });
    let mut sums = vec![0.0; eps.len()];
    let mut count = 0usize;
    for r in per_path {
        if let Some(v) = r? {
            for (s, e) in sums.iter_mut().zip(v) {
                *s += e;
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidInstance("every path was rejected".into()));
    }
    Ok(with_factors(
        eps.iter().zip(sums).map(|(&e, s)| (e, (s / count as f64).sqrt())).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{Basis, NoiseModel};

    #[test]
    fn scalar_exact_deterministic_decay() {
        let s = StateSpace::Euclidean(1);
        let p = Problem::new(
            InstanceKind::ScalarLinear(0.5),
            s,
            TimeGrid::uniform(4, 1.0).unwrap(),
            NoiseModel::zero(),
            vec![2.0],
            1.0,
        )
        .unwrap();
        let ctx = p.deterministic_context();
        let x = exact_scalar_linear(&ctx, 0.5);
        assert_eq!(x[0], 2.0);
        assert!((x[4] - 2.0 * (-1.5_f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn reference_matches_solver_for_heat() {
        let g = SpaceGrid1D::new(8, 1.0).unwrap();
        let s = StateSpace::L2(g.clone());
        let noise = NoiseModel::new(vec![0.4], &[Basis::Sine(1)], &s).unwrap();
        let x = g.coords().iter().map(|x| x * (1.0 - x)).collect();
        let p = Problem::new(
            InstanceKind::Parabolic(ScalarConvex::Quadratic(1.0)),
            s,
            TimeGrid::uniform(16, 1.0).unwrap(),
            noise,
            x,
            1.0,
        )
        .unwrap();
        let ctx = p.sample_context(9).unwrap();
        let proc = implicit_euler_transformed(&p, &ctx).unwrap();
        let sol = solve_path(&p, &ctx, &SolverConfig::default()).unwrap();
        for (a, b) in proc.y.iter().flatten().zip(sol.proc.y.iter().flatten()) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
