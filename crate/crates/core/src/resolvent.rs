//! Node resolvents: solve `c ⊙ X - r + ∂_H φ(X) ∋ 0` for one time level.
//!
//! The same engine serves the implicit step of the solver sweep
//! (`c = 1/Δt + μ + λ`), the conjugate witness of `ψ*` (`c = δ`), and the
//! reference schemes.

use crate::convex::{ConvexSet, ScalarConvex};
use crate::error::{Error, Result};
use crate::functional::InstanceKind;
use crate::grid::{SpaceGrid1D, StateSpace};
use crate::linalg::{box_qp_pdas, dot, norm_inf, Tridiagonal};

#[derive(Debug, Clone, Copy)]
pub(crate) struct ResolveOptions {
    /// Residual tolerance, relative to `1 + |r|_∞`.
    pub tol: f64,
    pub max_iters: usize,
    /// `(τ, σ)` for the primal-dual fallback; automatic when `None`.
    pub fixed_steps: Option<(f64, f64)>,
}

impl Default for ResolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iters: 500,
            fixed_steps: None,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Resolved {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

pub(crate) fn resolve(
    kind: &InstanceKind,
    space: &StateSpace,
    c: &[f64],
    r: &[f64],
    warm: Option<&[f64]>,
    opts: &ResolveOptions,
) -> Result<Resolved> {
    match (kind, space) {
        (InstanceKind::Parabolic(j), StateSpace::L2(g)) => parabolic(g, j, c, r, warm, opts),
        (InstanceKind::TvFlow, StateSpace::L2(g)) => tv(g, c, r, 0.0, opts),
        (InstanceKind::PorousMedia(j), StateSpace::HMinus1(g)) => porous(g, j, c, r, warm, opts),
        (InstanceKind::ObstacleVi, StateSpace::L2(g)) => obstacle(g, c, r, opts),
        (InstanceKind::FiniteDimVi { a0, set }, StateSpace::Euclidean(_)) => {
            let x = resolvent_vi_diag(a0, set, c, r, warm, opts)?;
            let residual = vi_residual(a0, set, c, r, &x);
            Ok(Resolved {
                x,
                residual,
                iterations: 0,
            })
        }
        (InstanceKind::ScalarLinear(a), StateSpace::Euclidean(1)) => Ok(Resolved {
            x: vec![r[0] / (c[0] + a)],
            residual: 0.0,
            iterations: 0,
        }),
        _ => Err(Error::InvalidInstance(format!(
            "instance {kind:?} is not defined on this state space"
        ))),
    }
}

fn tol_abs(opts: &ResolveOptions, r: &[f64]) -> f64 {
    opts.tol * (1.0 + norm_inf(r))
}

// ---------------------------------------------------------------- parabolic

fn parabolic_energy(g: &SpaceGrid1D, j: &ScalarConvex, c: &[f64], r: &[f64], x: &[f64]) -> f64 {
    let quad: f64 = x.iter().zip(c).map(|(xi, ci)| 0.5 * ci * xi * xi).sum::<f64>() - dot(r, x);
    quad + g.gradient(x).iter().map(|q| j.eval(*q)).sum::<f64>()
}

fn parabolic_residual(g: &SpaceGrid1D, j: &ScalarConvex, c: &[f64], r: &[f64], x: &[f64]) -> Vec<f64> {
    let a: Vec<f64> = g
        .gradient(x)
        .iter()
        .map(|q| j.derivative(*q).unwrap_or(f64::NAN))
        .collect();
    let div = g.gradient_adjoint(&a);
    (0..x.len()).map(|i| c[i] * x[i] - r[i] + div[i]).collect()
}

fn parabolic(
    g: &SpaceGrid1D,
    j: &ScalarConvex,
    c: &[f64],
    r: &[f64],
    warm: Option<&[f64]>,
    opts: &ResolveOptions,
) -> Result<Resolved> {
    if let ScalarConvex::Quadratic(a) = j {
        let mut m = g.laplacian();
        m.scale(*a);
        m.add_diagonal(c);
        let x = m.solve(r)?;
        let residual = norm_inf(&parabolic_residual(g, j, c, r, &x));
        return Ok(Resolved {
            x,
            residual,
            iterations: 1,
        });
    }
    match j {
        ScalarConvex::AbsValue => return tv(g, c, r, 0.0, opts),
        ScalarConvex::Envelope { base, eps } if matches!(base.as_ref(), ScalarConvex::AbsValue) => {
            return tv(g, c, r, *eps, opts)
        }
        _ => {}
    }
    match parabolic_newton(g, j, c, r, warm, opts) {
        Ok(res) => Ok(res),
        Err(_) => parabolic_primal_dual(g, j, c, r, warm, opts),
    }
}

fn parabolic_newton(
    g: &SpaceGrid1D,
    j: &ScalarConvex,
    c: &[f64],
    r: &[f64],
    warm: Option<&[f64]>,
    opts: &ResolveOptions,
) -> Result<Resolved> {
    let m = g.nodes();
    let h = g.h();
    let tol = tol_abs(opts, r);
    let mut x: Vec<f64> = match warm {
        Some(w) => w.to_vec(),
        None => r.iter().zip(c).map(|(a, b)| a / b).collect(),
    };
    let mut energy = parabolic_energy(g, j, c, r, &x);
    if !energy.is_finite() {
        x = vec![0.0; m];
        energy = parabolic_energy(g, j, c, r, &x);
    }
    let mut res = parabolic_residual(g, j, c, r, &x);
    for it in 0..opts.max_iters {
        let rn = norm_inf(&res);
        if rn <= tol {
            return Ok(Resolved {
                x,
                residual: rn,
                iterations: it,
            });
        }
        // Hessian diag(c) + D' diag(j'') D
        let w: Vec<f64> = g
            .gradient(&x)
            .iter()
            .map(|q| j.second_derivative(*q).unwrap_or(1e12).clamp(0.0, 1e12))
            .collect();
        let h2 = h * h;
        let diag: Vec<f64> = (0..m).map(|i| c[i] + (w[i] + w[i + 1]) / h2).collect();
        let off: Vec<f64> = (0..m - 1).map(|i| -w[i + 1] / h2).collect();
        let hess = Tridiagonal::symmetric(diag, off);
        let step = hess.solve(&res)?;
        let slope = -dot(&res, &step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a - t * b).collect();
            let e = parabolic_energy(g, j, c, r, &trial);
            // near the minimizer the energy decrease drops below rounding,
            // so a residual decrease is accepted as well
            let decreasing = e.is_finite()
                && (e <= energy + 1e-4 * t * slope
                    || (e <= energy + 1e-13 * energy.abs().max(1.0)
                        && norm_inf(&parabolic_residual(g, j, c, r, &trial)) <= (1.0 - 1e-4 * t) * rn));
            if decreasing {
                x = trial;
                energy = e;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NotConverged {
                what: "parabolic Newton line search",
                iters: it,
                residual: rn,
            });
        }
        res = parabolic_residual(g, j, c, r, &x);
    }
    Err(Error::NotConverged {
        what: "parabolic Newton",
        iters: opts.max_iters,
        residual: norm_inf(&res),
    })
}

/// Accelerated primal-dual iteration on `min ½Σ c X² - r'X + Σ j((DX)_e)`,
/// used when Newton's method is not applicable.
pub(crate) fn parabolic_primal_dual(
    g: &SpaceGrid1D,
    j: &ScalarConvex,
    c: &[f64],
    r: &[f64],
    warm: Option<&[f64]>,
    opts: &ResolveOptions,
) -> Result<Resolved> {
    let m = g.nodes();
    let knorm = 2.0 / g.h();
    let gamma = c.iter().cloned().fold(f64::INFINITY, f64::min);
    let dual_mod = j.conjugate_modulus();
    let (mut tau, mut sigma) = opts.fixed_steps.unwrap_or((0.95 / knorm, 0.95 / knorm));
    // both sides strongly convex: constant steps with a linear rate
    let linear = opts.fixed_steps.is_none() && dual_mod > 0.0;
    let mu = 2.0 * (gamma * dual_mod).sqrt() / knorm;
    if linear {
        tau = mu / (2.0 * gamma);
        sigma = mu / (2.0 * dual_mod);
    }
    let mut x: Vec<f64> = warm.map_or_else(|| r.iter().zip(c).map(|(a, b)| a / b).collect(), |w| w.to_vec());
    let mut xbar = x.clone();
    let mut p: Vec<f64> = g
        .gradient(&x)
        .iter()
        .map(|q| j.subgradient(*q).unwrap_or(0.0))
        .collect();
    let tol = tol_abs(opts, r);
    let iters = opts.max_iters * 200;
    let mut resid = f64::INFINITY;
    for it in 0..iters {
        let kx = g.gradient(&xbar);
        for e in 0..=m {
            p[e] = j.prox_conjugate(p[e] + sigma * kx[e], sigma)?;
        }
        let kt = g.gradient_adjoint(&p);
        let xold = x.clone();
        for i in 0..m {
            x[i] = (x[i] - tau * kt[i] + tau * r[i]) / (1.0 + tau * c[i]);
        }
        let theta = if linear {
            1.0 / (1.0 + mu)
        } else {
            let th = 1.0 / (1.0 + 2.0 * gamma * tau).sqrt();
            tau *= th;
            sigma /= th;
            th
        };
        for i in 0..m {
            xbar[i] = x[i] + theta * (x[i] - xold[i]);
        }
        if it % 20 == 0 || it + 1 == iters {
            resid = prox_natural_residual(g, j, c, r, &x, &p);
            if resid <= tol {
                return Ok(Resolved {
                    x,
                    residual: resid,
                    iterations: it + 1,
                });
            }
        }
    }
    Err(Error::NotConverged {
        what: "parabolic primal-dual",
        iters,
        residual: resid,
    })
}

/// Residual of the saddle-point system `cX - r + D'p = 0`, `p ∈ ∂j(DX)`.
fn prox_natural_residual(g: &SpaceGrid1D, j: &ScalarConvex, c: &[f64], r: &[f64], x: &[f64], p: &[f64]) -> f64 {
    let kt = g.gradient_adjoint(p);
    let primal = (0..x.len()).map(|i| (c[i] * x[i] - r[i] + kt[i]).abs()).fold(0.0, f64::max);
    let q = g.gradient(x);
    let dual = q
        .iter()
        .zip(p)
        .map(|(qe, pe)| match j.prox_conjugate(pe + qe, 1.0) {
            Ok(s) => (s - pe).abs(),
            Err(_) => f64::INFINITY,
        })
        .fold(0.0, f64::max);
    primal.max(dual)
}

// ----------------------------------------------------------------------- TV

/// Dual box QP of the (Huber-smoothed for `eps > 0`) total variation
/// resolvent: `min ½ p'(D C⁻¹ D' + ε) p - p' D C⁻¹ r` over `|p| ≤ 1`.
fn tv(g: &SpaceGrid1D, c: &[f64], r: &[f64], eps: f64, opts: &ResolveOptions) -> Result<Resolved> {
    let m = g.nodes();
    let h = g.h();
    let h2 = h * h;
    let inv_c: Vec<f64> = c.iter().map(|v| 1.0 / v).collect();
    let diag: Vec<f64> = (0..=m)
        .map(|e| {
            let mut s = 0.0;
            if e < m {
                s += inv_c[e];
            }
            if e > 0 {
                s += inv_c[e - 1];
            }
            s / h2 + eps
        })
        .collect();
    let off: Vec<f64> = (0..m).map(|e| -inv_c[e] / h2).collect();
    let q = Tridiagonal::symmetric(diag, off);
    let cr: Vec<f64> = r.iter().zip(&inv_c).map(|(a, b)| a * b).collect();
    let lin: Vec<f64> = g.gradient(&cr).into_iter().map(|v| -v).collect();
    let lo = vec![-1.0; m + 1];
    let hi = vec![1.0; m + 1];
    let recover = |p: &[f64]| -> Vec<f64> {
        let dtp = g.gradient_adjoint(p);
        (0..m).map(|i| (r[i] - dtp[i]) * inv_c[i]).collect()
    };
    let tol = tol_abs(opts, r);
    let abs = if eps > 0.0 { ScalarConvex::huber(eps) } else { ScalarConvex::AbsValue };
    if let Ok(sol) = box_qp_pdas(&q, &lin, &lo, &hi, None, opts.max_iters.max(4 * (m + 2))) {
        let x = recover(&sol.x);
        let resid = prox_natural_residual(g, &abs, c, r, &x, &sol.x);
        if resid <= tol {
            return Ok(Resolved {
                x,
                residual: resid,
                iterations: sol.iterations,
            });
        }
        return parabolic_primal_dual(g, &abs, c, r, Some(&x), opts);
    }
    parabolic_primal_dual(g, &abs, c, r, None, opts)
}

// ------------------------------------------------------------------ porous

fn porous_energy(l: &Tridiagonal, j: &ScalarConvex, c: &[f64], r: &[f64], x: &[f64]) -> f64 {
    let b: Vec<f64> = x.iter().map(|v| j.derivative(*v).unwrap_or(f64::NAN)).collect();
    let lb = l.apply(&b);
    let mut e = 0.5 * dot(&b, &lb) - dot(r, &b);
    for i in 0..x.len() {
        e += c[i] * (b[i] * x[i] - j.eval(x[i]));
    }
    e
}

fn porous_residual(l: &Tridiagonal, j: &ScalarConvex, c: &[f64], r: &[f64], x: &[f64]) -> Vec<f64> {
    let b: Vec<f64> = x.iter().map(|v| j.derivative(*v).unwrap_or(f64::NAN)).collect();
    let lb = l.apply(&b);
    (0..x.len()).map(|i| c[i] * x[i] - r[i] + lb[i]).collect()
}

fn porous(
    g: &SpaceGrid1D,
    j: &ScalarConvex,
    c: &[f64],
    r: &[f64],
    warm: Option<&[f64]>,
    opts: &ResolveOptions,
) -> Result<Resolved> {
    let m = g.nodes();
    let l = g.laplacian();
    let tol = tol_abs(opts, r);
    let mut x: Vec<f64> = match warm {
        Some(w) => w.to_vec(),
        None => r.iter().zip(c).map(|(a, b)| a / b).collect(),
    };
    let mut energy = porous_energy(&l, j, c, r, &x);
    if !energy.is_finite() {
        x = vec![0.0; m];
        energy = porous_energy(&l, j, c, r, &x);
    }
    let mut res = porous_residual(&l, j, c, r, &x);
    for it in 0..opts.max_iters * 4 {
        let rn = norm_inf(&res);
        if rn <= tol {
            return Ok(Resolved {
                x,
                residual: rn,
                iterations: it,
            });
        }
        // J = C + L diag(β'(X))
        let bp: Vec<f64> = x
            .iter()
            .map(|v| j.second_derivative(*v).unwrap_or(0.0).max(0.0))
            .collect();
        let jac = Tridiagonal::new(
            (0..m - 1).map(|i| l.lower[i] * bp[i]).collect(),
            (0..m).map(|i| c[i] + l.diag[i] * bp[i]).collect(),
            (0..m - 1).map(|i| l.upper[i] * bp[i + 1]).collect(),
        );
        let step = jac.solve(&res)?;
        let grad: Vec<f64> = res.iter().zip(&bp).map(|(f, b)| f * b).collect();
        let slope = -dot(&grad, &step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a - t * b).collect();
            let e = porous_energy(&l, j, c, r, &trial);
            let tres = porous_residual(&l, j, c, r, &trial);
            // accept on energy decrease, or on residual decrease when the
            // energy is flat to roundoff
            let flat = (e - energy).abs() <= 1e-14 * energy.abs().max(1.0);
            if e.is_finite()
                && (e <= energy + 1e-4 * t * slope.min(0.0) || flat && norm_inf(&tres) < rn)
            {
                x = trial;
                energy = e;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NotConverged {
                what: "porous-media Newton line search",
                iters: it,
                residual: rn,
            });
        }
        res = porous_residual(&l, j, c, r, &x);
    }
    Err(Error::NotConverged {
        what: "porous-media Newton",
        iters: opts.max_iters * 4,
        residual: norm_inf(&res),
    })
}

// ---------------------------------------------------------------- obstacle

fn obstacle(g: &SpaceGrid1D, c: &[f64], r: &[f64], opts: &ResolveOptions) -> Result<Resolved> {
    let m = g.nodes();
    let mut q = g.laplacian();
    q.add_diagonal(c);
    let lin: Vec<f64> = r.iter().map(|v| -v).collect();
    let sol = box_qp_pdas(&q, &lin, &vec![0.0; m], &vec![f64::INFINITY; m], None, opts.max_iters.max(4 * (m + 2)))?;
    Ok(Resolved {
        residual: sol.kkt_residual,
        x: sol.x,
        iterations: sol.iterations,
    })
}

// ---------------------------------------------------------------------- VI

fn sym_eig_bounds(a: &nalgebra::DMatrix<f64>) -> (f64, f64) {
    let eig = a.clone().symmetric_eigenvalues();
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Solves `A0 z + δ z + N_K(z) ∋ w`.
pub fn resolvent_vi(a0: &nalgebra::DMatrix<f64>, set: &ConvexSet, delta: f64, w: &[f64]) -> Result<Vec<f64>> {
    let c = vec![delta; w.len()];
    resolvent_vi_diag(a0, set, &c, w, None, &ResolveOptions::default())
}

/// Natural residual `|z - P_K(z - (A0 z + c z - w))|_∞` of the inclusion.
pub(crate) fn vi_residual(a0: &nalgebra::DMatrix<f64>, set: &ConvexSet, c: &[f64], w: &[f64], z: &[f64]) -> f64 {
    let g = vi_grad(a0, c, w, z);
    let trial: Vec<f64> = z.iter().zip(&g).map(|(a, b)| a - b).collect();
    let p = set.project(&trial);
    z.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn vi_grad(a0: &nalgebra::DMatrix<f64>, c: &[f64], w: &[f64], z: &[f64]) -> Vec<f64> {
    let az = a0 * nalgebra::DVector::from_column_slice(z);
    (0..z.len()).map(|i| az[i] + c[i] * z[i] - w[i]).collect()
}

pub(crate) fn resolvent_vi_diag(
    a0: &nalgebra::DMatrix<f64>,
    set: &ConvexSet,
    c: &[f64],
    w: &[f64],
    warm: Option<&[f64]>,
    opts: &ResolveOptions,
) -> Result<Vec<f64>> {
    let d = w.len();
    if a0.nrows() != d || a0.ncols() != d || set.dim() != d {
        return Err(Error::Dimension {
            expected: d,
            got: a0.nrows(),
        });
    }
    let mut q = a0.clone();
    for i in 0..d {
        q[(i, i)] += c[i];
    }
    let (lo, hi) = sym_eig_bounds(&q);
    if !(lo > 0.0) {
        return Err(Error::InvalidInstance("A0 + c is not positive definite".into()));
    }
    let step = 1.0 / hi;
    let kappa = hi / lo;
    let beta = (kappa.sqrt() - 1.0) / (kappa.sqrt() + 1.0);
    let tol = tol_abs(opts, w);
    let mut z = set.project(warm.unwrap_or(w));
    let mut y = z.clone();
    let iters = opts.max_iters * 100;
    for it in 0..iters {
        let g = vi_grad(a0, c, w, &y);
        let trial: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        let zn = set.project(&trial);
        y = zn.iter().zip(&z).map(|(a, b)| a + beta * (a - b)).collect();
        z = zn;
        if it % 10 == 0 && vi_residual(a0, set, c, w, &z) <= tol * 1e-2 {
            break;
        }
    }
    if let Some(p) = polish_face(&q, set, w, &z) {
        if vi_residual(a0, set, c, w, &p) <= vi_residual(a0, set, c, w, &z) {
            z = p;
        }
    }
    let res = vi_residual(a0, set, c, w, &z);
    if res > tol.max(1e-10) {
        return Err(Error::NotConverged {
            what: "variational-inequality resolvent",
            iters,
            residual: res,
        });
    }
    Ok(z)
}

/// Exact solve on the face of a box or orthant identified by `z`.
fn polish_face(q: &nalgebra::DMatrix<f64>, set: &ConvexSet, w: &[f64], z: &[f64]) -> Option<Vec<f64>> {
    let d = z.len();
    let (lo, hi): (Vec<f64>, Vec<f64>) = match set {
        ConvexSet::NonnegOrthant(_) => (vec![0.0; d], vec![f64::INFINITY; d]),
        ConvexSet::Box { lo, hi } => (lo.clone(), hi.clone()),
        ConvexSet::Polytope { .. } => return None,
    };
    let scale = 1e-9 * (1.0 + norm_inf(z));
    let fixed: Vec<Option<f64>> = (0..d)
        .map(|i| {
            if (z[i] - lo[i]).abs() <= scale {
                Some(lo[i])
            } else if (z[i] - hi[i]).abs() <= scale {
                Some(hi[i])
            } else {
                None
            }
        })
        .collect();
    let free: Vec<usize> = (0..d).filter(|&i| fixed[i].is_none()).collect();
    let mut out: Vec<f64> = (0..d).map(|i| fixed[i].unwrap_or(z[i])).collect();
    if free.is_empty() {
        return Some(out);
    }
    let n = free.len();
    let sub = nalgebra::DMatrix::from_fn(n, n, |a, b| q[(free[a], free[b])]);
    let rhs: Vec<f64> = free
        .iter()
        .map(|&i| {
            let mut s = w[i];
            for k in 0..d {
                if let Some(v) = fixed[k] {
                    s -= q[(i, k)] * v;
                }
            }
            s
        })
        .collect();
    let sol = crate::linalg::dense_spd_solve(&sub, &rhs).ok()?;
    for (a, &i) in free.iter().enumerate() {
        if sol[a] < lo[i] || sol[a] > hi[i] {
            return None;
        }
        out[i] = sol[a];
    }
    Some(out)
}
