//! Problem instances, the primal functional `G1`, the dual functional
//! `G2 = Σ Δt ψ*(u)`, and the duality gap that certifies a path.
//!
//! With `X_k = e^{W_k}(y_k + x)` and `u_k = -e^{W_k}(ℬy)_k`, the pathwise
//! functionals are
//!
//! ```text
//! G1(y) = Σ Δt_k [ φ(X_k) + δ/2 |X_k|² - (u_k, X_k) ],
//! G2(u) = Σ Δt_k ψ*(u_k),        ψ = φ + δ/2 |·|²,
//! ```
//!
//! so `G1 + G2` is a sum of Fenchel-Young gaps of `ψ`, nonnegative for every
//! feasible pair and zero exactly at the solution of the implicit scheme.

use crate::convex::{ConvexSet, ScalarConvex};
use crate::error::{Error, Result};
use crate::grid::{StateSpace, TimeGrid};
use crate::linalg::{dot, norm_inf};
use crate::noise::{delta_of, NoiseModel, WienerPath};
use crate::resolvent::{resolve, vi_residual, ResolveOptions};
use crate::transform::{forward_transform, weighted_b, DiscreteProcess, TransformContext};

/// The operator family `A = ∂φ`.
#[derive(Debug, Clone, PartialEq)]
pub enum InstanceKind {
    /// `φ(X) = ∫ j(∇X)` on `L²` with Dirichlet conditions.
    Parabolic(ScalarConvex),
    /// Total variation flow, `φ(X) = ∫ |∇X|`.
    TvFlow,
    /// `φ(X) = ∫ j(X)` on `H^{-1}`, so that `A X = -Δ β(X)` with `β = j'`.
    PorousMedia(ScalarConvex),
    /// `φ(X) = ½ |∇X|² + I_{X ≥ 0}` on `L²`.
    ObstacleVi,
    /// `φ(X) = ½ (A0 X, X) + I_K(X)` on `R^d`.
    FiniteDimVi {
        a0: nalgebra::DMatrix<f64>,
        set: ConvexSet,
    },
    /// `φ(X) = a X² / 2` on `R`.
    ScalarLinear(f64),
}

impl InstanceKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Parabolic(_) => "parabolic",
            Self::TvFlow => "tv_flow",
            Self::PorousMedia(_) => "porous_media",
            Self::ObstacleVi => "obstacle_vi",
            Self::FiniteDimVi { .. } => "finite_dim_vi",
            Self::ScalarLinear(_) => "scalar_linear",
        }
    }
}

/// A fully specified problem: operator, grids, noise, data.
#[derive(Debug, Clone)]
pub struct Problem {
    pub kind: InstanceKind,
    pub space: StateSpace,
    pub time: TimeGrid,
    pub noise: NoiseModel,
    pub x: Vec<f64>,
    pub lambda: f64,
}

const PROBE_TOL: f64 = 1e-9;

impl Problem {
    /// Validates the instance and the hypothesis `λ > ν`.
    pub fn new(
        kind: InstanceKind,
        space: StateSpace,
        time: TimeGrid,
        noise: NoiseModel,
        x: Vec<f64>,
        lambda: f64,
    ) -> Result<Self> {
        let p = Self {
            kind,
            space,
            time,
            noise,
            x,
            lambda,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let dim = self.space.dim();
        if self.x.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: self.x.len(),
            });
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInstance("initial datum must be finite".into()));
        }
        if self.noise.profiles().iter().any(|e| e.len() != dim) {
            return Err(Error::InvalidInstance("noise profiles do not match the state space".into()));
        }
        delta_of(self.lambda, self.noise.nu())?;
        let bad = |m: &str| Err(Error::InvalidInstance(m.to_string()));
        match (&self.kind, &self.space) {
            (InstanceKind::Parabolic(j), StateSpace::L2(_)) => {
                j.validate()?;
                if matches!(j, ScalarConvex::Indicator { .. }) {
                    return bad("parabolic integrand must be finite everywhere");
                }
                if j.eval(0.0) != 0.0 || j.subgradient(0.0).map_or(true, |s| s != 0.0) {
                    return bad("parabolic integrand needs j(0) = 0 and 0 ∈ ∂j(0)");
                }
            }
            (InstanceKind::TvFlow, StateSpace::L2(_)) => {}
            (InstanceKind::PorousMedia(j), StateSpace::HMinus1(_)) => {
                j.validate()?;
                if !j.is_smooth() {
                    return bad("porous-media potential must be differentiable (single-valued β)");
                }
                if j.derivative(0.0) != Some(0.0) {
                    return bad("porous-media nonlinearity needs β(0) = 0");
                }
            }
            (InstanceKind::ObstacleVi, StateSpace::L2(_)) => {
                if self.x.iter().any(|&v| v < 0.0) {
                    return bad("obstacle problem needs x ≥ 0");
                }
            }
            (InstanceKind::FiniteDimVi { a0, set }, StateSpace::Euclidean(d)) => {
                set.validate()?;
                if a0.nrows() != *d || a0.ncols() != *d || set.dim() != *d {
                    return Err(Error::Dimension {
                        expected: *d,
                        got: a0.nrows(),
                    });
                }
                let asym = (a0 - a0.transpose()).abs().max();
                if asym > 1e-12 * (1.0 + a0.abs().max()) {
                    return bad("A0 must be symmetric");
                }
                let emin = a0.clone().symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
                if emin < -1e-12 * (1.0 + a0.abs().max()) {
                    return bad("A0 must be positive semidefinite");
                }
                if !set.contains(&self.x, PROBE_TOL) {
                    return bad("initial datum must lie in K");
                }
                resolvent_invariance_probe(a0, set)?;
            }
            (InstanceKind::ScalarLinear(a), StateSpace::Euclidean(1)) => {
                if !(*a >= 0.0 && a.is_finite()) {
                    return bad("scalar linear instance needs a ≥ 0");
                }
            }
            (k, _) => {
                return Err(Error::InvalidInstance(format!(
                    "instance {} cannot be posed on this state space",
                    k.name()
                )))
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn nu(&self) -> f64 {
        self.noise.nu()
    }

    pub fn delta(&self) -> f64 {
        delta_of(self.lambda, self.nu()).expect("validated at construction")
    }

    pub fn context(&self, path: WienerPath) -> Result<TransformContext> {
        TransformContext::new(
            self.space.clone(),
            self.time.clone(),
            &self.noise,
            self.x.clone(),
            self.lambda,
            path,
        )
    }

    /// Context on the noise-free path.
    pub fn deterministic_context(&self) -> TransformContext {
        let path = self.noise.zero_path(&self.time, self.dim());
        self.context(path).expect("validated at construction")
    }

    pub fn sample_context(&self, seed: u64) -> Result<TransformContext> {
        let path = self.noise.sample_path(&self.time, self.dim(), seed)?;
        self.context(path)
    }

    /// Same problem on a different time grid.
    pub fn with_time(&self, time: TimeGrid) -> Self {
        Self {
            time,
            ..self.clone()
        }
    }

    /// `φ(X)`, possibly `+∞`.
    pub fn phi(&self, x: &[f64]) -> f64 {
        match (&self.kind, &self.space) {
            (InstanceKind::Parabolic(j), StateSpace::L2(g)) => {
                g.h() * g.gradient(x).iter().map(|q| j.eval(*q)).sum::<f64>()
            }
            (InstanceKind::TvFlow, StateSpace::L2(g)) => g.h() * g.gradient(x).iter().map(|q| q.abs()).sum::<f64>(),
            (InstanceKind::PorousMedia(j), StateSpace::HMinus1(g)) => g.h() * x.iter().map(|v| j.eval(*v)).sum::<f64>(),
            (InstanceKind::ObstacleVi, StateSpace::L2(g)) => {
                if x.iter().any(|&v| v < 0.0) {
                    f64::INFINITY
                } else {
                    0.5 * g.h() * dot(x, &g.laplacian().apply(x))
                }
            }
            (InstanceKind::FiniteDimVi { a0, set }, _) => {
                let v = set.indicator(x);
                if v.is_infinite() {
                    v
                } else {
                    0.5 * dot(x, (a0 * nalgebra::DVector::from_column_slice(x)).as_slice())
                }
            }
            (InstanceKind::ScalarLinear(a), _) => 0.5 * a * x[0] * x[0],
            _ => unreachable!("validated at construction"),
        }
    }

    /// `ψ(X) = φ(X) + δ/2 |X|²_H`.
    pub fn psi(&self, x: &[f64]) -> f64 {
        self.phi(x) + 0.5 * self.delta() * self.space.norm_sq(x)
    }

    pub(crate) fn resolve(&self, c: &[f64], r: &[f64], warm: Option<&[f64]>, opts: &ResolveOptions) -> Result<crate::resolvent::Resolved> {
        resolve(&self.kind, &self.space, c, r, warm, opts)
    }
}

fn resolvent_invariance_probe(a0: &nalgebra::DMatrix<f64>, set: &ConvexSet) -> Result<()> {
    let d = a0.nrows();
    let samples: Vec<Vec<f64>> = match set {
        ConvexSet::NonnegOrthant(_) => (0..d)
            .map(|i| (0..d).map(|k| if k == i { 1.0 } else { 0.0 }).collect())
            .chain(std::iter::once(vec![1.0; d]))
            .collect(),
        ConvexSet::Box { lo, hi } => {
            let fin = |v: f64, alt: f64| if v.is_finite() { v } else { alt };
            let mut pts = vec![
                lo.iter().map(|&v| fin(v, -1.0)).collect::<Vec<_>>(),
                hi.iter().map(|&v| fin(v, 1.0)).collect::<Vec<_>>(),
            ];
            for i in 0..d {
                let mut p = pts[0].clone();
                p[i] = fin(hi[i], 1.0);
                pts.push(p);
            }
            pts
        }
        ConvexSet::Polytope { vertices } => vertices.clone(),
    };
    for lam in [0.1, 1.0, 10.0] {
        let mut m = a0 * lam;
        for i in 0..d {
            m[(i, i)] += 1.0;
        }
        for k in &samples {
            let z = crate::linalg::dense_spd_solve(&m, k)?;
            if !set.contains(&z, 1e-8) {
                return Err(Error::InvalidInstance(format!(
                    "resolvent (I + {lam} A0)^-1 maps {k:?} outside K"
                )));
            }
        }
    }
    Ok(())
}

/// Value of `ψ*(v)` with its maximizer.
#[derive(Debug, Clone)]
pub struct PsiStar {
    pub value: f64,
    /// The unique `z` attaining `sup (v, z) - ψ(z)`.
    pub witness: Vec<f64>,
    /// First-order residual of the witness inclusion `δz - v + ∂φ(z) ∋ 0`.
    pub residual: f64,
}

/// `ψ*(v) = sup_z (v, z)_H - φ(z) - δ/2 |z|²_H`.
pub fn eval_psi_star(problem: &Problem, v: &[f64]) -> Result<PsiStar> {
    eval_psi_star_opts(problem, v, None, &ResolveOptions::default())
}

pub(crate) fn eval_psi_star_opts(problem: &Problem, v: &[f64], warm: Option<&[f64]>, opts: &ResolveOptions) -> Result<PsiStar> {
    let delta = problem.delta();
    let c = vec![delta; v.len()];
    let res = problem.resolve(&c, v, warm, opts)?;
    let z = res.x;
    let value = problem.space.inner(v, &z) - problem.psi(&z);
    Ok(PsiStar {
        value,
        witness: z,
        residual: res.residual,
    })
}

/// The conjugate through the integrand conjugate at the witness,
/// `Σ h j*(a(∇z)) + δ/2 |z|²` for parabolic instances and
/// `Σ h j*(β(z)) + δ/2 |z|²_{-1}` for porous media. `None` for other
/// instances.
pub fn psi_star_integrand_route(problem: &Problem, witness: &[f64]) -> Option<f64> {
    let delta = problem.delta();
    match (&problem.kind, &problem.space) {
        (InstanceKind::Parabolic(j), StateSpace::L2(g)) => {
            let s: f64 = g
                .gradient(witness)
                .iter()
                .map(|q| j.conjugate(j.subgradient(*q).unwrap_or(f64::NAN)))
                .sum();
            Some(g.h() * s + 0.5 * delta * problem.space.norm_sq(witness))
        }
        (InstanceKind::TvFlow, StateSpace::L2(_)) => None,
        (InstanceKind::PorousMedia(j), StateSpace::HMinus1(g)) => {
            let s: f64 = witness.iter().map(|z| j.conjugate(j.derivative(*z).unwrap())).sum();
            Some(g.h() * s + 0.5 * delta * problem.space.norm_sq(witness))
        }
        _ => None,
    }
}

/// `Σ Δt_k ψ*(u_k)`.
pub fn assemble_g2(problem: &Problem, time: &TimeGrid, u: &[Vec<f64>]) -> Result<f64> {
    let mut s = 0.0;
    for (k, row) in u.iter().enumerate() {
        s += time.dt(k + 1) * eval_psi_star(problem, row)?.value;
    }
    Ok(s)
}

/// Pathwise `G1(y) = Σ Δt [ψ(X_k) + (e^{W_k} (ℬy)_k, X_k)]`.
pub fn assemble_g1(problem: &Problem, ctx: &TransformContext, proc: &DiscreteProcess) -> f64 {
    let xs = forward_transform(ctx, proc);
    let eb = weighted_b(ctx, proc);
    (0..ctx.steps())
        .map(|k| ctx.time.dt(k + 1) * (problem.psi(&xs[k]) + ctx.space.inner(&eb[k], &xs[k])))
        .sum()
}

/// The seven-term form of `G̃1(y, y1)`, obtained from the pathwise form by
/// Itô's formula; the two agree in expectation (up to `O(Δt)`), not
/// pathwise. Right-endpoint quadrature.
pub fn assemble_g1_ito(problem: &Problem, ctx: &TransformContext, proc: &DiscreteProcess) -> f64 {
    let sp = &ctx.space;
    let n = ctx.steps();
    let nd = ctx.nu + ctx.delta;
    let xs = forward_transform(ctx, proc);
    let mut total = 0.0;
    for k in 1..=n {
        let dt = ctx.time.dt(k);
        let e = ctx.exp_w(k);
        let y = &proc.y[k - 1];
        let ex: Vec<f64> = e.iter().zip(&ctx.x).map(|(a, b)| a * b).collect();
        let ey: Vec<f64> = e.iter().zip(y).map(|(a, b)| a * b).collect();
        let drift: Vec<f64> = (0..ctx.dim())
            .map(|i| e[i] * (nd * (y[i] + ctx.x[i]) + ctx.mu_field[i] * ctx.x[i]))
            .collect();
        let coupling: Vec<f64> = (0..ctx.dim()).map(|i| (nd - 2.0 * ctx.mu_field[i]) * ey[i]).collect();
        let term = problem.phi(&xs[k - 1])
            + sp.inner(&drift, &ex)
            + 0.5 * ctx.delta * sp.norm_sq(&xs[k - 1])
            + ctx.noise.eta(sp, ctx.delta, &ey)
            + sp.inner(&coupling, &ex);
        total += dt * term;
    }
    let en = ctx.exp_w(n);
    let ey1: Vec<f64> = en.iter().zip(&proc.y1).map(|(a, b)| a * b).collect();
    let exn: Vec<f64> = en.iter().zip(&ctx.x).map(|(a, b)| a * b).collect();
    total + 0.5 * sp.norm_sq(&ey1) + sp.inner(&ey1, &exn)
}

/// The duality-gap certificate of one path.
#[derive(Debug, Clone)]
pub struct GapReport {
    pub g1: f64,
    pub g2: f64,
    /// `g1 + g2`, a sum of Fenchel-Young gaps.
    pub gap: f64,
    /// `Δt_k [ψ(X_k) + ψ*(u_k) - (u_k, X_k)]` per time level.
    pub node_gaps: Vec<f64>,
    /// `|e^W ℬy + u|_∞`.
    pub constraint_residual: f64,
    /// Largest first-order residual among the `ψ*` witnesses.
    pub witness_residual: f64,
    /// `Σ_k Δt_k ψ*(u_k)` witnesses, `z_k`.
    pub witnesses: Vec<Vec<f64>>,
}

impl GapReport {
    /// `gap <= tol (1 + |g1|)`.
    pub fn certifies(&self, tol: f64) -> bool {
        self.gap.is_finite() && self.gap <= tol * (1.0 + self.g1.abs())
    }
}

/// Constraint tolerance for [`eval_gap`], relative to `1 + |u|_∞`.
pub const CONSTRAINT_TOL: f64 = 1e-8;

/// Evaluates `G1 + G2` for a feasible pair, independently of how the pair
/// was produced.
pub fn eval_gap(problem: &Problem, ctx: &TransformContext, proc: &DiscreteProcess, u: &[Vec<f64>]) -> Result<GapReport> {
    eval_gap_opts(problem, ctx, proc, u, &ResolveOptions::default())
}

pub(crate) fn eval_gap_opts(
    problem: &Problem,
    ctx: &TransformContext,
    proc: &DiscreteProcess,
    u: &[Vec<f64>],
    opts: &ResolveOptions,
) -> Result<GapReport> {
    let n = ctx.steps();
    if proc.steps() != n || u.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: proc.steps().min(u.len()),
        });
    }
    let eb = weighted_b(ctx, proc);
    let mut cres = 0.0_f64;
    let mut scale = 1.0_f64;
    for k in 0..n {
        for i in 0..ctx.dim() {
            cres = cres.max((eb[k][i] + u[k][i]).abs());
            scale = scale.max(u[k][i].abs());
        }
    }
    let trace = proc
        .y1
        .iter()
        .zip(&proc.y[n - 1])
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    cres = cres.max(trace);
    if !(cres <= CONSTRAINT_TOL * scale) {
        return Err(Error::Infeasible(cres));
    }
    let xs = forward_transform(ctx, proc);
    let mut g1 = 0.0;
    let mut g2 = 0.0;
    let mut node_gaps = Vec::with_capacity(n);
    let mut witnesses = Vec::with_capacity(n);
    let mut wres = 0.0_f64;
    for k in 0..n {
        let dt = ctx.time.dt(k + 1);
        let psi = problem.psi(&xs[k]);
        let pair = ctx.space.inner(&u[k], &xs[k]);
        let star = eval_psi_star_opts(problem, &u[k], Some(&xs[k]), opts)?;
        g1 += dt * (psi - pair);
        g2 += dt * star.value;
        node_gaps.push(dt * (psi + star.value - pair));
        wres = wres.max(star.residual);
        witnesses.push(star.witness);
    }
    Ok(GapReport {
        g1,
        g2,
        gap: g1 + g2,
        node_gaps,
        constraint_residual: cres,
        witness_residual: wres,
        witnesses,
    })
}

/// Split of a discrete dual process into a density part and atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSplit {
    pub absolutely_continuous: Vec<Vec<f64>>,
    pub singular: Vec<Vec<f64>>,
    /// `(k, i)` of the detected atoms (time level `k ≥ 1`, component `i`).
    pub atoms: Vec<(usize, usize)>,
}

/// A cell whose mass `|u_k| Δt_k` exceeds `c Δt_k^{1/2}` is classified as an
/// atom. `u_a + u_s = u` exactly.
pub fn decompose_measure(time: &TimeGrid, u: &[Vec<f64>], c: f64) -> MeasureSplit {
    let mut ac = u.to_vec();
    let mut sing: Vec<Vec<f64>> = u.iter().map(|r| vec![0.0; r.len()]).collect();
    let mut atoms = Vec::new();
    for (k, row) in u.iter().enumerate() {
        let dt = time.dt(k + 1);
        for (i, &v) in row.iter().enumerate() {
            if v.abs() * dt > c * dt.sqrt() {
                sing[k][i] = v;
                ac[k][i] = 0.0;
                atoms.push((k + 1, i));
            }
        }
    }
    MeasureSplit {
        absolutely_continuous: ac,
        singular: sing,
        atoms,
    }
}

/// `max |min(z, η)| + max_{z ≤ tol} max(-η, 0)` over the grid.
pub fn complementarity_residual(z: &[f64], eta: &[f64], tol: f64) -> f64 {
    let comp = z.iter().zip(eta).map(|(a, b)| a.min(*b).abs()).fold(0.0, f64::max);
    let neg = z
        .iter()
        .zip(eta)
        .filter(|(a, _)| **a <= tol)
        .map(|(_, b)| (-b).max(0.0))
        .fold(0.0, f64::max);
    comp + neg
}

/// The multiplier `η_a = A0 z + δ z - u` of the witness inclusion for the
/// obstacle and finite-dimensional instances, expressed in the Euclidean
/// coordinates of the grid.
pub fn vi_multiplier(problem: &Problem, z: &[f64], u: &[f64]) -> Option<Vec<f64>> {
    let delta = problem.delta();
    match (&problem.kind, &problem.space) {
        (InstanceKind::ObstacleVi, StateSpace::L2(g)) => {
            let lz = g.laplacian().apply(z);
            Some((0..z.len()).map(|i| lz[i] + delta * z[i] - u[i]).collect())
        }
        (InstanceKind::FiniteDimVi { a0, .. }, _) => {
            let az = a0 * nalgebra::DVector::from_column_slice(z);
            Some((0..z.len()).map(|i| az[i] + delta * z[i] - u[i]).collect())
        }
        _ => None,
    }
}

/// Natural residual of the finite-dimensional witness inclusion.
pub fn vi_witness_residual(problem: &Problem, z: &[f64], u: &[f64]) -> Option<f64> {
    match &problem.kind {
        InstanceKind::FiniteDimVi { a0, set } => {
            let c = vec![problem.delta(); z.len()];
            Some(vi_residual(a0, set, &c, u, z))
        }
        _ => None,
    }
}

/// A point of `dom φ` near `z`: the positive part for the obstacle
/// problem, the projection onto `K` for finite-dimensional inequalities,
/// `z` itself otherwise.
pub fn domain_point(problem: &Problem, z: &[f64]) -> Vec<f64> {
    match &problem.kind {
        InstanceKind::ObstacleVi => z.iter().map(|v| v.abs()).collect(),
        InstanceKind::FiniteDimVi { set, .. } => set.project(z),
        _ => z.to_vec(),
    }
}

/// The same problem without noise.
pub fn noise_free(problem: &Problem) -> Problem {
    Problem {
        noise: NoiseModel::zero(),
        ..problem.clone()
    }
}

/// `eval(R z) / R` for growing `R`, probing superlinear growth.
pub fn superlinearity_probe(j: &ScalarConvex, z: f64, radii: &[f64]) -> Vec<f64> {
    radii.iter().map(|r| j.eval(r * z) / r).collect()
}

/// `|a|_∞` over a process.
pub fn process_norm_inf(rows: &[Vec<f64>]) -> f64 {
    rows.iter().map(|r| norm_inf(r)).fold(0.0, f64::max)
}
