//! The substitution `X = e^W (y + x)` and the drift operator
//! `ℬy = dy/dt + (μ + ν + δ)(y + x)` on the time grid.

use crate::error::{Error, Result};
use crate::grid::{StateSpace, TimeGrid};
use crate::noise::{delta_of, NoiseModel, WienerPath};

/// Everything the change of variables needs for one path.
#[derive(Debug, Clone)]
pub struct TransformContext {
    pub space: StateSpace,
    pub time: TimeGrid,
    pub x: Vec<f64>,
    pub lambda: f64,
    pub nu: f64,
    pub delta: f64,
    /// `μ(ξ) = ½ Σ μ_j² e_j(ξ)²`.
    pub mu_field: Vec<f64>,
    /// Multiplier bounds enter only through `ν`; the profiles are kept for
    /// the Itô correction of the energy identity.
    pub noise: NoiseModel,
    pub path: WienerPath,
}

impl TransformContext {
    pub fn new(
        space: StateSpace,
        time: TimeGrid,
        noise: &NoiseModel,
        x: Vec<f64>,
        lambda: f64,
        path: WienerPath,
    ) -> Result<Self> {
        let dim = space.dim();
        if x.len() != dim {
            return Err(Error::Dimension { expected: dim, got: x.len() });
        }
        if path.steps() != time.steps() || path.w.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidGrid("path does not match the grids".into()));
        }
        let nu = noise.nu();
        let delta = delta_of(lambda, nu)?;
        Ok(Self {
            mu_field: noise.ito_field(dim),
            noise: noise.clone(),
            space,
            time,
            x,
            lambda,
            nu,
            delta,
            path,
        })
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn steps(&self) -> usize {
        self.time.steps()
    }

    /// `e^{W(t_k)}` at the nodes.
    pub fn exp_w(&self, k: usize) -> Vec<f64> {
        self.path.w[k].iter().map(|v| v.exp()).collect()
    }

    /// `e^{W_k - W_{k-1}}`.
    pub fn exp_dw(&self, k: usize) -> Vec<f64> {
        self.path.increment(k).into_iter().map(f64::exp).collect()
    }

    /// The zeroth-order coefficient `μ + ν + δ` of `ℬ`.
    pub fn drift_coefficient(&self) -> Vec<f64> {
        self.mu_field.iter().map(|m| m + self.nu + self.delta).collect()
    }

    /// Same context with a different path (grids and data unchanged).
    pub fn with_path(&self, path: WienerPath) -> Result<Self> {
        Self::new(self.space.clone(), self.time.clone(), &self.noise, self.x.clone(), self.lambda, path)
    }
}

/// A discrete process `y(t_1), ..., y(t_N)` (with `y(t_0) = 0`) and the
/// separate terminal variable `y1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteProcess {
    pub y: Vec<Vec<f64>>,
    pub y1: Vec<f64>,
}

impl DiscreteProcess {
    pub fn zeros(steps: usize, dim: usize) -> Self {
        Self {
            y: vec![vec![0.0; dim]; steps],
            y1: vec![0.0; dim],
        }
    }

    /// `y` with the trace variable set to `y(t_N)`.
    pub fn from_rows(y: Vec<Vec<f64>>) -> Self {
        let y1 = y.last().cloned().unwrap_or_default();
        Self { y, y1 }
    }

    pub fn steps(&self) -> usize {
        self.y.len()
    }

    /// `y(t_k)` for `k = 0..=N`.
    pub fn at(&self, k: usize) -> Vec<f64> {
        if k == 0 {
            vec![0.0; self.y1.len()]
        } else {
            self.y[k - 1].clone()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.y.iter().flatten().chain(&self.y1).all(|v| v.is_finite())
    }
}

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// `X(t_k) = e^{W(t_k)} (y(t_k) + x)` for `k = 1..=N`.
pub fn forward_transform(ctx: &TransformContext, proc: &DiscreteProcess) -> Vec<Vec<f64>> {
    (1..=ctx.steps())
        .map(|k| {
            let e = ctx.exp_w(k);
            proc.y[k - 1]
                .iter()
                .zip(&ctx.x)
                .zip(&e)
                .map(|((y, x), e)| e * (y + x))
                .collect()
        })
        .collect()
}

/// Inverse of [`forward_transform`]; the trace variable is `y(t_N)`.
pub fn inverse_transform(ctx: &TransformContext, x_rows: &[Vec<f64>]) -> DiscreteProcess {
    let y = x_rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let w = &ctx.path.w[i + 1];
            row.iter()
                .zip(w)
                .zip(&ctx.x)
                .map(|((xv, w), x0)| (-w).exp() * xv - x0)
                .collect()
        })
        .collect();
    DiscreteProcess::from_rows(y)
}

/// `(ℬy)(t_k) = (y_k - y_{k-1}) / Δt_k + (μ + ν + δ)(y_k + x)`.
pub fn apply_b(ctx: &TransformContext, proc: &DiscreteProcess) -> Vec<Vec<f64>> {
    let coef = ctx.drift_coefficient();
    (1..=ctx.steps())
        .map(|k| {
            let dt = ctx.time.dt(k);
            let prev = proc.at(k - 1);
            let cur = &proc.y[k - 1];
            (0..ctx.dim())
                .map(|i| (cur[i] - prev[i]) / dt + coef[i] * (cur[i] + ctx.x[i]))
                .collect()
        })
        .collect()
}

/// `e^{W_k} (ℬy)_k` for `k = 1..=N`: the constraint map, up to sign.
pub fn weighted_b(ctx: &TransformContext, proc: &DiscreteProcess) -> Vec<Vec<f64>> {
    apply_b(ctx, proc)
        .into_iter()
        .enumerate()
        .map(|(i, row)| mul(&ctx.exp_w(i + 1), &row))
        .collect()
}

/// Pieces of the weak form of `ℬ` tested against `θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakPairing {
    /// `(e^{W_N} y1, θ_N)`.
    pub terminal: f64,
    /// `Σ Δt (e^{W_k}((ν + δ)(y_k + x) + μ x), θ_k)`.
    pub drift: f64,
    /// `Σ Δt (e^{W_k} μ y_k, θ_k)`, the part of the Itô drift carried by `y`.
    pub ito_drift: f64,
    /// `-Σ_{k<N} (e^{W_k} y_k, θ_{k+1} - θ_k)`.
    pub derivative: f64,
    /// `-Σ ((e^{ΔW_k} - 1) e^{W_{k-1}} y_{k-1}, θ_k)`, the increment of the
    /// multiplier across a step; vanishes without noise.
    pub remainder: f64,
}

impl WeakPairing {
    pub fn total(&self) -> f64 {
        self.terminal + self.drift + self.ito_drift + self.derivative + self.remainder
    }
}

/// Weak form of `e^W ℬ(y, y1)` against a test process `θ` (rows
/// `k = 1..=N`), by exact summation by parts on the grid.
pub fn apply_b_weak(ctx: &TransformContext, proc: &DiscreteProcess, theta: &[Vec<f64>]) -> WeakPairing {
    let n = ctx.steps();
    let sp = &ctx.space;
    let terminal = sp.inner(&mul(&ctx.exp_w(n), &proc.y1), &theta[n - 1]);
    let mut drift = 0.0;
    let mut ito_drift = 0.0;
    let mut derivative = 0.0;
    let mut remainder = 0.0;
    let nd = ctx.nu + ctx.delta;
    for k in 1..=n {
        let dt = ctx.time.dt(k);
        let e = ctx.exp_w(k);
        let y = &proc.y[k - 1];
        let a: Vec<f64> = (0..ctx.dim())
            .map(|i| e[i] * (nd * (y[i] + ctx.x[i]) + ctx.mu_field[i] * ctx.x[i]))
            .collect();
        drift += dt * sp.inner(&a, &theta[k - 1]);
        let b: Vec<f64> = (0..ctx.dim()).map(|i| e[i] * ctx.mu_field[i] * y[i]).collect();
        ito_drift += dt * sp.inner(&b, &theta[k - 1]);
        if k < n {
            let dth: Vec<f64> = theta[k].iter().zip(&theta[k - 1]).map(|(a, b)| a - b).collect();
            derivative -= sp.inner(&mul(&e, y), &dth);
        }
        if k > 1 {
            let ep = ctx.exp_w(k - 1);
            let edw = ctx.exp_dw(k);
            let yp = &proc.y[k - 2];
            let v: Vec<f64> = (0..ctx.dim()).map(|i| (edw[i] - 1.0) * ep[i] * yp[i]).collect();
            remainder -= sp.inner(&v, &theta[k - 1]);
        }
    }
    WeakPairing {
        terminal,
        drift,
        ito_drift,
        derivative,
        remainder,
    }
}

/// `Σ Δt (e^{W_k} (ℬy)_k, θ_k)_H`.
pub fn strong_pairing(ctx: &TransformContext, proc: &DiscreteProcess, theta: &[Vec<f64>]) -> f64 {
    weighted_b(ctx, proc)
        .iter()
        .enumerate()
        .map(|(i, row)| ctx.time.dt(i + 1) * ctx.space.inner(row, &theta[i]))
        .sum()
}

/// Pathwise terms of the energy identity for the homogeneous part of `ℬ`
/// (`x = 0`), all paired against the midpoint `ȳ_k = (y_k + y_{k-1})/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyTerms {
    /// `Σ Δt (e^{W_k} ℬ₀y_k, e^{W_k} ȳ_k)`.
    pub lhs: f64,
    /// `½|e^{W_N} y_N|² + (ν + δ)|y|² - ½ Σ_j μ_j² |e^W y e_j|²`.
    pub rhs_identity: f64,
    /// `½|e^{W_N} y_N|² + λ/2 |y|²`.
    pub rhs_bound: f64,
    /// Mean-zero martingale part of `lhs - rhs_identity` (pointwise spaces
    /// only); subtracting it reduces Monte Carlo variance.
    pub martingale: Option<f64>,
}

/// The quadrature `Σ Δt (e^{W_k} a_k, e^{W_k} ȳ_k)_H` used by the energy
/// check for `|y|²` and its variants.
fn weighted_mid(ctx: &TransformContext, a: &[Vec<f64>], proc: &DiscreteProcess) -> f64 {
    (1..=ctx.steps())
        .map(|k| {
            let e = ctx.exp_w(k);
            let mid: Vec<f64> = proc
                .at(k)
                .iter()
                .zip(proc.at(k - 1))
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            ctx.time.dt(k) * ctx.space.inner(&mul(&e, &a[k - 1]), &mul(&e, &mid))
        })
        .sum()
}

pub fn bform_energy_check(ctx: &TransformContext, proc: &DiscreteProcess) -> EnergyTerms {
    let n = ctx.steps();
    let homogeneous = TransformContext {
        x: vec![0.0; ctx.dim()],
        ..ctx.clone()
    };
    let by = apply_b(&homogeneous, proc);
    let lhs = weighted_mid(ctx, &by, proc);
    let y_sq = weighted_mid(ctx, &proc.y, proc);
    let ito: f64 = ctx
        .noise
        .mu()
        .iter()
        .zip(ctx.noise.profiles())
        .map(|(m, e)| {
            let ye: Vec<Vec<f64>> = proc.y.iter().map(|row| mul(row, e)).collect();
            // pairing of y e_j with ȳ e_j
            let mid_e: DiscreteProcess = DiscreteProcess {
                y: proc.y.iter().map(|row| mul(row, e)).collect(),
                y1: mul(&proc.y1, e),
            };
            0.5 * m * m * weighted_mid(ctx, &ye, &mid_e)
        })
        .sum();
    let end = mul(&ctx.exp_w(n), &proc.y[n - 1]);
    let terminal = 0.5 * ctx.space.norm_sq(&end);
    let martingale = match ctx.space {
        StateSpace::HMinus1(_) => None,
        _ => {
            let mut s = 0.0;
            for k in 2..=n {
                let dt = ctx.time.dt(k);
                let ep = ctx.exp_w(k - 1);
                let edw = ctx.exp_dw(k);
                let yp = &proc.y[k - 2];
                let v: Vec<f64> = (0..ctx.dim())
                    .map(|i| {
                        let m = (4.0 * ctx.mu_field[i] * dt).exp();
                        ep[i] * ep[i] * (edw[i] * edw[i] - m) * yp[i]
                    })
                    .collect();
                s -= 0.5 * ctx.space.inner(&v, yp);
            }
            Some(s)
        }
    };
    EnergyTerms {
        lhs,
        rhs_identity: terminal + (ctx.nu + ctx.delta) * y_sq - ito,
        rhs_bound: terminal + 0.5 * ctx.lambda * y_sq,
        martingale,
    }
}

/// The adapted test process `y_k = y_{k-1} + Δt_k (1 + W_{k-1})` used by
/// the energy checks.
pub fn polynomial_test_process(ctx: &TransformContext) -> DiscreteProcess {
    let mut rows = Vec::with_capacity(ctx.steps());
    let mut prev = vec![0.0; ctx.dim()];
    for k in 1..=ctx.steps() {
        let dt = ctx.time.dt(k);
        let w = &ctx.path.w[k - 1];
        let cur: Vec<f64> = prev.iter().zip(w).map(|(p, w)| p + dt * (1.0 + w)).collect();
        rows.push(cur.clone());
        prev = cur;
    }
    DiscreteProcess::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpaceGrid1D;
    use crate::noise::Basis;

    fn ctx(mu: f64, n: usize) -> TransformContext {
        let g = SpaceGrid1D::new(5, 1.0).unwrap();
        let s = StateSpace::L2(g);
        let noise = NoiseModel::new(vec![mu], &[Basis::Sine(1)], &s).unwrap();
        let t = TimeGrid::uniform(n, 1.0).unwrap();
        let path = noise.sample_path(&t, 5, 3).unwrap();
        let x = vec![0.5, -0.2, 1.0, 0.3, 0.0];
        TransformContext::new(s, t, &noise, x, 1.0, path).unwrap()
    }

    #[test]
    fn hand_arithmetic_transform() {
        let s = StateSpace::Euclidean(1);
        let noise = NoiseModel::zero();
        let t = TimeGrid::uniform(1, 1.0).unwrap();
        let path = WienerPath {
            beta: vec![vec![], vec![]],
            w: vec![vec![0.0], vec![2.0_f64.ln()]],
            seed: 0,
        };
        let c = TransformContext::new(s, t, &noise, vec![1.0], 1.0, path).unwrap();
        let p = DiscreteProcess::from_rows(vec![vec![1.0]]);
        assert!((forward_transform(&c, &p)[0][0] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn roundtrip() {
        let c = ctx(0.4, 8);
        let p = DiscreteProcess::from_rows((0..8).map(|k| (0..5).map(|i| (k * i) as f64 * 0.1 - 0.3).collect()).collect());
        let back = inverse_transform(&c, &forward_transform(&c, &p));
        for (a, b) in back.y.iter().flatten().zip(p.y.iter().flatten()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn weak_equals_strong() {
        let c = ctx(0.6, 10);
        let p = DiscreteProcess::from_rows((0..10).map(|k| (0..5).map(|i| ((k + 2 * i) as f64).sin()).collect()).collect());
        let theta: Vec<Vec<f64>> = (0..10).map(|k| (0..5).map(|i| ((k * i) as f64 * 0.3).cos()).collect()).collect();
        let weak = apply_b_weak(&c, &p, &theta).total();
        let strong = strong_pairing(&c, &p, &theta);
        assert!((weak - strong).abs() <= 1e-10 * (1.0 + strong.abs()), "{weak} vs {strong}");
    }

    #[test]
    fn zero_process_drift_only() {
        let c = ctx(0.3, 4);
        let p = DiscreteProcess::zeros(4, 5);
        let b = apply_b(&c, &p);
        let coef = c.drift_coefficient();
        for row in b {
            for i in 0..5 {
                assert!((row[i] - coef[i] * c.x[i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn deterministic_energy_identity_exact() {
        let c = ctx(0.0, 16);
        let p = polynomial_test_process(&c);
        let e = bform_energy_check(&c, &p);
        assert!((e.lhs - e.rhs_identity).abs() <= 1e-10 * (1.0 + e.lhs.abs()));
        assert!(e.lhs >= e.rhs_bound - 1e-12);
    }
}
