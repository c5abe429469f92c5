//! Finite-dimensional Wiener noise `W = Σ μ_j e_j β_j`.

use crate::error::{Error, Result};
use crate::grid::{SpaceGrid1D, StateSpace, TimeGrid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Paths whose noise field exceeds this in absolute value are rejected
/// rather than exponentiated.
pub const OVERFLOW_CAP: f64 = 50.0;

/// A spatial profile `e_j`.
#[derive(Debug, Clone, PartialEq)]
pub enum Basis {
    Constant(f64),
    /// `sqrt(2/L) sin(nπξ/L)`.
    Sine(u32),
    /// Unit indicator of `[a, b]`.
    Indicator(f64, f64),
    Tabulated(Vec<f64>),
}

impl Basis {
    pub fn sample(&self, space: &StateSpace) -> Result<Vec<f64>> {
        let dim = space.dim();
        match (self, space.grid()) {
            (Basis::Constant(c), _) => Ok(vec![*c; dim]),
            (Basis::Tabulated(v), _) => {
                if v.len() != dim {
                    return Err(Error::Dimension {
                        expected: dim,
                        got: v.len(),
                    });
                }
                Ok(v.clone())
            }
            (Basis::Sine(n), Some(g)) => Ok(sine(g, *n)),
            (Basis::Indicator(a, b), Some(g)) => Ok(g
                .coords()
                .into_iter()
                .map(|x| if x >= *a && x <= *b { 1.0 } else { 0.0 })
                .collect()),
            (b, None) => Err(Error::InvalidInstance(format!(
                "basis {b:?} needs a spatial grid"
            ))),
        }
    }
}

fn sine(g: &SpaceGrid1D, n: u32) -> Vec<f64> {
    let l = g.length();
    let amp = (2.0 / l).sqrt();
    g.coords()
        .into_iter()
        .map(|x| amp * (n as f64 * std::f64::consts::PI * x / l).sin())
        .collect()
}

/// Intensities `μ_j` together with sampled profiles `e_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    mu: Vec<f64>,
    e: Vec<Vec<f64>>,
    gamma: Vec<f64>,
    gamma_hminus1: Option<Vec<f64>>,
    cap: f64,
}

impl NoiseModel {
    pub fn new(mu: Vec<f64>, bases: &[Basis], space: &StateSpace) -> Result<Self> {
        if mu.len() != bases.len() {
            return Err(Error::Dimension {
                expected: mu.len(),
                got: bases.len(),
            });
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInstance("noise intensities must be finite".into()));
        }
        let e = bases
            .iter()
            .map(|b| b.sample(space))
            .collect::<Result<Vec<_>>>()?;
        let gamma = e
            .iter()
            .map(|v| v.iter().fold(1.0_f64, |m, x| m.max(x.abs())))
            .collect();
        let gamma_hminus1 = match space {
            StateSpace::HMinus1(g) => Some(e.iter().map(|v| multiplier_norm_hminus1(g, v)).collect()),
            _ => None,
        };
        Ok(Self {
            mu,
            e,
            gamma,
            gamma_hminus1,
            cap: OVERFLOW_CAP,
        })
    }

    /// A model without noise on a space of the given dimension.
    pub fn zero() -> Self {
        Self {
            mu: vec![],
            e: vec![],
            gamma: vec![],
            gamma_hminus1: None,
            cap: OVERFLOW_CAP,
        }
    }

    /// Replaces the rejection threshold [`OVERFLOW_CAP`].
    pub fn with_overflow_cap(mut self, cap: f64) -> Result<Self> {
        if !(cap > 0.0) {
            return Err(Error::InvalidInstance("overflow cap must be positive".into()));
        }
        self.cap = cap;
        Ok(self)
    }

    pub fn overflow_cap(&self) -> f64 {
        self.cap
    }

    pub fn components(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn profiles(&self) -> &[Vec<f64>] {
        &self.e
    }

    /// Multiplier bounds `γ_j = max(sup|e_j|, 1)`.
    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// Operator norm of multiplication by `e_j` on the discrete `H^{-1}`,
    /// reported for comparison with [`gamma`](Self::gamma).
    pub fn gamma_hminus1(&self) -> Option<&[f64]> {
        self.gamma_hminus1.as_deref()
    }

    /// `ν = Σ μ_j² γ_j²`.
    pub fn nu(&self) -> f64 {
        self.mu
            .iter()
            .zip(&self.gamma)
            .map(|(m, g)| m * m * g * g)
            .sum()
    }

    /// The Itô correction field `μ(ξ) = ½ Σ μ_j² e_j(ξ)²`.
    pub fn ito_field(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (m, e) in self.mu.iter().zip(&self.e) {
            for (o, v) in out.iter_mut().zip(e) {
                *o += 0.5 * m * m * v * v;
            }
        }
        out
    }

    /// `W(t_k) = Σ μ_j e_j β_j(t_k)` for one row of Brownian values.
    pub fn field(&self, beta_row: &[f64], dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for ((m, e), b) in self.mu.iter().zip(&self.e).zip(beta_row) {
            for (o, v) in out.iter_mut().zip(e) {
                *o += m * v * b;
            }
        }
        out
    }

    /// Samples a path on `time` from `seed`. Paths whose field exceeds the
    /// overflow cap are rejected.
    pub fn sample_path(&self, time: &TimeGrid, dim: usize, seed: u64) -> Result<WienerPath> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let j = self.components();
        let mut beta = Vec::with_capacity(time.steps() + 1);
        beta.push(vec![0.0; j]);
        for dt in time.steps_iter() {
            let prev = beta.last().unwrap();
            let sq = dt.sqrt();
            let next: Vec<f64> = prev
                .iter()
                .map(|b| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    b + sq * z
                })
                .collect();
            beta.push(next);
        }
        self.path_from_beta(beta, dim, seed)
    }

    pub fn path_from_beta(&self, beta: Vec<Vec<f64>>, dim: usize, seed: u64) -> Result<WienerPath> {
        let w: Vec<Vec<f64>> = beta.iter().map(|row| self.field(row, dim)).collect();
        let max_abs = w
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        if !(max_abs <= self.cap) {
            return Err(Error::PathRejected {
                seed,
                max_abs,
                cap: self.cap,
            });
        }
        Ok(WienerPath { beta, w, seed })
    }

    /// The deterministic path `W ≡ 0`.
    pub fn zero_path(&self, time: &TimeGrid, dim: usize) -> WienerPath {
        WienerPath {
            beta: vec![vec![0.0; self.components()]; time.steps() + 1],
            w: vec![vec![0.0; dim]; time.steps() + 1],
            seed: 0,
        }
    }

    /// `η(z) = (ν + δ)|z|² - ½ Σ μ_j² |z e_j|²`, the positive part of the
    /// coercivity bound on the transformed operator.
    pub fn eta(&self, space: &StateSpace, delta: f64, z: &[f64]) -> f64 {
        let mut val = (self.nu() + delta) * space.norm_sq(z);
        for (m, e) in self.mu.iter().zip(&self.e) {
            let ze: Vec<f64> = z.iter().zip(e).map(|(a, b)| a * b).collect();
            val -= 0.5 * m * m * space.norm_sq(&ze);
        }
        val
    }
}

/// `δ = ½ (λ - ν)`; fails unless `λ > ν`.
pub fn delta_of(lambda: f64, nu: f64) -> Result<f64> {
    if !(lambda > nu) {
        return Err(Error::LambdaNotAboveNu { lambda, nu });
    }
    Ok(0.5 * (lambda - nu))
}

fn multiplier_norm_hminus1(g: &SpaceGrid1D, e: &[f64]) -> f64 {
    // σ_max(L^{-1/2} E L^{1/2}) via the generalized symmetric eigenproblem
    // E L E v = s² L v, solved densely.
    let l = g.laplacian().to_dense();
    let m = e.len();
    let ediag = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(e));
    let chol = match l.clone().cholesky() {
        Some(c) => c,
        None => return f64::NAN,
    };
    // with L = C C', the operator is C^{-1} E L E C^{-T}
    let cl = chol.l();
    let inv = cl.clone().try_inverse().unwrap_or_else(|| nalgebra::DMatrix::zeros(m, m));
    let mid = &ediag * &l * &ediag;
    let sym = &inv * mid * inv.transpose();
    let sym = (&sym + sym.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    eig.iter().fold(0.0_f64, |a, v| a.max(*v)).max(0.0).sqrt()
}

/// One sampled Brownian path and the induced noise field.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    /// `β_j(t_k)`, rows `k = 0..=N`.
    pub beta: Vec<Vec<f64>>,
    /// `W(t_k)` at the spatial nodes, rows `k = 0..=N`.
    pub w: Vec<Vec<f64>>,
    pub seed: u64,
}

impl WienerPath {
    pub fn steps(&self) -> usize {
        self.w.len() - 1
    }

    /// `W_k - W_{k-1}`.
    pub fn increment(&self, k: usize) -> Vec<f64> {
        self.w[k]
            .iter()
            .zip(&self.w[k - 1])
            .map(|(a, b)| a - b)
            .collect()
    }

    /// Restriction to every `factor`-th time point.
    pub fn subsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.steps() % factor != 0 {
            return Err(Error::InvalidGrid(format!(
                "subsampling factor {factor} does not divide {} steps",
                self.steps()
            )));
        }
        Ok(Self {
            beta: self.beta.iter().step_by(factor).cloned().collect(),
            w: self.w.iter().step_by(factor).cloned().collect(),
            seed: self.seed,
        })
    }

    /// `max_k exp(max_ξ |W_k(ξ)|)`, a pathwise bound for `e^{±W}`.
    pub fn exp_bound(&self) -> f64 {
        self.w
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
            .exp()
    }
}
