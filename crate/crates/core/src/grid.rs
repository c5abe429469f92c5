//! Space and time grids, difference operators and the discrete inner
//! products of the state space.

use crate::error::{Error, Result};
use crate::linalg::{dot, Tridiagonal};

/// Uniform grid on `(0, length)` with `m` interior nodes and homogeneous
/// Dirichlet ghosts at both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceGrid1D {
    m: usize,
    length: f64,
}

impl SpaceGrid1D {
    pub fn new(m: usize, length: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidGrid("need at least one interior node".into()));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidGrid(format!("domain length {length} must be positive")));
        }
        Ok(Self { m, length })
    }

    pub fn nodes(&self) -> usize {
        self.m
    }

    pub fn edges(&self) -> usize {
        self.m + 1
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn h(&self) -> f64 {
        self.length / (self.m as f64 + 1.0)
    }

    /// Coordinates of the interior nodes.
    pub fn coords(&self) -> Vec<f64> {
        let h = self.h();
        (1..=self.m).map(|i| i as f64 * h).collect()
    }

    /// Edge differences `(v_{e+1} - v_e) / h`, `e = 0..=m`, with zero ghosts.
    pub fn gradient(&self, v: &[f64]) -> Vec<f64> {
        let h = self.h();
        let m = self.m;
        (0..=m)
            .map(|e| {
                let right = if e < m { v[e] } else { 0.0 };
                let left = if e > 0 { v[e - 1] } else { 0.0 };
                (right - left) / h
            })
            .collect()
    }

    /// The negative adjoint of [`gradient`](Self::gradient) for the
    /// unweighted Euclidean pairing: `(w_{i+1} - w_i) / h` at node `i`.
    pub fn divergence(&self, w: &[f64]) -> Vec<f64> {
        let h = self.h();
        (0..self.m).map(|i| (w[i + 1] - w[i]) / h).collect()
    }

    /// `D'w`, the transpose of the gradient.
    pub fn gradient_adjoint(&self, w: &[f64]) -> Vec<f64> {
        self.divergence(w).into_iter().map(|v| -v).collect()
    }

    /// The symmetric positive definite matrix `-Δ_h = D'D`.
    pub fn laplacian(&self) -> Tridiagonal {
        let h2 = self.h() * self.h();
        Tridiagonal::symmetric(vec![2.0 / h2; self.m], vec![-1.0 / h2; self.m - 1])
    }

    /// `(u, v)_h = h Σ u_i v_i`.
    pub fn l2_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.h() * dot(u, v)
    }

    /// `(u, v)_{-1} = h u'(-Δ_h)^{-1} v`.
    pub fn hminus1_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let w = self
            .laplacian()
            .solve(v)
            .expect("discrete Dirichlet Laplacian is nonsingular");
        self.h() * dot(u, &w)
    }
}

/// Strictly increasing time grid starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    t: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(n: usize, horizon: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGrid("need at least one time step".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidGrid(format!("horizon {horizon} must be positive")));
        }
        Self::from_points((0..=n).map(|k| horizon * k as f64 / n as f64).collect())
    }

    pub fn from_points(t: Vec<f64>) -> Result<Self> {
        if t.len() < 2 {
            return Err(Error::InvalidGrid("need at least two time points".into()));
        }
        if t[0] != 0.0 {
            return Err(Error::InvalidGrid(format!("time grid must start at 0, got {}", t[0])));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("time points must be strictly increasing".into()));
        }
        Ok(Self { t })
    }

    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.t.len() - 1
    }

    pub fn points(&self) -> &[f64] {
        &self.t
    }

    pub fn horizon(&self) -> f64 {
        *self.t.last().unwrap()
    }

    /// `Δt_k = t_k - t_{k-1}` for `k = 1..=N`, returned zero-based.
    pub fn dt(&self, k: usize) -> f64 {
        self.t[k] - self.t[k - 1]
    }

    pub fn steps_iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.t.windows(2).map(|w| w[1] - w[0])
    }

    pub fn max_dt(&self) -> f64 {
        self.steps_iter().fold(0.0, f64::max)
    }

    /// Keeps every `factor`-th point. Requires `factor | N`.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.steps() % factor != 0 {
            return Err(Error::InvalidGrid(format!(
                "coarsening factor {factor} does not divide {} steps",
                self.steps()
            )));
        }
        Self::from_points(self.t.iter().step_by(factor).copied().collect())
    }
}

/// A linear operator between finite-dimensional spaces with an adjoint for
/// the Euclidean pairing.
pub trait LinearMap {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64>;

    /// Operator norm estimate by power iteration on `K'K`.
    fn norm_estimate(&self, iters: usize) -> f64 {
        let n = self.dim_in();
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64).collect();
        let mut est = 0.0;
        for _ in 0..iters.max(1) {
            let nv = dot(&v, &v).sqrt();
            if nv == 0.0 {
                return 0.0;
            }
            v.iter_mut().for_each(|x| *x /= nv);
            let w = self.apply_adjoint(&self.apply(&v));
            est = dot(&v, &w).max(0.0).sqrt();
            v = w;
        }
        est
    }
}

impl LinearMap for SpaceGrid1D {
    fn dim_in(&self) -> usize {
        self.m
    }
    fn dim_out(&self) -> usize {
        self.m + 1
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.gradient(x)
    }
    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        self.gradient_adjoint(y)
    }
}

/// The state space with its discrete inner product.
#[derive(Debug, Clone, PartialEq)]
pub enum StateSpace {
    L2(SpaceGrid1D),
    HMinus1(SpaceGrid1D),
    Euclidean(usize),
}

impl StateSpace {
    pub fn dim(&self) -> usize {
        match self {
            StateSpace::L2(g) | StateSpace::HMinus1(g) => g.nodes(),
            StateSpace::Euclidean(d) => *d,
        }
    }

    pub fn grid(&self) -> Option<&SpaceGrid1D> {
        match self {
            StateSpace::L2(g) | StateSpace::HMinus1(g) => Some(g),
            StateSpace::Euclidean(_) => None,
        }
    }

    /// Riesz map `R` with `(a, b)_H = a'R b`, applied to `b`.
    pub fn riesz(&self, b: &[f64]) -> Vec<f64> {
        match self {
            StateSpace::L2(g) => b.iter().map(|v| g.h() * v).collect(),
            StateSpace::HMinus1(g) => {
                let w = g.laplacian().solve(b).expect("Laplacian is nonsingular");
                w.into_iter().map(|v| g.h() * v).collect()
            }
            StateSpace::Euclidean(_) => b.to_vec(),
        }
    }

    /// Inverse Riesz map, turning a Euclidean covector into the
    /// corresponding element of `H`.
    pub fn riesz_inverse(&self, c: &[f64]) -> Vec<f64> {
        match self {
            StateSpace::L2(g) => c.iter().map(|v| v / g.h()).collect(),
            StateSpace::HMinus1(g) => {
                let l = g.laplacian();
                l.apply(c).into_iter().map(|v| v / g.h()).collect()
            }
            StateSpace::Euclidean(_) => c.to_vec(),
        }
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            StateSpace::L2(g) => g.l2_inner(a, b),
            StateSpace::HMinus1(g) => g.hminus1_inner(a, b),
            StateSpace::Euclidean(_) => dot(a, b),
        }
    }

    pub fn norm_sq(&self, a: &[f64]) -> f64 {
        self.inner(a, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_time_grids() {
        assert!(TimeGrid::from_points(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::from_points(vec![0.1, 0.5]).is_err());
        assert!(TimeGrid::uniform(0, 1.0).is_err());
        assert!(SpaceGrid1D::new(0, 1.0).is_err());
    }

    #[test]
    fn laplacian_is_gradient_gram() {
        let g = SpaceGrid1D::new(7, 1.0).unwrap();
        let v: Vec<f64> = (0..7).map(|i| (i as f64).sin()).collect();
        let a = g.laplacian().apply(&v);
        let b = g.gradient_adjoint(&g.gradient(&v));
        for i in 0..7 {
            assert!((a[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn gradient_norm_estimate() {
        let g = SpaceGrid1D::new(20, 1.0).unwrap();
        let est = g.norm_estimate(2000);
        let h = g.h();
        let exact = 2.0 / h * (std::f64::consts::PI * 20.0 / (2.0 * 21.0)).sin();
        assert!((est - exact).abs() / exact < 1e-3, "{est} vs {exact}");
    }

    #[test]
    fn coarsen_time_grid() {
        let t = TimeGrid::uniform(8, 2.0).unwrap();
        let c = t.coarsen(4).unwrap();
        assert_eq!(c.points(), &[0.0, 1.0, 2.0]);
        assert!(t.coarsen(3).is_err());
    }

    proptest! {
        #[test]
        fn adjoint_pairing(v in prop::collection::vec(-5.0..5.0f64, 6), w in prop::collection::vec(-5.0..5.0f64, 7)) {
            let g = SpaceGrid1D::new(6, 1.3).unwrap();
            let lhs = dot(&g.gradient(&v), &w);
            let rhs = dot(&v, &g.gradient_adjoint(&w));
            prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
        }

        #[test]
        fn hminus1_riesz_consistent(a in prop::collection::vec(-5.0..5.0f64, 5), b in prop::collection::vec(-5.0..5.0f64, 5)) {
            let g = SpaceGrid1D::new(5, 1.0).unwrap();
            let s = StateSpace::HMinus1(g);
            let ip = s.inner(&a, &b);
            let via = dot(&a, &s.riesz(&b));
            prop_assert!((ip - via).abs() < 1e-10 * (1.0 + ip.abs()));
            prop_assert!((s.inner(&a, &b) - s.inner(&b, &a)).abs() < 1e-10 * (1.0 + ip.abs()));
            let back = s.riesz_inverse(&s.riesz(&b));
            for i in 0..5 { prop_assert!((back[i] - b[i]).abs() < 1e-8 * (1.0 + b[i].abs())); }
        }
    }
}
