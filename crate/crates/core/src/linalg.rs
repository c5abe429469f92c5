//! Small dense and banded kernels shared by the resolvent engines.

use crate::error::{Error, Result};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A tridiagonal matrix stored by its three bands.
///
/// `lower[i]` is entry `(i + 1, i)` and `upper[i]` is entry `(i, i + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Self {
        let n = diag.len();
        assert!(n > 0);
        assert_eq!(lower.len(), n - 1);
        assert_eq!(upper.len(), n - 1);
        Self { lower, diag, upper }
    }

    pub fn symmetric(diag: Vec<f64>, off: Vec<f64>) -> Self {
        Self::new(off.clone(), diag, off)
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.upper[i] * x[i + 1];
            }
            out[i] = s;
        }
        out
    }

    /// Adds `shift[i]` to the diagonal.
    pub fn add_diagonal(&mut self, shift: &[f64]) {
        for (d, s) in self.diag.iter_mut().zip(shift) {
            *d += s;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self
            .lower
            .iter_mut()
            .chain(self.diag.iter_mut())
            .chain(self.upper.iter_mut())
        {
            *v *= factor;
        }
    }

    /// Principal submatrix on the sorted index set `idx`.
    pub fn principal(&self, idx: &[usize]) -> Tridiagonal {
        let m = idx.len();
        let diag: Vec<f64> = idx.iter().map(|&i| self.diag[i]).collect();
        let mut lower = vec![0.0; m.saturating_sub(1)];
        let mut upper = vec![0.0; m.saturating_sub(1)];
        for k in 0..m.saturating_sub(1) {
            if idx[k + 1] == idx[k] + 1 {
                lower[k] = self.lower[idx[k]];
                upper[k] = self.upper[idx[k]];
            }
        }
        Tridiagonal { lower, diag, upper }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.dim();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i + 1 < n {
                m[(i + 1, i)] = self.lower[i];
                m[(i, i + 1)] = self.upper[i];
            }
        }
        m
    }

    fn scale_estimate(&self) -> f64 {
        norm_inf(&self.diag)
            .max(norm_inf(&self.lower))
            .max(norm_inf(&self.upper))
    }

    /// Thomas algorithm. Fails on a (numerically) zero pivot.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if rhs.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: rhs.len(),
            });
        }
        let tiny = 1e-13 * self.scale_estimate().max(f64::MIN_POSITIVE);
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut pivot = self.diag[0];
        if pivot.abs() <= tiny {
            return Err(Error::Breakdown(format!("zero pivot at row 0 ({pivot:e})")));
        }
        if n > 1 {
            c[0] = self.upper[0] / pivot;
        }
        d[0] = rhs[0] / pivot;
        for i in 1..n {
            pivot = self.diag[i] - self.lower[i - 1] * c[i - 1];
            if pivot.abs() <= tiny || !pivot.is_finite() {
                return Err(Error::Breakdown(format!(
                    "zero pivot at row {i} ({pivot:e})"
                )));
            }
            if i + 1 < n {
                c[i] = self.upper[i] / pivot;
            }
            d[i] = (rhs[i] - self.lower[i - 1] * d[i - 1]) / pivot;
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        Ok(d)
    }

    /// Solves a symmetric positive semidefinite system with consistent
    /// right-hand side. Falls back to a shifted solve with iterative
    /// refinement when the matrix is singular, which converges to the
    /// minimum-norm solution.
    pub fn solve_psd(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if let Ok(x) = self.solve(rhs) {
            let r = residual(self, &x, rhs);
            if r <= 1e-9 * (1.0 + norm_inf(rhs)) {
                return Ok(x);
            }
        }
        let shift = 1e-10 * self.scale_estimate();
        let mut shifted = self.clone();
        shifted.add_diagonal(&vec![shift; self.dim()]);
        let mut x = vec![0.0; self.dim()];
        for _ in 0..200 {
            let r: Vec<f64> = rhs
                .iter()
                .zip(self.apply(&x))
                .map(|(b, ax)| b - ax)
                .collect();
            if norm_inf(&r) <= 1e-13 * (1.0 + norm_inf(rhs)) {
                break;
            }
            let dx = shifted.solve(&r)?;
            for (xi, di) in x.iter_mut().zip(dx) {
                *xi += di;
            }
        }
        Ok(x)
    }
}

fn residual(a: &Tridiagonal, x: &[f64], b: &[f64]) -> f64 {
    a.apply(x)
        .iter()
        .zip(b)
        .fold(0.0_f64, |m, (ax, bi)| m.max((ax - bi).abs()))
}

/// Solution of a box-constrained quadratic program.
#[derive(Debug, Clone)]
pub struct BoxQpSolution {
    pub x: Vec<f64>,
    /// `-(Q x + q)`: positive where the upper bound is active, negative at
    /// the lower bound, zero on the free set.
    pub multiplier: Vec<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
}

/// Minimizes `1/2 x'Qx + q'x` subject to `lo <= x <= hi` for a symmetric
/// tridiagonal `Q` by the primal-dual active set method.
///
/// Finite termination holds for M-matrices; a singular `Q` (only the
/// constant vector in its kernel, as for the total-variation dual) is
/// handled through [`Tridiagonal::solve_psd`].
pub fn box_qp_pdas(
    q_mat: &Tridiagonal,
    q: &[f64],
    lo: &[f64],
    hi: &[f64],
    init: Option<&[f64]>,
    max_iter: usize,
) -> Result<BoxQpSolution> {
    let n = q_mat.dim();
    let mut x: Vec<f64> = match init {
        Some(v) => v
            .iter()
            .enumerate()
            .map(|(i, &v)| v.clamp(lo[i], hi[i]))
            .collect(),
        None => vec![0.0_f64; n]
            .iter()
            .enumerate()
            .map(|(i, v)| v.clamp(lo[i], hi[i]))
            .collect(),
    };
    let mut mult = multiplier(q_mat, &x, q);
    let scale: Vec<f64> = q_mat.diag.iter().map(|d| 1.0 / d.max(1e-300)).collect();
    let mut prev: Option<Vec<i8>> = None;
    for it in 1..=max_iter {
        // -1: lower active, 1: upper active, 0: free
        let state: Vec<i8> = (0..n)
            .map(|i| {
                let trial = x[i] + scale[i] * mult[i];
                if trial > hi[i] {
                    1
                } else if trial < lo[i] {
                    -1
                } else {
                    0
                }
            })
            .collect();
        let changed = prev.as_ref() != Some(&state);
        if !changed && it > 1 {
            let kkt = kkt_residual(&x, &mult, lo, hi);
            return Ok(BoxQpSolution {
                x,
                multiplier: mult,
                iterations: it,
                kkt_residual: kkt,
            });
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 0).collect();
        for i in 0..n {
            match state[i] {
                1 => x[i] = hi[i],
                -1 => x[i] = lo[i],
                _ => {}
            }
        }
        if !free.is_empty() {
            // rhs = -q_F - Q_{F,A} x_A
            let mut rhs = Vec::with_capacity(free.len());
            for &i in &free {
                let mut s = -q[i];
                if i > 0 && state[i - 1] != 0 {
                    s -= q_mat.lower[i - 1] * x[i - 1];
                }
                if i + 1 < n && state[i + 1] != 0 {
                    s -= q_mat.upper[i] * x[i + 1];
                }
                rhs.push(s);
            }
            let sub = q_mat.principal(&free);
            let xf = sub.solve_psd(&rhs)?;
            for (k, &i) in free.iter().enumerate() {
                x[i] = xf[k];
            }
        }
        mult = multiplier(q_mat, &x, q);
        for &i in &free {
            mult[i] = 0.0;
        }
        // degenerate bounds can make the active set flip on rounding noise
        let full = multiplier(q_mat, &x, q);
        let scaled: Vec<f64> = full.iter().zip(&scale).map(|(m, s)| m * s).collect();
        if kkt_residual(&x, &scaled, lo, hi) <= 1e-13 * (1.0 + norm_inf(&x)) {
            let kkt = kkt_residual(&x, &full, lo, hi);
            return Ok(BoxQpSolution {
                x,
                multiplier: mult,
                iterations: it,
                kkt_residual: kkt,
            });
        }
        prev = Some(state);
    }
    let kkt = kkt_residual(&x, &multiplier(q_mat, &x, q), lo, hi);
    Err(Error::NotConverged {
        what: "primal-dual active set",
        iters: max_iter,
        residual: kkt,
    })
}

fn multiplier(q_mat: &Tridiagonal, x: &[f64], q: &[f64]) -> Vec<f64> {
    q_mat
        .apply(x)
        .iter()
        .zip(q)
        .map(|(a, b)| -(a + b))
        .collect()
}

/// Natural residual `|x - clamp(x + g*, lo, hi)|` with `g* = -(Qx+q)`, i.e.
/// the projected-gradient stationarity measure.
fn kkt_residual(x: &[f64], mult: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    (0..x.len())
        .map(|i| (x[i] - (x[i] + mult[i]).clamp(lo[i], hi[i])).abs())
        .fold(0.0, f64::max)
}

/// Dense symmetric positive definite solve through Cholesky.
pub(crate) fn dense_spd_solve(
    a: &nalgebra::DMatrix<f64>,
    b: &[f64],
) -> Result<Vec<f64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Breakdown("matrix is not positive definite".into()))?;
    let x = chol.solve(&nalgebra::DVector::from_column_slice(b));
    Ok(x.iter().copied().collect())
}
