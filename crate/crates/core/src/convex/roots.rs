//! One-dimensional root finding and quadrature used by the integrands.

use crate::error::{Error, Result};
use std::sync::OnceLock;

/// Solves `g(z) = target` for a nondecreasing `g` by safeguarded Newton
/// steps inside an expanding bisection bracket.
///
/// `dg` may return a non-finite or nonpositive slope, in which case the
/// iteration bisects.
pub(crate) fn solve_increasing<G, D>(g: G, dg: D, target: f64, guess: f64) -> Result<f64>
where
    G: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let f = |z: f64| g(z) - target;
    let tol = 1e-13 * (1.0 + target.abs());
    let f0 = f(guess);
    if f0 == 0.0 {
        return Ok(guess);
    }
    // bracket [lo, hi] with f(lo) < 0 < f(hi)
    let (mut lo, mut hi) = if f0 < 0.0 { (guess, f64::NAN) } else { (f64::NAN, guess) };
    let mut step = 1.0 + guess.abs();
    for _ in 0..2000 {
        if lo.is_nan() {
            let z = hi - step;
            let v = f(z);
            if v < 0.0 {
                lo = z;
                break;
            }
            if v == 0.0 {
                return Ok(z);
            }
            hi = z;
        } else if hi.is_nan() {
            let z = lo + step;
            let v = f(z);
            if v > 0.0 || v.is_nan() && z.is_finite() {
                hi = z;
                break;
            }
            if v == 0.0 {
                return Ok(z);
            }
            lo = z;
        } else {
            break;
        }
        step *= 2.0;
        if !step.is_finite() {
            break;
        }
    }
    if lo.is_nan() || hi.is_nan() {
        return Err(Error::NotConverged {
            what: "root bracket",
            iters: 2000,
            residual: f0.abs(),
        });
    }
    let mut z = if f0 < 0.0 { lo } else { hi };
    for it in 0..400 {
        let v = f(z);
        if v.abs() <= tol {
            return Ok(z);
        }
        if v < 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        if hi - lo <= 4.0 * f64::EPSILON * (1.0 + z.abs()) {
            return Ok(0.5 * (lo + hi));
        }
        let d = dg(z);
        let newton = z - v / d;
        z = if d.is_finite() && d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if it == 399 {
            return Err(Error::NotConverged {
                what: "safeguarded Newton",
                iters: 400,
                residual: v.abs(),
            });
        }
    }
    Ok(z)
}

const GL_ORDER: usize = 20;

fn gauss_legendre() -> &'static [(f64, f64)] {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| {
        let n = GL_ORDER;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
        }
        out
    })
}

/// Composite Gauss-Legendre quadrature of `f` over `[a, b]` on `panels`
/// panels graded quadratically towards `a`.
pub(crate) fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let nodes = gauss_legendre();
    let panels = panels.max(1);
    let mut total = 0.0;
    for p in 0..panels {
        let s0 = (p as f64 / panels as f64).powi(2);
        let s1 = ((p + 1) as f64 / panels as f64).powi(2);
        let x0 = a + (b - a) * s0;
        let x1 = a + (b - a) * s1;
        let half = 0.5 * (x1 - x0);
        let mid = 0.5 * (x1 + x0);
        let mut s = 0.0;
        for &(x, w) in nodes {
            s += w * f(mid + half * x);
        }
        total += half * s;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_polynomial_and_exp() {
        let v = integrate(|x| x.powi(7), 0.0, 2.0, 1);
        assert!((v - 2.0_f64.powi(8) / 8.0).abs() < 1e-12);
        let e = integrate(f64::exp, 0.0, 3.0, 8);
        assert!((e - (3.0_f64.exp() - 1.0)).abs() < 1e-12);
        let s = integrate(|x: f64| x.powf(1.5), 0.0, 1.0, 16);
        assert!((s - 0.4).abs() < 1e-13);
    }

    #[test]
    fn root_of_cubic() {
        let z = solve_increasing(|z| z * z * z + z, |z| 3.0 * z * z + 1.0, 10.0, 0.0).unwrap();
        assert!((z * z * z + z - 10.0).abs() < 1e-12);
    }

    #[test]
    fn root_without_useful_derivative() {
        let z = solve_increasing(|z: f64| z.signum() * z.abs().sqrt(), |_| f64::NAN, -3.0, 5.0).unwrap();
        assert!((z + 9.0).abs() < 1e-10);
    }
}
