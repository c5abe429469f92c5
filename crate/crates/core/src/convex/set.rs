use crate::error::{Error, Result};
use crate::linalg::{dot, norm2};

/// A closed convex subset of `R^d`, entering through its indicator.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexSet {
    NonnegOrthant(usize),
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Convex hull of the given vertices.
    Polytope { vertices: Vec<Vec<f64>> },
}

const FEAS_TOL: f64 = 1e-10;

impl ConvexSet {
    pub fn dim(&self) -> usize {
        match self {
            Self::NonnegOrthant(d) => *d,
            Self::Box { lo, .. } => lo.len(),
            Self::Polytope { vertices } => vertices.first().map_or(0, |v| v.len()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::NonnegOrthant(d) if *d == 0 => Err(Error::InvalidInstance("empty orthant dimension".into())),
            Self::Box { lo, hi } => {
                if lo.len() != hi.len() || lo.is_empty() {
                    return Err(Error::Dimension { expected: lo.len(), got: hi.len() });
                }
                if lo.iter().zip(hi).any(|(a, b)| !(a <= b)) {
                    return Err(Error::InvalidInstance("box with lo > hi".into()));
                }
                Ok(())
            }
            Self::Polytope { vertices } => {
                let d = self.dim();
                if vertices.is_empty() || d == 0 {
                    return Err(Error::InvalidInstance("polytope needs at least one vertex".into()));
                }
                if vertices.iter().any(|v| v.len() != d) {
                    return Err(Error::InvalidInstance("polytope vertices differ in dimension".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        match self {
            Self::NonnegOrthant(_) => z.iter().all(|&v| v >= -tol),
            Self::Box { lo, hi } => z.iter().enumerate().all(|(i, &v)| v >= lo[i] - tol && v <= hi[i] + tol),
            Self::Polytope { .. } => {
                let p = self.project(z);
                let d: Vec<f64> = p.iter().zip(z).map(|(a, b)| a - b).collect();
                norm2(&d) <= tol
            }
        }
    }

    /// Indicator value: `0` on the set, `+∞` off it.
    pub fn indicator(&self, z: &[f64]) -> f64 {
        if self.contains(z, FEAS_TOL) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    /// Support function `sup_{k ∈ K} (v, k)`, the conjugate of the indicator.
    pub fn support(&self, v: &[f64]) -> f64 {
        match self {
            Self::NonnegOrthant(_) => {
                if v.iter().all(|&x| x <= 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Self::Box { lo, hi } => v
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    if x > 0.0 {
                        if hi[i].is_finite() {
                            x * hi[i]
                        } else {
                            f64::INFINITY
                        }
                    } else if x < 0.0 {
                        if lo[i].is_finite() {
                            x * lo[i]
                        } else {
                            f64::INFINITY
                        }
                    } else {
                        0.0
                    }
                })
                .sum(),
            Self::Polytope { vertices } => vertices.iter().map(|k| dot(k, v)).fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        match self {
            Self::NonnegOrthant(_) => z.iter().map(|v| v.max(0.0)).collect(),
            Self::Box { lo, hi } => z.iter().enumerate().map(|(i, v)| v.clamp(lo[i], hi[i])).collect(),
            Self::Polytope { vertices } => {
                let w = hull_weights(vertices, z);
                combine(vertices, &w)
            }
        }
    }

    /// Whether `v` lies in the normal cone of the set at `z ∈ K`, i.e.
    /// `(v, k - z) <= 0` for all `k ∈ K`, up to `tol`.
    pub fn normal_cone_contains(&self, z: &[f64], v: &[f64], tol: f64) -> bool {
        if !self.contains(z, tol) {
            return false;
        }
        self.support(v) - dot(v, z) <= tol * (1.0 + norm2(v))
    }
}

fn combine(vertices: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let d = vertices[0].len();
    let mut out = vec![0.0; d];
    for (v, &wi) in vertices.iter().zip(w) {
        for (o, x) in out.iter_mut().zip(v) {
            *o += wi * x;
        }
    }
    out
}

fn project_simplex(y: &[f64]) -> Vec<f64> {
    let mut u = y.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i as f64 + 1.0);
        if ui - t > 0.0 {
            theta = t;
        }
    }
    y.iter().map(|v| (v - theta).max(0.0)).collect()
}

/// Barycentric weights of the nearest point of the convex hull:
/// minimizes `|V w - z|²` over the unit simplex. Accelerated projected
/// gradient, then an equality-constrained solve on the detected support.
fn hull_weights(vertices: &[Vec<f64>], z: &[f64]) -> Vec<f64> {
    let n = vertices.len();
    if n == 1 {
        return vec![1.0];
    }
    let gram = nalgebra::DMatrix::from_fn(n, n, |i, j| dot(&vertices[i], &vertices[j]));
    let lin: Vec<f64> = vertices.iter().map(|v| dot(v, z)).collect();
    let lip = gram.clone().symmetric_eigenvalues().iter().fold(0.0_f64, |a, &b| a.max(b)).max(1e-300);
    let grad = |w: &[f64]| -> Vec<f64> {
        let wv = nalgebra::DVector::from_column_slice(w);
        let g = &gram * wv;
        g.iter().zip(&lin).map(|(a, b)| a - b).collect()
    };
    let mut w = vec![1.0 / n as f64; n];
    let mut y = w.clone();
    let mut t = 1.0_f64;
    for _ in 0..5000 {
        let g = grad(&y);
        let step: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - b / lip).collect();
        let wn = project_simplex(&step);
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / tn;
        let diff: f64 = wn.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        y = wn.iter().zip(&w).map(|(a, b)| a + beta * (a - b)).collect();
        w = wn;
        t = tn;
        if diff < 1e-15 {
            break;
        }
    }
    polish(&gram, &lin, w)
}

fn polish(gram: &nalgebra::DMatrix<f64>, lin: &[f64], w: Vec<f64>) -> Vec<f64> {
    let n = w.len();
    let mut support: Vec<usize> = (0..n).filter(|&i| w[i] > 1e-9).collect();
    for _ in 0..n + 1 {
        let s = support.len();
        if s == 0 {
            return w;
        }
        let mut kkt = nalgebra::DMatrix::zeros(s + 1, s + 1);
        let mut rhs = nalgebra::DVector::zeros(s + 1);
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                kkt[(a, b)] = gram[(i, j)];
            }
            kkt[(a, s)] = 1.0;
            kkt[(s, a)] = 1.0;
            rhs[a] = lin[i];
        }
        rhs[s] = 1.0;
        let Some(sol) = kkt.clone().svd(true, true).solve(&rhs, 1e-13).ok() else {
            return w;
        };
        if sol.iter().take(s).any(|&x| x < -1e-14) {
            return w;
        }
        let mut cand = vec![0.0; n];
        for (a, &i) in support.iter().enumerate() {
            cand[i] = sol[a].max(0.0);
        }
        let total: f64 = cand.iter().sum();
        cand.iter_mut().for_each(|x| *x /= total);
        // multiplier check for excluded vertices: gradient_i >= -ν
        let nu = -sol[s];
        let wv = nalgebra::DVector::from_column_slice(&cand);
        let g = gram * &wv;
        let viol = (0..n)
            .filter(|i| !support.contains(i))
            .map(|i| (i, g[i] - lin[i] - nu))
            .filter(|&(_, r)| r < -1e-12)
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        match viol {
            None => return cand,
            Some((i, _)) => {
                support.push(i);
                support.sort();
            }
        }
    }
    w
}
