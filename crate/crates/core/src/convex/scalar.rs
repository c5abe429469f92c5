use super::roots::{integrate, solve_increasing};
use crate::error::{Error, Result};

/// A closed subdifferential interval `[lo, hi]`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    /// Distance from `v` to the interval.
    pub fn distance(&self, v: f64) -> f64 {
        if v < self.lo {
            self.lo - v
        } else if v > self.hi {
            v - self.hi
        } else {
            0.0
        }
    }

    /// Element of minimal absolute value.
    pub fn min_norm(&self) -> f64 {
        0.0_f64.clamp(self.lo, self.hi)
    }
}

/// A proper, convex, lower semicontinuous function on the real line.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarConvex {
    /// `c z² / 2`, `c > 0`.
    Quadratic(f64),
    /// `|z|^p / p`, `p > 1`.
    PowerNorm(f64),
    AbsValue,
    /// `|z| log(|z| + 1)`.
    LogEntropy,
    /// Primitive of `a0 exp(a1 |z|^p sgn z)` vanishing at zero.
    ExpGrowth { a0: f64, a1: f64, p: f64 },
    /// Indicator of `[lo, hi]`; use infinite bounds for half-lines.
    Indicator { lo: f64, hi: f64 },
    /// Moreau-Yosida envelope `inf_u base(u) + |z - u|² / (2ε)`.
    Envelope { base: Box<ScalarConvex>, eps: f64 },
}

impl ScalarConvex {
    /// Huber function, the envelope of `|z|`.
    pub fn huber(eps: f64) -> Self {
        Self::Envelope {
            base: Box::new(Self::AbsValue),
            eps,
        }
    }

    pub fn nonneg() -> Self {
        Self::Indicator {
            lo: 0.0,
            hi: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInstance(msg));
        match self {
            Self::Quadratic(c) if !(*c > 0.0 && c.is_finite()) => bad(format!("Quadratic needs c > 0, got {c}")),
            Self::PowerNorm(p) if !(*p > 1.0 && p.is_finite()) => bad(format!("PowerNorm needs p > 1, got {p}")),
            Self::ExpGrowth { a0, a1, p } => {
                if !(*a0 > 0.0 && *a1 > 0.0 && *p >= 1.0 && a0.is_finite() && a1.is_finite() && p.is_finite()) {
                    bad(format!("ExpGrowth needs a0 > 0, a1 > 0, p >= 1, got ({a0}, {a1}, {p})"))
                } else {
                    Ok(())
                }
            }
            Self::Indicator { lo, hi } if !(lo <= hi) || lo.is_nan() => bad(format!("empty interval [{lo}, {hi}]")),
            Self::Envelope { base, eps } => {
                if !(*eps > 0.0 && eps.is_finite()) {
                    return bad(format!("envelope needs eps > 0, got {eps}"));
                }
                base.validate()
            }
            _ => Ok(()),
        }
    }

    /// Whether the conjugate has a closed form.
    pub fn closed_form_conjugate(&self) -> bool {
        match self {
            Self::Quadratic(_) | Self::PowerNorm(_) | Self::AbsValue | Self::Indicator { .. } => true,
            Self::LogEntropy | Self::ExpGrowth { .. } => false,
            Self::Envelope { base, .. } => base.closed_form_conjugate(),
        }
    }

    /// A lower bound on the strong convexity modulus of the conjugate,
    /// i.e. the inverse Lipschitz constant of the derivative.
    pub fn conjugate_modulus(&self) -> f64 {
        match self {
            Self::Quadratic(c) => 1.0 / c,
            Self::Envelope { base, eps } => eps + base.conjugate_modulus(),
            _ => 0.0,
        }
    }

    /// Whether the function is finite and continuously differentiable on
    /// the whole line.
    pub fn is_smooth(&self) -> bool {
        match self {
            Self::Quadratic(_) | Self::PowerNorm(_) | Self::LogEntropy | Self::ExpGrowth { .. } => true,
            Self::Envelope { .. } => true,
            Self::AbsValue | Self::Indicator { .. } => false,
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        match self {
            Self::Quadratic(c) => 0.5 * c * z * z,
            Self::PowerNorm(p) => z.abs().powf(*p) / p,
            Self::AbsValue => z.abs(),
            Self::LogEntropy => z.abs() * z.abs().ln_1p(),
            Self::ExpGrowth { a0, a1, p } => exp_growth_primitive(*a0, *a1, *p, z),
            Self::Indicator { lo, hi } => {
                if z >= *lo && z <= *hi {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Self::Envelope { base, eps } => {
                let u = base.prox(z, *eps).unwrap_or(z);
                base.eval(u) + (z - u).powi(2) / (2.0 * eps)
            }
        }
    }

    /// Derivative where it exists.
    pub fn derivative(&self, z: f64) -> Option<f64> {
        match self {
            Self::Quadratic(c) => Some(c * z),
            Self::PowerNorm(p) => Some(z.signum() * z.abs().powf(p - 1.0) * if z == 0.0 { 0.0 } else { 1.0 }),
            Self::AbsValue => (z != 0.0).then(|| z.signum()),
            Self::LogEntropy => {
                let r = z.abs();
                Some(z.signum() * (r.ln_1p() + r / (1.0 + r)) * if z == 0.0 { 0.0 } else { 1.0 })
            }
            Self::ExpGrowth { a0, a1, p } => Some(a0 * (a1 * z.abs().powf(*p) * z.signum()).exp()),
            Self::Indicator { lo, hi } => (z > *lo && z < *hi).then_some(0.0),
            Self::Envelope { base, eps } => {
                let u = base.prox(z, *eps).ok()?;
                let g = (z - u) / eps;
                // keep the slope inside dom f* despite rounding in z - u
                Some(if matches!(base.as_ref(), Self::AbsValue) { g.clamp(-1.0, 1.0) } else { g })
            }
        }
    }

    /// Second derivative where it exists (a generalized Jacobian element at
    /// kinks of the derivative).
    pub fn second_derivative(&self, z: f64) -> Option<f64> {
        match self {
            Self::Quadratic(c) => Some(*c),
            Self::PowerNorm(p) => {
                if z == 0.0 {
                    if *p >= 2.0 {
                        Some(if *p == 2.0 { 1.0 } else { 0.0 })
                    } else {
                        None
                    }
                } else {
                    Some((p - 1.0) * z.abs().powf(p - 2.0))
                }
            }
            Self::AbsValue => (z != 0.0).then_some(0.0),
            Self::LogEntropy => {
                let r = 1.0 + z.abs();
                Some(1.0 / r + 1.0 / (r * r))
            }
            Self::ExpGrowth { a0, a1, p } => {
                let r = z.abs();
                let base = a0 * (a1 * r.powf(*p) * z.signum()).exp();
                if *p == 1.0 {
                    Some(base * a1)
                } else {
                    Some(base * a1 * p * r.powf(p - 1.0))
                }
            }
            Self::Indicator { lo, hi } => (z > *lo && z < *hi).then_some(0.0),
            Self::Envelope { base, eps } => {
                let u = base.prox(z, *eps).ok()?;
                match base.as_ref() {
                    Self::AbsValue => Some(if (z - u).abs() < *eps * (1.0 - 1e-15) || u == 0.0 { 1.0 / eps } else { 0.0 }),
                    Self::Indicator { lo, hi } => Some(if u > *lo && u < *hi { 0.0 } else { 1.0 / eps }),
                    b => {
                        let d2 = b.second_derivative(u)?;
                        Some(d2 / (1.0 + eps * d2))
                    }
                }
            }
        }
    }

    /// The subdifferential at `z`; `None` outside the domain.
    pub fn subdifferential(&self, z: f64) -> Option<Interval> {
        match self {
            Self::AbsValue if z == 0.0 => Some(Interval { lo: -1.0, hi: 1.0 }),
            Self::Indicator { lo, hi } => {
                if z < *lo || z > *hi {
                    None
                } else {
                    let a = if z == *lo { f64::NEG_INFINITY } else { 0.0 };
                    let b = if z == *hi { f64::INFINITY } else { 0.0 };
                    Some(Interval { lo: a, hi: b })
                }
            }
            _ => self.derivative(z).map(Interval::point),
        }
    }

    /// Minimal-norm subgradient.
    pub fn subgradient(&self, z: f64) -> Option<f64> {
        self.subdifferential(z).map(|i| i.min_norm())
    }

    /// `argmin_u f(u) + |u - v|² / (2τ)`.
    pub fn prox(&self, v: f64, tau: f64) -> Result<f64> {
        match self {
            Self::Quadratic(c) => Ok(v / (1.0 + tau * c)),
            Self::AbsValue => Ok(v.signum() * (v.abs() - tau).max(0.0)),
            Self::Indicator { lo, hi } => Ok(v.clamp(*lo, *hi)),
            Self::PowerNorm(_) | Self::LogEntropy | Self::ExpGrowth { .. } => {
                let guess = match self {
                    Self::ExpGrowth { .. } => v.min(0.0),
                    _ => 0.0,
                };
                solve_increasing(
                    |z| z + tau * self.derivative(z).unwrap(),
                    |z| 1.0 + tau * self.second_derivative(z).unwrap_or(f64::NAN),
                    v,
                    guess,
                )
            }
            Self::Envelope { base, eps } => {
                // prox of the envelope: v + τ/(ε+τ) (prox_{(ε+τ) base}(v) - v)
                let p = base.prox(v, eps + tau)?;
                Ok(v + tau / (eps + tau) * (p - v))
            }
        }
    }

    /// `f*(v) = sup_z v z - f(z)`, possibly `+∞`.
    pub fn conjugate(&self, v: f64) -> f64 {
        match self {
            Self::Quadratic(c) => v * v / (2.0 * c),
            Self::PowerNorm(p) => {
                let q = p / (p - 1.0);
                v.abs().powf(q) / q
            }
            Self::AbsValue => {
                if v.abs() <= 1.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Self::Indicator { lo, hi } => support_interval(*lo, *hi, v),
            Self::LogEntropy => match self.conjugate_argmax(v) {
                Some(z) => v * z - self.eval(z),
                None => f64::INFINITY,
            },
            Self::ExpGrowth { a0, a1, p } => {
                if v < 0.0 {
                    f64::INFINITY
                } else if v == 0.0 {
                    a0 * negative_tail_mass(*a1, *p)
                } else {
                    let z = self.conjugate_argmax(v).expect("positive slopes are attained");
                    v * z - self.eval(z)
                }
            }
            Self::Envelope { base, eps } => base.conjugate(v) + 0.5 * eps * v * v,
        }
    }

    /// A maximizer of `z ↦ v z - f(z)` when the supremum is attained.
    pub fn conjugate_argmax(&self, v: f64) -> Option<f64> {
        match self {
            Self::Quadratic(c) => Some(v / c),
            Self::PowerNorm(p) => Some(v.signum() * v.abs().powf(1.0 / (p - 1.0))),
            Self::AbsValue => {
                // at |v| = 1 every z with sgn z = v attains it; 0 is one of them
                if v.abs() <= 1.0 {
                    Some(0.0)
                } else {
                    None
                }
            }
            Self::Indicator { lo, hi } => {
                if v > 0.0 {
                    hi.is_finite().then_some(*hi)
                } else if v < 0.0 {
                    lo.is_finite().then_some(*lo)
                } else {
                    Some(0.0_f64.clamp(*lo, *hi))
                }
            }
            Self::LogEntropy => solve_increasing(
                |z| self.derivative(z).unwrap(),
                |z| self.second_derivative(z).unwrap(),
                v,
                v.signum() * (v.abs().exp_m1()).min(1e300),
            )
            .ok(),
            Self::ExpGrowth { a0, a1, p } => {
                if v <= 0.0 {
                    None
                } else {
                    let s = (v / a0).ln() / a1;
                    Some(s.signum() * s.abs().powf(1.0 / p))
                }
            }
            Self::Envelope { base, eps } => {
                // z = u + ε v with u a maximizer for the base
                base.conjugate_argmax(v).map(|u| u + eps * v)
            }
        }
    }

    /// `f(u) + f*(v) - u v`.
    pub fn fenchel_young_gap(&self, u: f64, v: f64) -> f64 {
        self.eval(u) + self.conjugate(v) - u * v
    }

    /// `argmin_s f*(s) + |s - w|² / (2σ)`, computed from the conjugate
    /// directly rather than through the Moreau identity.
    pub fn prox_conjugate(&self, w: f64, sigma: f64) -> Result<f64> {
        match self {
            Self::Quadratic(c) => Ok(w * c / (c + sigma)),
            Self::AbsValue => Ok(w.clamp(-1.0, 1.0)),
            Self::Indicator { lo, hi } => Ok(if w > sigma * hi {
                w - sigma * hi
            } else if w < sigma * lo {
                w - sigma * lo
            } else {
                0.0
            }),
            Self::PowerNorm(p) => {
                let q = p / (p - 1.0);
                solve_increasing(
                    |s| s + sigma * s.signum() * s.abs().powf(q - 1.0),
                    |s| 1.0 + sigma * (q - 1.0) * s.abs().powf(q - 2.0),
                    w,
                    0.0,
                )
            }
            Self::LogEntropy => solve_increasing(
                |s| s + sigma * self.conjugate_argmax(s).unwrap_or(f64::NAN),
                |s| {
                    let z = self.conjugate_argmax(s).unwrap_or(0.0);
                    1.0 + sigma / self.second_derivative(z).unwrap()
                },
                w,
                0.0,
            ),
            Self::ExpGrowth { a0, a1, p } => {
                // s > 0 always; (f*)'(s) = a^{-1}(s)
                let inv = |s: f64| {
                    let t = (s / a0).ln() / a1;
                    t.signum() * t.abs().powf(1.0 / p)
                };
                let g = |s: f64| {
                    if s <= 0.0 {
                        f64::NEG_INFINITY
                    } else {
                        s + sigma * inv(s)
                    }
                };
                solve_increasing(g, |s| 1.0 + sigma / self.second_derivative(inv(s)).unwrap(), w, *a0)
            }
            Self::Envelope { base, eps } => {
                // (base* + ε/2|·|²) prox: prox_{σ/(1+σε) base*}(w / (1+σε))
                let k = 1.0 + sigma * eps;
                base.prox_conjugate(w / k, sigma / k)
            }
        }
    }

    /// `|v - prox(v, τ) - τ prox*(v/τ, 1/τ)|`.
    pub fn moreau_identity_residual(&self, v: f64, tau: f64) -> Result<f64> {
        let p = self.prox(v, tau)?;
        let d = self.prox_conjugate(v / tau, 1.0 / tau)?;
        Ok((v - p - tau * d).abs())
    }

    /// Distance from the prox optimality condition `0 ∈ ∂f(z) + (z - v)/τ`.
    pub fn prox_residual(&self, v: f64, tau: f64, z: f64) -> f64 {
        match self.subdifferential(z) {
            Some(i) => i.distance(-(z - v) / tau),
            None => f64::INFINITY,
        }
    }
}

fn support_interval(lo: f64, hi: f64, v: f64) -> f64 {
    if v > 0.0 {
        if hi.is_finite() {
            v * hi
        } else {
            f64::INFINITY
        }
    } else if v < 0.0 {
        if lo.is_finite() {
            v * lo
        } else {
            f64::INFINITY
        }
    } else {
        0.0
    }
}

/// `∫_0^∞ exp(-a1 s^p) ds`.
fn negative_tail_mass(a1: f64, p: f64) -> f64 {
    if p == 1.0 {
        return 1.0 / a1;
    }
    let cut = (60.0 / a1).powf(1.0 / p);
    integrate(|s| (-a1 * s.powf(p)).exp(), 0.0, cut, 64)
}

fn exp_growth_primitive(a0: f64, a1: f64, p: f64, z: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return a0 * (a1 * z).exp_m1() / a1;
    }
    if z > 0.0 {
        let panels = (8.0 + 2.0 * a1 * z.powf(p)).min(4096.0) as usize;
        a0 * integrate(|s| (a1 * s.powf(p)).exp(), 0.0, z, panels)
    } else {
        let r = -z;
        let cut = (60.0 / a1).powf(1.0 / p);
        if r >= cut {
            -a0 * negative_tail_mass(a1, p)
        } else {
            -a0 * integrate(|s| (-a1 * s.powf(p)).exp(), 0.0, r, 32)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog() -> Vec<ScalarConvex> {
        vec![
            ScalarConvex::Quadratic(1.7),
            ScalarConvex::PowerNorm(1.5),
            ScalarConvex::PowerNorm(3.0),
            ScalarConvex::AbsValue,
            ScalarConvex::LogEntropy,
            ScalarConvex::ExpGrowth { a0: 1.0, a1: 0.5, p: 1.0 },
            ScalarConvex::ExpGrowth { a0: 0.7, a1: 0.3, p: 2.0 },
            ScalarConvex::nonneg(),
            ScalarConvex::Indicator { lo: -1.0, hi: 2.0 },
            ScalarConvex::huber(0.1),
            ScalarConvex::Envelope { base: Box::new(ScalarConvex::LogEntropy), eps: 0.5 },
        ]
    }

    #[test]
    fn closed_form_examples() {
        let a = ScalarConvex::AbsValue;
        assert_eq!(a.prox(2.0, 0.5).unwrap(), 1.5);
        assert_eq!(a.conjugate(0.5), 0.0);
        assert_eq!(a.conjugate(2.0), f64::INFINITY);
        assert!((a.fenchel_young_gap(1.0, 0.3) - 0.7).abs() < 1e-15);
        let q = ScalarConvex::Quadratic(1.0);
        assert!((q.prox(3.0, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(q.fenchel_young_gap(1.0, 1.0), 0.0);
        assert!(q.moreau_identity_residual(1.0, 1.0).unwrap() <= 1e-12);
        assert!(a.moreau_identity_residual(2.0, 0.5).unwrap() <= 1e-12);
    }

    #[test]
    fn huber_gradient_examples() {
        let h = ScalarConvex::huber(0.1);
        assert!((h.derivative(0.05).unwrap() - 0.5).abs() < 1e-12);
        assert!((h.derivative(1.0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(h.derivative(0.0).unwrap(), 0.0);
    }

    #[test]
    fn exp_growth_closed_and_quadrature_agree() {
        // p = 1 has a closed-form primitive; p = 1 + tiny goes through quadrature
        let a = ScalarConvex::ExpGrowth { a0: 1.3, a1: 0.8, p: 1.0 };
        let b = ScalarConvex::ExpGrowth { a0: 1.3, a1: 0.8, p: 1.0 + 1e-12 };
        for z in [-3.0, -0.5, 0.4, 2.0] {
            assert!((a.eval(z) - b.eval(z)).abs() < 1e-9 * (1.0 + a.eval(z).abs()), "z={z}");
        }
        assert!((a.conjugate(0.0) - 1.3 / 0.8).abs() < 1e-14);
        assert!((b.conjugate(0.0) - 1.3 / 0.8).abs() < 1e-8);
    }

    #[test]
    fn validation() {
        assert!(ScalarConvex::PowerNorm(1.0).validate().is_err());
        assert!(ScalarConvex::Quadratic(-1.0).validate().is_err());
        assert!(ScalarConvex::ExpGrowth { a0: 1.0, a1: 1.0, p: 0.5 }.validate().is_err());
        assert!(ScalarConvex::huber(0.0).validate().is_err());
        for f in catalog() {
            f.validate().unwrap();
        }
    }

    #[test]
    fn prox_residuals_and_moreau() {
        for f in catalog() {
            for &(v, tau) in &[(3.0, 1.0), (-2.0, 0.3), (0.01, 5.0), (0.0, 1.0), (7.5, 0.05)] {
                let z = f.prox(v, tau).unwrap();
                let r = f.prox_residual(v, tau, z);
                assert!(r <= 1e-8 * (1.0 + v.abs()), "{f:?} v={v} tau={tau} r={r}");
                let m = f.moreau_identity_residual(v, tau).unwrap();
                assert!(m <= 1e-8 * (1.0 + v.abs()), "{f:?} v={v} tau={tau} moreau={m}");
            }
        }
    }
}
