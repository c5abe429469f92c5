use beso_core::convex::{moreau_envelope, moreau_envelope_grad, ConvexSet, ScalarConvex};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn catalog() -> Vec<ScalarConvex> {
    vec![
        ScalarConvex::Quadratic(1.0),
        ScalarConvex::Quadratic(0.3),
        ScalarConvex::PowerNorm(1.5),
        ScalarConvex::PowerNorm(4.0),
        ScalarConvex::AbsValue,
        ScalarConvex::LogEntropy,
        ScalarConvex::ExpGrowth { a0: 1.0, a1: 1.0, p: 1.0 },
        ScalarConvex::ExpGrowth { a0: 0.5, a1: 0.2, p: 2.0 },
        ScalarConvex::nonneg(),
        ScalarConvex::Indicator { lo: -0.5, hi: 1.5 },
        ScalarConvex::huber(0.1),
        moreau_envelope(ScalarConvex::PowerNorm(3.0), 0.2),
    ]
}

/// Brute-force minimizer of `f` over a fine grid followed by golden
/// section refinement.
fn grid_argmin<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    let n = 200_000;
    let mut best = lo;
    let mut bv = f64::INFINITY;
    for i in 0..=n {
        let z = lo + (hi - lo) * i as f64 / n as f64;
        let v = f(z);
        if v < bv {
            bv = v;
            best = z;
        }
    }
    let h = (hi - lo) / n as f64;
    let (mut a, mut b) = (best - h, best + h);
    let g = (5.0_f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

#[test]
fn log_entropy_prox_matches_grid_search() {
    let f = ScalarConvex::LogEntropy;
    let z = f.prox(3.0, 1.0).unwrap();
    let oracle = grid_argmin(|u| f.eval(u) + (u - 3.0).powi(2) / 2.0, -5.0, 5.0);
    assert!((z - oracle).abs() < 1e-6, "{z} vs {oracle}");
}

#[test]
fn log_entropy_conjugate_matches_grid_search() {
    let f = ScalarConvex::LogEntropy;
    let zstar = grid_argmin(|z| -(z - f.eval(z)), -10.0, 10.0);
    let oracle = zstar - f.eval(zstar);
    assert!((f.conjugate(1.0) - oracle).abs() < 1e-6);
}

#[test]
fn fenchel_young_nonnegative_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for f in catalog() {
        for _ in 0..1000 {
            let u: f64 = rng.random_range(-4.0..4.0);
            let v: f64 = rng.random_range(-4.0..4.0);
            let (fu, fv) = (f.eval(u), f.conjugate(v));
            if fu.is_finite() && fv.is_finite() {
                let g = f.fenchel_young_gap(u, v);
                assert!(g >= -1e-10 * (1.0 + fu.abs() + fv.abs()), "{f:?} u={u} v={v} gap={g}");
            }
        }
    }
}

#[test]
fn fenchel_young_equality_at_subgradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for f in catalog() {
        for _ in 0..200 {
            let u: f64 = rng.random_range(-3.0..3.0);
            if let Some(v) = f.subgradient(u) {
                let g = f.fenchel_young_gap(u, v);
                assert!(g.abs() <= 1e-9 * (1.0 + f.eval(u).abs()), "{f:?} u={u} v={v} gap={g}");
            }
        }
    }
}

#[test]
fn prox_residual_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for f in catalog() {
        for _ in 0..1000 {
            let v: f64 = rng.random_range(-6.0..6.0);
            let tau: f64 = rng.random_range(0.01..5.0);
            let z = f.prox(v, tau).unwrap();
            let tol = if f.closed_form_conjugate() && !matches!(f, ScalarConvex::PowerNorm(_) | ScalarConvex::Envelope { .. }) {
                1e-10
            } else {
                1e-8
            };
            let r = f.prox_residual(v, tau, z);
            assert!(r <= tol * (1.0 + v.abs() / tau), "{f:?} v={v} tau={tau} r={r}");
        }
    }
}

#[test]
fn moreau_identity_for_catalog() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for f in catalog() {
        for _ in 0..300 {
            let v: f64 = rng.random_range(-5.0..5.0);
            let tau: f64 = rng.random_range(0.05..4.0);
            let r = f.moreau_identity_residual(v, tau).unwrap();
            assert!(r <= 1e-8 * (1.0 + v.abs()), "{f:?} v={v} tau={tau} r={r}");
        }
    }
}

#[test]
fn derivative_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for f in catalog() {
        for _ in 0..200 {
            let z: f64 = rng.random_range(-3.0..3.0);
            let Some(d) = f.derivative(z) else { continue };
            let h = 1e-6 * (1.0 + z.abs());
            let (a, b) = (f.eval(z + h), f.eval(z - h));
            if !(a.is_finite() && b.is_finite()) {
                continue;
            }
            let fd = (a - b) / (2.0 * h);
            assert!((d - fd).abs() <= 1e-5 * (1.0 + d.abs()), "{f:?} z={z}: {d} vs {fd}");
        }
    }
}

#[test]
fn superlinear_growth_along_rays() {
    for f in [ScalarConvex::LogEntropy, ScalarConvex::ExpGrowth { a0: 1.0, a1: 1e-5, p: 1.0 }] {
        let r: Vec<f64> = [1e2, 1e4, 1e6].iter().map(|&r| f.eval(r) / r).collect();
        assert!(r[0] < r[1] && r[1] < r[2], "{f:?}: {r:?}");
        assert!(r[2] > 2.0 * r[0]);
    }
    let neg: Vec<f64> = [1e2, 1e4, 1e6].iter().map(|&r| ScalarConvex::LogEntropy.eval(-r) / r).collect();
    assert!(neg[0] < neg[1] && neg[1] < neg[2]);
}

#[test]
fn envelope_examples_and_bounds() {
    let abs = ScalarConvex::AbsValue;
    assert!((moreau_envelope_grad(&abs, 0.1, 0.05).unwrap() - 0.5).abs() < 1e-14);
    assert!((moreau_envelope_grad(&abs, 0.1, 1.0).unwrap() - 1.0).abs() < 1e-14);
    assert_eq!(moreau_envelope_grad(&abs, 0.1, 0.0).unwrap(), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for base in [ScalarConvex::AbsValue, ScalarConvex::LogEntropy, ScalarConvex::PowerNorm(3.0)] {
        let eps = 0.3;
        let env = moreau_envelope(base.clone(), eps);
        for _ in 0..300 {
            let a: f64 = rng.random_range(-3.0..3.0);
            let b: f64 = rng.random_range(-3.0..3.0);
            assert!(env.eval(a) <= base.eval(a) + 1e-12);
            let (ga, gb) = (env.derivative(a).unwrap(), env.derivative(b).unwrap());
            assert!((ga - gb).abs() <= (a - b).abs() / eps + 1e-10);
            let h = 1e-6 * (1.0 + a.abs());
            let fd = (env.eval(a + h) - env.eval(a - h)) / (2.0 * h);
            assert!((ga - fd).abs() <= 1e-5 * (1.0 + ga.abs()));
        }
    }
}

#[test]
fn polytope_projection_optimality() {
    let set = ConvexSet::Polytope {
        vertices: vec![vec![0.0, 0.0, 0.0], vec![2.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.5], vec![1.0, 1.0, 1.0]],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let z: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
        let p = set.project(&z);
        let n: Vec<f64> = z.iter().zip(&p).map(|(a, b)| a - b).collect();
        // z - P(z) lies in the normal cone at P(z)
        assert!(set.normal_cone_contains(&p, &n, 1e-8), "z={z:?} p={p:?}");
    }
}

proptest! {
    #[test]
    fn midpoint_convexity(a in -5.0..5.0f64, b in -5.0..5.0f64) {
        for f in catalog() {
            let (fa, fb) = (f.eval(a), f.eval(b));
            if fa.is_finite() && fb.is_finite() {
                let m = f.eval(0.5 * (a + b));
                prop_assert!(m <= 0.5 * (fa + fb) + 1e-9 * (1.0 + fa.abs() + fb.abs()));
            }
        }
    }

    #[test]
    fn box_support_is_conjugate_of_indicator(v in prop::collection::vec(-3.0..3.0f64, 3)) {
        let b = ConvexSet::Box { lo: vec![-1.0, 0.0, 2.0], hi: vec![1.0, 0.5, 3.0] };
        let corners = [[-1.0, 0.0, 2.0], [1.0, 0.5, 3.0], [-1.0, 0.5, 2.0], [1.0, 0.0, 3.0],
                       [-1.0, 0.0, 3.0], [1.0, 0.5, 2.0], [-1.0, 0.5, 3.0], [1.0, 0.0, 2.0]];
        let best = corners.iter().map(|c| c.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>()).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((b.support(&v) - best).abs() < 1e-12);
    }
}
