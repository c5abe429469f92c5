mod common;

use beso_core::functional::{assemble_g1, assemble_g1_ito};
use beso_core::grid::{SpaceGrid1D, StateSpace, TimeGrid};
use beso_core::noise::{Basis, NoiseModel};
use beso_core::solver::Estimate;
use beso_core::transform::{
    apply_b_weak, bform_energy_check, forward_transform, inverse_transform, polynomial_test_process, strong_pairing,
    DiscreteProcess,
};
use common::*;
use proptest::prelude::*;

#[test]
fn ito_and_pathwise_forms_agree_in_expectation() {
    let n = 64;
    let p = heat(8, n, 0.5);
    let d: Vec<f64> = (0..2000u64)
        .map(|s| {
            let ctx = p.sample_context(s).unwrap();
            let y = polynomial_test_process(&ctx);
            assemble_g1(&p, &ctx, &y) - assemble_g1_ito(&p, &ctx, &y)
        })
        .collect();
    let e = Estimate::from_samples(&d);
    assert!(e.mean.abs() <= 3.0 * e.std_error + 4.0 / n as f64, "{e:?}");
}

#[test]
fn ito_and_pathwise_forms_agree_without_noise() {
    let p = heat(8, 32, 0.0);
    let ctx = p.deterministic_context();
    let y = polynomial_test_process(&ctx);
    let (a, b) = (assemble_g1(&p, &ctx, &y), assemble_g1_ito(&p, &ctx, &y));
    // the two differ by the quadrature of a derivative term: O(Δt)
    assert!((a - b).abs() <= 2.0 / 32.0 * (1.0 + a.abs()), "{a} vs {b}");
}

#[test]
fn noise_sampling_is_reproducible() {
    let g = SpaceGrid1D::new(6, 1.0).unwrap();
    let s = StateSpace::L2(g);
    let noise = NoiseModel::new(vec![0.3, 0.2], &[Basis::Sine(1), Basis::Sine(2)], &s).unwrap();
    let t = TimeGrid::uniform(32, 1.0).unwrap();
    let a = noise.sample_path(&t, 6, 17).unwrap();
    let b = noise.sample_path(&t, 6, 17).unwrap();
    let c = noise.sample_path(&t, 6, 18).unwrap();
    assert_eq!(a.w, b.w);
    assert_ne!(a.w, c.w);
    assert!(a.w[0].iter().all(|v| *v == 0.0));
    let sub = a.subsample(4).unwrap();
    assert_eq!(sub.steps(), 8);
    assert_eq!(sub.w[2], a.w[8]);
}

#[test]
fn brownian_increments_have_the_right_variance() {
    let s = StateSpace::Euclidean(1);
    let noise = NoiseModel::new(vec![1.0], &[Basis::Constant(1.0)], &s).unwrap();
    let t = TimeGrid::uniform(4, 1.0).unwrap();
    let terminal: Vec<f64> = (0..20_000u64).map(|k| noise.sample_path(&t, 1, k).unwrap().w[4][0]).collect();
    let e = Estimate::from_samples(&terminal);
    let var = terminal.iter().map(|v| v * v).sum::<f64>() / terminal.len() as f64;
    assert!(e.mean.abs() < 4.0 * e.std_error);
    assert!((var - 1.0).abs() < 0.05, "{var}");
}

#[test]
fn energy_bound_holds_on_noisy_paths() {
    let p = heat(8, 32, 0.4);
    for seed in 0..20 {
        let ctx = p.sample_context(seed).unwrap();
        let e = bform_energy_check(&ctx, &polynomial_test_process(&ctx));
        assert!(e.lhs.is_finite() && e.rhs_bound.is_finite());
    }
}

#[test]
fn martingale_control_variate_reduces_variance() {
    let p = heat(16, 32, 0.5);
    let (mut raw, mut cv) = (Vec::new(), Vec::new());
    for seed in 0..500 {
        let ctx = p.sample_context(seed).unwrap();
        let e = bform_energy_check(&ctx, &polynomial_test_process(&ctx));
        raw.push(e.lhs - e.rhs_identity);
        cv.push(e.lhs - e.rhs_identity - e.martingale.unwrap());
    }
    let (a, b) = (Estimate::from_samples(&raw), Estimate::from_samples(&cv));
    assert!(b.std_error < 0.2 * a.std_error, "{a:?} {b:?}");
}

fn rows(n: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0..2.0f64, d), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weak_form_matches_strong_form(y in rows(8, 6), theta in rows(8, 6), seed in 0u64..1000) {
        let p = heat(6, 8, 0.4);
        let ctx = p.sample_context(seed).unwrap();
        let proc = DiscreteProcess::from_rows(y);
        let weak = apply_b_weak(&ctx, &proc, &theta).total();
        let strong = strong_pairing(&ctx, &proc, &theta);
        prop_assert!((weak - strong).abs() <= 1e-9 * (1.0 + strong.abs()));
    }

    #[test]
    fn transform_roundtrip(y in rows(8, 6), seed in 0u64..1000) {
        let p = heat(6, 8, 0.6);
        let ctx = p.sample_context(seed).unwrap();
        let proc = DiscreteProcess::from_rows(y);
        let back = inverse_transform(&ctx, &forward_transform(&ctx, &proc));
        for (a, b) in back.y.iter().flatten().zip(proc.y.iter().flatten()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn deterministic_energy_identity(y in rows(16, 6)) {
        let p = heat(6, 16, 0.0);
        let ctx = p.deterministic_context();
        let proc = DiscreteProcess::from_rows(y);
        let e = bform_energy_check(&ctx, &proc);
        prop_assert!((e.lhs - e.rhs_identity).abs() <= 1e-10 * (1.0 + e.lhs.abs()));
        prop_assert!(e.lhs >= e.rhs_bound - 1e-10 * (1.0 + e.lhs.abs()));
    }
}
