#![allow(dead_code)]

use beso_core::convex::{ConvexSet, ScalarConvex};
use beso_core::functional::{InstanceKind, Problem};
use beso_core::grid::{SpaceGrid1D, StateSpace, TimeGrid};
use beso_core::noise::{Basis, NoiseModel};

pub fn bump(g: &SpaceGrid1D) -> Vec<f64> {
    g.coords().iter().map(|x| x * (g.length() - x)).collect()
}

pub fn sine_noise(space: &StateSpace, mu: f64) -> NoiseModel {
    NoiseModel::new(vec![mu], &[Basis::Sine(1)], space).unwrap()
}

pub fn parabolic(j: ScalarConvex, m: usize, n: usize, mu: f64) -> Problem {
    let g = SpaceGrid1D::new(m, 1.0).unwrap();
    let s = StateSpace::L2(g.clone());
    let noise = sine_noise(&s, mu);
    Problem::new(InstanceKind::Parabolic(j), s, TimeGrid::uniform(n, 1.0).unwrap(), noise, bump(&g), 1.0).unwrap()
}

pub fn heat(m: usize, n: usize, mu: f64) -> Problem {
    parabolic(ScalarConvex::Quadratic(1.0), m, n, mu)
}

pub fn tv(m: usize, n: usize, mu: f64) -> Problem {
    let g = SpaceGrid1D::new(m, 1.0).unwrap();
    let s = StateSpace::L2(g.clone());
    let noise = sine_noise(&s, mu);
    let x = g.coords().iter().map(|&x| if (0.3..0.7).contains(&x) { 1.0 } else { 0.0 }).collect();
    Problem::new(InstanceKind::TvFlow, s, TimeGrid::uniform(n, 1.0).unwrap(), noise, x, 1.0).unwrap()
}

pub fn porous(m: usize, n: usize, mu: f64) -> Problem {
    let g = SpaceGrid1D::new(m, 1.0).unwrap();
    let s = StateSpace::HMinus1(g.clone());
    let noise = NoiseModel::new(vec![mu], &[Basis::Constant(1.0)], &s).unwrap();
    Problem::new(
        InstanceKind::PorousMedia(ScalarConvex::PowerNorm(3.0)),
        s,
        TimeGrid::uniform(n, 1.0).unwrap(),
        noise,
        bump(&g),
        1.0,
    )
    .unwrap()
}

pub fn obstacle(m: usize, n: usize, mu: f64) -> Problem {
    let g = SpaceGrid1D::new(m, 1.0).unwrap();
    let s = StateSpace::L2(g.clone());
    let noise = sine_noise(&s, mu);
    let x = g.coords().iter().map(|&x| (0.25 - (x - 0.5).abs()).max(0.0)).collect();
    Problem::new(InstanceKind::ObstacleVi, s, TimeGrid::uniform(n, 1.0).unwrap(), noise, x, 4.0).unwrap()
}

pub fn fdvi(n: usize, mu: f64) -> Problem {
    let d = 3;
    let s = StateSpace::Euclidean(d);
    let a0 = nalgebra::DMatrix::from_row_slice(d, d, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
    let set = ConvexSet::Box {
        lo: vec![0.0; d],
        hi: vec![1.0; d],
    };
    let noise = NoiseModel::new(vec![mu], &[Basis::Constant(1.0)], &s).unwrap();
    Problem::new(
        InstanceKind::FiniteDimVi { a0, set },
        s,
        TimeGrid::uniform(n, 1.0).unwrap(),
        noise,
        vec![0.9, 0.2, 0.5],
        1.0,
    )
    .unwrap()
}

pub fn scalar(a: f64, n: usize, mu: f64) -> Problem {
    let s = StateSpace::Euclidean(1);
    let noise = NoiseModel::new(vec![mu], &[Basis::Constant(1.0)], &s).unwrap();
    Problem::new(InstanceKind::ScalarLinear(a), s, TimeGrid::uniform(n, 1.0).unwrap(), noise, vec![1.0], 1.0).unwrap()
}
