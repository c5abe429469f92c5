//! Variational solutions of stochastic evolution equations with linear
//! multiplicative noise,
//!
//! ```text
//! dX + A(t) X dt + λ X dt ∋ X dW,   X(0) = x,
//! ```
//!
//! with `A(t) = ∂φ(t)` maximal monotone. The substitution `X = e^W (y + x)`
//! turns the equation into a random evolution equation whose solution is
//! the minimizer of a convex functional; pairing it with the dual
//! functional yields a duality gap that certifies each computed path.
//!
//! Crate layout, bottom-up:
//!
//! - [`grid`]: time and space grids, difference operators, state spaces.
//! - [`noise`]: the Wiener field `W = Σ μ_j e_j β_j` and its constants.
//! - [`convex`]: integrands, conjugates, proximal maps.
//! - [`transform`]: the change of variables and the operator `ℬ`.
//! - [`functional`]: instances, the primal and dual functionals, the gap.
//! - [`solver`]: the certified pathwise solver and Monte Carlo driver.
//! - [`reference`]: independent schemes used to cross-check the solver.

pub mod convex;
pub mod error;
pub mod functional;
pub mod grid;
pub mod linalg;
pub mod noise;
pub mod reference;
mod resolvent;
pub mod solver;
pub mod transform;

#[cfg(doctest)]
pub mod book;

pub use error::{Error, Result};
