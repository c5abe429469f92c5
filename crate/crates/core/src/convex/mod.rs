//! Convex integrands, their conjugates, proximal maps and envelopes.
//!
//! Every integrand here is separable, so the scalar catalog
//! [`ScalarConvex`] carries all the analysis; [`ConvexSet`] adds the
//! vector-valued indicators used by variational inequalities.
//!
//! ```
//! use beso_core::convex::ScalarConvex;
//!
//! let f = ScalarConvex::AbsValue;
//! assert_eq!(f.prox(2.0, 0.5).unwrap(), 1.5);
//! assert_eq!(f.conjugate(2.0), f64::INFINITY);
//! assert!((f.fenchel_young_gap(1.0, 0.3) - 0.7).abs() < 1e-15);
//! ```

mod roots;
mod scalar;
mod set;

pub use scalar::{Interval, ScalarConvex};
pub use set::ConvexSet;

/// The Moreau-Yosida envelope of `base` with parameter `eps`.
pub fn moreau_envelope(base: ScalarConvex, eps: f64) -> ScalarConvex {
    ScalarConvex::Envelope {
        base: Box::new(base),
        eps,
    }
}

/// Gradient `(z - prox(base, z, ε)) / ε` of the envelope of `base`.
pub fn moreau_envelope_grad(base: &ScalarConvex, eps: f64, z: f64) -> crate::Result<f64> {
    Ok((z - base.prox(z, eps)?) / eps)
}
