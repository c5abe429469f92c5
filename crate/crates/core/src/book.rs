//! Compiles the guide's code samples as doc-tests, one module per chapter. The command
//! line chapter is compiled by the `beso-cli` crate.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}

#[doc = include_str!("../../../book/src/transform.md")]
pub mod transform {}

#[doc = include_str!("../../../book/src/convex.md")]
pub mod convex {}

#[doc = include_str!("../../../book/src/certificate.md")]
pub mod certificate {}

#[doc = include_str!("../../../book/src/instances.md")]
pub mod instances {}

#[doc = include_str!("../../../book/src/reference.md")]
pub mod reference {}
