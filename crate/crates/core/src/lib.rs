//! Local-coordinate tensor calculus on generalized tangent bundles of Lie
//! algebroids.
//!
//! Coefficient fields are exact forward-mode jets ([`jet`]), usually built
//! from the expression language in [`lang`]. On top of them sit algebroids
//! ([`algebroid`]), nonlinear connections and adapted frames ([`nlconn`]),
//! distinguished tensors and connections ([`dtensor`]), metric structures and
//! metrizable connections ([`metric`]), Lagrange and Finsler spaces
//! ([`lagrange`]) and the seeded sampling used by every verifier
//! ([`sampling`]).

pub mod algebroid;
pub mod dtensor;
pub mod error;
pub mod field;
pub mod fixtures;
pub mod jet;
pub mod lagrange;
pub mod lang;
pub mod linalg;
pub mod metric;
pub mod nlconn;
pub mod sampling;

pub use error::{Error, Result};
pub use field::{Dims, Field, Point, ScalarField, Tensor, TensorField, Var};
pub use jet::Jet;
