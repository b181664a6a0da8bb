//! Exact anti-concentration toolkit.
//!
//! Computes small-ball probabilities of linear, bilinear, and quadratic forms
//! in iid discrete random variables by exact enumeration (Monte Carlo past
//! the budget), manipulates generalized arithmetic progressions including
//! rank reduction, builds structured instances with pigeonhole lower-bound
//! certificates, verifies the quadratic-to-bilinear decoupling inequality
//! numerically, and runs the inverse pipelines that extract additive and
//! algebraic structure certificates from high-concentration coefficient
//! arrays.
//!
//! All core math is generic over a rational scalar (see [`scalar::Scalar`]);
//! the crate-root aliases pin the two useful instantiations.

pub mod constructions;
pub mod decoupling;
pub mod enclosure;
pub mod gap;
pub mod inverse;
pub mod randvar;
pub mod scalar;
pub mod smallball;
pub mod vecs;

/// Default exact scalar: arbitrary-precision rational.
pub type Q = num_rational::BigRational;

/// Fixed-width rational; faster, but overflows outside small desk-scale
/// inputs. The enclosure module needs `Q`.
pub type Q64 = num_rational::Rational64;
