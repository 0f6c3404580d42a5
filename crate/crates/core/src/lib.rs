//! Exact finite-resolution geometry of dyadic cube families.
//!
//! Compact sets in the unit cube are represented as unions of depth-`K`
//! dyadic cells ([`grid::GridSet`]). On top of that representation the crate
//! computes dyadic d-Hausdorff contents by a covering DP ([`content`]),
//! keystone families and their canonical decomposition ([`keystone`]), the
//! thick distance and its pseudometric ([`thick`]), porosity and cavity
//! certificates ([`porosity`]), and the thick-distance Whitney-type cavity
//! decomposition ([`whitney`]).
//!
//! All cube geometry uses the sup-norm, so the diameter of a cube is its side.

pub mod cli;
pub mod content;
pub mod corpus;
pub mod cube;
pub mod error;
pub mod grid;
pub mod json;
pub mod keystone;
pub mod oracle;
pub mod porosity;
pub mod selfcheck;
pub mod svg;
pub mod thick;
pub mod whitney;

pub use error::{Error, Result};

/// Relative tolerance for comparisons between content values.
pub const REL_TOL: f64 = 1e-9;

/// `(2^{-k})^d`, computed as `exp2(-k d)` everywhere in the crate so that
/// independent code paths produce bit-identical powers.
#[inline]
pub fn side_pow(k: u32, d: f64) -> f64 {
    (-(k as f64) * d).exp2()
}

/// `a <= b` up to [`REL_TOL`] relative slack on `b`.
#[inline]
pub fn le_tol(a: f64, b: f64) -> bool {
    a <= b + REL_TOL * b.abs().max(a.abs())
}

/// `a >= b` up to [`REL_TOL`] relative slack.
#[inline]
pub fn ge_tol(a: f64, b: f64) -> bool {
    le_tol(b, a)
}
