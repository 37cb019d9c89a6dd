#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

//! Geometry of the Heisenberg group, CAT(0) targets, Korevaar–Schoen energies
//! and a discrete solver for sub-elliptic harmonic maps, together with the
//! experiments that probe their regularity.

pub mod cat0;
pub mod cc_metric;
pub mod domain;
pub mod energy;
pub mod error;
pub mod heisenberg;
pub mod lab;
pub mod sampling;
pub mod solver;

pub use error::{Error, Result};
