//! Physics-informed neural network solver for parallel-RC circuit models of
//! dielectric materials.
//!
//! The crate trains a small fully-connected network so that its input-output
//! map satisfies the circuit ODEs (forward mode: predict the current `I(t)`)
//! or jointly fits observed current data while recovering the resistances
//! and capacitances that generated it (inverse mode). Everything is built on
//! 64-bit arithmetic with hand-rolled forward-tangent and reverse-mode
//! differentiation; no machine-learning framework is involved.

pub mod circuits;
pub mod gradcheck;
pub mod inverse;
pub mod net;
pub mod report;
pub mod training;

pub(crate) mod rng;
