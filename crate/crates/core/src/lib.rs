//! Differentiable architecture search at desk scale.
//!
//! Two relaxations of the per-edge categorical choice are provided: the
//! exclusive softmax relaxation and the collaborative sigmoid relaxation,
//! the latter paired with a zero-one auxiliary loss that drives every gate
//! towards 0 or 1. Around them sit a small reverse-mode autodiff engine,
//! first-order bi-level and single-level search loops, genotype derivation
//! and parsing, trajectory analysis and an experiment harness.

pub mod analysis;
pub mod autodiff;
pub mod derivation;
pub mod error;
pub mod harness;
pub mod search;
pub mod searchspace;

pub use error::{Error, Result};
