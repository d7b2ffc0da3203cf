//! Monte Carlo laboratory for loop-erased random walks on `Z^2` and `Z^3`.
//!
//! The crate samples simple random walks to the exit of a ball and measures
//! the objects built from them: loop erasures, cut times, non-intersecting
//! walk pairs, escape probabilities of a walk from an independent loop-erased
//! walk, and trace-graph distances and resistances. An estimation layer fits
//! growth exponents and tail profiles, and a Wilson's-algorithm spanning tree
//! sampler provides an independent check of the loop-erased path law.

pub mod cut_times;
pub mod error;
pub mod escape_prob;
pub mod estimators;
pub mod expcli;
pub mod experiments;
pub mod graph_metrics;
pub mod lattice_walk;
pub mod loop_erasure;
pub mod nonintersecting;
pub mod occupancy;
pub mod parallel;
pub mod ust_wilson;

pub use error::{LabError, Result};
