//! Sparse ground-motion model discovery.
//!
//! The pipeline reads a strong-motion flatfile ([`flatfile`]), evaluates a
//! library of candidate terms into a normalized design matrix ([`library`]),
//! selects a sparse equation by sequential-threshold ridge regression
//! ([`stridge`]) and analyses prediction residuals with a two-level
//! random-effects model ([`mixedfx`]). [`gmpe`] evaluates fitted or builtin
//! equations; [`synth`] generates seeded synthetic data with a known answer.

// `!(a > b)` comparisons deliberately treat NaN as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod flatfile;
pub mod gmpe;
pub mod library;
pub mod mixedfx;
pub mod stridge;
pub mod synth;

pub use error::{Error, Result};
pub use flatfile::{FaultMechanism, GroundMotionRecord};
pub use gmpe::{builtin_model, builtin_models, predict, Im, PhysicalEquation};
pub use library::{
    build_design_matrix, default_library, DesignMatrix, NormalizationMode, Scenario, TermLibrary,
    TermSpec,
};
pub use stridge::{
    select_threshold, stridge_fit, threshold_sweep, SolverConfig, SparseModel, ThresholdSweep,
};
