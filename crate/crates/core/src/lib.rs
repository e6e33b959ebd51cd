//! Bayesian Gaussian graphical models whose edge-inclusion probabilities are
//! informed by node-level auxiliary variables.
//!
//! The crate provides the three model variants (GM*, GMN, GMSS), a variational
//! ECM engine and a reference ECM engine, hyperparameter elicitation for the
//! network sparsity prior, parallel grid search over the spike scale, edge and
//! variable selection rules, and the synthetic benchmark generators used to
//! evaluate them.

pub mod cli;
pub mod ecm;
pub mod elicitation;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod omega;
pub mod postprocess;
pub mod problem;
pub mod restart;
pub mod simgen;
pub mod special;
pub mod types;
pub mod vbecm;

pub use error::{Error, Result};
pub use types::{
    center_columns, validate_inputs, AuxiliaryMatrix, Criteria, DataMatrix, Engine, FitResult,
    FitState, ModelConfig, PointState, ValidationReport, VariationalState, Variant,
};
