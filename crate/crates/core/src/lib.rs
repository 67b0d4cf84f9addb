//! Greedy discovery of the few actions that matter in a contextual linear
//! reward model with a block-sparse parameter matrix.
//!
//! The crate provides the data model and block design ([`model`]), seeded
//! synthetic generation ([`envgen`]), the Contextual Block-OMP solver
//! ([`bomp`]), plug-in decisions and error measures ([`decision`]),
//! diagnostics for the recovery conditions ([`diagnostics`]), brute-force
//! oracles ([`oracle`]), information-theoretic hard instances
//! ([`lower_bounds`]), the Monte Carlo harness ([`experiments`]) and the
//! command-line front end ([`cli`]).
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the double-precision instantiation used by the harness.

// `!(x > 0)` also rejects NaN, which is the point in the parameter checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bomp;
pub mod cli;
pub mod decision;
pub mod diagnostics;
pub mod envgen;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod lower_bounds;
pub mod model;
pub mod oracle;
pub mod scalar;
pub mod seeding;

pub use bomp::{run_bomp, run_bomp_with, BompResult, RefitMode, StoppingRule};
pub use error::{Error, Result};
pub use model::{
    build_block_design, feature_map, predict_reward, BlockDesign, Dataset, LatentState, ParamMatrix, Sample, SupportSet,
};
pub use scalar::Scalar;

pub type Dataset64 = model::Dataset<f64>;
pub type ParamMatrix64 = model::ParamMatrix<f64>;
pub type BlockDesign64 = model::BlockDesign<f64>;
pub type Instance64 = envgen::Instance<f64>;
pub type InstanceSpec64 = envgen::InstanceSpec<f64>;
pub type BompResult64 = bomp::BompResult<f64>;
pub type DiagnosticsReport64 = diagnostics::DiagnosticsReport<f64>;

pub type Dataset32 = model::Dataset<f32>;
pub type ParamMatrix32 = model::ParamMatrix<f32>;
pub type Instance32 = envgen::Instance<f32>;
pub type BompResult32 = bomp::BompResult<f32>;
