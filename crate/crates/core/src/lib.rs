//! Generalized Pareto tail modelling for lower-tail received-power samples.
//!
//! Exceedances below a threshold are modelled with a GPD whose shape and scale
//! can be estimated three ways: method of moments ([`estimators::mom_fit`]),
//! profile maximum likelihood ([`estimators::mle_fit`]) and an adversarially
//! trained parameter regressor ([`gan::train`]). The [`evaluation`] module
//! scores fits with the q-q slope error and runs sample-size sweeps.

pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod gan;
pub mod gpd;
pub mod io;
pub mod nn;
pub mod rng;
pub mod svg;

pub use error::{Error, Result};
pub use estimators::{mle_fit, mom_fit, FitResult, Method};
pub use gan::{train, GanConfig, GanEstimator, TrainReport};
pub use gpd::{ExceedanceSet, GpdParams};
pub use rng::RngStream;
