//! Surrogate modeling, sensitivity analysis and Bayesian calibration for
//! time-series simulators.
//!
//! The pipeline reduces simulator output samples by principal component
//! analysis ([`pca`]), emulates each retained component with a sparse
//! polynomial chaos expansion ([`pce`]), reads variance-based sensitivity
//! indices off the expansion coefficients ([`sobol`]) and calibrates the
//! inputs against observed data under two error models ([`calib`]).

pub mod calib;
pub mod config;
pub mod doe;
pub mod error;
pub mod io;
pub mod params;
pub mod pca;
pub mod pce;
pub mod pipeline;
pub mod polybasis;
pub mod rng;
pub mod simulators;
pub mod sobol;

pub use error::{Error, Result};
