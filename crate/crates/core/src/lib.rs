//! Autocalibration of regression predictors and Tweedie-deviance dominance
//! checks.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`, with `F32*` variants for single
//! precision.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autocal;
pub mod curves;
pub mod data;
pub mod error;
pub mod io;
pub mod learners;
pub mod ordering;
pub mod pipeline;
pub mod scalar;
pub mod simdata;
pub mod tweedie;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset = data::Dataset<f64>;
pub type PowerParam = tweedie::PowerParam<f64>;
pub type CalibrationMap = autocal::CalibrationMap<f64>;
pub type CalibrationSpec = autocal::CalibrationSpec<f64>;
pub type Bandwidth = autocal::Bandwidth<f64>;
pub type DominanceReport = ordering::DominanceReport<f64>;

pub type F32Dataset = data::Dataset<f32>;
pub type F32PowerParam = tweedie::PowerParam<f32>;
pub type F32CalibrationMap = autocal::CalibrationMap<f32>;
pub type F32CalibrationSpec = autocal::CalibrationSpec<f32>;
