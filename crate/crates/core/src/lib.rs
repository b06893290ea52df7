//! Pointwise adaptive robust regression.
//!
//! At each point a family of nested windows is scanned from small to large.
//! For every candidate enlargement the location estimate of the newly added
//! ring is compared with the estimates of all previously accepted windows,
//! and scanning stops at the first significant disagreement. Critical values
//! are calibrated by simulation under pure noise.
//!
//! Modules follow the pipeline: [`loss`] (location estimators), [`windows`]
//! (nested neighbourhoods), [`noise`] (noise laws and random streams),
//! [`levels`] (stochastic error levels), [`selector`] (the selection rules),
//! [`calibration`] (critical values), [`experiments`] (benchmark and
//! validation studies), [`imaging`] (2D denoising) and
//! [`cli`] (the `adaptmreg` binary).

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifact;
pub mod calibration;
pub mod cli;
pub mod error;
pub mod estimates;
pub mod experiments;
pub mod imaging;
pub mod levels;
pub mod loss;
pub mod noise;
pub mod selector;
pub mod windows;

pub use error::{Error, Result};
