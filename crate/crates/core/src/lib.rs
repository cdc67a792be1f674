//! Monte Carlo simulator for the homodyne-detector blinding attack on
//! Gaussian-modulated coherent-state CV-QKD.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds the physical parameter types and closed-form detector,
//!   noise-budget and offset formulas (no sampling).
//! * [`rng`] provides counter-addressable noise streams so that every pulse's
//!   random draws depend only on `(seed, pulse index, channel)`.
//! * [`mc`] generates paired `(X_A, X_B)` records for the honest channel and
//!   the intercept-resend + blinding pipeline, with or without saturation.
//! * [`estimate`] turns those records into `T̂` and `ξ̂` in shot-noise units.
//! * [`keyrate`] computes the asymptotic collective-attack key rate, the
//!   null-key threshold and the optimal modulation variance.
//! * [`guard`] implements the threshold-fraction countermeasure.
//! * [`presets`] collects the parameter sets used for figure reproduction.
//! * [`sweep`] runs blinding-ratio and distance sweeps with breach detection.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimate;
pub mod guard;
pub mod keyrate;
pub mod mc;
pub mod model;
pub mod presets;
pub mod rng;
pub mod sweep;

pub use error::{Error, Result};
