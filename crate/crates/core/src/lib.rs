//! Bearing degradation onset detection and censoring-aware remaining-useful-life
//! estimation.
//!
//! The pipeline runs from raw vibration snapshots to survival curves:
//! [`detector`] annotates the onset of degradation per bearing, [`features`]
//! and [`dataset`] turn recordings into a supervised survival dataset,
//! [`survival`] fits Kaplan-Meier, Cox, random survival forest and MTLR
//! models, and [`eval`] scores them under censoring.

pub mod dataset;
pub mod detector;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod features;
pub mod io;
pub mod survival;
pub mod synthetic;

pub use error::{Error, Result};
