//! Wi-Fi CSI biometric authentication toolkit.
//!
//! The pipeline runs ingest (or synth) -> calib -> clean -> features ->
//! select -> classify -> metrics, orchestrated by [`harness`].

pub mod error;
pub mod model;
pub mod ingest;
pub mod synth;
pub mod calib;
pub mod clean;
pub mod features;
pub mod select;
pub mod classify;
pub mod metrics;
pub mod harness;

pub use error::{Error, Result};
