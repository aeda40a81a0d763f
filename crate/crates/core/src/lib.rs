//! Plaque assay quantification engine.
//!
//! Turns a plate photograph (and optionally externally produced per-well
//! plaque probability maps) into per-well plaque counts and PFU/mL titers.

pub mod error;
pub mod eval;
pub mod pipeline;
pub mod plaquedetect;
pub mod raster;
pub mod report;
pub mod synth;
pub mod titration;
pub mod welldetect;

pub use error::{Error, Result};
