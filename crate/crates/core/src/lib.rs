//! Scattering transform networks built on generalized Morse wavelets.

pub mod audio;
pub mod classify;
pub mod container;
pub mod error;
pub mod features;
pub mod filters;
pub mod pipeline;
pub mod scattering;
pub mod significance;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
