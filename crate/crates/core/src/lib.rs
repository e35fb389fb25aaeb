//! Monte Carlo simulation of ghost imaging with entangled photon pairs, a
//! bucket-detector trigger and a time-gated intensified camera.
//!
//! The pipeline runs [`spdc`] pair sampling through the [`optics`] and
//! [`detection`] models in [`acquisition`], photon-counts the frames in
//! [`reconstruction`] and scores the result in [`analysis`].

pub mod acquisition;
pub mod analysis;
pub mod cli;
pub mod config;
pub mod detection;
pub mod error;
pub mod geom;
pub mod imageio;
pub mod optics;
pub mod pipeline;
pub mod reconstruction;
pub mod spdc;

pub use error::{Error, Result};
