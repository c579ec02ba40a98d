//! File formats, the MFCC front end and synthetic data for the fabulight
//! active speaker detector. The model itself lives in `fabulight-core`.

pub mod audio;
pub mod clip;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod scores;
pub mod synth;
pub mod weights;

pub use error::{Error, Result};
