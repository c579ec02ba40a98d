//! Core of the FabuLight active speaker detector.
//!
//! Everything in this crate is pure computation over in-memory data: the
//! dense [`Tensor`] type and its reverse-mode [`autograd`] tape, the
//! skeleton partition graphs, the face/audio/body encoders and the
//! classification heads, the losses and temperature schedule, the
//! trainer, the efficiency profiler and the mAP evaluator. File formats,
//! audio feature extraction and the command line live in the `fabulight`
//! crate.
//!
//! The crate is `no_std` (with `alloc`) when built without the default
//! `std` feature.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autograd;
pub mod efficiency;
pub mod error;
pub mod gradcheck;
pub mod kernels;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod params;
pub mod scalar;
pub mod skeleton;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;
