//! Off-screen tap recognition from the six-channel IMU of a phone.
//!
//! The crate follows the signal path of a tap from raw sensor frames to
//! predictions:
//!
//! 1. [`signal`]: first-order derivatives of accelerometer and gyroscope
//!    frames, kept in a rolling 150 ms window.
//! 2. [`gating`]: a linear-time peak detector on the z-axis derivative that
//!    rejects motion without a tap-like impulse.
//! 3. [`features`]: a 300-element feature vector (6 channels x 50 samples)
//!    aligned so the anchor peak lands on global index 105, plus the device
//!    vector describing the phone form factor.
//! 4. [`model`]: the multi-task 1D CNN built on the small autodiff engine in
//!    [`nn`]; one shared convolution trunk feeds five task heads.
//! 5. [`train`]: alternating training of property heads and the event head,
//!    metrics, evaluation paradigms and experiment sweeps.
//!
//! [`data`] holds labels, the dataset file format, augmentation and the
//! synthetic tap generator used for every learning experiment.
//! [`workflow`] implements the command-line subcommands.

pub mod data;
pub mod error;
pub mod features;
pub mod gating;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod signal;
pub mod train;
pub mod workflow;

pub use error::{Error, Result};
