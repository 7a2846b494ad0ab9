//! Road-following imitation learning on tomographic image features.
//!
//! The pipeline mirrors a small aerial road-following stack end to end:
//!
//! 1. [`tomography`] turns camera frames into filtered back-projection
//!    reconstructions (the network's input features).
//! 2. [`nn`] is a dense-tensor convolutional network engine with an
//!    inception-style five-output classifier, trained from scratch.
//! 3. [`navigation`] thresholds the five outputs into discrete
//!    commands, counts junction passages with hysteresis and injects
//!    pre-programmed turns at planned junctions.
//! 4. [`simworld`] is a deterministic synthetic road world with a
//!    scripted expert for demonstrations and closed-loop rollouts.
//! 5. [`metrics`] and [`dataio`] supply the evaluation protocol and the
//!    on-disk dataset/cache formats.
//!
//! The `tomonav` binary ties the stages together; see the repository
//! README for the command walkthrough.

pub mod config;
pub mod dataio;
pub mod error;
pub mod image;
pub mod metrics;
pub mod navigation;
pub mod pipeline;
pub mod nn;
pub mod simworld;
pub mod tomography;

pub use error::{Error, Result};
pub use image::Image;
