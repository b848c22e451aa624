//! Gaze stabilization for a torso-neck-eye humanoid head.
//!
//! - [`kinematics`]: DH chains, forward kinematics and Jacobians.
//! - [`model`]: the head model (torso, neck, two eyes, gyroscope mount).
//! - [`stereo`]: fixation point of the two optical axes and its Jacobians.
//! - [`stabilizer`]: fixation-twist estimation and compensatory commands.
//! - [`simulator`]: closed-loop plant, disturbance scripts and flow metric.
//! - [`config`]: TOML model, script and run files.

pub mod config;
pub mod error;
pub mod kinematics;
pub mod model;
pub mod simulator;
pub mod stabilizer;
pub mod stereo;

pub use error::{GazeError, Result};
