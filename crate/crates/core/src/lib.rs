//! Adaptive sparse visual-odometry frontend.
//!
//! FAST detection, pyramidal Lucas-Kanade tracking and RANSAC outlier rejection
//! whose parameters are chosen per frame by a learned policy, plus the procedural
//! simulator, reward stack and training code used to fit that policy.

pub mod camera;
pub mod error;
pub mod flow;
pub mod frontend;
pub mod image;
pub mod io;
pub mod learn;
pub mod policy;
pub mod reward;
pub mod sim;

pub use error::{Error, Result};
