//! Trajectory super-resolution toolkit.
//!
//! Reconstructs fine-grained GPS trajectories from privacy-degraded inputs
//! (hexagonal snapping, coordinate rounding, Gaussian noise). A graph
//! convolutional network embeds the road network around each trajectory, a
//! transformer encoder reads the degraded sequence, and a decoder fuses both
//! to predict refined coordinates. Training minimises soft dynamic time
//! warping; evaluation uses the discrete Fréchet distance, with an HMM map
//! matcher as the baseline.

pub mod cli;
pub mod degrade;
pub mod error;
pub mod geo;
pub mod mapmatch;
pub mod metrics;
pub mod model;
pub mod roadnet;
pub mod seed;
pub mod tensor;
pub mod trajectory;
pub mod trajgen;

pub use error::{Error, Result};
