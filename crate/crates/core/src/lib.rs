//! Workbench for locating spatial information inside a neural
//! spatiospectral filter.
//!
//! The crate simulates reverberant multichannel scenes with switching
//! speaker positions, trains a complex-valued masking network whose
//! bottleneck is a complex GRU, taps the features before and after that GRU,
//! and measures how well L1 k-means clusters of those features follow the
//! active source position.

pub mod beamform;
pub mod error;
pub mod experiment;
pub mod neural;
pub mod probe;
pub mod scene;
pub mod spectral;
pub mod wave;

pub use error::{Error, Result};
