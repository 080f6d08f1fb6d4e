//! Time-series clustering with random convolutional kernels.
//!
//! The pipeline has four stages:
//!
//! 1. [`kernelbank`] draws a bank of dilated kernels with weights in `{-1, 2}`
//!    and biases taken from quantiles of a reference convolution;
//! 2. [`transform`] convolves every series with every kernel and pools the
//!    output to the proportion of positive values (PPV);
//! 3. [`reduce`] projects the PPV features onto the principal components that
//!    each explain at least 1% of the variance;
//! 4. [`cluster`] runs Euclidean K-means on the embedding.
//!
//! [`pipeline`] wires the stages together and implements the ten-restart
//! evaluation protocol. [`metrics`] and [`stats`] hold the evaluation tools
//! (ARI, Friedman, Wilcoxon, Holm, Ljung-Box) and [`experiments`] the
//! reproducible studies exposed by the command-line tool.
//!
//! All randomness flows from a single `u64` seed through [`rng`], so results
//! do not depend on the thread count.

pub mod cluster;
pub mod dataio;
mod error;
pub mod experiments;
pub mod kernelbank;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod reduce;
pub mod rng;
pub mod stats;
pub mod transform;

pub use error::{Error, Result};
pub use par::Exec;
