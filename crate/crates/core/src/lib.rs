//! Hybrid image-compression pipeline: a binary-bottleneck convolutional
//! autoencoder, restricted Boltzmann machines over the binary codes with
//! interchangeable samplers (exact enumeration, block Gibbs, simulated
//! annealing over a chimera-embedded QUBO, remote annealer clients), and the
//! evaluation tooling (SSIM dataset similarity, downstream classification)
//! used to compare them.

pub mod dataio;
pub mod error;
pub mod metrics;
pub mod nncore;
pub mod parallel;
pub mod rbm;
pub mod sampleset;

pub mod anneal;
pub mod autoencoder;
pub mod classifier;

pub use error::{Error, Result};
