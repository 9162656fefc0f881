//! Minimal tensor/layer toolkit with reverse-mode gradients.
//!
//! Supported layers are the closure needed by the autoencoder and the
//! downstream classifier: dense, 2-D convolution (stride 1-2, same/valid),
//! 2x2 max-pool, nearest-neighbor 2x upsample, sigmoid/ReLU/softmax, seeded
//! dropout. All arithmetic is f64 so finite-difference checks stay tight.

mod container;
mod gradcheck;
mod layer;
mod network;
mod optim;
mod tensor;

pub use container::{load_container, save_container};
pub use gradcheck::{check_gradients, LossTarget};
pub use layer::{LayerSpec, NetworkSpec, Padding};
pub use network::{cross_entropy, mse, Gradients, Mode, Network, Trace};
pub use optim::{Algorithm, OptimConfig, Optimizer};
pub use tensor::Tensor;
