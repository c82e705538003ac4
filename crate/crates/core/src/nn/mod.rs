//! Minimal dense neural-network substrate.

mod gradcheck;
mod io;
mod loss;
mod matrix;
mod network;
mod train;

pub use gradcheck::{backprop_gradients, grad_check, relative_error, DEFAULT_STEP};
pub use io::{LayerDoc, NetworkDoc, FORMAT_VERSION};
pub(crate) use io::parse_versioned;
pub use loss::{cross_entropy, Loss, PROB_CLAMP};
pub use matrix::Matrix;
pub use network::{sigmoid, Activation, DenseLayer, Gradients, LayerSpec, MlpNetwork, Trace};
pub use train::{train, train_weighted, Optimizer, OptimizerKind, TrainConfig, TrainReport};
