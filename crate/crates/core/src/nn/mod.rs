//! Minimal deterministic neural-network engine: dense and ReLU layers,
//! softmax cross-entropy, manual backpropagation and plain SGD, all in `f64`.

mod model;
mod ops;
mod tensor;

pub use model::{init_params, Layer, LayerParams, ModelSpec, Params, DEFAULT_HIDDEN};
pub use ops::{backward, forward, loss_softmax_ce, sgd_step, train_step, ForwardCache};
pub use tensor::Tensor;
