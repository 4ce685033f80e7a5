//! Minimal differentiable stack: tensors, parameters, layers, loss and optimizer.

pub mod gradcheck;
pub mod init;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod params;
pub mod shallownet;
pub mod tensor;

pub use init::he_uniform_init;
pub use layers::{Layer, Mode, Sequential};
pub use loss::{softmax, softmax_xent};
pub use optim::{adamw_step, cosine_lr, TrainConfig};
pub use params::{Grads, ParamId, ParamStore};
pub use shallownet::{ShallowNet, ShallowNetConfig};
pub use tensor::Tensor;
