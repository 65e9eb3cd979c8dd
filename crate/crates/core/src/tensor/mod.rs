//! Dense tensors, reverse-mode differentiation and optimizers.

mod array;
pub mod gradcheck;
mod graph;
pub mod optim;
mod params;

pub use array::{log_softmax_rows, Tensor};
pub use graph::{Graph, Var};
pub use optim::{Adafactor, AdafactorConfig, Adam, AdamConfig, Optimizer};
pub use params::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Gradients, ParamId,
    ParamStore,
};
