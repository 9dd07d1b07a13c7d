//! Minimal neural-network core: dense and recurrent layers on a
//! reverse-mode tape, parameter layouts, and Adam.

pub mod adam;
pub mod matrix;
pub mod mlp;
pub mod params;
pub mod rnn;
pub mod tape;

pub use adam::{clip_global_norm, AdamState};
pub use matrix::Matrix;
pub use mlp::{mlp_forward, Generator, Mlp, MlpSpec};
pub use params::{LayoutBuilder, ParamVector, TensorLayout};
pub use rnn::{rnn_step, Rnn, RnnSpec, RnnState};
pub use tape::{grad, sigmoid, value_and_grad, Activation, Gradients, NormOrder, Tape, Var};
