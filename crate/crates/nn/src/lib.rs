//! Minimal dense numerical kernel used by the tracker.
//!
//! Everything is double precision and row-major. Every differentiable op
//! ships a hand-written backward pass; there is no autodiff graph. Forward
//! passes optionally report multiply-adds into a [`FlopCounter`].

mod attention;
mod block;
mod error;
mod flops;
pub mod gradcheck;
mod init;
mod linear;
mod loss;
mod mlp;
mod params;
mod pe;
mod tensor;

pub use attention::{mha_backward, mha_forward, AttentionParams, MhaCache, MhaGrads};
pub use block::{AttentionBlock, BlockCache, BlockGrads, DecoderLayer, LayerCache};
pub use error::{NnError, Result};
pub use flops::FlopCounter;
pub use init::SeededInit;
pub use linear::{Linear, LinearCache};
pub use loss::{
    focal_loss, focal_loss_grad_logit, l1_loss, l1_loss_grad, sigmoid, softplus, FOCAL_EPS,
};
pub use mlp::{Activation, MlpCache, MlpParams};
pub use params::{flatten, join, unflatten_into, zeros_like, Params};
pub use pe::{positional_encoding_3d, sinusoidal_pe, RegionBounds, PE_BASE};
pub use tensor::Tensor2D;
