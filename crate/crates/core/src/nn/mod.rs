//! Dense feed-forward networks with reverse-mode gradients and an Adam optimizer.

mod adam;
mod mlp;

pub use adam::Adam;
pub use mlp::{soft_update, Activation, ForwardCache, GradientTape, Layer, Mlp};
