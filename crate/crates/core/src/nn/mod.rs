//! A small, deterministic neural-network substrate: dense, strided and
//! fractionally strided convolutions, batch normalization, dropout and the
//! activations the networks need, each with an explicit backward pass.

pub mod conv;
pub mod layers;
pub mod sequential;

pub use conv::ConvGeometry;
pub use layers::{BatchNorm, Cache, Conv2d, ConvTranspose2d, Dense, Init, Layer, Mode, Need};
pub use sequential::{Grads, Sequential, TensorRef, Trace};
