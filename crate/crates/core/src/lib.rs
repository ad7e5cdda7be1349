//! Coarse-to-fine generation over token grids.
//!
//! Images are quantized into grids of codebook indices, a fixed multinomial
//! diffusion process coarsens those grids over a short chain, and learned
//! autoregressive encoder-decoder models invert the chain one scale at a
//! time. Masked variants of the forward and reverse kernels support local
//! editing that leaves given context untouched.

pub mod chain;
pub mod config;
pub mod denoiser;
pub mod diffusion;
pub mod editing;
pub mod error;
pub mod evalbench;
pub mod image;
pub mod numeric;
pub mod synth;
pub mod vq;

pub use error::{Error, Result};
