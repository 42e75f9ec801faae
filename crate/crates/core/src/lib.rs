//! Personalized response generation over a joint attribute latent space.
//!
//! A conditional VAE is trained so that aspects of each personality
//! attribute are separable in latent space; at inference time a
//! probability-flow ODE pushes prior samples up the weighted sum of
//! per-attribute classifier logits before greedy decoding.

pub mod attribute_space;
pub mod checkpoint;
pub mod corpus;
pub mod cvae;
pub mod error;
pub mod eval;
pub mod numerics;
pub mod sampler;

pub use error::{Error, Result};
