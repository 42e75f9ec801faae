//! Dense linear algebra, layer primitives with analytic gradients, the
//! optimizer and seeded randomness.

pub mod gradcheck;
pub mod gru;
pub mod layers;
pub mod optim;
pub mod params;
pub mod rng;
pub mod tensor;

pub use gradcheck::{grad_check, grad_check_coords, relative_error};
pub use gru::{gru_step, gru_step_backward, GruCache, GruGrads, GruWeights};
pub use layers::{affine_backward, affine_forward, AffineGrads};
pub use optim::{adamw_update, AdamWConfig, AdamWState, CLIP_NORM};
pub use params::{LayerGrads, ParamSet};
pub use rng::{gaussian_sample, SeededRng};
pub use tensor::Tensor2;
