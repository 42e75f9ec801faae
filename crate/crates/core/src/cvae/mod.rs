//! Conditional VAE over dialogue responses: encoders, decoder, the loss
//! terms, training and checkpoints.

mod io;
mod losses;
mod model;
mod objective;
mod train;

pub use io::{cvae_checkpoint, cvae_from_checkpoint, load_cvae, save_cvae, CvaeMeta};
pub use losses::{aspect_classification_loss, attribute_distance_loss, kl_diag_gaussian, kl_weight, KlDirection};
pub use model::{reparameterize, reparameterize_with, Cvae, CvaeArch, Encoder, LatentGaussian, Reduction, LOG_VAR_MAX, LOG_VAR_MIN, SEP};
pub use objective::{total_loss, LossParts, ObjectiveConfig};
pub use train::{
    loss_log_csv, reconstruction_accuracy, stratified_batches, train, train_step, LossRecord, TrainConfig,
    TrainOutcome, LOSS_LOG_HEADER,
};
