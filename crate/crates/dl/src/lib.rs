//! POD-DL-ROM surrogate: randomized-SVD compression, dense autoencoder and a
//! feed-forward network from `(t̂, β, s)` to latent coordinates.

pub mod error;
pub mod model;
pub mod nn;
pub mod rsvd;
pub mod train;

pub use error::{Error, Result};
pub use model::{DlRomModel, InputEncoding, ScalingMode};
pub use rsvd::{rsvd, PodBasis};
pub use train::{train, SnapshotSet, TrainingConfig, TrainingOutcome};
