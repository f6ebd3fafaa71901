//! Subject-grouped cross-validation, exemplar sampling, and the optimization loop.

mod adam;
mod fit;
mod kfold;
mod sampling;

pub use crate::cae::{load_checkpoint, save_checkpoint};
pub use adam::{Adam, AdamConfig};
pub use fit::{fit, write_trace, LossRecord, TrainConfig};
pub use kfold::{group_kfold, Fold, FoldSplit};
pub use sampling::{BatchSample, Sampler};
