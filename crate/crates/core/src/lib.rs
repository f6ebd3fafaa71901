//! Disease-oriented embedding of 3D scans: intensity normalization, a 3D
//! convolutional autoencoder trained with a reconstruction plus metric-learning
//! loss, the evaluation battery for the learned embeddings, and an exact k-NN
//! retrieval index.

pub mod cae;
pub mod error;
pub mod evalx;
pub mod exec;
pub mod inorm;
pub mod loss;
pub mod ndgrad;
pub mod retrieve;
pub mod train;
pub mod volio;

pub use error::{Error, Result};
pub use exec::Exec;
