mod data;
mod evaluate;
mod retrieve;
mod train;

pub use data::{phantom_gen, preprocess};
pub use evaluate::evaluate;
pub use retrieve::{index, retrieve};
pub use train::train;

use std::path::Path;

use ddcml::volio::Volume;

use crate::config::RunConfig;
use crate::CliError;

/// Resolved configuration saved in every run directory.
pub const RUN_CONFIG: &str = "run.cfg";
/// `subject_id,fold` assignment of a run.
pub const FOLDS_FILE: &str = "folds.csv";

pub fn checkpoint_name(fold: usize) -> String {
    format!("fold{fold}.ddck")
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// The per-volume pipeline shared by preprocessing and retrieval queries.
fn prepare(v: &Volume, cfg: &RunConfig) -> Result<Volume, CliError> {
    let v = match cfg.target_dims {
        Some(t) => ddcml::volio::crop_downsample(v, cfg.downsample_factor, t)?,
        None if cfg.downsample_factor != 1 => {
            return Err(CliError::Usage("downsample_factor needs target_dims".into()))
        }
        None => v.clone(),
    };
    Ok(ddcml::inorm::normalize_intensity(&v, &cfg.normalization()?)?.volume)
}
