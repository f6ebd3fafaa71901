use std::io::Write;
use std::path::Path;

use ddcml::retrieve::{build_index, load_index, save_index};
use ddcml::train::load_checkpoint;
use ddcml::volio::{load_manifest, read_volume};

use super::prepare;
use crate::config::RunConfig;
use crate::CliError;

pub fn index(cfg: &RunConfig) -> Result<(), CliError> {
    let manifest = cfg.existing_path("manifest", &cfg.manifest)?;
    let checkpoint = cfg.existing_path("checkpoint", &cfg.checkpoint)?;
    let out = cfg.require_path("out", &cfg.out)?;
    let model = load_checkpoint(checkpoint, None)?;
    let records = load_manifest(manifest, cfg.classes)?;
    let cases = records
        .iter()
        .map(|r| Ok((r.case_id(), r.class_label, read_volume(&r.volume_path)?)))
        .collect::<ddcml::Result<Vec<_>>>()?;
    let index = build_index(&cases, &model)?;
    save_index(&index, out)?;
    log::info!("indexed {} cases into {}", index.len(), out.display());
    Ok(())
}

pub fn retrieve(cfg: &RunConfig, volume: &Path, k: usize) -> Result<(), CliError> {
    if k == 0 {
        return Err(CliError::Usage("k must be at least 1".into()));
    }
    let index_path = cfg.existing_path("index", &cfg.index)?;
    let checkpoint = cfg.existing_path("checkpoint", &cfg.checkpoint)?;
    let index = load_index(index_path)?;
    let model = load_checkpoint(checkpoint, None)?;
    if model.embedding_dim() != index.dim() {
        return Err(CliError::Data(format!(
            "checkpoint embeds into {} dims, index holds {}",
            model.embedding_dim(),
            index.dim()
        )));
    }
    let query = prepare(&read_volume(volume)?, cfg)?;
    let hits = index.query(&model.encode(&query)?, k)?;
    let mut out = std::io::stdout().lock();
    let mut body = String::from("rank,case_id,label,distance\n");
    for (rank, h) in hits.iter().enumerate() {
        body.push_str(&format!("{},{},{},{}\n", rank + 1, h.case_id, h.label, h.distance));
    }
    out.write_all(body.as_bytes()).map_err(|e| CliError::Data(format!("stdout: {e}")))
}
