use std::collections::HashSet;

use ddcml::volio::{gen_phantom, load_manifest, read_volume, write_manifest, write_volume, CaseRecord, CohortConfig};
use ddcml::Exec;
use log::{error, info};

use super::{create_dir, prepare};
use crate::config::RunConfig;
use crate::CliError;

pub fn phantom_gen(cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg.require_path("out", &cfg.out)?;
    if cfg.count_per_class == 0 {
        return Err(CliError::Usage("count_per_class must be at least 1".into()));
    }
    create_dir(out)?;
    let cohort = CohortConfig::uniform(cfg.phantom_dims, cfg.count_per_class, cfg.phantom_seed);
    let subjects = cohort.subjects();
    let written = Exec::default().map(subjects.len(), |i| {
        let (id, spec) = &subjects[i];
        let path = out.join(format!("{id}.vol"));
        write_volume(&gen_phantom(spec)?, &path)?;
        Ok(CaseRecord { subject_id: id.clone(), class_label: spec.severity as usize, volume_path: path })
    });
    let records = written.into_iter().collect::<ddcml::Result<Vec<_>>>()?;
    write_manifest(out.join("manifest.csv"), &records)?;
    info!("wrote {} phantoms to {}", records.len(), out.display());
    Ok(())
}

pub fn preprocess(cfg: &RunConfig) -> Result<(), CliError> {
    let manifest = cfg.existing_path("manifest", &cfg.manifest)?;
    let out = cfg.require_path("out", &cfg.out)?;
    cfg.normalization()?;
    let records = load_manifest(manifest, cfg.classes)?;
    create_dir(out)?;

    let mut names = HashSet::new();
    let targets: Vec<_> = records
        .iter()
        .map(|r| {
            let stem = r.volume_path.file_stem().unwrap_or_default().to_string_lossy();
            out.join(format!("{stem}.norm.vol"))
        })
        .collect();
    if let Some(dup) = targets.iter().find(|t| !names.insert(*t)) {
        return Err(CliError::Data(format!("two cases map to {}", dup.display())));
    }

    let results = Exec::default().map(records.len(), |i| -> Result<(), CliError> {
        let v = prepare(&read_volume(&records[i].volume_path)?, cfg)?;
        write_volume(&v, &targets[i])?;
        Ok(())
    });
    let mut kept = Vec::new();
    let mut failed = 0;
    for ((r, t), res) in records.iter().zip(&targets).zip(results) {
        match res {
            Ok(()) => kept.push(CaseRecord { volume_path: t.clone(), ..r.clone() }),
            Err(CliError::Usage(m)) => return Err(CliError::Usage(m)),
            Err(e) => {
                error!("{}: {e}", r.case_id());
                failed += 1;
            }
        }
    }
    write_manifest(out.join("manifest.csv"), &kept)?;
    info!("normalized {} of {} cases", kept.len(), records.len());
    if failed > 0 {
        return Err(CliError::Data(format!("{failed} of {} cases failed", records.len())));
    }
    Ok(())
}
