use std::fmt::Write as _;
use std::path::Path;

use ddcml::cae::Model;
use ddcml::Exec;
use ddcml::train::{fit, group_kfold, save_checkpoint, write_trace};
use ddcml::volio::{load_manifest, read_volume, CaseRecord, Volume};
use log::info;

use super::{checkpoint_name, create_dir, write_text, FOLDS_FILE, RUN_CONFIG};
use crate::config::RunConfig;
use crate::CliError;

fn absolute(p: &Path) -> Result<std::path::PathBuf, CliError> {
    p.canonicalize().map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
}

/// Binary training label for the two extreme classes.
pub(crate) fn extreme_label(label: usize, classes: usize) -> Option<usize> {
    match label {
        0 => Some(0),
        l if l + 1 == classes => Some(1),
        _ => None,
    }
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let manifest = cfg.existing_path("manifest", &cfg.manifest)?;
    let out = cfg.require_path("out", &cfg.out)?;
    if cfg.classes < 2 {
        return Err(CliError::Usage("classes must be at least 2".into()));
    }
    let spec = cfg.network_spec()?;
    let configs = (0..cfg.folds).map(|k| cfg.train_config(k)).collect::<Result<Vec<_>, _>>()?;
    let records = load_manifest(manifest, cfg.classes)?;
    let split = group_kfold(&records, cfg.folds, cfg.split_seed)?;
    create_dir(out)?;

    let mut saved = cfg.clone();
    saved.manifest = Some(absolute(manifest)?);
    saved.out = Some(absolute(out)?);
    write_text(&out.join(RUN_CONFIG), &saved.to_text())?;
    let mut folds = String::from("subject_id,fold\n");
    for (subject, k) in &split.subject_fold {
        let _ = writeln!(folds, "{subject},{k}");
    }
    write_text(&out.join(FOLDS_FILE), &folds)?;

    let used: Vec<&CaseRecord> =
        records.iter().filter(|r| extreme_label(r.class_label, cfg.classes).is_some()).collect();
    let volumes: Vec<Volume> =
        Exec::default().map(used.len(), |i| read_volume(&used[i].volume_path)).into_iter().collect::<Result<_, _>>()?;
    let position = |i: usize| used.iter().position(|r| std::ptr::eq(*r, &records[i]));

    let results: Vec<Result<(), CliError>> = Exec::default().map(cfg.folds, |k| {
            let trainset: Vec<(Volume, usize)> = split.folds[k]
                .train
                .iter()
                .filter_map(|&i| {
                    let p = position(i)?;
                    Some((volumes[p].clone(), extreme_label(records[i].class_label, cfg.classes)?))
                })
                .collect();
            let mut model = Model::build(spec.clone(), cfg.init_seed.wrapping_add(k as u64))?;
            let trace = fit(&mut model, &trainset, &configs[k])?;
            save_checkpoint(&model, out.join(checkpoint_name(k)))?;
            write_trace(out.join(format!("fold{k}_trace.csv")), &trace)?;
            if let Some(last) = trace.last() {
                info!("fold {k}: {} steps, final total loss {:.6}", trace.len(), last.total);
            }
            Ok(())
        });
    results.into_iter().collect()
}
