use std::collections::BTreeMap;
use std::path::Path;

use ddcml::evalx::{
    evaluate_fold, write_centroid_csv, write_projection_csv, write_report_csv, write_seed_csv, CentroidMatrix,
    EvalCase, EvalReport,
};
use ddcml::train::load_checkpoint;
use ddcml::volio::{load_manifest, read_volume};
use ddcml::Exec;

use super::{checkpoint_name, create_dir, write_text, FOLDS_FILE};
use crate::config::RunConfig;
use crate::CliError;

fn read_folds(path: &Path) -> Result<BTreeMap<String, usize>, CliError> {
    let bad = |m: String| CliError::Data(format!("{}: {m}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let mut map = BTreeMap::new();
    for row in r.records() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let fold = row.get(1).and_then(|f| f.parse().ok()).ok_or_else(|| bad(format!("bad row {row:?}")))?;
        map.insert(row.get(0).unwrap_or_default().to_string(), fold);
    }
    Ok(map)
}

fn mean_matrix(ms: &[CentroidMatrix]) -> CentroidMatrix {
    let mut out = ms[0].clone();
    for (i, row) in out.distances.iter_mut().enumerate() {
        for (j, d) in row.iter_mut().enumerate() {
            *d = ms.iter().map(|m| m.get(i, j)).sum::<f64>() / ms.len() as f64;
        }
    }
    out
}

pub fn evaluate(cfg: &RunConfig, run: &Path) -> Result<(), CliError> {
    let manifest = cfg.existing_path("manifest", &cfg.manifest)?;
    let out = cfg.out.as_deref().unwrap_or(run);
    let spec = cfg.network_spec()?;
    let seeds = cfg.seeds()?;
    let records = load_manifest(manifest, cfg.classes)?;
    let subject_fold = read_folds(&run.join(FOLDS_FILE))?;
    let folds = subject_fold.values().max().map_or(0, |m| m + 1);
    if folds == 0 {
        return Err(CliError::Data(format!("{} lists no folds", run.join(FOLDS_FILE).display())));
    }
    create_dir(out)?;

    let evals = Exec::default()
        .map(folds, |k| -> Result<_, CliError> {
            let model = load_checkpoint(run.join(checkpoint_name(k)), Some(&spec))?;
            let val: Vec<_> = records.iter().filter(|r| subject_fold.get(&r.subject_id) == Some(&k)).collect();
            let ids: Vec<String> = val.iter().map(|r| r.case_id()).collect();
            let vols = val.iter().map(|r| read_volume(&r.volume_path)).collect::<Result<Vec<_>, _>>()?;
            let cases: Vec<EvalCase> = val
                .iter()
                .zip(&ids)
                .zip(&vols)
                .map(|((r, id), v)| EvalCase { case_id: id, label: r.class_label, volume: v })
                .collect();
            Ok(evaluate_fold(&model, k, &cases, (0, cfg.classes - 1), cfg.classes, &seeds)?)
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let mut matrices = Vec::new();
    for e in &evals {
        let k = e.report.fold;
        write_projection_csv(&out.join(format!("fold{k}_projection.csv")), &e.projection)?;
        if let Some(m) = &e.centroids {
            write_centroid_csv(&out.join(format!("fold{k}_centroids.csv")), m)?;
            matrices.push(m.clone());
        }
    }
    if matrices.len() == folds {
        write_centroid_csv(&out.join("centroids.csv"), &mean_matrix(&matrices))?;
    }
    let report = EvalReport::from_folds(evals.into_iter().map(|e| e.report).collect())?;
    write_report_csv(&out.join("report.csv"), &report)?;
    write_seed_csv(&out.join("seeds.csv"), &report)?;
    let name = if cfg.alpha > 0.0 { "DDCML" } else { "CAE" };
    let table = EvalReport::summary_table(&[(name, &report)]);
    write_text(&out.join("summary.txt"), &table)?;
    print!("{table}");
    Ok(())
}
