use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use super::centroid::CentroidMatrix;
use super::kmeans::kmeans;
use crate::error::{Error, Result};
use crate::exec::Exec;

/// Best agreement over the two cluster-to-label mappings, in percent.
/// Both assignments and labels must be 0/1.
pub fn clustering_accuracy(assignments: &[usize], labels: &[usize]) -> Result<f64> {
    if assignments.len() != labels.len() || labels.is_empty() {
        return Err(Error::Eval(format!(
            "{} assignments for {} labels",
            assignments.len(),
            labels.len()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Eval(format!("label {l} is not binary")));
    }
    if let Some(&a) = assignments.iter().find(|&&a| a > 1) {
        return Err(Error::Eval(format!("cluster id {a} with K = 2")));
    }
    let same = assignments.iter().zip(labels).filter(|(a, l)| a == l).count();
    let best = same.max(labels.len() - same);
    Ok(100.0 * best as f64 / labels.len() as f64)
}

/// Per-seed clustering accuracies and their mean and population std.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedScores {
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl SeedScores {
    pub fn from_accuracies(seeds: Vec<u64>, accuracies: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&accuracies);
        SeedScores { seeds, accuracies, mean, std }
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs K=2 k-means once per seed and scores each run against `labels`.
pub fn evaluate_with_seeds<P: AsRef<[f64]> + Sync>(
    points: &[P],
    labels: &[usize],
    seeds: &[u64],
) -> Result<SeedScores> {
    if seeds.is_empty() {
        return Err(Error::Eval("no seeds".into()));
    }
    let runs = Exec::default().map(seeds.len(), |i| {
        kmeans(points, 2, seeds[i]).and_then(|a| clustering_accuracy(&a, labels))
    });
    let accuracies = runs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SeedScores::from_accuracies(seeds.to_vec(), accuracies))
}

/// Renders a score the way the results table does, e.g. `81.5(±2.76)`.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.1}(±{std:.2})")
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub fold: usize,
    pub rmse_percent: f64,
    pub ssim: f64,
    pub scores: SeedScores,
}

/// Cross-validated results for one model. Summary accuracy pools every
/// (fold, seed) run; RMSE% and SSIM average the folds.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub folds: Vec<FoldReport>,
    pub rmse_percent: f64,
    pub ssim: f64,
    pub clustering_accuracy_mean: f64,
    pub clustering_accuracy_std: f64,
}

impl EvalReport {
    pub fn from_folds(folds: Vec<FoldReport>) -> Result<Self> {
        if folds.is_empty() {
            return Err(Error::Eval("no folds to report".into()));
        }
        let pooled: Vec<f64> = folds.iter().flat_map(|f| f.scores.accuracies.iter().copied()).collect();
        let (clustering_accuracy_mean, clustering_accuracy_std) = mean_std(&pooled);
        let n = folds.len() as f64;
        Ok(EvalReport {
            rmse_percent: folds.iter().map(|f| f.rmse_percent).sum::<f64>() / n,
            ssim: folds.iter().map(|f| f.ssim).sum::<f64>() / n,
            clustering_accuracy_mean,
            clustering_accuracy_std,
            folds,
        })
    }

    /// Plain-text table with one row per model.
    pub fn summary_table(rows: &[(&str, &EvalReport)]) -> String {
        let width = rows.iter().map(|(name, _)| name.len()).max().unwrap_or(0).max(5);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>14}  {:>8}  {:>6}", "Model", "Accuracy(%)", "RMSE(%)", "SSIM");
        for (name, r) in rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>14}  {:>8.2}  {:>6.3}",
                name,
                format_mean_std(r.clustering_accuracy_mean, r.clustering_accuracy_std),
                r.rmse_percent,
                r.ssim
            );
        }
        out
    }
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufWriter::new(f))
}

fn finish(path: &Path, mut w: impl Write, body: &str) -> Result<()> {
    w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Per-fold rows followed by an `all` summary row.
pub fn write_report_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let mut s = String::from("fold,rmse_percent,ssim,accuracy_mean,accuracy_std\n");
    for f in &report.folds {
        let _ = writeln!(s, "{},{},{},{},{}", f.fold, f.rmse_percent, f.ssim, f.scores.mean, f.scores.std);
    }
    let _ = writeln!(
        s,
        "all,{},{},{},{}",
        report.rmse_percent, report.ssim, report.clustering_accuracy_mean, report.clustering_accuracy_std
    );
    finish(path, create(path)?, &s)
}

pub fn write_seed_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let mut s = String::from("fold,seed,accuracy\n");
    for f in &report.folds {
        for (seed, acc) in f.scores.seeds.iter().zip(&f.scores.accuracies) {
            let _ = writeln!(s, "{},{seed},{acc}", f.fold);
        }
    }
    finish(path, create(path)?, &s)
}

pub fn write_centroid_csv(path: &Path, m: &CentroidMatrix) -> Result<()> {
    let c = m.class_count();
    let mut s = String::from("class");
    for j in 0..c {
        let _ = write!(s, ",{j}");
    }
    s.push('\n');
    for (i, row) in m.distances.iter().enumerate() {
        let _ = write!(s, "{i}");
        for d in row {
            let _ = write!(s, ",{d}");
        }
        s.push('\n');
    }
    finish(path, create(path)?, &s)
}

/// `case_id,label,u,v` rows for external plotting.
pub fn write_projection_csv(path: &Path, rows: &[(String, usize, (f64, f64))]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Eval(e.to_string()))?;
    let err = |e: csv::Error| Error::Eval(format!("{}: {e}", path.display()));
    w.write_record(["case_id", "label", "u", "v"]).map_err(err)?;
    for (id, label, (u, v)) in rows {
        w.write_record([id.clone(), label.to_string(), u.to_string(), v.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(clustering_accuracy(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap(), 100.0);
        assert_eq!(clustering_accuracy(&[1, 1, 0, 0], &[0, 0, 1, 1]).unwrap(), 100.0);
        assert_eq!(clustering_accuracy(&[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap(), 50.0);
        assert_eq!(clustering_accuracy(&[0, 0, 0, 1], &[0, 0, 1, 1]).unwrap(), 75.0);
        assert!(clustering_accuracy(&[0, 1], &[0, 2]).is_err());
        assert!(clustering_accuracy(&[0, 2], &[0, 1]).is_err());
        assert!(clustering_accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn random_assignments_score_near_chance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 400;
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let trials = 200;
        let mut total = 0.0;
        for _ in 0..trials {
            let a: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            let acc = clustering_accuracy(&a, &labels).unwrap();
            assert!(acc >= 50.0);
            total += acc;
        }
        // E[max(S, n-S)]/n for S ~ Bin(400, 1/2) is 0.5 + E|S-200|/400 ≈ 0.5199
        let mean = total / trials as f64;
        assert!((mean - 51.99).abs() < 0.6, "{mean}");
    }

    #[test]
    fn formatting() {
        assert_eq!(format_mean_std(81.5, 2.76), "81.5(±2.76)");
        assert_eq!(format_mean_std(52.4, 0.0), "52.4(±0.00)");
    }

    #[test]
    fn identical_runs_have_zero_std() {
        let pts = vec![vec![0.0], vec![0.1], vec![10.0], vec![10.1]];
        let s = evaluate_with_seeds(&pts, &[0, 0, 1, 1], &(0..10).collect::<Vec<_>>()).unwrap();
        assert_eq!(s.accuracies, vec![100.0; 10]);
        assert_eq!((s.mean, s.std), (100.0, 0.0));
    }

    #[test]
    fn pooled_summary() {
        let fold = |fold, accs: Vec<f64>, rmse| FoldReport {
            fold,
            rmse_percent: rmse,
            ssim: 0.9,
            scores: SeedScores::from_accuracies((0..accs.len() as u64).collect(), accs),
        };
        let r = EvalReport::from_folds(vec![fold(0, vec![100.0, 90.0], 4.0), fold(1, vec![80.0, 70.0], 6.0)]).unwrap();
        assert_eq!(r.clustering_accuracy_mean, 85.0);
        assert!((r.clustering_accuracy_std - 125f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.rmse_percent, 5.0);
        let table = EvalReport::summary_table(&[("DDCML", &r)]);
        assert!(table.contains("85.0(±11.18)"));
    }
}
