use super::centroid::{centroid_matrix, CentroidMatrix};
use super::metrics::{rmse_percent, ssim};
use super::project::project_2d;
use super::report::{evaluate_with_seeds, FoldReport};
use crate::cae::{Embedding, Model};
use crate::error::{Error, Result};
use crate::volio::Volume;

#[derive(Debug, Clone, Copy)]
pub struct EvalCase<'a> {
    pub case_id: &'a str,
    pub label: usize,
    pub volume: &'a Volume,
}

/// Everything measured on one held-out fold.
#[derive(Debug, Clone)]
pub struct FoldEvaluation {
    pub report: FoldReport,
    /// `None` when some class has no held-out case.
    pub centroids: Option<CentroidMatrix>,
    pub projection: Vec<(String, usize, (f64, f64))>,
    pub embeddings: Vec<Embedding>,
}

/// Embeds every case; clusters and reconstructs the two `extremes` classes
/// (mapped to 0 and 1); builds the centroid matrix over `class_count` classes
/// normalized by the extremes; projects all embeddings to 2-D.
pub fn evaluate_fold(
    model: &Model,
    fold: usize,
    cases: &[EvalCase],
    extremes: (usize, usize),
    class_count: usize,
    seeds: &[u64],
) -> Result<FoldEvaluation> {
    let mut embeddings = Vec::with_capacity(cases.len());
    let (mut points, mut labels) = (Vec::new(), Vec::new());
    let (mut rmse, mut sim) = (0.0, 0.0);
    for c in cases {
        if c.label >= class_count {
            return Err(Error::Label { label: c.label, classes: class_count });
        }
        let binary = match c.label {
            l if l == extremes.0 => Some(0),
            l if l == extremes.1 => Some(1),
            _ => None,
        };
        let z = match binary {
            Some(b) => {
                let (z, rec) = model.forward(c.volume)?;
                rmse += rmse_percent(c.volume, &rec)?;
                sim += ssim(c.volume, &rec)?;
                points.push(z.clone());
                labels.push(b);
                z
            }
            None => model.encode(c.volume)?,
        };
        embeddings.push(z);
    }
    if points.len() < 2 || !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::Eval(format!("fold {fold} lacks held-out cases of both extreme classes")));
    }
    let scores = evaluate_with_seeds(&points, &labels, seeds)?;
    let n = points.len() as f64;
    let report = FoldReport { fold, rmse_percent: rmse / n, ssim: sim / n, scores };

    let mut groups: Vec<Vec<&Embedding>> = vec![Vec::new(); class_count];
    for (c, z) in cases.iter().zip(&embeddings) {
        groups[c.label].push(z);
    }
    let centroids = if groups.iter().all(|g| !g.is_empty()) {
        Some(centroid_matrix(&groups, extremes)?)
    } else {
        None
    };
    let uv = project_2d(&embeddings)?;
    let projection = cases.iter().zip(uv).map(|(c, p)| (c.case_id.to_string(), c.label, p)).collect();
    Ok(FoldEvaluation { report, centroids, projection, embeddings })
}
