use crate::error::{Error, Result};

/// Pairwise distances between class mean embeddings, scaled so the
/// normalization pair sits at exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidMatrix {
    pub distances: Vec<Vec<f64>>,
    pub normalize_pair: (usize, usize),
}

impl CentroidMatrix {
    pub fn class_count(&self) -> usize {
        self.distances.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.distances[i][j]
    }
}

fn mean_of<P: AsRef<[f64]>>(points: &[P]) -> Vec<f64> {
    let dim = points[0].as_ref().len();
    let mut m = vec![0.0; dim];
    for p in points {
        m.iter_mut().zip(p.as_ref()).for_each(|(s, v)| *s += v);
    }
    m.iter_mut().for_each(|s| *s /= points.len() as f64);
    m
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `groups[c]` holds the embeddings of class `c`.
pub fn centroid_matrix<P: AsRef<[f64]>>(
    groups: &[Vec<P>],
    normalize_pair: (usize, usize),
) -> Result<CentroidMatrix> {
    let (a, b) = normalize_pair;
    if a >= groups.len() || b >= groups.len() || a == b {
        return Err(Error::Eval(format!(
            "normalization pair {normalize_pair:?} invalid for {} classes",
            groups.len()
        )));
    }
    if let Some(c) = groups.iter().position(|g| g.is_empty()) {
        return Err(Error::Eval(format!("class {c} has no embeddings")));
    }
    let dim = groups[0][0].as_ref().len();
    if groups.iter().flatten().any(|p| p.as_ref().len() != dim) {
        return Err(Error::Eval("embeddings have differing lengths".into()));
    }
    let centroids: Vec<Vec<f64>> = groups.iter().map(|g| mean_of(g)).collect();
    let scale = dist(&centroids[a], &centroids[b]);
    if !(scale > 0.0) {
        return Err(Error::Eval(format!("classes {a} and {b} share a centroid")));
    }
    let c = groups.len();
    let mut distances = vec![vec![0.0; c]; c];
    for i in 0..c {
        for j in i + 1..c {
            let d = if (i, j) == (a.min(b), a.max(b)) { 1.0 } else { dist(&centroids[i], &centroids[j]) / scale };
            distances[i][j] = d;
            distances[j][i] = d;
        }
    }
    Ok(CentroidMatrix { distances, normalize_pair })
}
