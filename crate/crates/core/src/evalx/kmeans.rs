use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const KMEANS_MAX_ITER: usize = 300;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid, lowest index on ties.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Lloyd's algorithm with k-means++ seeding. Stops when assignments no longer
/// change or after [`KMEANS_MAX_ITER`] iterations. An emptied cluster is
/// re-seeded at the point farthest from its current centroid.
pub fn kmeans<P: AsRef<[f64]>>(points: &[P], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::Cluster("K must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::Cluster(format!("{} points for K = {k}", points.len())));
    }
    let dim = points[0].as_ref().len();
    for p in points {
        let p = p.as_ref();
        if p.len() != dim {
            return Err(Error::Cluster("points have differing dimensions".into()));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Cluster("non-finite coordinate".into()));
        }
    }
    let pts: Vec<&[f64]> = points.iter().map(|p| p.as_ref()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids: Vec<Vec<f64>> = vec![pts[rng.gen_range(0..pts.len())].to_vec()];
    let mut d2: Vec<f64> = pts.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut chosen = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    chosen = Some(i);
                    if r < d {
                        break;
                    }
                    r -= d;
                }
            }
            chosen.expect("a point with positive distance")
        } else {
            rng.gen_range(0..pts.len())
        };
        centroids.push(pts[pick].to_vec());
        for (i, p) in pts.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centroids.last().unwrap()));
        }
    }

    let mut assign: Vec<usize> = pts.iter().map(|p| nearest(p, &centroids).0).collect();
    for _ in 0..KMEANS_MAX_ITER {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in pts.iter().zip(&assign) {
            counts[a] += 1;
            sums[a].iter_mut().zip(p.iter()).for_each(|(s, v)| *s += v);
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                let (far, _) = pts
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| counts[assign[*i]] > 1)
                    .map(|(i, p)| (i, sq_dist(p, &centroids[assign[i]])))
                    .fold((usize::MAX, -1.0), |best, c| if c.1 > best.1 { c } else { best });
                if far != usize::MAX {
                    counts[assign[far]] -= 1;
                    counts[j] = 1;
                    assign[far] = j;
                    centroids[j] = pts[far].to_vec();
                }
            }
        }
        let next: Vec<usize> = pts.iter().map(|p| nearest(p, &centroids).0).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    Ok(assign)
}
