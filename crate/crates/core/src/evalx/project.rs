use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Projects points onto the two leading principal components of their
/// centered matrix. Each axis is signed so its largest-magnitude loading is
/// positive. Identical points all land on the origin.
pub fn project_2d<P: AsRef<[f64]>>(points: &[P]) -> Result<Vec<(f64, f64)>> {
    if points.len() < 2 {
        return Err(Error::Eval("projection needs at least two points".into()));
    }
    let dim = points[0].as_ref().len();
    if dim == 0 || points.iter().any(|p| p.as_ref().len() != dim) {
        return Err(Error::Eval("points have differing or zero lengths".into()));
    }
    let n = points.len();
    let mut x = DMatrix::from_fn(n, dim, |i, j| points[i].as_ref()[j]);
    for j in 0..dim {
        let mean = x.column(j).mean();
        x.column_mut(j).add_scalar_mut(-mean);
    }
    if x.iter().all(|&v| v == 0.0) {
        return Ok(vec![(0.0, 0.0); n]);
    }
    let cov = x.transpose() * &x / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let axis = |k: usize| -> Option<Vec<f64>> {
        let idx = *order.get(k)?;
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let lead = v.iter().copied().fold(0.0_f64, |m, c| if c.abs() > m.abs() { c } else { m });
        if lead < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
        Some(v)
    };
    let project = |row: usize, axis: &Option<Vec<f64>>| match axis {
        Some(v) => x.row(row).iter().zip(v).map(|(a, b)| a * b).sum(),
        None => 0.0,
    };
    let (u, w) = (axis(0), axis(1));
    Ok((0..n).map(|i| (project(i, &u), project(i, &w))).collect())
}
