use crate::error::{Error, Result};
use crate::volio::Volume;

/// Edge length of the cubic SSIM window.
pub const SSIM_WINDOW: usize = 7;
const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

fn check_dims(x: &Volume, y: &Volume) -> Result<()> {
    if x.dims() != y.dims() {
        return Err(Error::Shape(format!("volume dims {:?} vs {:?}", x.dims(), y.dims())));
    }
    Ok(())
}

/// Root mean squared error on the [0,1] intensity scale, in percent.
pub fn rmse_percent(x: &Volume, x_hat: &Volume) -> Result<f64> {
    check_dims(x, x_hat)?;
    let sse: f64 = x
        .voxels()
        .iter()
        .zip(x_hat.voxels())
        .map(|(&a, &b)| {
            let d = (a as f64 - b as f64) / 255.0;
            d * d
        })
        .sum();
    Ok((sse / x.len() as f64).sqrt() * 100.0)
}

/// Inclusive 3-D prefix sums with a zero border, so any box sum takes eight lookups.
struct SummedVolume {
    data: Vec<f64>,
    sx: usize,
    sy: usize,
}

impl SummedVolume {
    fn new(dims: [usize; 3], value: impl Fn(usize) -> f64) -> Self {
        let [nx, ny, nz] = dims;
        let (sx, sy) = (nx + 1, ny + 1);
        let mut data = vec![0.0; sx * sy * (nz + 1)];
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let at = |x: usize, y: usize, z: usize| x + sx * (y + sy * z);
                    let v = value(x + nx * (y + ny * z));
                    data[at(x + 1, y + 1, z + 1)] = v + data[at(x, y + 1, z + 1)]
                        + data[at(x + 1, y, z + 1)]
                        + data[at(x + 1, y + 1, z)]
                        - data[at(x, y, z + 1)]
                        - data[at(x, y + 1, z)]
                        - data[at(x + 1, y, z)]
                        + data[at(x, y, z)];
                }
            }
        }
        SummedVolume { data, sx, sy }
    }

    fn box_sum(&self, lo: [usize; 3], w: usize) -> f64 {
        let at = |x: usize, y: usize, z: usize| self.data[x + self.sx * (y + self.sy * z)];
        let [x0, y0, z0] = lo;
        let [x1, y1, z1] = [x0 + w, y0 + w, z0 + w];
        at(x1, y1, z1) - at(x0, y1, z1) - at(x1, y0, z1) - at(x1, y1, z0) + at(x0, y0, z1)
            + at(x0, y1, z0)
            + at(x1, y0, z0)
            - at(x0, y0, z0)
    }
}

/// Mean structural similarity over every fully contained 7x7x7 window,
/// uniform weights and population moments, on the [0,255] scale.
pub fn ssim(x: &Volume, y: &Volume) -> Result<f64> {
    check_dims(x, y)?;
    let dims = x.dims();
    if dims.iter().any(|&d| d < SSIM_WINDOW) {
        return Err(Error::Shape(format!("volume {dims:?} smaller than the SSIM window")));
    }
    let (a, b) = (x.voxels(), y.voxels());
    let sa = SummedVolume::new(dims, |i| a[i] as f64);
    let sb = SummedVolume::new(dims, |i| b[i] as f64);
    let saa = SummedVolume::new(dims, |i| (a[i] as f64).powi(2));
    let sbb = SummedVolume::new(dims, |i| (b[i] as f64).powi(2));
    let sab = SummedVolume::new(dims, |i| a[i] as f64 * b[i] as f64);

    let w = SSIM_WINDOW;
    let n = (w * w * w) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for z in 0..=dims[2] - w {
        for yy in 0..=dims[1] - w {
            for xx in 0..=dims[0] - w {
                let lo = [xx, yy, z];
                let mu_a = sa.box_sum(lo, w) / n;
                let mu_b = sb.box_sum(lo, w) / n;
                let var_a = (saa.box_sum(lo, w) / n - mu_a * mu_a).max(0.0);
                let var_b = (sbb.box_sum(lo, w) / n - mu_b * mu_b).max(0.0);
                let cov = sab.box_sum(lo, w) / n - mu_a * mu_b;
                total += (2.0 * mu_a * mu_b + C1) * (2.0 * cov + C2)
                    / ((mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volio::{gen_phantom, PhantomSpec};

    fn phantom(severity: u8, seed: u64) -> Volume {
        let spec = PhantomSpec {
            severity,
            subject_seed: seed,
            dims: [16, 16, 16],
            nuisance_gain: 1.0,
            texture_amplitude: 25.0,
        };
        gen_phantom(&spec).unwrap()
    }

    #[test]
    fn rmse_examples() {
        let a = Volume::filled([4, 4, 4], 0.0).unwrap();
        assert_eq!(rmse_percent(&a, &a).unwrap(), 0.0);
        let b = Volume::filled([4, 4, 4], 255.0).unwrap();
        assert_eq!(rmse_percent(&a, &b).unwrap(), 100.0);
        let x = Volume::new([2, 1, 1], vec![0.0, 0.0]).unwrap();
        let y = Volume::new([2, 1, 1], vec![0.0, 127.5]).unwrap();
        assert!((rmse_percent(&x, &y).unwrap() - 35.35533905932738).abs() < 1e-12);
        assert!(rmse_percent(&a, &Volume::filled([4, 4, 5], 0.0).unwrap()).is_err());
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let (p, q) = (phantom(1, 3), phantom(3, 9));
        assert!((ssim(&p, &p).unwrap() - 1.0).abs() < 1e-9);
        let (pq, qp) = (ssim(&p, &q).unwrap(), ssim(&q, &p).unwrap());
        assert!((pq - qp).abs() < 1e-12);
        assert!(pq < 1.0 && pq > -1.0);
    }

    #[test]
    fn ssim_constant_volumes_closed_form() {
        let a = Volume::filled([9, 8, 7], 100.0).unwrap();
        let b = Volume::filled([9, 8, 7], 150.0).unwrap();
        assert!((ssim(&a, &b).unwrap() - 0.923092310530793).abs() < 1e-9);
    }

    #[test]
    fn ssim_matches_direct_window_sums() {
        let (p, q) = (phantom(0, 5), phantom(4, 6));
        let w = SSIM_WINDOW;
        let mut total = 0.0;
        let mut count = 0;
        for z in 0..=16 - w {
            for y in 0..=16 - w {
                for x in 0..=16 - w {
                    let mut vals = Vec::new();
                    for k in 0..w {
                        for j in 0..w {
                            for i in 0..w {
                                vals.push((p.get(x + i, y + j, z + k) as f64, q.get(x + i, y + j, z + k) as f64));
                            }
                        }
                    }
                    let n = vals.len() as f64;
                    let ma = vals.iter().map(|v| v.0).sum::<f64>() / n;
                    let mb = vals.iter().map(|v| v.1).sum::<f64>() / n;
                    let va = vals.iter().map(|v| (v.0 - ma).powi(2)).sum::<f64>() / n;
                    let vb = vals.iter().map(|v| (v.1 - mb).powi(2)).sum::<f64>() / n;
                    let cv = vals.iter().map(|v| (v.0 - ma) * (v.1 - mb)).sum::<f64>() / n;
                    total += (2.0 * ma * mb + C1) * (2.0 * cv + C2) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
                    count += 1;
                }
            }
        }
        assert!((ssim(&p, &q).unwrap() - total / count as f64).abs() < 1e-9);
    }

    #[test]
    fn ssim_rejects_small_volumes() {
        let a = Volume::filled([6, 7, 7], 1.0).unwrap();
        assert!(ssim(&a, &a).is_err());
    }
}
