use super::Volume;
use crate::error::{Error, Result};

/// Non-overlapping block-mean downsampling by `factor` (trailing partial
/// blocks dropped), followed by a centered crop to `target` with ties broken
/// toward the low index.
pub fn crop_downsample(v: &Volume, factor: usize, target: [usize; 3]) -> Result<Volume> {
    if factor == 0 {
        return Err(Error::InvalidDims("downsampling factor must be positive".into()));
    }
    let src = v.dims();
    let down = src.map(|d| d / factor);
    if (0..3).any(|a| target[a] == 0 || target[a] > down[a]) {
        return Err(Error::InvalidDims(format!(
            "target {target:?} does not fit in downsampled dims {down:?}"
        )));
    }
    let offset = [0, 1, 2].map(|a| (down[a] - target[a]) / 2);
    let inv = 1.0 / (factor * factor * factor) as f64;

    let mut out = Vec::with_capacity(target.iter().product());
    for z in 0..target[2] {
        for y in 0..target[1] {
            for x in 0..target[0] {
                let base = [x + offset[0], y + offset[1], z + offset[2]].map(|c| c * factor);
                let mut acc = 0.0f64;
                for dz in 0..factor {
                    for dy in 0..factor {
                        for dx in 0..factor {
                            acc += v.get(base[0] + dx, base[1] + dy, base[2] + dz) as f64;
                        }
                    }
                }
                out.push(((acc * inv) as f32).clamp(0.0, 255.0));
            }
        }
    }
    Volume::new(target, out)
}
