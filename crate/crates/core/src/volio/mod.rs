//! Volume storage, file formats, geometric preprocessing and synthetic phantoms.

mod format;
mod manifest;
mod phantom;
mod resample;

pub use format::{read_volume, write_volume, VOL1_HEADER_LEN, VOL1_MAGIC};
pub use manifest::{load_manifest, write_manifest, CaseRecord};
pub use phantom::{gen_phantom, CohortConfig, PhantomSpec, MIN_PHANTOM_DIM};
pub use resample::crop_downsample;

use crate::error::{Error, Result};

/// A 3D scalar intensity grid in gray levels `[0, 255]`.
///
/// Voxels are stored x-fastest, z-slowest: index = `x + nx * (y + ny * z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    voxels: Vec<f32>,
}

impl Volume {
    pub fn new(dims: [usize; 3], voxels: Vec<f32>) -> Result<Self> {
        check_dims(dims)?;
        let n = dims.iter().product::<usize>();
        if voxels.len() != n {
            return Err(Error::PayloadMismatch { declared: n, found: voxels.len() });
        }
        for (index, &v) in voxels.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index });
            }
            if !(0.0..=255.0).contains(&v) {
                return Err(Error::OutOfRange { index, value: v as f64 });
            }
        }
        Ok(Volume { dims, voxels })
    }

    pub fn filled(dims: [usize; 3], value: f32) -> Result<Self> {
        check_dims(dims)?;
        Volume::new(dims, vec![value; dims.iter().product()])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn into_voxels(self) -> Vec<f32> {
        self.voxels
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.voxels[self.index(x, y, z)]
    }

    pub fn mean(&self) -> f64 {
        self.voxels.iter().map(|&v| v as f64).sum::<f64>() / self.voxels.len() as f64
    }

    /// Mean over strictly positive voxels, `None` when there are none.
    pub fn brain_mean(&self) -> Option<f64> {
        let (sum, n) = self
            .voxels
            .iter()
            .filter(|&&v| v > 0.0)
            .fold((0.0f64, 0usize), |(s, n), &v| (s + v as f64, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    /// Intensities divided by 255, the scale the network consumes.
    pub fn to_unit_scale(&self) -> Vec<f64> {
        self.voxels.iter().map(|&v| v as f64 / 255.0).collect()
    }

    /// Builds a volume from `[0, 1]`-scale values, clamping then rescaling by 255.
    pub fn from_unit_scale(dims: [usize; 3], values: &[f64]) -> Result<Self> {
        let voxels = values
            .iter()
            .enumerate()
            .map(|(index, &v)| {
                if v.is_finite() {
                    Ok((v.clamp(0.0, 1.0) * 255.0) as f32)
                } else {
                    Err(Error::NonFinite { index })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Volume::new(dims, voxels)
    }
}

fn check_dims(dims: [usize; 3]) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::InvalidDims(format!("{dims:?} has a zero extent")));
    }
    Ok(())
}
