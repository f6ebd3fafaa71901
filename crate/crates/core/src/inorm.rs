//! Iterative gamma-correction intensity normalization.
//!
//! The brain area is every strictly positive voxel. Each iteration sets
//! `gamma = mu / mean` and maps `x -> 255 * (x / 255)^(1 / gamma)` until the
//! brain mean is within `epsilon` of `mu`.

use crate::error::{Error, Result};
use crate::volio::Volume;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationConfig {
    /// Target brain-area mean, gray levels.
    pub mu: f64,
    pub epsilon: f64,
    pub max_iter: usize,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig { mu: 128.0, epsilon: 0.5, max_iter: 100 }
    }
}

impl NormalizationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu < 255.0) {
            return Err(Error::Config(format!("mu {} must lie in (0, 255)", self.mu)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon {} must be positive", self.epsilon)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Normalized {
    pub volume: Volume,
    pub iterations: usize,
    /// Brain-area mean on return.
    pub brain_mean: f64,
}

impl Normalized {
    pub fn converged(&self, cfg: &NormalizationConfig) -> bool {
        (self.brain_mean - cfg.mu).abs() <= cfg.epsilon
    }
}

pub fn normalize_intensity(v: &Volume, cfg: &NormalizationConfig) -> Result<Normalized> {
    cfg.validate()?;
    let mut voxels = v.voxels().to_vec();
    let mut mean = brain_mean(&voxels).ok_or(Error::EmptyBrain)?;
    let mut iterations = 0;
    while (mean - cfg.mu).abs() > cfg.epsilon && iterations < cfg.max_iter {
        let exponent = mean / cfg.mu; // 1 / gamma
        for (index, x) in voxels.iter_mut().enumerate() {
            let y = 255.0 * (*x as f64 / 255.0).powf(exponent);
            if !y.is_finite() {
                return Err(Error::NonFinite { index });
            }
            *x = y.clamp(0.0, 255.0) as f32;
        }
        iterations += 1;
        mean = brain_mean(&voxels).ok_or(Error::EmptyBrain)?;
    }
    Ok(Normalized { volume: Volume::new(v.dims(), voxels)?, iterations, brain_mean: mean })
}

fn brain_mean(voxels: &[f32]) -> Option<f64> {
    let (sum, n) = voxels
        .iter()
        .filter(|&&x| x > 0.0)
        .fold((0.0f64, 0usize), |(s, n), &x| (s + x as f64, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brain(value: f32) -> Volume {
        let mut vox = vec![0.0f32; 64];
        for x in vox.iter_mut().skip(8).take(40) {
            *x = value;
        }
        Volume::new([4, 4, 4], vox).unwrap()
    }

    #[test]
    fn fixed_point_needs_no_iterations() {
        let out = normalize_intensity(&brain(128.0), &NormalizationConfig::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.volume, brain(128.0));
    }

    #[test]
    fn single_step_from_64() {
        let out = normalize_intensity(&brain(64.0), &NormalizationConfig::default()).unwrap();
        assert_eq!(out.iterations, 1);
        // 255 * (64/255)^(1/2), stored as f32
        assert_eq!(out.brain_mean, 127.749755859375);
    }

    #[test]
    fn overshooting_trajectory_from_30() {
        let out = normalize_intensity(&brain(30.0), &NormalizationConfig::default()).unwrap();
        assert_eq!(out.iterations, 5);
        assert_eq!(out.brain_mean, 128.41854858398438);
    }

    #[test]
    fn empty_brain_rejected() {
        let v = Volume::filled([2, 2, 2], 0.0).unwrap();
        assert!(matches!(
            normalize_intensity(&v, &NormalizationConfig::default()),
            Err(Error::EmptyBrain)
        ));
    }

    #[test]
    fn max_iter_bounds_work() {
        let cfg = NormalizationConfig { max_iter: 2, ..Default::default() };
        let out = normalize_intensity(&brain(30.0), &cfg).unwrap();
        assert_eq!(out.iterations, 2);
        assert!(!out.converged(&cfg));
    }

    #[test]
    fn invalid_config() {
        for cfg in [
            NormalizationConfig { mu: 0.0, ..Default::default() },
            NormalizationConfig { mu: 255.0, ..Default::default() },
            NormalizationConfig { epsilon: 0.0, ..Default::default() },
            NormalizationConfig { max_iter: 0, ..Default::default() },
        ] {
            assert!(normalize_intensity(&brain(50.0), &cfg).is_err());
        }
    }

    proptest! {
        #[test]
        fn mask_order_and_range(vals in proptest::collection::vec(0u8..=255, 27), mu in 20.0f64..230.0) {
            let vox: Vec<f32> = vals.iter().map(|&v| v as f32).collect();
            prop_assume!(vox.iter().any(|&v| v > 0.0));
            let v = Volume::new([3, 3, 3], vox.clone()).unwrap();
            let cfg = NormalizationConfig { mu, ..Default::default() };
            let out = normalize_intensity(&v, &cfg).unwrap();
            let res = out.volume.voxels();
            for i in 0..27 {
                prop_assert!((0.0..=255.0).contains(&res[i]));
                if vox[i] == 0.0 { prop_assert_eq!(res[i], 0.0); }
                if vox[i] == 255.0 { prop_assert_eq!(res[i], 255.0); }
                for j in 0..27 {
                    if vox[i] <= vox[j] { prop_assert!(res[i] <= res[j]); }
                }
            }
        }
    }
}
