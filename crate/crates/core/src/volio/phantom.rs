use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Volume;
use crate::error::{Error, Result};

pub const MIN_PHANTOM_DIM: usize = 16;

pub(crate) const BRAIN_INTENSITY: f64 = 140.0;
pub(crate) const VENTRICLE_INTENSITY: f64 = 40.0;
/// Brain ellipsoid semi-axes as a fraction of each extent.
pub(crate) const BRAIN_SEMI_AXIS: f64 = 0.42;
/// Severity-0 ventricle radius as a fraction of the smallest extent.
pub(crate) const VENTRICLE_BASE_RADIUS: f64 = 0.12;
pub(crate) const VENTRICLE_GROWTH: f64 = 0.15;
/// Inner boundary of the textured ribbon in normalized brain radius.
pub(crate) const RIBBON_INNER: f64 = 0.6;

/// Parameters of one synthetic subject scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomSpec {
    /// Ordinal disease severity, 0 (healthy) to 4 (most severe).
    pub severity: u8,
    pub subject_seed: u64,
    pub dims: [usize; 3],
    /// Scanner-style intensity multiplier on the brain tissue.
    pub nuisance_gain: f64,
    /// Amplitude of the subject-specific ribbon texture, gray levels.
    pub texture_amplitude: f64,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.severity > 4 {
            return Err(Error::Phantom(format!("severity {} not in 0..=4", self.severity)));
        }
        if !(self.nuisance_gain > 0.0 && self.nuisance_gain.is_finite()) {
            return Err(Error::Phantom("nuisance_gain must be positive".into()));
        }
        if !self.texture_amplitude.is_finite() {
            return Err(Error::Phantom("texture_amplitude must be finite".into()));
        }
        if self.dims.iter().any(|&d| d < MIN_PHANTOM_DIM) {
            return Err(Error::Phantom(format!(
                "dims {:?} too small, every extent must be >= {MIN_PHANTOM_DIM}",
                self.dims
            )));
        }
        Ok(())
    }

    pub fn ventricle_radius(&self) -> f64 {
        let min_dim = *self.dims.iter().min().unwrap() as f64;
        VENTRICLE_BASE_RADIUS * min_dim * (1.0 + VENTRICLE_GROWTH * self.severity as f64)
    }
}

/// Renders a skull-free synthetic brain: a tissue ellipsoid, a central
/// ventricle whose radius grows with severity, and a sinusoidal ribbon texture
/// whose phases depend only on `subject_seed`.
pub fn gen_phantom(spec: &PhantomSpec) -> Result<Volume> {
    spec.validate()?;
    let [nx, ny, nz] = spec.dims;
    let center = spec.dims.map(|d| d as f64 / 2.0);
    let semi = spec.dims.map(|d| BRAIN_SEMI_AXIS * d as f64);
    let r_vent = spec.ventricle_radius();
    let wavelength = *spec.dims.iter().min().unwrap() as f64 / 4.0;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.subject_seed);
    let phase: [f64; 3] = [rng.gen::<f64>() * TAU, rng.gen::<f64>() * TAU, rng.gen::<f64>() * TAU];
    let tissue = (BRAIN_INTENSITY * spec.nuisance_gain).clamp(0.0, 255.0);

    let mut voxels = Vec::with_capacity(nx * ny * nz);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let p = [x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5];
                let d = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
                let rho2 = (0..3).map(|a| (d[a] / semi[a]).powi(2)).sum::<f64>();
                let value = if rho2 > 1.0 {
                    0.0
                } else if d.iter().map(|c| c * c).sum::<f64>() <= r_vent * r_vent {
                    VENTRICLE_INTENSITY
                } else if rho2 >= RIBBON_INNER * RIBBON_INNER && spec.texture_amplitude != 0.0 {
                    let wave = (0..3)
                        .map(|a| (TAU * p[a] / wavelength + phase[a]).sin())
                        .sum::<f64>()
                        / 3.0;
                    (tissue + spec.texture_amplitude * wave).clamp(0.0, 255.0)
                } else {
                    tissue
                };
                voxels.push(value as f32);
            }
        }
    }
    Volume::new(spec.dims, voxels)
}

/// Recipe for a labelled phantom cohort with per-subject nuisance draws.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortConfig {
    pub dims: [usize; 3],
    /// Subjects to draw at each severity; index = severity.
    pub subjects_per_severity: [usize; 5],
    pub seed: u64,
    /// Inclusive range of the per-subject tissue gain.
    pub gain_range: (f64, f64),
    /// Inclusive range of the per-subject texture amplitude.
    pub texture_range: (f64, f64),
}

impl CohortConfig {
    pub fn uniform(dims: [usize; 3], per_class: usize, seed: u64) -> Self {
        CohortConfig {
            dims,
            subjects_per_severity: [per_class; 5],
            seed,
            gain_range: (0.7, 1.3),
            texture_range: (20.0, 40.0),
        }
    }

    /// `(subject_id, spec)` for every subject, severity-major. Deterministic in `seed`.
    pub fn subjects(&self) -> Vec<(String, PhantomSpec)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::new();
        for (severity, &count) in self.subjects_per_severity.iter().enumerate() {
            for i in 0..count {
                let spec = PhantomSpec {
                    severity: severity as u8,
                    subject_seed: rng.gen(),
                    dims: self.dims,
                    nuisance_gain: draw(&mut rng, self.gain_range),
                    texture_amplitude: draw(&mut rng, self.texture_range),
                };
                out.push((format!("sev{severity}-{i:04}"), spec));
            }
        }
        out
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(severity: u8, seed: u64) -> PhantomSpec {
        PhantomSpec {
            severity,
            subject_seed: seed,
            dims: [32, 32, 32],
            nuisance_gain: 1.0,
            texture_amplitude: 20.0,
        }
    }

    fn ventricle_count(v: &Volume) -> usize {
        v.voxels().iter().filter(|&&x| x == VENTRICLE_INTENSITY as f32).count()
    }

    #[test]
    fn deterministic() {
        assert_eq!(gen_phantom(&spec(2, 7)).unwrap(), gen_phantom(&spec(2, 7)).unwrap());
        assert_ne!(gen_phantom(&spec(2, 7)).unwrap(), gen_phantom(&spec(2, 8)).unwrap());
    }

    #[test]
    fn ventricle_grows_strictly_with_severity() {
        for seed in [1, 99, 12345] {
            let counts: Vec<usize> =
                (0..=4).map(|s| ventricle_count(&gen_phantom(&spec(s, seed)).unwrap())).collect();
            assert!(counts.windows(2).all(|w| w[0] < w[1]), "{counts:?}");
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(gen_phantom(&PhantomSpec { severity: 5, ..spec(0, 1) }).is_err());
        assert!(gen_phantom(&PhantomSpec { nuisance_gain: 0.0, ..spec(0, 1) }).is_err());
        assert!(gen_phantom(&PhantomSpec { dims: [15, 32, 32], ..spec(0, 1) }).is_err());
    }

    #[test]
    fn cohort_is_deterministic_and_tallied() {
        let mut cfg = CohortConfig::uniform([16, 16, 16], 3, 9);
        cfg.subjects_per_severity = [3, 1, 0, 2, 4];
        let a = cfg.subjects();
        assert_eq!(a, cfg.subjects());
        assert_eq!(a.len(), 10);
        for s in 0..5u8 {
            let n = a.iter().filter(|(_, p)| p.severity == s).count();
            assert_eq!(n, cfg.subjects_per_severity[s as usize]);
        }
        assert!(a.iter().all(|(_, p)| (0.7..=1.3).contains(&p.nuisance_gain)));
    }

    #[test]
    fn extreme_gain_stays_in_range() {
        let v = gen_phantom(&PhantomSpec { nuisance_gain: 3.0, texture_amplitude: 80.0, ..spec(1, 3) })
            .unwrap();
        assert!(v.voxels().iter().all(|&x| (0.0..=255.0).contains(&x)));
    }
}
