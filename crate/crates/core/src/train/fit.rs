use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Adam, AdamConfig, Sampler};
use crate::cae::Model;
use crate::error::{Error, Result};
use crate::loss::{total_loss, LossConfig};
use crate::volio::Volume;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub learning_rate: f64,
    pub adam: AdamConfig,
    pub rng_seed: u64,
    pub loss: LossConfig,
    /// Anchors whose gradients are averaged per update.
    pub anchors_per_step: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            steps_per_epoch: 200,
            learning_rate: 1e-3,
            adam: AdamConfig::default(),
            rng_seed: 0,
            loss: LossConfig::default(),
            anchors_per_step: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.anchors_per_step == 0 {
            return Err(Error::Config("anchors_per_step must be at least 1".into()));
        }
        self.loss.validate()
    }

    pub fn total_steps(&self) -> usize {
        self.epochs * self.steps_per_epoch
    }
}

/// One optimizer step's losses (averaged over anchors when batching).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub recon: f64,
    pub disc: f64,
    pub total: f64,
}

/// Trains `model` in place on `(volume, class)` pairs whose classes are
/// `0..cfg.loss.class_count`. Returns the per-step loss trace.
pub fn fit(model: &mut Model, trainset: &[(Volume, usize)], cfg: &TrainConfig) -> Result<Vec<LossRecord>> {
    cfg.validate()?;
    let labels: Vec<usize> = trainset.iter().map(|(_, l)| *l).collect();
    let sampler = Sampler::new(&labels, cfg.loss.class_count)?;
    if let Some((v, _)) = trainset.iter().find(|(v, _)| v.dims() != model.spec().input_dims) {
        return Err(Error::Shape(format!(
            "training volume {:?} does not match network input {:?}",
            v.dims(),
            model.spec().input_dims
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut opt = Adam::new(model.params(), cfg.learning_rate, cfg.adam);
    let mut trace = Vec::with_capacity(cfg.total_steps());
    let scale = 1.0 / cfg.anchors_per_step as f64;

    for step in 0..cfg.total_steps() {
        model.params_mut().zero_grad();
        let mut rec = LossRecord { step, recon: 0.0, disc: 0.0, total: 0.0 };
        for _ in 0..cfg.anchors_per_step {
            let batch = sampler.sample(&mut rng)?;
            let mut g = model.new_graph();
            let x = model.input(&mut g, &trainset[batch.anchor].0)?;
            let z = model.encode_graph(&mut g, x)?;
            let x_hat = model.decode_graph(&mut g, z)?;
            let mut exemplars = Vec::with_capacity(batch.exemplars.len());
            for &e in &batch.exemplars {
                let xe = model.input(&mut g, &trainset[e].0)?;
                exemplars.push(model.encode_graph(&mut g, xe)?);
            }
            let terms = total_loss(&mut g, x, x_hat, z, &exemplars, batch.anchor_label, &cfg.loss)
                .map_err(|e| annotate(e, step))?;
            let total = g.value(terms.total).item();
            if !total.is_finite() {
                return Err(Error::Numeric(format!("loss {total} at step {step}")));
            }
            g.backward(terms.total).map_err(|e| annotate(e, step))?;
            model.params_mut().accumulate_grads(&g);
            rec.recon += scale * g.value(terms.recon).item();
            rec.disc += scale * g.value(terms.disc).item();
            rec.total += scale * total;
        }
        if cfg.anchors_per_step > 1 {
            for (_, p) in model.params_mut().iter_mut() {
                p.grad.iter_mut().for_each(|v| *v *= scale);
            }
        }
        opt.step(model.params_mut());
        trace.push(rec);
        if (step + 1) % cfg.steps_per_epoch == 0 {
            let epoch = &trace[step + 1 - cfg.steps_per_epoch..];
            let mean = epoch.iter().map(|r| r.total).sum::<f64>() / epoch.len() as f64;
            log::debug!("epoch {}: mean total loss {mean:.6}", (step + 1) / cfg.steps_per_epoch);
        }
    }
    Ok(trace)
}

fn annotate(e: Error, step: usize) -> Error {
    match e {
        Error::Numeric(m) => Error::Numeric(format!("{m} at step {step}")),
        other => other,
    }
}

/// Writes `step,recon_loss,disc_loss,total_loss` rows.
pub fn write_trace(path: impl AsRef<Path>, trace: &[LossRecord]) -> Result<()> {
    let path = path.as_ref();
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["step", "recon_loss", "disc_loss", "total_loss"]).map_err(io)?;
    for r in trace {
        w.write_record([
            r.step.to_string(),
            r.recon.to_string(),
            r.disc.to_string(),
            r.total.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
