//! Reconstruction loss, embedded similarity, discriminative loss and their
//! weighted sum.

use crate::cae::Embedding;
use crate::error::{Error, Result};
use crate::ndgrad::{Graph, Var, PROB_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Weight of the discriminative term.
    pub alpha: f64,
    pub class_count: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { alpha: 1.0, class_count: 2 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha {} must be a nonnegative number", self.alpha)));
        }
        if self.class_count < 2 {
            return Err(Error::Config(format!("class count {} must be >= 2", self.class_count)));
        }
        Ok(())
    }
}

/// Class membership probabilities; sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let s: f64 = values.iter().sum();
        if values.is_empty() || values.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::Numeric(format!("not a probability vector: {values:?}")));
        }
        Ok(ProbVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `(1/D) * sum_d (x_d - x_hat_d)^2`.
pub fn recon_loss(g: &mut Graph, x: Var, x_hat: Var) -> Result<Var> {
    if g.value(x).shape() != g.value(x_hat).shape() {
        return Err(Error::Shape(format!(
            "reconstruction {:?} vs input {:?}",
            g.value(x_hat).shape(),
            g.value(x).shape()
        )));
    }
    g.mse(x, x_hat)
}

/// Softmax over negative squared Euclidean distances from `z` to one
/// exemplar embedding per class.
pub fn embedded_similarity(g: &mut Graph, z: Var, exemplars: &[Var]) -> Result<Var> {
    g.neg_dist_softmax(z, exemplars)
}

/// Cross-entropy of the one-hot label against `p`, with `p` floored at 1e-12.
pub fn discriminative_loss(g: &mut Graph, p: Var, label: usize) -> Result<Var> {
    g.nll(p, label)
}

/// The graph nodes of one loss evaluation.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub recon: Var,
    pub disc: Var,
    pub total: Var,
}

/// `recon + alpha * disc` on one graph. With `alpha == 0` the total is the
/// reconstruction node itself and the discriminative term is evaluated but
/// not connected.
pub fn total_loss(
    g: &mut Graph,
    x: Var,
    x_hat: Var,
    z: Var,
    exemplars: &[Var],
    label: usize,
    cfg: &LossConfig,
) -> Result<LossTerms> {
    cfg.validate()?;
    if exemplars.len() != cfg.class_count {
        return Err(Error::Shape(format!(
            "{} exemplars for {} classes",
            exemplars.len(),
            cfg.class_count
        )));
    }
    if label >= cfg.class_count {
        return Err(Error::Label { label, classes: cfg.class_count });
    }
    let recon = recon_loss(g, x, x_hat)?;
    let p = embedded_similarity(g, z, exemplars)?;
    let disc = discriminative_loss(g, p, label)?;
    let total = if cfg.alpha == 0.0 {
        recon
    } else {
        let weighted = g.scale(disc, cfg.alpha)?;
        g.add(recon, weighted)?
    };
    Ok(LossTerms { recon, disc, total })
}

/// Embedded similarity on plain embeddings.
pub fn similarity(z: &Embedding, exemplars: &[Embedding]) -> Result<ProbVector> {
    if exemplars.is_empty() {
        return Err(Error::Shape("similarity needs at least one exemplar".into()));
    }
    let mut logits = Vec::with_capacity(exemplars.len());
    for e in exemplars {
        if e.len() != z.len() {
            return Err(Error::Shape(format!("embedding length {} vs {}", z.len(), e.len())));
        }
        logits.push(-z.sq_dist(e));
    }
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    ProbVector::new(e.into_iter().map(|v| v / s).collect())
}

/// `-ln(max(p[label], 1e-12))`.
pub fn cross_entropy(p: &ProbVector, label: usize) -> Result<f64> {
    let v = p.values().get(label).ok_or(Error::Label { label, classes: p.len() })?;
    Ok(-v.max(PROB_FLOOR).ln())
}
