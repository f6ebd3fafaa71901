//! Line-based `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ddcml::cae::NetworkSpec;
use ddcml::inorm::NormalizationConfig;
use ddcml::loss::LossConfig;
use ddcml::train::TrainConfig;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Network {
    Full,
    Desk,
    Custom,
}

/// Every setting a command may read. Unset paths stay `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub classes: usize,
    pub count_per_class: usize,
    pub phantom_dims: [usize; 3],
    pub phantom_seed: u64,
    pub downsample_factor: usize,
    pub target_dims: Option<[usize; 3]>,
    pub mu: f64,
    pub epsilon: f64,
    pub max_iter: usize,
    pub network: Network,
    pub input_dims: [usize; 3],
    pub channels: [usize; 4],
    pub init_seed: u64,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub learning_rate: f64,
    pub rng_seed: u64,
    pub alpha: f64,
    pub anchors_per_step: usize,
    pub folds: usize,
    pub split_seed: u64,
    pub eval_seeds: usize,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let norm = NormalizationConfig::default();
        let train = TrainConfig::default();
        let desk = NetworkSpec::desk();
        RunConfig {
            manifest: None,
            out: None,
            checkpoint: None,
            index: None,
            classes: 5,
            count_per_class: 8,
            phantom_dims: desk.input_dims,
            phantom_seed: 0,
            downsample_factor: 1,
            target_dims: None,
            mu: norm.mu,
            epsilon: norm.epsilon,
            max_iter: norm.max_iter,
            network: Network::Desk,
            input_dims: desk.input_dims,
            channels: desk.block_channels,
            init_seed: 0,
            epochs: train.epochs,
            steps_per_epoch: train.steps_per_epoch,
            learning_rate: train.learning_rate,
            rng_seed: train.rng_seed,
            alpha: train.loss.alpha,
            anchors_per_step: train.anchors_per_step,
            folds: 5,
            split_seed: 0,
            eval_seeds: 10,
            jobs: 1,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| CliError::Usage(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<const N: usize>(key: &str, value: &str) -> Result<[usize; N], CliError> {
    let parts: Vec<usize> = value
        .split([',', 'x'])
        .map(|p| parse(key, p.trim()))
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|_| CliError::Usage(format!("{key}: expected {N} comma-separated values")))
}

fn show<const N: usize>(v: [usize; N]) -> String {
    v.map(|d| d.to_string()).join(",")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key.trim() {
            "manifest" => self.manifest = Some(v.into()),
            "out" => self.out = Some(v.into()),
            "checkpoint" => self.checkpoint = Some(v.into()),
            "index" => self.index = Some(v.into()),
            "classes" => self.classes = parse(key, v)?,
            "count_per_class" => self.count_per_class = parse(key, v)?,
            "phantom_dims" => self.phantom_dims = parse_list(key, v)?,
            "phantom_seed" => self.phantom_seed = parse(key, v)?,
            "downsample_factor" => self.downsample_factor = parse(key, v)?,
            "target_dims" => self.target_dims = Some(parse_list(key, v)?),
            "mu" => self.mu = parse(key, v)?,
            "epsilon" => self.epsilon = parse(key, v)?,
            "max_iter" => self.max_iter = parse(key, v)?,
            "network" => {
                self.network = match v {
                    "full" => Network::Full,
                    "desk" => Network::Desk,
                    "custom" => Network::Custom,
                    _ => return Err(CliError::Usage(format!("network: unknown preset {v:?}"))),
                }
            }
            "input_dims" => self.input_dims = parse_list(key, v)?,
            "channels" => self.channels = parse_list(key, v)?,
            "init_seed" => self.init_seed = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "steps_per_epoch" => self.steps_per_epoch = parse(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "rng_seed" => self.rng_seed = parse(key, v)?,
            "alpha" => self.alpha = parse(key, v)?,
            "anchors_per_step" => self.anchors_per_step = parse(key, v)?,
            "folds" => self.folds = parse(key, v)?,
            "split_seed" => self.split_seed = parse(key, v)?,
            "eval_seeds" => self.eval_seeds = parse(key, v)?,
            "jobs" => self.jobs = parse(key, v)?,
            other => return Err(CliError::Usage(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<(), CliError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("{}:{}: expected key = value", origin.display(), n + 1))
            })?;
            self.set(k, v)
                .map_err(|e| CliError::Usage(format!("{}:{}: {e}", origin.display(), n + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    /// Serializes every key so `load` reproduces this config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        for (k, p) in [
            ("manifest", &self.manifest),
            ("out", &self.out),
            ("checkpoint", &self.checkpoint),
            ("index", &self.index),
        ] {
            if let Some(p) = p {
                put(k, p.display().to_string());
            }
        }
        put("classes", self.classes.to_string());
        put("count_per_class", self.count_per_class.to_string());
        put("phantom_dims", show(self.phantom_dims));
        put("phantom_seed", self.phantom_seed.to_string());
        put("downsample_factor", self.downsample_factor.to_string());
        if let Some(t) = self.target_dims {
            put("target_dims", show(t));
        }
        put("mu", self.mu.to_string());
        put("epsilon", self.epsilon.to_string());
        put("max_iter", self.max_iter.to_string());
        let net = match self.network {
            Network::Full => "full",
            Network::Desk => "desk",
            Network::Custom => "custom",
        };
        put("network", net.into());
        put("input_dims", show(self.input_dims));
        put("channels", show(self.channels));
        put("init_seed", self.init_seed.to_string());
        put("epochs", self.epochs.to_string());
        put("steps_per_epoch", self.steps_per_epoch.to_string());
        put("learning_rate", self.learning_rate.to_string());
        put("rng_seed", self.rng_seed.to_string());
        put("alpha", self.alpha.to_string());
        put("anchors_per_step", self.anchors_per_step.to_string());
        put("folds", self.folds.to_string());
        put("split_seed", self.split_seed.to_string());
        put("eval_seeds", self.eval_seeds.to_string());
        put("jobs", self.jobs.to_string());
        s
    }

    pub fn require_path<'a>(&'a self, key: &str, p: &'a Option<PathBuf>) -> Result<&'a Path, CliError> {
        p.as_deref().ok_or_else(|| CliError::Usage(format!("missing required setting {key}")))
    }

    pub fn existing_path<'a>(&'a self, key: &str, p: &'a Option<PathBuf>) -> Result<&'a Path, CliError> {
        let path = self.require_path(key, p)?;
        if !path.exists() {
            return Err(CliError::Usage(format!("{key}: {} does not exist", path.display())));
        }
        Ok(path)
    }

    pub fn normalization(&self) -> Result<NormalizationConfig, CliError> {
        let cfg = NormalizationConfig { mu: self.mu, epsilon: self.epsilon, max_iter: self.max_iter };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn network_spec(&self) -> Result<NetworkSpec, CliError> {
        let spec = match self.network {
            Network::Full => NetworkSpec::full(),
            Network::Desk => NetworkSpec::desk(),
            Network::Custom => NetworkSpec::custom(self.input_dims, self.channels),
        };
        spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(spec)
    }

    pub fn train_config(&self, fold: usize) -> Result<TrainConfig, CliError> {
        let cfg = TrainConfig {
            epochs: self.epochs,
            steps_per_epoch: self.steps_per_epoch,
            learning_rate: self.learning_rate,
            rng_seed: self.rng_seed.wrapping_add(fold as u64),
            loss: LossConfig { alpha: self.alpha, class_count: 2 },
            anchors_per_step: self.anchors_per_step,
            ..TrainConfig::default()
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn seeds(&self) -> Result<Vec<u64>, CliError> {
        if self.eval_seeds == 0 {
            return Err(CliError::Usage("eval_seeds must be at least 1".into()));
        }
        Ok((0..self.eval_seeds as u64).collect())
    }
}
