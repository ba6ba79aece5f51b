use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::model::{ModelConfig, Preset};
use crate::numerics::AdamWConfig;

/// Flat key/value training configuration (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Directory of 16 kHz mono 16-bit WAV files.
    pub dataset: PathBuf,
    /// Receives checkpoints and the training log.
    pub output_dir: PathBuf,
    pub preset: Preset,
    /// Crop length in samples.
    pub crop: usize,
    pub batch_size: usize,
    pub max_steps: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    /// Multiplicative learning-rate decay applied once per epoch.
    pub lr_decay: f64,
    pub seed: u64,
    /// Fraction of utterances held out for validation.
    pub validation_fraction: f64,
    /// Steps between validation passes; 0 disables them.
    pub validation_interval: u64,
    pub validation_max_utterances: usize,
    /// Steps between checkpoints; 0 saves only the initial and final ones.
    pub checkpoint_interval: u64,
    /// When false the discriminators keep their initial weights.
    pub train_discriminators: bool,
    pub lambda_amplitude: f64,
    pub lambda_phase: f64,
    pub lambda_complex: f64,
    pub lambda_mel: f64,
    pub lambda_adversarial: f64,
    pub lambda_feature_matching: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        let opt = AdamWConfig::default();
        TrainConfig {
            dataset: PathBuf::from("data/train"),
            output_dir: PathBuf::from("runs/default"),
            preset: Preset::Base,
            crop: 8000,
            batch_size: 16,
            max_steps: 2_000_000,
            learning_rate: opt.lr,
            beta1: opt.beta1,
            beta2: opt.beta2,
            weight_decay: opt.weight_decay,
            lr_decay: 0.999,
            seed: 1234,
            validation_fraction: 0.0,
            validation_interval: 0,
            validation_max_utterances: 8,
            checkpoint_interval: 10_000,
            train_discriminators: true,
            lambda_amplitude: w.amplitude,
            lambda_phase: w.phase,
            lambda_complex: w.complex,
            lambda_mel: w.mel,
            lambda_adversarial: w.adversarial,
            lambda_feature_matching: w.feature_matching,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        if c.dataset.is_relative() {
            c.dataset = base.join(&c.dataset);
        }
        if c.output_dir.is_relative() {
            c.output_dir = base.join(&c.output_dir);
        }
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig::from_preset(self.preset)
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            amplitude: self.lambda_amplitude,
            phase: self.lambda_phase,
            complex: self.lambda_complex,
            mel: self.lambda_mel,
            adversarial: self.lambda_adversarial,
            feature_matching: self.lambda_feature_matching,
        }
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: AdamWConfig::default().eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        let model = self.model_config();
        let mut min_crop = model.stft.frame_length;
        if self.train_discriminators || self.loss_weights().uses_discriminators() {
            min_crop = min_crop.max(model.discriminator.min_length());
        }
        if self.crop < min_crop {
            return bad(format!("crop of {} samples is below the minimum of {min_crop}", self.crop));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be > 0", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)".into());
        }
        if !(self.weight_decay >= 0.0) || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("weight_decay must be >= 0 and lr_decay in (0, 1]".into());
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must lie in [0, 1)".into());
        }
        self.loss_weights().validate()
    }
}
