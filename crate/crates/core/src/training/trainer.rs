use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{hinge_d_loss, scores, Discriminators};
use crate::dsp::{mel_spectrogram, MelAnalyzer};
use crate::error::{Error, Result};
use crate::losses::{generator_total, Adversarial, LossReport, LossWeights, Prediction, Target};
use crate::metrics::snr;
use crate::model::{Checkpoint, OptimizerState, Vocoder};
use crate::numerics::{AdamW, Tape, Tensor};
use crate::training::{load_dataset, sample_batch, split_validation, TrainConfig, Utterance};

const N_MELS: usize = 80;
const EMA: f64 = 0.98;

/// Everything besides weights and optimizer moments needed to resume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub step: u64,
    pub epoch: u64,
    /// ChaCha word position of the batch sampler, as a decimal string.
    pub rng_word_pos: String,
    pub ema_generator: Option<f64>,
    pub ema_discriminator: Option<f64>,
}

/// Losses and schedule of one step, as logged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    pub epoch: u64,
    pub lr: f64,
    /// `None` when the discriminators are frozen.
    pub discriminator: Option<f64>,
    pub generator: LossReport,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub step: u64,
    pub utterances: usize,
    pub snr: f64,
    pub mel_l1: f64,
}

pub struct Trainer {
    pub config: TrainConfig,
    pub model: Vocoder<f32>,
    pub discriminators: Discriminators<f32>,
    pub opt_g: AdamW<f32>,
    pub opt_d: AdamW<f32>,
    pub state: TrainState,
    weights: LossWeights,
    mel: MelAnalyzer<f32>,
    rng: ChaCha8Rng,
    train: Vec<Utterance>,
    validation: Vec<Utterance>,
    started: Instant,
}

impl Trainer {
    /// Fresh models seeded from `config.seed`.
    pub fn new(config: TrainConfig, train: Vec<Utterance>, validation: Vec<Utterance>) -> Result<Self> {
        config.validate()?;
        if train.is_empty() {
            return Err(Error::NoData(config.dataset.clone()));
        }
        let model_config = config.model_config();
        let model = Vocoder::new(model_config.clone(), config.seed)?;
        let discriminators = Discriminators::new(model_config.discriminator.clone(), config.seed.wrapping_add(1))?;
        let opt_g = AdamW::new(&model.params, config.optimizer());
        let opt_d = AdamW::new(&discriminators.params, config.optimizer());
        let rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
        Ok(Trainer {
            weights: config.loss_weights(),
            mel: MelAnalyzer::new(&model_config.stft, N_MELS)?,
            state: TrainState {
                step: 0,
                epoch: 0,
                rng_word_pos: rng.get_word_pos().to_string(),
                ema_generator: None,
                ema_discriminator: None,
            },
            config,
            model,
            discriminators,
            opt_g,
            opt_d,
            rng,
            train,
            validation,
            started: Instant::now(),
        })
    }

    /// Continues from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(
        config: TrainConfig,
        train: Vec<Utterance>,
        validation: Vec<Utterance>,
        ck: &Checkpoint,
    ) -> Result<Self> {
        let mut t = Self::new(config, train, validation)?;
        ck.check_config(&t.model.config)?;
        t.model = ck.vocoder()?;
        t.discriminators = ck
            .discriminators()?
            .ok_or_else(|| Error::InvalidArgument("checkpoint has no discriminator weights to resume from".into()))?;
        let opt = |name: &str| {
            ck.optimizer(name)
                .ok_or_else(|| Error::InvalidArgument(format!("checkpoint has no {name} optimizer state")))
        };
        t.opt_g = opt("generator")?.restore(&t.model.params, t.config.optimizer())?;
        t.opt_d = opt("discriminator")?.restore(&t.discriminators.params, t.config.optimizer())?;
        let json = ck
            .train_state
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("checkpoint has no training state".into()))?;
        let state: TrainState = serde_json::from_str(json).map_err(|e| Error::Corrupt {
            what: "checkpoint",
            msg: format!("training state: {e}"),
        })?;
        let pos: u128 = state.rng_word_pos.parse().map_err(|_| Error::Corrupt {
            what: "checkpoint",
            msg: "training state RNG position".into(),
        })?;
        t.rng.set_word_pos(pos);
        t.state = state;
        Ok(t)
    }

    pub fn steps_per_epoch(&self) -> u64 {
        self.train.len().div_ceil(self.config.batch_size) as u64
    }

    /// Learning rate for the current step.
    pub fn lr(&self) -> f64 {
        self.config.learning_rate * self.config.lr_decay.powi((self.state.step / self.steps_per_epoch()) as i32)
    }

    /// Draws the next training batch.
    pub fn next_batch(&mut self) -> Result<Tensor<f32>> {
        let b = sample_batch(&self.train, self.config.crop, self.config.batch_size, &mut self.rng)?;
        self.state.rng_word_pos = self.rng.get_word_pos().to_string();
        Ok(b)
    }

    /// One discriminator update followed by one generator update on `batch`.
    pub fn train_step(&mut self, batch: &Tensor<f32>) -> Result<StepReport> {
        let lr = self.lr();
        let epoch = self.state.step / self.steps_per_epoch();
        let analyzed = self.model.analyze_batch(batch)?;
        let tape = Tape::new();
        let la = tape.constant(analyzed.log_amplitude);
        let target = Target {
            log_amplitude: la,
            amplitude: tape.constant(analyzed.amplitude),
            phase: tape.constant(analyzed.phase),
            waveform: tape.constant(batch.clone()),
        };
        let feats = self.model.encode_var(&tape, la, target.phase)?;
        let decoded = self.model.decode_var(&tape, feats)?;
        let y = self.model.waveform_var(&decoded, analyzed.waveform_len)?;

        let mut d_loss = None;
        if self.config.train_discriminators {
            let real = self.discriminators.discriminate(&tape, target.waveform, false)?;
            let fake = self.discriminators.discriminate(&tape, y.detach(), false)?;
            let loss = hinge_d_loss(&scores(&real), &scores(&fake))?;
            let value = loss.item()? as f64;
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("discriminator loss at step {}", self.state.step)));
            }
            let grads = tape.backward(loss)?;
            self.discriminators.params.zero_grad();
            self.discriminators.params.accumulate(&grads);
            self.opt_d.step(&mut self.discriminators.params, lr)?;
            check_params("discriminator", &self.discriminators.params)?;
            d_loss = Some(value);
        }

        let pred = Prediction {
            log_amplitude: decoded.log_amplitude,
            amplitude: decoded.amplitude,
            phase: decoded.phase,
            waveform: y,
        };
        let adv_outputs = if self.weights.uses_discriminators() {
            Some((
                self.discriminators.discriminate(&tape, target.waveform, true)?,
                self.discriminators.discriminate(&tape, y, true)?,
            ))
        } else {
            None
        };
        let adversarial = adv_outputs.as_ref().map(|(real, fake)| Adversarial { real, fake });
        let g = generator_total(&target, &pred, &self.mel, adversarial, &self.weights).map_err(|e| match e {
            Error::NonFinite(what) => Error::NonFinite(format!("{what} at step {}", self.state.step)),
            other => other,
        })?;
        let grads = tape.backward(g.total)?;
        self.model.params.zero_grad();
        self.model.params.accumulate(&grads);
        self.opt_g.step(&mut self.model.params, lr)?;
        check_params("generator", &self.model.params)?;

        self.state.step += 1;
        self.state.epoch = self.state.step / self.steps_per_epoch();
        let ema = |old: Option<f64>, v: f64| Some(old.map_or(v, |o| EMA * o + (1.0 - EMA) * v));
        self.state.ema_generator = ema(self.state.ema_generator, g.report.total);
        if let Some(d) = d_loss {
            self.state.ema_discriminator = ema(self.state.ema_discriminator, d);
        }
        Ok(StepReport {
            step: self.state.step,
            epoch,
            lr,
            discriminator: d_loss,
            generator: g.report,
            wall_time: self.started.elapsed().as_secs_f64(),
        })
    }

    /// Samples a batch and trains on it.
    pub fn step(&mut self) -> Result<StepReport> {
        let batch = self.next_batch()?;
        self.train_step(&batch)
    }

    /// Copy-synthesis SNR and log-mel L1 averaged over held-out utterances.
    pub fn validate(&self) -> Result<Option<ValidationReport>> {
        let utts: Vec<_> = self
            .validation
            .iter()
            .filter(|u| u.samples.len() >= self.model.config.stft.frame_length)
            .take(self.config.validation_max_utterances)
            .collect();
        if utts.is_empty() {
            return Ok(None);
        }
        let (mut snr_sum, mut mel_sum) = (0.0, 0.0);
        for u in &utts {
            let y = self.model.analysis_synthesis(&u.samples)?;
            snr_sum += snr(&u.samples, &y).unwrap_or(f64::NAN);
            let to64 = |x: &[f32]| x.iter().map(|&v| v as f64).collect::<Vec<_>>();
            let (_, a) = mel_spectrogram(&to64(&u.samples), &self.model.config.stft, N_MELS)?;
            let (_, b) = mel_spectrogram(&to64(&y), &self.model.config.stft, N_MELS)?;
            mel_sum += a.iter().zip(&b).map(|(p, q)| (p - q).abs()).sum::<f64>() / a.len() as f64;
        }
        let n = utts.len() as f64;
        Ok(Some(ValidationReport {
            step: self.state.step,
            utterances: utts.len(),
            snr: snr_sum / n,
            mel_l1: mel_sum / n,
        }))
    }

    /// Weights, optimizer moments and training state.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(&self.model, Some(&self.discriminators), self.state.step);
        ck.optimizers = vec![
            OptimizerState::capture("generator", &self.opt_g),
            OptimizerState::capture("discriminator", &self.opt_d),
        ];
        ck.train_state = Some(serde_json::to_string(&self.state).expect("state serializes"));
        ck
    }
}

fn check_params(which: &str, store: &crate::numerics::ParamStore<f32>) -> Result<()> {
    match store.iter().find(|(_, p)| !p.value.is_finite()) {
        Some((_, p)) => Err(Error::NonFinite(format!("{which} parameter {} after update", p.name))),
        None => Ok(()),
    }
}

/// Paths produced by a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub log: PathBuf,
    pub steps: u64,
    pub last: Option<StepReport>,
}

fn write_record(log: &mut File, path: &Path, value: serde_json::Value) -> Result<()> {
    writeln!(log, "{value}").map_err(|e| Error::io(path, e))
}

/// Runs training to `config.max_steps`, writing checkpoints and a
/// line-per-step JSON log into `config.output_dir`.
pub fn train(config: TrainConfig, resume: Option<&Path>) -> Result<TrainOutcome> {
    config.validate()?;
    let all = load_dataset(&config.dataset)?;
    let (train_set, valid_set) = split_validation(all, config.validation_fraction);
    let mut trainer = match resume {
        Some(path) => Trainer::resume(config.clone(), train_set, valid_set, &Checkpoint::load(path)?)?,
        None => Trainer::new(config.clone(), train_set, valid_set)?,
    };
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let log_path = out.join("train.ndjson");
    let mut log = OpenOptions::new()
        .create(true)
        .append(resume.is_some())
        .write(true)
        .truncate(resume.is_none())
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;

    let save = |t: &Trainer| -> Result<PathBuf> {
        let ck = t.checkpoint();
        let path = out.join(format!("step_{:08}.bvck", t.state.step));
        ck.save(&path)?;
        ck.save(&out.join("latest.bvck"))?;
        Ok(path)
    };
    let mut last_ckpt = if resume.is_none() { Some(save(&trainer)?) } else { None };
    let mut last = None;
    while trainer.state.step < config.max_steps {
        let report = trainer.step()?;
        write_record(
            &mut log,
            &log_path,
            serde_json::json!({ "type": "step", "report": &report }),
        )?;
        let step = report.step;
        last = Some(report);
        if config.validation_interval > 0 && step % config.validation_interval == 0 {
            if let Some(v) = trainer.validate()? {
                write_record(&mut log, &log_path, serde_json::json!({ "type": "validation", "report": v }))?;
            }
        }
        if config.checkpoint_interval > 0 && step % config.checkpoint_interval == 0 {
            last_ckpt = Some(save(&trainer)?);
        }
    }
    let final_checkpoint = match last_ckpt {
        Some(p) if p.ends_with(format!("step_{:08}.bvck", trainer.state.step)) => p,
        _ => save(&trainer)?,
    };
    Ok(TrainOutcome {
        final_checkpoint,
        log: log_path,
        steps: trainer.state.step,
        last,
    })
}
