use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::{log_amplitude, stft_with, SpectralEngine, Spectra, AMPLITUDE_FLOOR};
use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::convnext::ConvNeXtV2Block;
use crate::model::features::FeatureSequence;
use crate::model::layers::{Bind, Builder, Conv1d, ConvTranspose1d};
use crate::numerics::{Conv1dOpts, Float, ParamStore, Tape, Tensor, Var};

/// One spectral branch of the feature extractor.
#[derive(Debug, Clone)]
pub struct EncoderBranch {
    pub input: Conv1d,
    pub blocks: Vec<ConvNeXtV2Block>,
    pub output: Conv1d,
    pub downsample: Conv1d,
}

impl EncoderBranch {
    fn new<T: Float>(b: &mut Builder<'_, T>, c: &ModelConfig) -> Self {
        let ch = c.channels;
        EncoderBranch {
            input: Conv1d::new(&mut b.sub("input"), c.stft.bins(), ch, c.kernel, Conv1dOpts::same(c.kernel)),
            blocks: (0..c.blocks)
                .map(|i| {
                    ConvNeXtV2Block::new(
                        &mut b.sub(&format!("blocks.{i}")),
                        ch,
                        c.expansion,
                        c.kernel,
                        c.layer_norm_eps,
                        c.grn_eps,
                    )
                })
                .collect(),
            output: Conv1d::new(&mut b.sub("output"), ch, ch, c.kernel, Conv1dOpts::same(c.kernel)),
            downsample: Conv1d::new(
                &mut b.sub("downsample"),
                ch,
                ch,
                c.downsample,
                Conv1dOpts {
                    stride: c.downsample,
                    ..Default::default()
                },
            ),
        }
    }

    fn forward<'t, T: Float>(&self, p: Bind<'_, 't, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let mut h = self.input.forward(p, x)?;
        for block in &self.blocks {
            h = block.forward(p, h)?;
        }
        let h = self.output.forward(p, h)?;
        self.downsample.forward(p, h)
    }
}

/// Log-amplitude and phase spectra to a low-rate feature sequence.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub amplitude: EncoderBranch,
    pub phase: EncoderBranch,
    pub fusion: Conv1d,
}

impl FeatureExtractor {
    pub fn new<T: Float>(b: &mut Builder<'_, T>, c: &ModelConfig) -> Self {
        FeatureExtractor {
            amplitude: EncoderBranch::new(&mut b.sub("amplitude"), c),
            phase: EncoderBranch::new(&mut b.sub("phase"), c),
            fusion: Conv1d::new(
                &mut b.sub("fusion"),
                2 * c.channels,
                c.feature_dim,
                c.kernel,
                Conv1dOpts::same(c.kernel),
            ),
        }
    }

    /// `[B, bins, Fp]` log-amplitude and phase to `[B, feature_dim, Fp / downsample]`.
    pub fn forward<'t, T: Float>(
        &self,
        p: Bind<'_, 't, T>,
        log_amplitude: Var<'t, T>,
        phase: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let a = self.amplitude.forward(p, log_amplitude)?;
        let ph = self.phase.forward(p, phase)?;
        let h = Var::concat(&[a, ph], 1)?;
        self.fusion.forward(p, h)
    }
}

/// One spectral branch of the waveform generator.
#[derive(Debug, Clone)]
pub struct DecoderBranch {
    pub input: Conv1d,
    pub upsample: ConvTranspose1d,
    pub blocks: Vec<ConvNeXtV2Block>,
}

impl DecoderBranch {
    fn new<T: Float>(b: &mut Builder<'_, T>, c: &ModelConfig) -> Self {
        let ch = c.channels;
        DecoderBranch {
            input: Conv1d::new(&mut b.sub("input"), ch, ch, c.kernel, Conv1dOpts::same(c.kernel)),
            upsample: ConvTranspose1d::new(&mut b.sub("upsample"), ch, ch, c.downsample, c.downsample),
            blocks: (0..c.blocks)
                .map(|i| {
                    ConvNeXtV2Block::new(
                        &mut b.sub(&format!("blocks.{i}")),
                        ch,
                        c.expansion,
                        c.kernel,
                        c.layer_norm_eps,
                        c.grn_eps,
                    )
                })
                .collect(),
        }
    }

    fn forward<'t, T: Float>(&self, p: Bind<'_, 't, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let h = self.input.forward(p, x)?;
        let mut h = self.upsample.forward(p, h)?;
        for block in &self.blocks {
            h = block.forward(p, h)?;
        }
        Ok(h)
    }
}

/// Predicted spectra, all `[B, bins, Fp]`.
#[derive(Clone, Copy)]
pub struct DecodedSpectra<'t, T: Float> {
    pub log_amplitude: Var<'t, T>,
    pub amplitude: Var<'t, T>,
    pub real: Var<'t, T>,
    pub imag: Var<'t, T>,
    pub phase: Var<'t, T>,
}

/// Feature sequence back to amplitude and phase spectra.
#[derive(Debug, Clone)]
pub struct WaveformGenerator {
    pub expand: Conv1d,
    pub amplitude: DecoderBranch,
    pub phase: DecoderBranch,
    pub amplitude_head: Conv1d,
    pub real_head: Conv1d,
    pub imag_head: Conv1d,
    channels: usize,
}

impl WaveformGenerator {
    pub fn new<T: Float>(b: &mut Builder<'_, T>, c: &ModelConfig) -> Self {
        let same = Conv1dOpts::same(c.kernel);
        let bins = c.stft.bins();
        WaveformGenerator {
            expand: Conv1d::new(&mut b.sub("expand"), c.feature_dim, 2 * c.channels, c.kernel, same),
            amplitude: DecoderBranch::new(&mut b.sub("amplitude"), c),
            phase: DecoderBranch::new(&mut b.sub("phase"), c),
            amplitude_head: Conv1d::new(&mut b.sub("amplitude_head"), c.channels, bins, c.kernel, same),
            real_head: Conv1d::new(&mut b.sub("real_head"), c.channels, bins, c.kernel, same),
            imag_head: Conv1d::new(&mut b.sub("imag_head"), c.channels, bins, c.kernel, same),
            channels: c.channels,
        }
    }

    pub fn forward<'t, T: Float>(&self, p: Bind<'_, 't, T>, features: Var<'t, T>) -> Result<DecodedSpectra<'t, T>> {
        let h = self.expand.forward(p, features)?;
        let ha = self.amplitude.forward(p, h.narrow(1, 0, self.channels)?)?;
        let hp = self.phase.forward(p, h.narrow(1, self.channels, self.channels)?)?;
        let log_amplitude = self.amplitude_head.forward(p, ha)?;
        let real = self.real_head.forward(p, hp)?;
        let imag = self.imag_head.forward(p, hp)?;
        Ok(DecodedSpectra {
            log_amplitude,
            amplitude: log_amplitude.exp(),
            real,
            imag,
            phase: imag.atan2(real)?,
        })
    }
}

/// Network inputs and spectral targets for a batch of equal-length waveforms.
#[derive(Debug, Clone)]
pub struct AnalyzedBatch<T: Float> {
    /// Floored natural-log amplitude, `[B, bins, Fp]`.
    pub log_amplitude: Tensor<T>,
    pub amplitude: Tensor<T>,
    pub phase: Tensor<T>,
    pub waveform_len: usize,
}

/// Feature extractor, waveform generator and their parameters.
#[derive(Debug, Clone)]
pub struct Vocoder<T: Float> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    pub extractor: FeatureExtractor,
    pub generator: WaveformGenerator,
    engine: SpectralEngine<T>,
}

impl<T: Float> Vocoder<T> {
    /// Freshly initialized model; the same seed gives the same weights.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (extractor, generator) = {
            let mut b = Builder::new(&mut params, &mut rng, "extractor");
            let extractor = FeatureExtractor::new(&mut b, &config);
            let mut b = Builder::new(&mut params, &mut rng, "generator");
            (extractor, WaveformGenerator::new(&mut b, &config))
        };
        let engine = SpectralEngine::from_config(&config.stft)?;
        Ok(Vocoder {
            config,
            params,
            extractor,
            generator,
            engine,
        })
    }

    pub fn engine(&self) -> &SpectralEngine<T> {
        &self.engine
    }

    /// Same architecture and weights in another precision.
    pub fn cast<U: Float>(&self) -> Result<Vocoder<U>> {
        Ok(Vocoder {
            config: self.config.clone(),
            params: self.params.cast(),
            extractor: self.extractor.clone(),
            generator: self.generator.clone(),
            engine: SpectralEngine::from_config(&self.config.stft)?,
        })
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len < self.config.stft.frame_length {
            return Err(Error::InvalidArgument(format!(
                "waveform of {len} samples is shorter than one analysis frame ({})",
                self.config.stft.frame_length
            )));
        }
        Ok(())
    }

    /// Spectra of a waveform, frames padded to a multiple of the downsampling.
    pub fn analyze(&self, waveform: &[T]) -> Result<Spectra<T>> {
        self.check_len(waveform.len())?;
        if let Some(i) = waveform.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("waveform sample {i}")));
        }
        Ok(stft_with(&self.engine, waveform)?.pad_frames_to_multiple(self.config.downsample))
    }

    /// Analyzes each row of a `[B, T]` batch.
    pub fn analyze_batch(&self, waveforms: &Tensor<T>) -> Result<AnalyzedBatch<T>> {
        let &[batch, len] = waveforms.shape() else {
            return Err(Error::dim(format!("expected [batch, time], got {:?}", waveforms.shape())));
        };
        let mut amp = Vec::new();
        let mut phase = Vec::new();
        let mut frames = 0;
        for b in 0..batch {
            let s = self.analyze(&waveforms.data()[b * len..(b + 1) * len])?;
            let (a, p) = s.to_channel_major();
            amp.extend_from_slice(a.data());
            phase.extend_from_slice(p.data());
            frames = s.frames;
        }
        let shape = [batch, self.config.stft.bins(), frames];
        let floor = T::lit(AMPLITUDE_FLOOR);
        Ok(AnalyzedBatch {
            log_amplitude: Tensor::new(&shape, log_amplitude(&amp, floor))?,
            amplitude: Tensor::new(&shape, amp)?,
            phase: Tensor::new(&shape, phase)?,
            waveform_len: len,
        })
    }

    pub fn encode_var<'t>(
        &self,
        tape: &'t Tape<T>,
        log_amplitude: Var<'t, T>,
        phase: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        self.extractor.forward(Bind::new(tape, &self.params), log_amplitude, phase)
    }

    pub fn decode_var<'t>(&self, tape: &'t Tape<T>, features: Var<'t, T>) -> Result<DecodedSpectra<'t, T>> {
        let s = features.shape();
        if s.len() != 3 || s[1] != self.config.feature_dim || s[2] == 0 {
            return Err(Error::dim(format!(
                "features must be [batch, {}, frames>0], got {s:?}",
                self.config.feature_dim
            )));
        }
        self.generator.forward(Bind::new(tape, &self.params), features)
    }

    /// Inverse STFT of decoded spectra to `[B, out_len]`.
    pub fn waveform_var<'t>(&self, decoded: &DecodedSpectra<'t, T>, out_len: usize) -> Result<Var<'t, T>> {
        self.engine.istft_var(decoded.amplitude, decoded.phase, out_len)
    }

    pub fn extract_features(&self, waveform: &[T]) -> Result<FeatureSequence<T>> {
        let spectra = self.analyze(waveform)?;
        let tape = Tape::no_grad();
        let (a, p) = spectra.to_channel_major();
        let la = Tensor::new(a.shape(), log_amplitude(a.data(), T::lit(AMPLITUDE_FLOOR)))?;
        let feats = self.encode_var(&tape, tape.constant(la), tape.constant(p))?;
        let v = feats.value();
        FeatureSequence::from_channel_major(&v, self.config.feature_shift(), self.config.stft.sample_rate)
    }

    fn check_features(&self, features: &FeatureSequence<T>) -> Result<()> {
        if features.dim != self.config.feature_dim {
            return Err(Error::dim(format!(
                "features of dimension {} for a model expecting {}",
                features.dim, self.config.feature_dim
            )));
        }
        if features.frames == 0 {
            return Err(Error::InvalidArgument("empty feature sequence".into()));
        }
        if let Some(i) = features.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature value {i}")));
        }
        Ok(())
    }

    fn decode_sequence<'t>(&self, tape: &'t Tape<T>, features: &FeatureSequence<T>) -> Result<DecodedSpectra<'t, T>> {
        self.check_features(features)?;
        let x = tape.constant(features.to_channel_major());
        self.decode_var(tape, x)
    }

    /// Amplitude and phase spectra with `frames * downsample` frames.
    pub fn generate_spectra(&self, features: &FeatureSequence<T>) -> Result<Spectra<T>> {
        let tape = Tape::no_grad();
        let d = self.decode_sequence(&tape, features)?;
        Spectra::from_channel_major(&d.amplitude.value(), &d.phase.value(), 0)
    }

    /// Waveform of `out_len` samples, or the natural length
    /// `frames * downsample * frame_shift` when `None`.
    pub fn synthesize(&self, features: &FeatureSequence<T>, out_len: Option<usize>) -> Result<Vec<T>> {
        let out_len = out_len.unwrap_or(features.frames * self.config.feature_shift());
        let tape = Tape::no_grad();
        let d = self.decode_sequence(&tape, features)?;
        let y = self.waveform_var(&d, out_len)?;
        Ok(Arc::unwrap_or_clone(y.value()).into_data())
    }

    /// Extracts features and resynthesizes a waveform of the same length.
    pub fn analysis_synthesis(&self, waveform: &[T]) -> Result<Vec<T>> {
        let feats = self.extract_features(waveform)?;
        self.synthesize(&feats, Some(waveform.len()))
    }
}
