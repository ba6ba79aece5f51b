use std::sync::Arc;

use crate::dsp::{SpectralEngine, StftConfig};
use crate::error::{Error, Result};
use crate::numerics::{Float, Tensor, Var};

/// Floor applied to amplitudes before any logarithm.
pub const AMPLITUDE_FLOOR: f64 = 1e-5;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Center frequencies (Hz) of the `n_mels` filters of [`mel_filterbank`].
pub fn mel_centers(n_mels: usize, config: &StftConfig) -> Vec<f64> {
    let top = hz_to_mel(config.sample_rate as f64 / 2.0);
    (1..=n_mels)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Triangular HTK-mel filters spanning 0 Hz to Nyquist, `[n_mels, bins]`.
pub fn mel_filterbank<T: Float>(n_mels: usize, config: &StftConfig) -> Result<Tensor<T>> {
    let bins = config.bins();
    if n_mels == 0 || n_mels > bins {
        return Err(Error::InvalidArgument(format!(
            "n_mels must be in 1..={bins}, got {n_mels}"
        )));
    }
    let top = hz_to_mel(config.sample_rate as f64 / 2.0);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = config.sample_rate as f64 / config.fft_size as f64;
    Ok(Tensor::from_fn(&[n_mels, bins], |i| {
        let (m, k) = (i / bins, i % bins);
        let f = k as f64 * bin_hz;
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let w = if f > lo && f <= mid {
            (f - lo) / (mid - lo)
        } else if f > mid && f < hi {
            (hi - f) / (hi - mid)
        } else {
            0.0
        };
        T::lit(w)
    }))
}

/// Log-mel analysis bound to one STFT configuration.
#[derive(Debug, Clone)]
pub struct MelAnalyzer<T: Float> {
    engine: SpectralEngine<T>,
    filters: Arc<Tensor<T>>,
}

impl<T: Float> MelAnalyzer<T> {
    pub fn new(config: &StftConfig, n_mels: usize) -> Result<Self> {
        Ok(MelAnalyzer {
            engine: SpectralEngine::from_config(config)?,
            filters: Arc::new(mel_filterbank(n_mels, config)?),
        })
    }

    pub fn n_mels(&self) -> usize {
        self.filters.shape()[0]
    }

    /// Differentiable log-mel spectrogram, `[batch, time] -> [batch, n_mels, frames]`.
    pub fn log_mel_var<'t>(&self, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let amp = self.engine.amplitude_var(x)?;
        Ok(amp
            .matmul_const_left(self.filters.clone())?
            .clamp_min(T::lit(AMPLITUDE_FLOOR))
            .ln())
    }

    /// Log-mel spectrogram of one waveform, `frames x n_mels` row-major.
    pub fn log_mel(&self, waveform: &[T]) -> Result<(usize, Vec<T>)> {
        if waveform.is_empty() {
            return Err(Error::InvalidArgument("mel spectrogram of an empty waveform".into()));
        }
        let (frames, spec) = self.engine.analyze(waveform)?;
        let bins = self.engine.bins();
        let n_mels = self.n_mels();
        let fb = self.filters.data();
        let floor = T::lit(AMPLITUDE_FLOOR);
        let mut out = Vec::with_capacity(frames * n_mels);
        for f in 0..frames {
            let row = &spec[f * bins..(f + 1) * bins];
            for m in 0..n_mels {
                let e: T = fb[m * bins..(m + 1) * bins]
                    .iter()
                    .zip(row)
                    .map(|(&w, z)| w * z.norm())
                    .sum();
                out.push(e.max(floor).ln());
            }
        }
        Ok((frames, out))
    }
}

/// Log-mel spectrogram, `frames x n_mels` row-major.
pub fn mel_spectrogram<T: Float>(waveform: &[T], config: &StftConfig, n_mels: usize) -> Result<(usize, Vec<T>)> {
    MelAnalyzer::new(config, n_mels)?.log_mel(waveform)
}
