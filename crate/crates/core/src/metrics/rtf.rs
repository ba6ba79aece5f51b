use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FeatureSequence, Vocoder};
use crate::numerics::Float;

/// Source of wall-clock time in seconds.
pub trait Clock {
    fn now(&self) -> f64;
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtfReport {
    /// Median of per-run synthesis seconds per audio second.
    pub rtf: f64,
    /// `1 / rtf`: how many times faster than real time.
    pub speedup: f64,
    pub runs: Vec<f64>,
    pub audio_seconds: f64,
}

/// Times `run` (which synthesizes `audio_seconds` of audio) `repeats`
/// times after one discarded warm-up call.
pub fn rtf_bench<C: Clock, F: FnMut() -> Result<()>>(
    clock: &C,
    audio_seconds: f64,
    repeats: usize,
    mut run: F,
) -> Result<RtfReport> {
    if repeats < 3 {
        return Err(Error::InvalidArgument(format!("RTF needs at least 3 repeats, got {repeats}")));
    }
    if !(audio_seconds > 0.0) {
        return Err(Error::InvalidArgument("RTF needs a positive duration".into()));
    }
    run()?;
    let mut runs = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t0 = clock.now();
        run()?;
        runs.push((clock.now() - t0) / audio_seconds);
    }
    let mut sorted = runs.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let rtf = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    let rtf = rtf.max(f64::MIN_POSITIVE);
    Ok(RtfReport {
        rtf,
        speedup: 1.0 / rtf,
        runs,
        audio_seconds,
    })
}

/// RTF of waveform generation from features; extraction is not timed.
pub fn synthesis_rtf<T: Float>(model: &Vocoder<T>, seconds: f64, repeats: usize) -> Result<RtfReport> {
    if seconds < 1.0 {
        return Err(Error::InvalidArgument(format!("benchmark duration {seconds} s is below 1 s")));
    }
    let sr = model.config.stft.sample_rate as f64;
    let len = (seconds * sr).round() as usize;
    let frames = model.config.feature_frames(len);
    let dim = model.config.feature_dim;
    // Smooth pseudo-features; the values do not affect the cost.
    let data = (0..frames * dim)
        .map(|i| T::lit(((i % dim) as f64 * 0.37 + (i / dim) as f64 * 0.11).sin()))
        .collect();
    let feats = FeatureSequence::new(frames, dim, model.config.feature_shift(), model.config.stft.sample_rate, data)?;
    rtf_bench(&SystemClock::default(), len as f64 / sr, repeats, || {
        model.synthesize(&feats, Some(len)).map(|_| ())
    })
}

/// CPU model name where available, else the architecture.
pub fn device_description() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo").ok().and_then(|s| {
        s.lines()
            .find(|l| l.starts_with("model name"))
            .and_then(|l| l.split(':').nth(1))
            .map(|m| m.trim().to_string())
    });
    format!("{} (1 thread)", cpu.unwrap_or_else(|| std::env::consts::ARCH.to_string()))
}
