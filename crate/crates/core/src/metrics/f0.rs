use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Settings of the YIN-style estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F0Params {
    pub sample_rate: u32,
    pub fmin: f64,
    pub fmax: f64,
    pub frame_shift_ms: f64,
    /// Cumulative-mean-normalized difference threshold.
    pub threshold: f64,
    /// Integration window in samples.
    pub window: usize,
    /// Frames with mean square below this are unvoiced.
    pub silence_power: f64,
}

impl Default for F0Params {
    fn default() -> Self {
        F0Params {
            sample_rate: 16_000,
            fmin: 60.0,
            fmax: 400.0,
            frame_shift_ms: 5.0,
            threshold: 0.15,
            window: 512,
            silence_power: 1e-8,
        }
    }
}

/// Per-frame f0 in Hz, 0 where unvoiced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F0Track {
    pub f0: Vec<f64>,
    pub voiced: Vec<bool>,
    pub frame_shift_ms: f64,
}

impl F0Track {
    pub fn new(f0: Vec<f64>, frame_shift_ms: f64) -> Self {
        let voiced = f0.iter().map(|&f| f > 0.0).collect();
        F0Track {
            f0,
            voiced,
            frame_shift_ms,
        }
    }

    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }
}

/// YIN pitch tracking on frames centered every `frame_shift_ms`.
pub fn estimate_f0(waveform: &[f32], params: &F0Params) -> Result<F0Track> {
    let sr = params.sample_rate as f64;
    if !(params.fmin > 0.0 && params.fmax > params.fmin && params.fmax < sr / 2.0) {
        return Err(Error::InvalidArgument(format!(
            "f0 range {}..{} Hz at {sr} Hz",
            params.fmin, params.fmax
        )));
    }
    let hop = (params.frame_shift_ms * sr / 1000.0).round() as usize;
    if hop == 0 || params.window == 0 {
        return Err(Error::InvalidArgument("f0 frame shift and window must be positive".into()));
    }
    let tau_min = (sr / params.fmax).floor().max(2.0) as usize;
    let tau_max = (sr / params.fmin).ceil() as usize;
    let w = params.window;
    let frames = waveform.len() / hop + 1;
    let sample = |i: isize| -> f64 {
        if i < 0 || i as usize >= waveform.len() {
            0.0
        } else {
            waveform[i as usize] as f64
        }
    };

    let mut buf = vec![0.0; w + tau_max + 1];
    let mut d = vec![0.0; tau_max + 1];
    let mut f0 = Vec::with_capacity(frames);
    for f in 0..frames {
        let start = (f * hop) as isize - (w / 2) as isize;
        for (j, b) in buf.iter_mut().enumerate() {
            *b = sample(start + j as isize);
        }
        let power = buf[..w].iter().map(|v| v * v).sum::<f64>() / w as f64;
        if power < params.silence_power {
            f0.push(0.0);
            continue;
        }
        for (tau, dt) in d.iter_mut().enumerate().skip(1) {
            *dt = (0..w).map(|j| (buf[j] - buf[j + tau]).powi(2)).sum();
        }
        // cumulative-mean-normalized difference
        let mut cmnd = vec![1.0; tau_max + 1];
        let mut running = 0.0;
        for tau in 1..=tau_max {
            running += d[tau];
            cmnd[tau] = if running > 0.0 { d[tau] * tau as f64 / running } else { 1.0 };
        }
        let mut pick = None;
        let mut tau = tau_min;
        while tau <= tau_max {
            if cmnd[tau] < params.threshold {
                while tau < tau_max && cmnd[tau + 1] < cmnd[tau] {
                    tau += 1;
                }
                pick = Some(tau);
                break;
            }
            tau += 1;
        }
        let Some(tau) = pick else {
            f0.push(0.0);
            continue;
        };
        let refined = if tau > 1 && tau < tau_max {
            let (a, b, c) = (cmnd[tau - 1], cmnd[tau], cmnd[tau + 1]);
            let denom = a - 2.0 * b + c;
            if denom.abs() > 1e-12 {
                tau as f64 + 0.5 * (a - c) / denom
            } else {
                tau as f64
            }
        } else {
            tau as f64
        };
        let hz = sr / refined;
        f0.push(if hz >= params.fmin * 0.9 && hz <= params.fmax * 1.1 { hz } else { 0.0 });
    }
    Ok(F0Track::new(f0, params.frame_shift_ms))
}

/// F0 RMSE in cents over commonly voiced frames, and the voicing error in
/// percent of frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F0Metrics {
    /// `None` when no frame is voiced in both tracks.
    pub f0_rmse: Option<f64>,
    pub vuv_error: f64,
}

pub fn f0_metrics(reference: &F0Track, degraded: &F0Track) -> Result<F0Metrics> {
    if reference.len() != degraded.len() || reference.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "f0 tracks of {} and {} frames",
            reference.len(),
            degraded.len()
        )));
    }
    if reference.frame_shift_ms != degraded.frame_shift_ms {
        return Err(Error::InvalidArgument("f0 tracks with different frame shifts".into()));
    }
    let mut sq = 0.0;
    let mut both = 0usize;
    let mut mismatched = 0usize;
    for i in 0..reference.len() {
        let (vr, vd) = (reference.voiced[i], degraded.voiced[i]);
        if vr != vd {
            mismatched += 1;
        } else if vr {
            both += 1;
            sq += (1200.0 * (degraded.f0[i] / reference.f0[i]).log2()).powi(2);
        }
    }
    Ok(F0Metrics {
        f0_rmse: (both > 0).then(|| (sq / both as f64).sqrt()),
        vuv_error: 100.0 * mismatched as f64 / reference.len() as f64,
    })
}
