use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ops::reflect_index;
use crate::numerics::{Float, Tensor, Var};

/// Periodic Hann window of length `n`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Analysis/synthesis settings of the vocoder STFT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub sample_rate: u32,
    pub frame_length: usize,
    pub frame_shift: usize,
    pub fft_size: usize,
}

impl Default for StftConfig {
    /// 16 kHz, 20 ms frames, 2.5 ms shift, 1024-point FFT.
    fn default() -> Self {
        StftConfig {
            sample_rate: 16_000,
            frame_length: 320,
            frame_shift: 40,
            fft_size: 1024,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.frame_shift >= 1
            && self.frame_shift <= self.frame_length
            && self.frame_length <= self.fft_size
            && self.fft_size % 2 == 0
            && self.frame_length % self.frame_shift == 0;
        if !ok {
            return Err(Error::Config(format!("invalid STFT settings {self:?}")));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frame count of the center-padded analysis: `floor(len / shift) + 1`.
    pub fn num_frames(&self, len: usize) -> usize {
        len / self.frame_shift + 1
    }

    pub fn window(&self) -> Vec<f64> {
        hann_periodic(self.frame_length)
    }

    pub fn plan(&self) -> FramePlan {
        FramePlan {
            fft_size: self.fft_size,
            hop: self.frame_shift,
            window: self.window(),
            pad: self.frame_length / 2,
            offset: (self.fft_size - self.frame_length) / 2,
        }
    }
}

/// Amplitude and phase spectra, each `frames x bins` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectra<T> {
    pub frames: usize,
    pub bins: usize,
    pub amplitude: Vec<T>,
    pub phase: Vec<T>,
}

impl<T: Float> Spectra<T> {
    pub fn new(frames: usize, bins: usize, amplitude: Vec<T>, phase: Vec<T>) -> Result<Self> {
        if amplitude.len() != frames * bins || phase.len() != frames * bins {
            return Err(Error::dim(format!(
                "spectra of {frames}x{bins} need {} values, got {} and {}",
                frames * bins,
                amplitude.len(),
                phase.len()
            )));
        }
        Ok(Spectra {
            frames,
            bins,
            amplitude,
            phase,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.frames, self.bins)
    }

    /// Repeats the last frame until the frame count is a multiple of `m`.
    pub fn pad_frames_to_multiple(&self, m: usize) -> Spectra<T> {
        let target = self.frames.div_ceil(m) * m;
        let mut out = self.clone();
        let last = self.frames - 1;
        for _ in self.frames..target {
            out.amplitude
                .extend_from_within(last * self.bins..(last + 1) * self.bins);
            out.phase
                .extend_from_within(last * self.bins..(last + 1) * self.bins);
        }
        out.frames = target;
        out
    }

    /// `[1, bins, frames]` tensors (amplitude, phase), the network layout.
    pub fn to_channel_major(&self) -> (Tensor<T>, Tensor<T>) {
        let tr = |m: &[T]| {
            Tensor::from_fn(&[1, self.bins, self.frames], |i| {
                let (k, f) = (i / self.frames, i % self.frames);
                m[f * self.bins + k]
            })
        };
        (tr(&self.amplitude), tr(&self.phase))
    }

    /// Inverse of [`Spectra::to_channel_major`] for batch item `b`.
    pub fn from_channel_major(amp: &Tensor<T>, phase: &Tensor<T>, b: usize) -> Result<Self> {
        let s = amp.shape();
        if s.len() != 3 || phase.shape() != s || b >= s[0] {
            return Err(Error::dim(format!(
                "channel-major spectra with shapes {s:?} / {:?}",
                phase.shape()
            )));
        }
        let (bins, frames) = (s[1], s[2]);
        let base = b * bins * frames;
        let tr = |m: &[T]| -> Vec<T> {
            (0..frames * bins)
                .map(|i| {
                    let (f, k) = (i / bins, i % bins);
                    m[base + k * frames + f]
                })
                .collect()
        };
        Spectra::new(frames, bins, tr(amp.data()), tr(phase.data()))
    }
}

/// Framing geometry: frames of `window.len()` samples every `hop`, taken from
/// the signal reflect-padded by `pad` on both sides and placed at `offset`
/// inside an FFT buffer of `fft_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePlan {
    pub fft_size: usize,
    pub hop: usize,
    pub window: Vec<f64>,
    pub pad: usize,
    pub offset: usize,
}

impl FramePlan {
    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn num_frames(&self, len: usize) -> Option<usize> {
        let padded = len + 2 * self.pad;
        (len >= 1 && padded >= self.window.len()).then(|| (padded - self.window.len()) / self.hop + 1)
    }
}

/// FFT plans plus framing geometry, reusable across calls and threads.
#[derive(Clone)]
pub struct SpectralEngine<T: Float> {
    plan: Arc<FramePlan>,
    window: Arc<Vec<T>>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Float> std::fmt::Debug for SpectralEngine<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralEngine").field("plan", &self.plan).finish()
    }
}

const WSUM_TINY: f64 = 1e-10;

impl<T: Float> SpectralEngine<T> {
    pub fn new(plan: FramePlan) -> Result<Self> {
        if plan.fft_size % 2 != 0
            || plan.hop == 0
            || plan.window.is_empty()
            || plan.offset + plan.window.len() > plan.fft_size
        {
            return Err(Error::Config(format!("invalid frame plan {plan:?}")));
        }
        let mut planner = FftPlanner::<T>::new();
        let forward = planner.plan_fft_forward(plan.fft_size);
        let inverse = planner.plan_fft_inverse(plan.fft_size);
        let window = Arc::new(plan.window.iter().map(|&w| T::lit(w)).collect());
        Ok(SpectralEngine {
            plan: Arc::new(plan),
            window,
            forward,
            inverse,
        })
    }

    pub fn from_config(config: &StftConfig) -> Result<Self> {
        config.validate()?;
        Self::new(config.plan())
    }

    pub fn plan(&self) -> &FramePlan {
        &self.plan
    }

    pub fn bins(&self) -> usize {
        self.plan.bins()
    }

    fn frames_for(&self, len: usize) -> Result<usize> {
        self.plan.num_frames(len).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "signal of {len} samples is too short for a {}-sample window",
                self.plan.window.len()
            ))
        })
    }

    /// Complex spectrum of one signal, `frames x bins` row-major.
    pub fn analyze(&self, x: &[T]) -> Result<(usize, Vec<Complex<T>>)> {
        let frames = self.frames_for(x.len())?;
        let n = self.plan.fft_size;
        let bins = self.bins();
        let mut out = Vec::with_capacity(frames * bins);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        for f in 0..frames {
            buf.iter_mut().for_each(|c| *c = Complex::new(T::zero(), T::zero()));
            for (i, &w) in self.window.iter().enumerate() {
                let src = reflect_index((f * self.plan.hop + i) as isize - self.plan.pad as isize, x.len());
                buf[self.plan.offset + i] = Complex::new(x[src] * w, T::zero());
            }
            self.forward.process(&mut buf);
            out.extend_from_slice(&buf[..bins]);
        }
        Ok((frames, out))
    }

    /// Weighted overlap-add synthesis from a `frames x bins` complex spectrum.
    /// Returns the signal (trimmed or zero-padded to `out_len`) and the
    /// squared-window normalizer over the padded support.
    fn overlap_add(&self, frames: usize, spec: &[Complex<T>], out_len: usize) -> (Vec<T>, Vec<T>) {
        let n = self.plan.fft_size;
        let bins = self.bins();
        let win = self.window.len();
        let padded_len = if frames == 0 { 0 } else { (frames - 1) * self.plan.hop + win };
        let mut acc = vec![T::zero(); padded_len];
        let mut wsum = vec![T::zero(); padded_len];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        let inv_n = T::one() / T::lit(n as f64);
        for f in 0..frames {
            let row = &spec[f * bins..(f + 1) * bins];
            fill_hermitian(row, &mut buf);
            self.inverse.process(&mut buf);
            for (i, &w) in self.window.iter().enumerate() {
                let j = f * self.plan.hop + i;
                acc[j] += w * buf[self.plan.offset + i].re * inv_n;
                wsum[j] += w * w;
            }
        }
        let tiny = T::lit(WSUM_TINY);
        let out = (0..out_len)
            .map(|i| {
                let j = i + self.plan.pad;
                if j < padded_len && wsum[j] > tiny {
                    acc[j] / wsum[j]
                } else {
                    T::zero()
                }
            })
            .collect();
        (out, wsum)
    }

    /// Inverse of [`SpectralEngine::analyze`].
    pub fn synthesize(&self, frames: usize, spec: &[Complex<T>], out_len: usize) -> Result<Vec<T>> {
        if spec.len() != frames * self.bins() {
            return Err(Error::dim(format!(
                "istft: {} spectrum values for {frames} frames of {} bins",
                spec.len(),
                self.bins()
            )));
        }
        Ok(self.overlap_add(frames, spec, out_len).0)
    }

    /// Differentiable amplitude spectrogram: `[batch, time] -> [batch, bins, frames]`.
    pub fn amplitude_var<'t>(&self, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let xv = x.value();
        let &[batch, len] = xv.shape() else {
            return Err(Error::dim(format!("stft expects [batch, time], got {:?}", xv.shape())));
        };
        let frames = self.frames_for(len)?;
        let bins = self.bins();
        let mut spec = Vec::with_capacity(batch * frames * bins);
        for b in 0..batch {
            spec.extend(self.analyze(&xv.data()[b * len..(b + 1) * len])?.1);
        }
        let mut amp = vec![T::zero(); batch * bins * frames];
        for b in 0..batch {
            for f in 0..frames {
                for k in 0..bins {
                    amp[(b * bins + k) * frames + f] = spec[(b * frames + f) * bins + k].norm();
                }
            }
        }
        let y = Tensor::new(&[batch, bins, frames], amp.clone())?;
        let engine = self.clone();
        Ok(x.tape().record(y, &[x], move |g, _| {
            let n = engine.plan.fft_size;
            let plan = &engine.plan;
            let mut gx = vec![T::zero(); batch * len];
            let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
            for b in 0..batch {
                for f in 0..frames {
                    buf.iter_mut().for_each(|c| *c = Complex::new(T::zero(), T::zero()));
                    for k in 0..bins {
                        let a = amp[(b * bins + k) * frames + f];
                        if a > T::zero() {
                            let z = spec[(b * frames + f) * bins + k];
                            buf[k] = z * (g[(b * bins + k) * frames + f] / a);
                        }
                    }
                    engine.inverse.process(&mut buf);
                    for (i, &w) in engine.window.iter().enumerate() {
                        let src = reflect_index((f * plan.hop + i) as isize - plan.pad as isize, len);
                        gx[b * len + src] += w * buf[plan.offset + i].re;
                    }
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Differentiable inverse STFT from amplitude and phase, both
    /// `[batch, bins, frames]`, to `[batch, out_len]`.
    pub fn istft_var<'t>(&self, amp: Var<'t, T>, phase: Var<'t, T>, out_len: usize) -> Result<Var<'t, T>> {
        let av = amp.value();
        let pv = phase.value();
        let bins = self.bins();
        let s = av.shape().to_vec();
        if s.len() != 3 || s[1] != bins || pv.shape() != s.as_slice() {
            return Err(Error::dim(format!(
                "istft expects amplitude and phase [batch, {bins}, frames], got {s:?} and {:?}",
                pv.shape()
            )));
        }
        let (batch, frames) = (s[0], s[2]);
        let mut out = Vec::with_capacity(batch * out_len);
        let mut wsum = Vec::new();
        let mut spec = vec![Complex::new(T::zero(), T::zero()); frames * bins];
        for b in 0..batch {
            for f in 0..frames {
                for k in 0..bins {
                    let i = (b * bins + k) * frames + f;
                    spec[f * bins + k] = Complex::from_polar(av.data()[i], pv.data()[i]);
                }
            }
            let (y, ws) = self.overlap_add(frames, &spec, out_len);
            out.extend(y);
            wsum = ws;
        }
        let y = Tensor::new(&[batch, out_len], out)?;
        let engine = self.clone();
        Ok(amp.tape().record(y, &[amp, phase], move |g, needs| {
            let plan = &engine.plan;
            let n = plan.fft_size;
            let inv_n = T::one() / T::lit(n as f64);
            let tiny = T::lit(WSUM_TINY);
            let mut ga = needs[0].then(|| vec![T::zero(); batch * bins * frames]);
            let mut gp = needs[1].then(|| vec![T::zero(); batch * bins * frames]);
            let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
            for b in 0..batch {
                for f in 0..frames {
                    buf.iter_mut().for_each(|c| *c = Complex::new(T::zero(), T::zero()));
                    for (i, &w) in engine.window.iter().enumerate() {
                        let j = f * plan.hop + i;
                        if j < plan.pad || j - plan.pad >= out_len || wsum[j] <= tiny {
                            continue;
                        }
                        buf[plan.offset + i] = Complex::new(w * g[b * out_len + j - plan.pad] / wsum[j], T::zero());
                    }
                    engine.forward.process(&mut buf);
                    for k in 0..bins {
                        let c = if k == 0 || k == bins - 1 { inv_n } else { inv_n + inv_n };
                        let d_re = buf[k].re * c;
                        let d_im = if k == 0 || k == bins - 1 { T::zero() } else { buf[k].im * c };
                        let i = (b * bins + k) * frames + f;
                        let (a, p) = (av.data()[i], pv.data()[i]);
                        let (sn, cs) = p.sin_cos();
                        if let Some(ga) = ga.as_mut() {
                            ga[i] = d_re * cs + d_im * sn;
                        }
                        if let Some(gp) = gp.as_mut() {
                            gp[i] = a * (d_im * cs - d_re * sn);
                        }
                    }
                }
            }
            vec![ga, gp]
        }))
    }
}

/// Expands a half spectrum into a full Hermitian buffer; the imaginary parts
/// of the DC and Nyquist bins are dropped, as a real inverse FFT does.
fn fill_hermitian<T: Float>(half: &[Complex<T>], buf: &mut [Complex<T>]) {
    let n = buf.len();
    let bins = half.len();
    buf[0] = Complex::new(half[0].re, T::zero());
    buf[n / 2] = Complex::new(half[bins - 1].re, T::zero());
    for k in 1..n / 2 {
        buf[k] = half[k];
        buf[n - k] = half[k].conj();
    }
}

/// Principal-value phase with `arg(0) = 0`.
fn phase_of<T: Float>(z: Complex<T>) -> T {
    if z.re == T::zero() && z.im == T::zero() {
        T::zero()
    } else {
        fold_minus_pi(z.im.atan2(z.re))
    }
}

/// Maps `-pi` (from a negative-zero imaginary part) onto `pi`.
#[inline]
pub(crate) fn fold_minus_pi<T: Float>(p: T) -> T {
    if p <= -T::lit(std::f64::consts::PI) {
        T::lit(std::f64::consts::PI)
    } else {
        p
    }
}

/// Amplitude and phase spectra of a waveform.
pub fn stft<T: Float>(waveform: &[T], config: &StftConfig) -> Result<Spectra<T>> {
    if waveform.is_empty() {
        return Err(Error::InvalidArgument("stft of an empty waveform".into()));
    }
    let engine = SpectralEngine::<T>::from_config(config)?;
    stft_with(&engine, waveform)
}

pub fn stft_with<T: Float>(engine: &SpectralEngine<T>, waveform: &[T]) -> Result<Spectra<T>> {
    if waveform.is_empty() {
        return Err(Error::InvalidArgument("stft of an empty waveform".into()));
    }
    let (frames, spec) = engine.analyze(waveform)?;
    let amplitude = spec.iter().map(|z| z.norm()).collect();
    let phase = spec.iter().map(|&z| phase_of(z)).collect();
    Spectra::new(frames, engine.bins(), amplitude, phase)
}

/// Waveform of `out_len` samples from amplitude and phase spectra.
pub fn istft<T: Float>(spectra: &Spectra<T>, config: &StftConfig, out_len: usize) -> Result<Vec<T>> {
    let engine = SpectralEngine::<T>::from_config(config)?;
    istft_with(&engine, spectra, out_len)
}

pub fn istft_with<T: Float>(engine: &SpectralEngine<T>, spectra: &Spectra<T>, out_len: usize) -> Result<Vec<T>> {
    if spectra.bins != engine.bins() {
        return Err(Error::dim(format!(
            "istft: spectra have {} bins, config expects {}",
            spectra.bins,
            engine.bins()
        )));
    }
    let spec: Vec<Complex<T>> = spectra
        .amplitude
        .iter()
        .zip(&spectra.phase)
        .map(|(&a, &p)| Complex::from_polar(a, p))
        .collect();
    engine.synthesize(spectra.frames, &spec, out_len)
}

/// Natural log of `max(amplitude, floor)`.
pub fn log_amplitude<T: Float>(amplitude: &[T], floor: T) -> Vec<T> {
    amplitude.iter().map(|&a| a.max(floor).ln()).collect()
}
