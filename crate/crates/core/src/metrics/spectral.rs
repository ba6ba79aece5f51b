use crate::dsp::{mel_spectrogram, stft, StftConfig, AMPLITUDE_FLOOR};
use crate::error::{Error, Result};

/// Reported SNR when the degraded signal equals the reference.
pub const SNR_CAP_DB: f64 = 100.0;
pub const N_MELS: usize = 80;
pub const MCD_ORDER: usize = 40;

fn same_len(a: &[f32], b: &[f32]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "signals differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// `10 log10(sum ref^2 / sum (ref - deg)^2)`, capped at [`SNR_CAP_DB`].
pub fn snr(reference: &[f32], degraded: &[f32]) -> Result<f64> {
    same_len(reference, degraded)?;
    let signal: f64 = reference.iter().map(|&r| (r as f64).powi(2)).sum();
    if signal == 0.0 {
        return Err(Error::InvalidArgument("SNR of a silent reference is undefined".into()));
    }
    let noise: f64 = reference
        .iter()
        .zip(degraded)
        .map(|(&r, &d)| (r as f64 - d as f64).powi(2))
        .sum();
    if noise == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((10.0 * (signal / noise).log10()).min(SNR_CAP_DB))
}

/// RMSE between 20·log10 amplitude spectra (floored), in dB.
pub fn las_rmse(reference: &[f32], degraded: &[f32], config: &StftConfig) -> Result<f64> {
    same_len(reference, degraded)?;
    let to64 = |x: &[f32]| x.iter().map(|&v| v as f64).collect::<Vec<_>>();
    let a = stft(&to64(reference), config)?;
    let b = stft(&to64(degraded), config)?;
    let db = |v: f64| 20.0 * v.max(AMPLITUDE_FLOOR).log10();
    let sum: f64 = a
        .amplitude
        .iter()
        .zip(&b.amplitude)
        .map(|(&x, &y)| (db(x) - db(y)).powi(2))
        .sum();
    Ok((sum / a.amplitude.len() as f64).sqrt())
}

/// Orthonormal DCT-II of 80-band log-mel energies, first `order + 1`
/// coefficients per frame. Returns (frames, frames x (order + 1)).
pub fn mel_cepstrum(waveform: &[f32], order: usize, config: &StftConfig) -> Result<(usize, Vec<f64>)> {
    if order >= N_MELS {
        return Err(Error::InvalidArgument(format!("cepstral order {order} needs < {N_MELS}")));
    }
    let x: Vec<f64> = waveform.iter().map(|&v| v as f64).collect();
    let (frames, mel) = mel_spectrogram(&x, config, N_MELS)?;
    let n = N_MELS as f64;
    let mut out = Vec::with_capacity(frames * (order + 1));
    for f in 0..frames {
        let row = &mel[f * N_MELS..(f + 1) * N_MELS];
        for k in 0..=order {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            let s: f64 = row
                .iter()
                .enumerate()
                .map(|(i, &m)| m * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n).cos())
                .sum();
            out.push(scale * s);
        }
    }
    Ok((frames, out))
}

/// Mel-cepstral distortion over `frames x width` cepstra, excluding c0.
pub fn mcd_from_cepstra(a: &[f64], b: &[f64], width: usize) -> Result<f64> {
    if a.len() != b.len() || width < 2 || a.len() % width != 0 || a.is_empty() {
        return Err(Error::dim(format!(
            "cepstra of {} and {} values with width {width}",
            a.len(),
            b.len()
        )));
    }
    let k = 10.0 * std::f64::consts::SQRT_2 / std::f64::consts::LN_10;
    let frames = a.len() / width;
    let total: f64 = a
        .chunks(width)
        .zip(b.chunks(width))
        .map(|(x, y)| x[1..].iter().zip(&y[1..]).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt())
        .sum();
    Ok(k * total / frames as f64)
}

/// Mel-cepstral distortion (order 40) in dB.
pub fn mcd(reference: &[f32], degraded: &[f32], config: &StftConfig) -> Result<f64> {
    same_len(reference, degraded)?;
    let (_, a) = mel_cepstrum(reference, MCD_ORDER, config)?;
    let (_, b) = mel_cepstrum(degraded, MCD_ORDER, config)?;
    mcd_from_cepstra(&a, &b, MCD_ORDER + 1)
}
