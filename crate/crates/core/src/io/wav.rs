use std::path::Path;

use crate::error::{Error, Result};

/// The only sample rate accepted or written.
pub const SAMPLE_RATE: u32 = 16_000;

fn audio_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Audio {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// Reads a 16 kHz mono 16-bit PCM WAV as samples in `[-1, 1)`.
pub fn read_wav(path: &Path) -> Result<Vec<f32>> {
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        // hound reports short or malformed headers as synthetic I/O errors.
        hound::Error::IoError(io) if io.raw_os_error().is_none() => audio_err(path, io.to_string()),
        hound::Error::IoError(io) => Error::io(path, io),
        other => audio_err(path, other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(audio_err(path, format!("expected mono audio, found {} channels", spec.channels)));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(audio_err(
            path,
            format!("expected a {SAMPLE_RATE} Hz sample rate, found {} Hz", spec.sample_rate),
        ));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(audio_err(
            path,
            format!("expected 16-bit PCM, found {}-bit {:?}", spec.bits_per_sample, spec.sample_format),
        ));
    }
    reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f32 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| audio_err(path, e.to_string()))
}

/// Writes 16 kHz mono 16-bit PCM, clipping to the representable range.
pub fn write_wav(path: &Path, samples: &[f32]) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wrap = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => audio_err(path, other.to_string()),
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wrap)?;
    for &s in samples {
        let v = if s.is_finite() { (s * 32768.0).round().clamp(-32768.0, 32767.0) } else { 0.0 };
        w.write_sample(v as i16).map_err(wrap)?;
    }
    w.finalize().map_err(wrap)
}
