use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::FeatureSequence;

const MAGIC: &[u8; 4] = b"BVF1";
pub const FEATURE_FILE_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 2 + 4;
const WHAT: &str = "feature file";

/// Serializes features: magic, version u16, sample rate u32, frame shift
/// u32, dim u16, frames u32 (all little-endian), then frame-major f32 values.
pub fn encode_features(f: &FeatureSequence<f32>) -> Result<Vec<u8>> {
    let dim = u16::try_from(f.dim).map_err(|_| Error::InvalidArgument(format!("feature dim {} too large", f.dim)))?;
    let frames = u32::try_from(f.frames).map_err(|_| Error::InvalidArgument("too many frames".into()))?;
    let shift = u32::try_from(f.frame_shift).map_err(|_| Error::InvalidArgument("frame shift too large".into()))?;
    let mut w = Vec::with_capacity(HEADER_LEN + f.data.len() * 4);
    w.extend_from_slice(MAGIC);
    w.extend_from_slice(&FEATURE_FILE_VERSION.to_le_bytes());
    w.extend_from_slice(&f.sample_rate.to_le_bytes());
    w.extend_from_slice(&shift.to_le_bytes());
    w.extend_from_slice(&dim.to_le_bytes());
    w.extend_from_slice(&frames.to_le_bytes());
    for v in &f.data {
        w.extend_from_slice(&v.to_le_bytes());
    }
    Ok(w)
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureSequence<f32>> {
    let corrupt = |msg: String| Error::Corrupt { what: WHAT, msg };
    if bytes.len() < HEADER_LEN {
        return Err(corrupt(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(corrupt("bad magic (expected BVF1)".into()));
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = u16_at(4);
    if version != FEATURE_FILE_VERSION {
        return Err(Error::Version {
            what: WHAT,
            found: version,
            expected: FEATURE_FILE_VERSION,
        });
    }
    let sample_rate = u32_at(6);
    let shift = u32_at(10) as usize;
    let dim = u16_at(14) as usize;
    let frames = u32_at(16) as usize;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() as u64 != frames as u64 * dim as u64 * 4 {
        return Err(corrupt(format!(
            "payload of {} bytes for {frames} frames x {dim} dims",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureSequence::new(frames, dim, shift, sample_rate, data)
}

pub fn write_features(path: &Path, f: &FeatureSequence<f32>) -> Result<()> {
    fs::write(path, encode_features(f)?).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<FeatureSequence<f32>> {
    decode_features(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
