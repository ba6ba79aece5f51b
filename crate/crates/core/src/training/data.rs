use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::read_wav;
use crate::numerics::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub samples: Vec<f32>,
}

/// Loads every `.wav` file of a directory, sorted by file name.
pub fn load_dataset(dir: &Path) -> Result<Vec<Utterance>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_wav = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if is_wav && path.is_file() {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(Error::NoData(dir.to_path_buf()));
    }
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let samples = read_wav(&p)?;
            if samples.is_empty() {
                return Err(Error::Audio {
                    path: p.clone(),
                    msg: "no samples".into(),
                });
            }
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(Utterance { id, samples })
        })
        .collect()
}

/// Splits off the last `ceil(fraction * n)` utterances for validation,
/// keeping at least one for training.
pub fn split_validation(mut utts: Vec<Utterance>, fraction: f64) -> (Vec<Utterance>, Vec<Utterance>) {
    let n = utts.len();
    let k = ((fraction * n as f64).ceil() as usize).min(n.saturating_sub(1));
    let valid = utts.split_off(n - k);
    (utts, valid)
}

/// `[batch, crop]` random crops of uniformly chosen utterances; short
/// utterances are zero-padded at the end.
pub fn sample_batch(data: &[Utterance], crop: usize, batch: usize, rng: &mut ChaCha8Rng) -> Result<Tensor<f32>> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot sample from an empty dataset".into()));
    }
    let mut out = vec![0.0f32; batch * crop];
    for row in out.chunks_mut(crop.max(1)).take(batch) {
        let utt = &data[rng.random_range(0..data.len())];
        let len = utt.samples.len();
        if len > crop {
            let start = rng.random_range(0..=len - crop);
            row.copy_from_slice(&utt.samples[start..start + crop]);
        } else {
            row[..len].copy_from_slice(&utt.samples);
        }
    }
    Tensor::new(&[batch, crop], out)
}
