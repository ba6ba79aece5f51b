use crate::error::{Error, Result};
use crate::numerics::{Float, Tensor};

/// Low-rate continuous features, `frames x dim` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence<T> {
    pub frames: usize,
    pub dim: usize,
    /// Samples between consecutive frames.
    pub frame_shift: usize,
    pub sample_rate: u32,
    pub data: Vec<T>,
}

impl<T: Float> FeatureSequence<T> {
    pub fn new(frames: usize, dim: usize, frame_shift: usize, sample_rate: u32, data: Vec<T>) -> Result<Self> {
        if data.len() != frames * dim {
            return Err(Error::dim(format!(
                "{frames}x{dim} features need {} values, got {}",
                frames * dim,
                data.len()
            )));
        }
        Ok(FeatureSequence {
            frames,
            dim,
            frame_shift,
            sample_rate,
            data,
        })
    }

    /// Takes batch item 0 of a `[B, dim, frames]` tensor.
    pub fn from_channel_major(t: &Tensor<T>, frame_shift: usize, sample_rate: u32) -> Result<Self> {
        let &[b, dim, frames] = t.shape() else {
            return Err(Error::dim(format!("expected [batch, dim, frames], got {:?}", t.shape())));
        };
        if b == 0 {
            return Err(Error::dim("empty batch".to_string()));
        }
        let d = t.data();
        let data = (0..frames * dim).map(|i| d[(i % dim) * frames + i / dim]).collect();
        Self::new(frames, dim, frame_shift, sample_rate, data)
    }

    /// `[1, dim, frames]`, the network layout.
    pub fn to_channel_major(&self) -> Tensor<T> {
        Tensor::from_fn(&[1, self.dim, self.frames], |i| {
            let (c, f) = (i / self.frames, i % self.frames);
            self.data[f * self.dim + c]
        })
    }

    pub fn frame(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        (self.frames * self.frame_shift) as f64 / self.sample_rate as f64
    }
}
