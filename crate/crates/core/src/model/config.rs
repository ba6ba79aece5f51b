use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::StftConfig;
use crate::error::{Error, Result};

/// Named size preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 8 channels, 1 block per branch; for gradient checks and CI.
    Tiny,
    /// 256 channels, 8 blocks per branch.
    Base,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(Preset::Tiny),
            "base" => Ok(Preset::Base),
            other => Err(Error::Config(format!("unknown preset {other:?} (tiny | base)"))),
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Preset::Tiny => "tiny",
            Preset::Base => "base",
        })
    }
}

/// Architecture of the multi-period and multi-resolution discriminators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub periods: Vec<usize>,
    /// Output channels of each period-discriminator conv; all but the last
    /// are strided.
    pub period_channels: Vec<usize>,
    pub period_kernel: usize,
    pub period_stride: usize,
    /// (fft size, shift, window length) per resolution.
    pub resolutions: Vec<(usize, usize, usize)>,
    pub resolution_channels: usize,
    pub leaky_slope: f64,
}

impl DiscriminatorConfig {
    pub fn base() -> Self {
        DiscriminatorConfig {
            periods: vec![2, 3, 5, 7, 11],
            period_channels: vec![32, 128, 512, 1024, 1024],
            period_kernel: 5,
            period_stride: 3,
            resolutions: vec![(512, 128, 512), (1024, 256, 1024), (2048, 512, 2048)],
            resolution_channels: 32,
            leaky_slope: 0.1,
        }
    }

    /// Same periods and resolutions with narrow convolutions.
    pub fn tiny() -> Self {
        DiscriminatorConfig {
            period_channels: vec![4, 8, 16, 16, 16],
            resolution_channels: 4,
            ..Self::base()
        }
    }

    /// Shortest waveform every sub-discriminator can analyze.
    pub fn min_length(&self) -> usize {
        self.resolutions
            .iter()
            .map(|&(n_fft, hop, _)| hop.max((n_fft - hop) / 2 + 1))
            .chain(self.periods.iter().copied())
            .max()
            .unwrap_or(1)
    }
}

/// Full architecture description. Its digest identifies checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub preset: Preset,
    pub stft: StftConfig,
    pub channels: usize,
    pub expansion: usize,
    pub blocks: usize,
    pub kernel: usize,
    pub downsample: usize,
    pub feature_dim: usize,
    pub layer_norm_eps: f64,
    pub grn_eps: f64,
    pub discriminator: DiscriminatorConfig,
}

impl ModelConfig {
    pub fn base() -> Self {
        ModelConfig {
            preset: Preset::Base,
            stft: StftConfig::default(),
            channels: 256,
            expansion: 4,
            blocks: 8,
            kernel: 7,
            downsample: 8,
            feature_dim: 32,
            layer_norm_eps: 1e-6,
            grn_eps: 1e-6,
            discriminator: DiscriminatorConfig::base(),
        }
    }

    pub fn tiny() -> Self {
        ModelConfig {
            preset: Preset::Tiny,
            channels: 8,
            blocks: 1,
            discriminator: DiscriminatorConfig::tiny(),
            ..Self::base()
        }
    }

    pub fn from_preset(preset: Preset) -> Self {
        match preset {
            Preset::Tiny => Self::tiny(),
            Preset::Base => Self::base(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        if self.channels == 0
            || self.expansion == 0
            || self.kernel % 2 == 0
            || self.downsample == 0
            || self.feature_dim == 0
            || self.layer_norm_eps <= 0.0
            || self.grn_eps <= 0.0
        {
            return Err(Error::Config(format!("invalid model config {self:?}")));
        }
        Ok(())
    }

    /// Feature frame shift in samples (20 ms by default).
    pub fn feature_shift(&self) -> usize {
        self.stft.frame_shift * self.downsample
    }

    /// Spectral frames after right-padding to a multiple of the downsampling.
    pub fn padded_frames(&self, len: usize) -> usize {
        self.stft.num_frames(len).div_ceil(self.downsample) * self.downsample
    }

    /// Feature frames for a waveform of `len` samples.
    pub fn feature_frames(&self, len: usize) -> usize {
        self.padded_frames(len) / self.downsample
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).into()
    }

    pub fn digest_hex(&self) -> String {
        self.digest().iter().map(|b| format!("{b:02x}")).collect()
    }
}
