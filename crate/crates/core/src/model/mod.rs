//! Feature extractor and waveform generator built from ConvNeXt V2 blocks.

mod checkpoint;
mod config;
mod convnext;
mod features;
pub mod layers;
mod vocoder;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, OptimizerState, CHECKPOINT_VERSION};
pub use config::{DiscriminatorConfig, ModelConfig, Preset};
pub use convnext::ConvNeXtV2Block;
pub use features::FeatureSequence;
pub use vocoder::{
    AnalyzedBatch, DecodedSpectra, DecoderBranch, EncoderBranch, FeatureExtractor, Vocoder, WaveformGenerator,
};
