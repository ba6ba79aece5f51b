//! Bidirectional STFT-domain neural vocoder.
//!
//! A dual-branch encoder turns amplitude and phase spectra into a compact
//! 32-dimensional feature sequence at a 20 ms frame shift; a mirrored
//! decoder predicts amplitude and phase back from those features and an
//! inverse STFT produces the waveform.

pub mod adversary;
pub mod dsp;
pub mod error;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
