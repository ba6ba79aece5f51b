//! Fixed signal processing around the networks: STFT analysis, iSTFT
//! synthesis and mel filterbanks.

mod mel;
mod stft;

pub use mel::{
    hz_to_mel, mel_centers, mel_filterbank, mel_spectrogram, mel_to_hz, MelAnalyzer,
    AMPLITUDE_FLOOR,
};
pub use stft::{
    hann_periodic, istft, istft_with, log_amplitude, stft, stft_with, FramePlan, SpectralEngine,
    Spectra, StftConfig,
};
