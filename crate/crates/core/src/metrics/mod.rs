//! Objective metrics for copy synthesis and the real-time-factor benchmark.

mod f0;
mod report;
mod rtf;
mod spectral;

pub use f0::{estimate_f0, f0_metrics, F0Metrics, F0Params, F0Track};
pub use report::{evaluate_pair, MetricReport, Summary, UtteranceMetrics};
pub use rtf::{device_description, rtf_bench, synthesis_rtf, Clock, RtfReport, SystemClock};
pub use spectral::{las_rmse, mcd, mcd_from_cepstra, mel_cepstrum, snr, MCD_ORDER, N_MELS, SNR_CAP_DB};
