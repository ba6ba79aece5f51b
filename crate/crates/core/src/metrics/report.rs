use serde::{Deserialize, Serialize};

use crate::dsp::StftConfig;
use crate::error::Result;
use crate::metrics::{estimate_f0, f0_metrics, las_rmse, mcd, snr, F0Params};

/// Metrics of one reference/degraded pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceMetrics {
    pub id: String,
    pub snr: f64,
    pub las_rmse: f64,
    pub mcd: f64,
    /// `None` when no frame is voiced in both signals.
    pub f0_rmse: Option<f64>,
    pub vuv_error: f64,
}

pub fn evaluate_pair(id: &str, reference: &[f32], degraded: &[f32], config: &StftConfig) -> Result<UtteranceMetrics> {
    let f0p = F0Params {
        sample_rate: config.sample_rate,
        ..F0Params::default()
    };
    let f0 = f0_metrics(&estimate_f0(reference, &f0p)?, &estimate_f0(degraded, &f0p)?)?;
    Ok(UtteranceMetrics {
        id: id.to_string(),
        snr: snr(reference, degraded)?,
        las_rmse: las_rmse(reference, degraded, config)?,
        mcd: mcd(reference, degraded, config)?,
        f0_rmse: f0.f0_rmse,
        vuv_error: f0.vuv_error,
    })
}

/// Corpus means; `f0_rmse` averages only utterances where it is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub failed: usize,
    pub snr: Option<f64>,
    pub las_rmse: Option<f64>,
    pub mcd: Option<f64>,
    pub f0_rmse: Option<f64>,
    pub vuv_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    pub utterances: Vec<UtteranceMetrics>,
    /// (id, message) of pairs that could not be evaluated.
    pub errors: Vec<(String, String)>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = v.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| s / n as f64)
}

impl MetricReport {
    pub fn summary(&self) -> Summary {
        let u = &self.utterances;
        Summary {
            count: u.len(),
            failed: self.errors.len(),
            snr: mean(u.iter().map(|m| m.snr)),
            las_rmse: mean(u.iter().map(|m| m.las_rmse)),
            mcd: mean(u.iter().map(|m| m.mcd)),
            f0_rmse: mean(u.iter().filter_map(|m| m.f0_rmse)),
            vuv_error: mean(u.iter().map(|m| m.vuv_error)),
        }
    }

    /// One JSON record per utterance and per failed pair, then one summary record.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for m in &self.utterances {
            let rec = serde_json::json!({ "type": "utterance", "metrics": m });
            out.push_str(&rec.to_string());
            out.push('\n');
        }
        for (id, msg) in &self.errors {
            let rec = serde_json::json!({ "type": "error", "id": id, "message": msg });
            out.push_str(&rec.to_string());
            out.push('\n');
        }
        let rec = serde_json::json!({ "type": "summary", "summary": self.summary() });
        out.push_str(&rec.to_string());
        out.push('\n');
        out
    }

    /// Aligned table for terminals.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
        let mut out = format!(
            "{:<24} {:>9} {:>9} {:>9} {:>10} {:>8}\n",
            "id", "SNR dB", "LAS dB", "MCD dB", "F0 cents", "V/UV %"
        );
        for m in &self.utterances {
            out.push_str(&format!(
                "{:<24} {:>9.3} {:>9.3} {:>9.3} {:>10} {:>8.2}\n",
                m.id,
                m.snr,
                m.las_rmse,
                m.mcd,
                opt(m.f0_rmse),
                m.vuv_error
            ));
        }
        for (id, msg) in &self.errors {
            out.push_str(&format!("{id:<24} error: {msg}\n"));
        }
        let s = self.summary();
        out.push_str(&format!(
            "{:<24} {:>9} {:>9} {:>9} {:>10} {:>8}\n",
            format!("mean ({} ok, {} failed)", s.count, s.failed),
            opt(s.snr),
            opt(s.las_rmse),
            opt(s.mcd),
            opt(s.f0_rmse),
            opt(s.vuv_error)
        ));
        out
    }
}
