use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use bivocoder::io::{read_features, read_wav, write_features, write_wav};
use bivocoder::metrics::{device_description, evaluate_pair, synthesis_rtf, MetricReport};
use bivocoder::model::{load_checkpoint, FeatureSequence, Vocoder};
use bivocoder::training::{self, TrainConfig};
use bivocoder::{Error, Result};
use log::{info, warn};

/// 2 for bad input or usage, 1 for internal failures.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_)
        | Error::Io { .. }
        | Error::Audio { .. }
        | Error::Corrupt { .. }
        | Error::Version { .. }
        | Error::DigestMismatch { .. }
        | Error::Config(_)
        | Error::NoData(_) => 2,
        Error::Dimension(_) | Error::NonFinite(_) => 1,
    }
}

pub fn train(config: &Path, resume: Option<&Path>) -> Result<()> {
    let config = TrainConfig::load(config)?;
    info!(
        "training {} preset on {} for {} steps into {}",
        config.preset,
        config.dataset.display(),
        config.max_steps,
        config.output_dir.display()
    );
    let out = training::train(config, resume)?;
    if let Some(last) = &out.last {
        info!("step {}: generator loss {:.4}", last.step, last.generator.total);
    }
    info!("final checkpoint {}", out.final_checkpoint.display());
    info!("log {}", out.log.display());
    Ok(())
}

fn load_model(ckpt: &Path) -> Result<Vocoder<f32>> {
    let (model, ck) = load_checkpoint(ckpt)?;
    info!("loaded {} preset checkpoint at step {}", model.config.preset, ck.step);
    Ok(model)
}

pub fn extract(ckpt: &Path, input: &Path, out: &Path) -> Result<()> {
    let model = load_model(ckpt)?;
    let wave = read_wav(input)?;
    let feats = model.extract_features(&wave)?;
    write_features(out, &feats)?;
    info!("{}: {} frames x {} dims", out.display(), feats.frames, feats.dim);
    Ok(())
}

fn check_features(model: &Vocoder<f32>, f: &FeatureSequence<f32>) -> Result<()> {
    let c = &model.config;
    if f.dim != c.feature_dim || f.frame_shift != c.feature_shift() || f.sample_rate != c.stft.sample_rate {
        return Err(Error::InvalidArgument(format!(
            "features are {} dims every {} samples at {} Hz; the model expects {} dims every {} samples at {} Hz",
            f.dim,
            f.frame_shift,
            f.sample_rate,
            c.feature_dim,
            c.feature_shift(),
            c.stft.sample_rate
        )));
    }
    if f.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("feature file contains non-finite values".into()));
    }
    Ok(())
}

pub fn synth(ckpt: &Path, input: &Path, out: &Path, len: Option<usize>) -> Result<()> {
    let model = load_model(ckpt)?;
    let feats = read_features(input)?;
    check_features(&model, &feats)?;
    if len == Some(0) {
        return Err(Error::InvalidArgument("--len must be positive".into()));
    }
    let wave = model.synthesize(&feats, len)?;
    write_wav(out, &wave)?;
    info!("{}: {} samples", out.display(), wave.len());
    Ok(())
}

pub fn copysynth(ckpt: &Path, input: &Path, out: &Path, ref_metrics: bool) -> Result<()> {
    let model = load_model(ckpt)?;
    let wave = read_wav(input)?;
    let y = model.analysis_synthesis(&wave)?;
    write_wav(out, &y)?;
    info!("{}: {} samples", out.display(), y.len());
    if ref_metrics {
        // Score what was actually written, after 16-bit quantization.
        let written = read_wav(out)?;
        let id = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let m = evaluate_pair(&id, &wave, &written, &model.config.stft)?;
        let f0 = m.f0_rmse.map_or("n/a".to_string(), |v| format!("{v:.2}"));
        println!(
            "{}\tsnr_db={:.3}\tlas_rmse_db={:.3}\tmcd_db={:.3}\tf0_rmse_cents={f0}\tvuv_error_pct={:.2}",
            m.id, m.snr, m.las_rmse, m.mcd, m.vuv_error
        );
    }
    Ok(())
}

fn wav_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_wav = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if is_wav && path.is_file() {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                files.insert(name.to_string(), path.clone());
            }
        }
    }
    Ok(files)
}

pub fn eval(reference: &Path, deg: &Path, report_path: &Path) -> Result<()> {
    let refs = wav_files(reference)?;
    let degs = wav_files(deg)?;
    let stft = bivocoder::dsp::StftConfig::default();
    let mut report = MetricReport::default();
    for (name, rpath) in &refs {
        let id = name.trim_end_matches(".wav").trim_end_matches(".WAV").to_string();
        let Some(dpath) = degs.get(name) else {
            warn!("{name}: no match in {}", deg.display());
            report.errors.push((id, format!("no file named {name} in {}", deg.display())));
            continue;
        };
        let pair = read_wav(rpath).and_then(|r| {
            let d = read_wav(dpath)?;
            evaluate_pair(&id, &r, &d, &stft)
        });
        match pair {
            Ok(m) => report.utterances.push(m),
            Err(e) => {
                warn!("{name}: {e}");
                report.errors.push((id, e.to_string()));
            }
        }
    }
    for name in degs.keys().filter(|n| !refs.contains_key(*n)) {
        warn!("{name}: no match in {}", reference.display());
        let id = name.trim_end_matches(".wav").trim_end_matches(".WAV").to_string();
        report.errors.push((id, format!("no file named {name} in {}", reference.display())));
    }
    fs::write(report_path, report.to_ndjson()).map_err(|e| Error::io(report_path, e))?;
    eprint!("{}", report.to_text());
    if report.utterances.is_empty() {
        return Err(Error::InvalidArgument("no pair could be evaluated".into()));
    }
    Ok(())
}

pub fn bench(ckpt: &Path, seconds: f64, repeats: usize) -> Result<()> {
    if repeats < 3 {
        return Err(Error::InvalidArgument(format!("--repeats must be at least 3, got {repeats}")));
    }
    if !(seconds >= 1.0) {
        return Err(Error::InvalidArgument(format!("--seconds must be at least 1, got {seconds}")));
    }
    let model = load_model(ckpt)?;
    let r = synthesis_rtf(&model, seconds, repeats)?;
    println!(
        "rtf={} speedup={}x preset={} audio_seconds={} repeats={} device={}",
        r.rtf,
        r.speedup,
        model.config.preset,
        r.audio_seconds,
        repeats,
        device_description()
    );
    Ok(())
}
