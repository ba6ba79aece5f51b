//! Spectral reconstruction losses and the composite generator objective.

use serde::{Deserialize, Serialize};

use crate::adversary::{feature_matching_loss, hinge_g_loss, scores, DiscriminatorOutput};
use crate::dsp::{MelAnalyzer, AMPLITUDE_FLOOR};
use crate::error::{Error, Result};
use crate::numerics::ops::anti_wrap_scalar;
use crate::numerics::{Float, Var};

/// Weights of the generator loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub amplitude: f64,
    pub phase: f64,
    pub complex: f64,
    pub mel: f64,
    pub adversarial: f64,
    pub feature_matching: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            amplitude: 45.0,
            phase: 100.0,
            complex: 45.0,
            mel: 45.0,
            adversarial: 1.0,
            feature_matching: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.amplitude,
            self.phase,
            self.complex,
            self.mel,
            self.adversarial,
            self.feature_matching,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!("loss weights must be finite and >= 0: {self:?}")));
        }
        Ok(())
    }

    /// Whether the discriminators contribute to the generator objective.
    pub fn uses_discriminators(&self) -> bool {
        self.adversarial > 0.0 || self.feature_matching > 0.0
    }
}

/// Principal absolute value of a phase error, in `[0, pi]`.
pub fn anti_wrap(x: f64) -> f64 {
    anti_wrap_scalar(x)
}

fn same_shape<T: Float>(what: &str, a: Var<'_, T>, b: Var<'_, T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!("{what}: shapes {:?} and {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Mean squared error of log-amplitudes, both floored at `ln(1e-5)`.
pub fn amplitude_loss<'t, T: Float>(log_true: Var<'t, T>, log_pred: Var<'t, T>) -> Result<Var<'t, T>> {
    same_shape("amplitude loss", log_true, log_pred)?;
    let floor = T::lit(AMPLITUDE_FLOOR.ln());
    Ok(log_true.clamp_min(floor).sub(log_pred.clamp_min(floor))?.square().mean())
}

/// Instantaneous phase, group delay and instantaneous frequency terms on
/// `[batch, bins, frames]` phase spectra.
#[derive(Clone, Copy)]
pub struct PhaseTerms<'t, T: Float> {
    pub instantaneous: Var<'t, T>,
    pub group_delay: Var<'t, T>,
    pub frequency: Var<'t, T>,
}

impl<'t, T: Float> PhaseTerms<'t, T> {
    pub fn total(&self) -> Result<Var<'t, T>> {
        self.instantaneous.add(self.group_delay)?.add(self.frequency)
    }
}

pub fn phase_terms<'t, T: Float>(phase_true: Var<'t, T>, phase_pred: Var<'t, T>) -> Result<PhaseTerms<'t, T>> {
    same_shape("phase loss", phase_true, phase_pred)?;
    if phase_true.shape().len() != 3 {
        return Err(Error::dim(format!(
            "phase loss expects [batch, bins, frames], got {:?}",
            phase_true.shape()
        )));
    }
    let along = |axis: usize| -> Result<Var<'t, T>> {
        Ok(phase_true.diff(axis)?.sub(phase_pred.diff(axis)?)?.anti_wrap().mean())
    };
    Ok(PhaseTerms {
        instantaneous: phase_true.sub(phase_pred)?.anti_wrap().mean(),
        group_delay: along(1)?,
        frequency: along(2)?,
    })
}

/// Sum of the anti-wrapped instantaneous phase, group delay and
/// instantaneous frequency errors.
pub fn phase_loss<'t, T: Float>(phase_true: Var<'t, T>, phase_pred: Var<'t, T>) -> Result<Var<'t, T>> {
    phase_terms(phase_true, phase_pred)?.total()
}

/// MSE of real parts plus MSE of imaginary parts of `A e^{i phi}`.
pub fn complex_loss<'t, T: Float>(
    amp_true: Var<'t, T>,
    phase_true: Var<'t, T>,
    amp_pred: Var<'t, T>,
    phase_pred: Var<'t, T>,
) -> Result<Var<'t, T>> {
    same_shape("complex loss", amp_true, amp_pred)?;
    same_shape("complex loss", amp_true, phase_true)?;
    same_shape("complex loss", amp_pred, phase_pred)?;
    let re = amp_true
        .mul(phase_true.cos())?
        .sub(amp_pred.mul(phase_pred.cos())?)?
        .square()
        .mean();
    let im = amp_true
        .mul(phase_true.sin())?
        .sub(amp_pred.mul(phase_pred.sin())?)?
        .square()
        .mean();
    re.add(im)
}

/// Mean absolute error between log-mel spectrograms of `[batch, time]` waveforms.
pub fn mel_loss<'t, T: Float>(mel: &MelAnalyzer<T>, x_true: Var<'t, T>, x_pred: Var<'t, T>) -> Result<Var<'t, T>> {
    same_shape("mel loss", x_true, x_pred)?;
    Ok(mel.log_mel_var(x_true)?.sub(mel.log_mel_var(x_pred)?)?.abs().mean())
}

/// Per-term values of one generator objective evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub amplitude: f64,
    pub phase: f64,
    pub complex: f64,
    pub mel: f64,
    pub adversarial: f64,
    pub feature_matching: f64,
    pub total: f64,
}

impl LossReport {
    /// Weighted sum of the individual terms.
    pub fn weighted_sum(&self, w: &LossWeights) -> f64 {
        w.amplitude * self.amplitude
            + w.phase * self.phase
            + w.complex * self.complex
            + w.mel * self.mel
            + w.adversarial * self.adversarial
            + w.feature_matching * self.feature_matching
    }
}

/// Ground truth for one batch: spectra `[B, bins, F]` and waveform `[B, T]`.
#[derive(Clone, Copy)]
pub struct Target<'t, T: Float> {
    pub log_amplitude: Var<'t, T>,
    pub amplitude: Var<'t, T>,
    pub phase: Var<'t, T>,
    pub waveform: Var<'t, T>,
}

/// Generator prediction: spectra from the heads and the iSTFT waveform.
#[derive(Clone, Copy)]
pub struct Prediction<'t, T: Float> {
    pub log_amplitude: Var<'t, T>,
    pub amplitude: Var<'t, T>,
    pub phase: Var<'t, T>,
    pub waveform: Var<'t, T>,
}

/// Discriminator outputs on real and generated waveforms.
pub struct Adversarial<'a, 't, T: Float> {
    pub real: &'a [DiscriminatorOutput<'t, T>],
    pub fake: &'a [DiscriminatorOutput<'t, T>],
}

pub struct GeneratorLoss<'t, T: Float> {
    pub total: Var<'t, T>,
    pub report: LossReport,
}

/// Weighted sum of all generator terms. Adversarial and feature matching
/// terms are zero when `adversarial` is `None`.
pub fn generator_total<'t, T: Float>(
    target: &Target<'t, T>,
    pred: &Prediction<'t, T>,
    mel: &MelAnalyzer<T>,
    adversarial: Option<Adversarial<'_, 't, T>>,
    weights: &LossWeights,
) -> Result<GeneratorLoss<'t, T>> {
    weights.validate()?;
    let mut terms: Vec<(&str, f64, Var<'t, T>)> = vec![
        (
            "amplitude",
            weights.amplitude,
            amplitude_loss(target.log_amplitude, pred.log_amplitude)?,
        ),
        ("phase", weights.phase, phase_loss(target.phase, pred.phase)?),
        (
            "complex",
            weights.complex,
            complex_loss(target.amplitude, target.phase, pred.amplitude, pred.phase)?,
        ),
        ("mel", weights.mel, mel_loss(mel, target.waveform, pred.waveform)?),
    ];
    if let Some(adv) = adversarial {
        terms.push(("adversarial", weights.adversarial, hinge_g_loss(&scores(adv.fake))?));
        terms.push((
            "feature_matching",
            weights.feature_matching,
            feature_matching_loss(adv.real, adv.fake)?,
        ));
    }
    let mut report = LossReport::default();
    let mut total: Option<Var<'t, T>> = None;
    for (name, w, v) in terms {
        let value = v.item()?.as_f64();
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("{name} loss")));
        }
        match name {
            "amplitude" => report.amplitude = value,
            "phase" => report.phase = value,
            "complex" => report.complex = value,
            "mel" => report.mel = value,
            "adversarial" => report.adversarial = value,
            _ => report.feature_matching = value,
        }
        let term = v.scale(T::lit(w));
        total = Some(match total {
            Some(t) => t.add(term)?,
            None => term,
        });
    }
    let total = total.expect("spectral terms always present");
    report.total = total.item()?.as_f64();
    Ok(GeneratorLoss { total, report })
}
