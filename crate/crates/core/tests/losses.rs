mod common;

use std::f64::consts::{E, PI};

use bivocoder::dsp::{MelAnalyzer, StftConfig};
use bivocoder::losses::{
    amplitude_loss, anti_wrap, complex_loss, generator_total, mel_loss, phase_loss, phase_terms, LossWeights,
    Prediction, Target,
};
use bivocoder::numerics::{Tape, Tensor};
use proptest::prelude::*;

fn phases(seed: u64) -> Tensor<f64> {
    common::uniform(&mut common::rng(seed), &[2, 9, 7], PI)
}

#[test]
fn anti_wrap_examples() {
    assert_eq!(anti_wrap(0.0), 0.0);
    assert!(anti_wrap(2.0 * PI).abs() < 1e-12);
    assert!((anti_wrap(PI) - PI).abs() < 1e-12);
    assert!((anti_wrap(3.0 * PI) - PI).abs() < 1e-12);
    assert_eq!(anti_wrap(-1.3), anti_wrap(1.3));
}

#[test]
fn amplitude_loss_examples() {
    let tape = Tape::no_grad();
    let a = common::uniform(&mut common::rng(1), &[1, 5, 4], 2.0);
    let t = tape.constant(a.clone());
    assert_eq!(amplitude_loss(t, t).unwrap().item().unwrap(), 0.0);
    // log-domain inputs: scaling amplitude by e adds 1
    let p = tape.constant(a.map(|v| v + 1.0));
    assert!((amplitude_loss(t, p).unwrap().item().unwrap() - 1.0).abs() < 1e-12);
    assert!(amplitude_loss(t, tape.constant(Tensor::zeros(&[1, 5, 3]))).is_err());
    let _ = E;
}

#[test]
fn phase_loss_examples() {
    let tape = Tape::no_grad();
    let p = phases(2);
    let t = tape.constant(p.clone());
    assert_eq!(phase_loss(t, t).unwrap().item().unwrap(), 0.0);
    let plus_2pi = tape.constant(p.map(|v| v + 2.0 * PI));
    assert!(phase_loss(t, plus_2pi).unwrap().item().unwrap() < 1e-12);
    let terms = phase_terms(t, tape.constant(p.map(|v| v + PI))).unwrap();
    assert!((terms.instantaneous.item().unwrap() - PI).abs() < 1e-12);
    assert!(terms.group_delay.item().unwrap() < 1e-12);
    assert!(terms.frequency.item().unwrap() < 1e-12);
    assert!(phase_loss(t, tape.constant(Tensor::zeros(&[2, 9, 6]))).is_err());
}

#[test]
fn complex_loss_examples() {
    let tape = Tape::no_grad();
    let p = phases(3);
    let ones = tape.constant(Tensor::full(p.shape(), 1.0));
    let t = tape.constant(p.clone());
    assert_eq!(complex_loss(ones, t, ones, t).unwrap().item().unwrap(), 0.0);
    let flipped = tape.constant(p.map(|v| v + PI));
    let v = complex_loss(ones, t, ones, flipped).unwrap().item().unwrap();
    // (2 cos)^2 + (2 sin)^2 = 4 pointwise
    let cos2 = p.data().iter().map(|v| v.cos().powi(2)).sum::<f64>() / p.numel() as f64;
    let sin2 = p.data().iter().map(|v| v.sin().powi(2)).sum::<f64>() / p.numel() as f64;
    assert!((v - 4.0 * (cos2 + sin2)).abs() < 1e-12);
    assert!((v - 4.0).abs() < 1e-12);
}

#[test]
fn mel_loss_examples() {
    let mel = MelAnalyzer::<f64>::new(&StftConfig::default(), 80).unwrap();
    let tape = Tape::no_grad();
    let x = Tensor::new(&[1, 1600], common::synthetic_speech(1600, 4)).unwrap();
    let y = Tensor::new(&[1, 1600], common::synthetic_speech(1600, 5)).unwrap();
    let (xv, yv) = (tape.constant(x.clone()), tape.constant(y.clone()));
    assert_eq!(mel_loss(&mel, xv, xv).unwrap().item().unwrap(), 0.0);
    let d = mel_loss(&mel, xv, yv).unwrap().item().unwrap();
    assert!(d > 0.0);
    let flipped = mel_loss(&mel, xv.neg(), yv.neg()).unwrap().item().unwrap();
    assert!((d - flipped).abs() < 1e-12);
    assert!(mel_loss(&mel, xv, tape.constant(Tensor::zeros(&[1, 1500]))).is_err());
}

struct Fixture {
    log_amp: Tensor<f64>,
    phase: Tensor<f64>,
    wave: Tensor<f64>,
}

fn fixture() -> Fixture {
    let mut r = common::rng(7);
    Fixture {
        log_amp: common::uniform(&mut r, &[1, 513, 9], 2.0),
        phase: common::uniform(&mut r, &[1, 513, 9], PI),
        wave: Tensor::new(&[1, 1600], common::synthetic_speech(1600, 8)).unwrap(),
    }
}

fn target<'t>(tape: &'t Tape<f64>, f: &Fixture) -> Target<'t, f64> {
    let la = tape.constant(f.log_amp.clone());
    Target {
        log_amplitude: la,
        amplitude: la.exp(),
        phase: tape.constant(f.phase.clone()),
        waveform: tape.constant(f.wave.clone()),
    }
}

#[test]
fn generator_total_identity_and_consistency() {
    let mel = MelAnalyzer::<f64>::new(&StftConfig::default(), 80).unwrap();
    let f = fixture();
    let tape = Tape::no_grad();
    let t = target(&tape, &f);
    let same = Prediction {
        log_amplitude: t.log_amplitude,
        amplitude: t.amplitude,
        phase: t.phase,
        waveform: t.waveform,
    };
    let w = LossWeights::default();
    let out = generator_total(&t, &same, &mel, None, &w).unwrap();
    assert_eq!(out.report.total, 0.0);

    let mut r = common::rng(9);
    let la = tape.constant(common::uniform(&mut r, &[1, 513, 9], 2.0));
    let pred = Prediction {
        log_amplitude: la,
        amplitude: la.exp(),
        phase: tape.constant(common::uniform(&mut r, &[1, 513, 9], PI)),
        waveform: tape.constant(f.wave.map(|v| 0.5 * v)),
    };
    let out = generator_total(&t, &pred, &mel, None, &w).unwrap();
    let rep = out.report;
    assert!(rep.amplitude > 0.0 && rep.phase > 0.0 && rep.complex > 0.0 && rep.mel > 0.0);
    assert!((rep.total - rep.weighted_sum(&w)).abs() < 1e-9 * rep.total.max(1.0));
    assert_eq!(out.total.item().unwrap(), rep.total);

    let zero = LossWeights {
        amplitude: 0.0,
        phase: 0.0,
        complex: 0.0,
        mel: 0.0,
        adversarial: 0.0,
        feature_matching: 0.0,
    };
    assert_eq!(generator_total(&t, &pred, &mel, None, &zero).unwrap().report.total, 0.0);
    let bad = LossWeights { mel: -1.0, ..w };
    assert!(generator_total(&t, &pred, &mel, None, &bad).is_err());
}

#[test]
fn generator_total_names_non_finite_term() {
    let mel = MelAnalyzer::<f64>::new(&StftConfig::default(), 80).unwrap();
    let f = fixture();
    let tape = Tape::no_grad();
    let t = target(&tape, &f);
    let mut bad = f.phase.clone();
    bad.data_mut()[3] = f64::NAN;
    let pred = Prediction {
        phase: tape.constant(bad),
        ..Prediction {
            log_amplitude: t.log_amplitude,
            amplitude: t.amplitude,
            phase: t.phase,
            waveform: t.waveform,
        }
    };
    let err = generator_total(&t, &pred, &mel, None, &LossWeights::default()).err().unwrap();
    assert!(err.to_string().contains("phase"), "{err}");
}

#[test]
fn generator_total_gradient_wrt_spectra() {
    let mel = MelAnalyzer::<f64>::new(&StftConfig::default(), 80).unwrap();
    let mut r = common::rng(11);
    let f = Fixture {
        log_amp: common::uniform(&mut r, &[1, 513, 3], 1.0),
        phase: common::uniform(&mut r, &[1, 513, 3], 3.0),
        // Broadband audio: spectral bins near zero modulus make central
        // differences inaccurate at this step size.
        wave: common::uniform(&mut r, &[1, 400], 0.5),
    };
    // Alternating offsets keep phase errors and their bin/frame differences
    // away from the anti-wrap kinks at 0 and pi.
    let sign = |n: usize| if n % 2 == 0 { 1.0 } else { -1.0 };
    let phase_pred = Tensor::from_fn(&[1, 513, 3], |i| {
        f.phase.data()[i] + 0.4 + 0.1 * sign(i / 3) + 0.05 * sign(i % 3)
    });
    let inputs = vec![
        f.log_amp.map(|v| v + 0.3),
        phase_pred,
        common::uniform(&mut r, &[1, 400], 0.5),
    ];
    let (worst, at) = common::gradcheck_detail(&inputs, 1e-5, |tape, v| {
        let t = target(tape, &f);
        let pred = Prediction {
            log_amplitude: v[0],
            amplitude: v[0].exp(),
            phase: v[1],
            waveform: v[2],
        };
        generator_total(&t, &pred, &mel, None, &LossWeights::default()).unwrap().total
    });
    assert!(worst < 1e-4, "worst relative error {worst} at {at:?}");
}

proptest! {
    #[test]
    fn anti_wrap_periodic_even_and_bounded(x in -50.0f64..50.0, k in -20i32..20) {
        let a = anti_wrap(x);
        prop_assert!((0.0..=PI).contains(&a));
        prop_assert!((anti_wrap(x + 2.0 * PI * k as f64) - a).abs() < 1e-9);
        prop_assert_eq!(anti_wrap(-x), a);
    }

    #[test]
    fn phase_loss_invariant_to_whole_turns(seed in 0u64..1000, k in -3i32..4) {
        let tape = Tape::no_grad();
        let p = phases(seed);
        let q = phases(seed + 1);
        let base = phase_loss(tape.constant(p.clone()), tape.constant(q.clone())).unwrap().item().unwrap();
        let shifted = tape.constant(q.map(|v| v + 2.0 * PI * k as f64));
        let moved = phase_loss(tape.constant(p), shifted).unwrap().item().unwrap();
        prop_assert!((base - moved).abs() < 1e-9);
    }
}
