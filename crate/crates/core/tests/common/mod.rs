#![allow(dead_code)]

use std::sync::Arc;

use bivocoder::numerics::{ParamId, ParamStore, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-scale..scale))
}

/// Relative error with a small absolute floor on the denominator.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Compares reverse-mode gradients of a scalar function of `inputs` with
/// central finite differences (step `h`). Returns the worst relative error.
pub fn gradcheck<F>(inputs: &[Tensor<f64>], h: f64, f: F) -> f64
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Var<'t, f64>,
{
    gradcheck_detail(inputs, h, f).0
}

/// As [`gradcheck`], also returning (input, index, analytic, numeric) of
/// the worst entry.
pub fn gradcheck_detail<F>(inputs: &[Tensor<f64>], h: f64, f: F) -> (f64, (usize, usize, f64, f64))
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Var<'t, f64>,
{
    let tape = Tape::new();
    let vars: Vec<_> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&tape, &vars);
    let grads = tape.backward(loss).expect("backward");
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|v| {
            grads
                .wrt(*v)
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![0.0; v.value().numel()])
        })
        .collect();

    let eval = |inputs: &[Tensor<f64>]| -> f64 {
        let tape = Tape::no_grad();
        let vars: Vec<_> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        f(&tape, &vars).item().unwrap()
    };
    let mut worst = (0.0f64, (0, 0, 0.0, 0.0));
    for (i, input) in inputs.iter().enumerate() {
        for j in 0..input.numel() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let e = rel_err(analytic[i][j], numeric);
            if e > worst.0 {
                worst = (e, (i, j, analytic[i][j], numeric));
            }
        }
    }
    worst
}

/// Finite-difference check of parameter gradients on `samples` randomly
/// chosen scalars. `store` selects the parameter set under test inside
/// `model`. Returns (worst relative error, worst pair as (analytic, numeric)).
pub fn param_gradcheck<M, S, F>(model: &mut M, store: S, samples: usize, seed: u64, h: f64, loss: F) -> (f64, (f64, f64))
where
    S: Fn(&mut M) -> &mut ParamStore<f64>,
    F: for<'t> Fn(&'t Tape<f64>, &M) -> Var<'t, f64>,
{
    let tape = Tape::new();
    let l = loss(&tape, model);
    let grads = tape.backward(l).expect("backward");
    let ids: Vec<ParamId> = store(model).ids().collect();
    let mut r = rng(seed);
    let picks: Vec<(ParamId, usize)> = (0..samples)
        .map(|_| {
            let id = ids[r.random_range(0..ids.len())];
            let n = store(model).get(id).value.numel();
            (id, r.random_range(0..n))
        })
        .collect();
    let analytic: Vec<f64> = picks
        .iter()
        .map(|&(id, j)| grads.param(store(model), id).map_or(0.0, |g| g[j]))
        .collect();
    drop(grads);

    let eval = |model: &M| -> f64 {
        let tape = Tape::no_grad();
        loss(&tape, model).item().unwrap()
    };
    let mut worst = (0.0f64, (0.0, 0.0));
    for (&(id, j), &a) in picks.iter().zip(&analytic) {
        let orig = store(model).get(id).value.data()[j];
        let set = |model: &mut M, v: f64| {
            Arc::make_mut(&mut store(model).get_mut(id).value).data_mut()[j] = v;
        };
        set(model, orig + h);
        let up = eval(model);
        set(model, orig - h);
        let down = eval(model);
        set(model, orig);
        let numeric = (up - down) / (2.0 * h);
        let e = rel_err(a, numeric);
        if e > worst.0 {
            worst = (e, (a, numeric));
        }
    }
    worst
}

/// A 1 s band-limited test utterance: a few harmonics with vibrato and an
/// amplitude envelope, plus a little noise.
pub fn synthetic_speech(len: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let sr = 16_000.0;
    let mut phase = 0.0f64;
    (0..len)
        .map(|n| {
            let t = n as f64 / sr;
            let f0 = 140.0 + 25.0 * (2.0 * std::f64::consts::PI * 3.0 * t).sin();
            phase += 2.0 * std::f64::consts::PI * f0 / sr;
            let env = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * 2.0 * t).cos()) + 0.05;
            let voiced: f64 = (1..=6).map(|h| (h as f64 * phase).sin() / h as f64).sum();
            0.3 * env * voiced + 0.005 * r.random_range(-1.0..1.0)
        })
        .collect()
}
