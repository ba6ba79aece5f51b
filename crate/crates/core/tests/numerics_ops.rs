mod common;

use bivocoder::numerics::ops::gelu_scalar;
use bivocoder::numerics::{Conv1dOpts, Conv2dOpts, Tape, Tensor};
use common::{gradcheck, rng, uniform};

fn t1(data: &[f64]) -> Tensor<f64> {
    Tensor::new(&[1, 1, data.len()], data.to_vec()).unwrap()
}

fn conv1d_values(x: &[f64], k: &[f64], bias: Option<f64>, opts: Conv1dOpts) -> Vec<f64> {
    let tape = Tape::no_grad();
    let x = tape.constant(t1(x));
    let w = tape.constant(t1(k));
    let b = bias.map(|b| tape.constant(Tensor::new(&[1], vec![b]).unwrap()));
    x.conv1d(w, b, opts).unwrap().value().data().to_vec()
}

#[test]
fn conv1d_examples() {
    let id = conv1d_values(&[1.0, 2.0, 3.0], &[0.0, 1.0, 0.0], None, Conv1dOpts::same(3));
    assert_eq!(id, vec![1.0, 2.0, 3.0]);

    // Sliding-window oracle: windows [1,2] and [3,4].
    let strided = conv1d_values(
        &[1.0, 2.0, 3.0, 4.0],
        &[1.0, 1.0],
        None,
        Conv1dOpts {
            stride: 2,
            ..Default::default()
        },
    );
    assert_eq!(strided, vec![3.0, 7.0]);

    let b = conv1d_values(&[0.0; 5], &[0.3, -2.0, 1.5], Some(0.25), Conv1dOpts::same(3));
    assert!(b.iter().all(|&v| v == 0.25));
}

#[test]
fn conv1d_rejects_mismatched_channels() {
    let tape = Tape::<f64>::no_grad();
    let x = tape.constant(Tensor::zeros(&[1, 3, 10]));
    let w = tape.constant(Tensor::zeros(&[4, 2, 3]));
    assert!(x.conv1d(w, None, Conv1dOpts::default()).is_err());
    let short = tape.constant(Tensor::zeros(&[1, 2, 2]));
    assert!(short.conv1d(w, None, Conv1dOpts::default()).is_err());
}

#[test]
fn conv1d_matches_direct_loop_oracle() {
    let mut r = rng(7);
    for &(cin, cout, k, stride, pad, groups) in &[
        (4, 6, 3, 1, 1, 1),
        (4, 4, 7, 1, 3, 4),
        (6, 4, 5, 2, 2, 2),
        (3, 5, 1, 1, 0, 1),
        (2, 3, 8, 8, 0, 1),
    ] {
        let t = 17;
        let x = uniform(&mut r, &[2, cin, t], 1.0);
        let w = uniform(&mut r, &[cout, cin / groups, k], 1.0);
        let bias = uniform(&mut r, &[cout], 1.0);
        let tape = Tape::no_grad();
        let y = tape
            .constant(x.clone())
            .conv1d(
                tape.constant(w.clone()),
                Some(tape.constant(bias.clone())),
                Conv1dOpts { stride, padding: pad, groups },
            )
            .unwrap()
            .value();
        let tout = (t + 2 * pad - k) / stride + 1;
        assert_eq!(y.shape(), &[2, cout, tout]);
        let (cin_g, cout_g) = (cin / groups, cout / groups);
        for b in 0..2 {
            for o in 0..cout {
                let g = o / cout_g;
                for to in 0..tout {
                    let mut acc = bias.data()[o];
                    for ci in 0..cin_g {
                        for j in 0..k {
                            let i = (to * stride + j) as isize - pad as isize;
                            if i >= 0 && (i as usize) < t {
                                acc += w.data()[(o * cin_g + ci) * k + j]
                                    * x.data()[(b * cin + g * cin_g + ci) * t + i as usize];
                            }
                        }
                    }
                    let got = y.data()[(b * cout + o) * tout + to];
                    assert!((got - acc).abs() < 1e-12, "{got} vs {acc}");
                }
            }
        }
    }
}

fn conv2d_oracle(x: &Tensor<f64>, w: &Tensor<f64>, stride: (usize, usize), pad: (usize, usize)) -> Vec<f64> {
    let (xs, ws) = (x.shape(), w.shape());
    let (b, cin, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
    let (cout, kh, kw) = (ws[0], ws[2], ws[3]);
    let oh = (h + 2 * pad.0 - kh) / stride.0 + 1;
    let ow = (wd + 2 * pad.1 - kw) / stride.1 + 1;
    let mut out = vec![0.0; b * cout * oh * ow];
    for n in 0..b {
        for co in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ci in 0..cin {
                        for a in 0..kh {
                            for c in 0..kw {
                                let iy = (oy * stride.0 + a) as isize - pad.0 as isize;
                                let ix = (ox * stride.1 + c) as isize - pad.1 as isize;
                                if iy < 0 || ix < 0 || iy as usize >= h || ix as usize >= wd {
                                    continue;
                                }
                                acc += w.data()[((co * cin + ci) * kh + a) * kw + c]
                                    * x.data()[((n * cin + ci) * h + iy as usize) * wd + ix as usize];
                            }
                        }
                    }
                    out[((n * cout + co) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    out
}

#[test]
fn conv2d_matches_direct_loop_oracle() {
    let mut r = rng(31);
    // Few output channels and many output channels take different code paths.
    for (cout, stride, pad) in [(3, (2, 1), (4, 1)), (12, (2, 1), (4, 1)), (3, (1, 2), (1, 2)), (2, (3, 1), (2, 0))] {
        let x = uniform(&mut r, &[2, 3, 13, 9], 1.0);
        let w = uniform(&mut r, &[cout, 3, 5, 3], 1.0);
        let tape = Tape::new();
        let y = tape
            .leaf(x.clone())
            .conv2d(tape.leaf(w.clone()), None, Conv2dOpts { stride, padding: pad })
            .unwrap();
        let want = conv2d_oracle(&x, &w, stride, pad);
        let got = y.value();
        assert_eq!(got.numel(), want.len());
        for (g, e) in got.data().iter().zip(&want) {
            assert!((g - e).abs() < 1e-12, "cout {cout}: {g} vs {e}");
        }
    }
}

#[test]
fn conv_transpose1d_examples() {
    let run = |stride| {
        let tape = Tape::<f64>::no_grad();
        tape.constant(t1(&[1.0, 2.0]))
            .conv_transpose1d(tape.constant(t1(&[1.0])), None, stride, 0)
            .unwrap()
            .value()
            .data()
            .to_vec()
    };
    assert_eq!(run(2), vec![1.0, 0.0, 2.0]);
    assert_eq!(run(1), vec![1.0, 2.0]);
}

#[test]
fn conv_transpose_is_adjoint_of_conv() {
    let mut r = rng(11);
    for &(cin, cout, k, stride, pad, t) in &[(3, 4, 7, 1, 3, 20), (2, 5, 8, 8, 0, 32), (4, 2, 5, 3, 2, 22)] {
        let x = uniform(&mut r, &[2, cin, t], 1.0);
        let w = uniform(&mut r, &[cout, cin, k], 1.0);
        let tape = Tape::no_grad();
        let cx = tape
            .constant(x.clone())
            .conv1d(tape.constant(w.clone()), None, Conv1dOpts { stride, padding: pad, groups: 1 })
            .unwrap()
            .value();
        let y = uniform(&mut r, cx.shape(), 1.0);
        let ty = tape
            .constant(y.clone())
            .conv_transpose1d(tape.constant(w.clone()), None, stride, pad)
            .unwrap()
            .value();
        assert_eq!(ty.shape(), x.shape());
        let lhs: f64 = cx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(ty.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }
}

#[test]
fn layer_norm_examples() {
    let ln = |x: &[f64], gamma: f64, beta: f64, eps: f64| {
        let tape = Tape::no_grad();
        let c = x.len();
        let x = tape.constant(Tensor::new(&[1, c, 1], x.to_vec()).unwrap());
        let g = tape.constant(Tensor::full(&[c], gamma));
        let b = tape.constant(Tensor::full(&[c], beta));
        x.layer_norm_channels(g, b, eps).unwrap().value().data().to_vec()
    };
    assert!(ln(&[3.0; 4], 1.0, 0.0, 1e-5).iter().all(|&v| v == 0.0));
    let unit = ln(&[1.0, -1.0], 1.0, 0.0, 1e-14);
    assert!((unit[0] - 1.0).abs() < 1e-12 && (unit[1] + 1.0).abs() < 1e-12);
    assert!(ln(&[-2.0; 3], 1.0, 0.7, 1e-5).iter().all(|&v| v == 0.7));

    // Per-sample statistics on random input.
    let mut r = rng(3);
    let x = uniform(&mut r, &[2, 16, 9], 3.0);
    let tape = Tape::no_grad();
    let y = tape
        .constant(x)
        .layer_norm_channels(tape.constant(Tensor::full(&[16], 1.0)), tape.constant(Tensor::zeros(&[16])), 1e-6)
        .unwrap()
        .value();
    for b in 0..2 {
        for t in 0..9 {
            let col: Vec<f64> = (0..16).map(|c| y.data()[(b * 16 + c) * 9 + t]).collect();
            let mean = col.iter().sum::<f64>() / 16.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-10);
            assert!(var <= 1.0 && var > 1.0 - 1e-4);
        }
    }
}

/// erf via its Maclaurin series; independent of libm.
fn erf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    for n in 1..80 {
        term *= -x * x / n as f64;
        sum += term / (2 * n + 1) as f64;
    }
    2.0 / std::f64::consts::PI.sqrt() * sum
}

#[test]
fn gelu_examples() {
    assert_eq!(gelu_scalar(0.0f64), 0.0);
    assert!((gelu_scalar(10.0f64) - 10.0).abs() < 1e-9);
    let oracle = 0.5 * (1.0 + erf_series(1.0 / 2f64.sqrt()));
    assert!((gelu_scalar(1.0f64) - oracle).abs() < 1e-12);
    assert!((oracle - 0.841345).abs() < 1e-6);
    for &x in &[-2.5, -0.3, 0.7, 2.2] {
        let o = x * 0.5 * (1.0 + erf_series(x / 2f64.sqrt()));
        assert!((gelu_scalar(x) - o).abs() < 1e-12);
    }
}

#[test]
fn grn_examples() {
    let run = |x: Tensor<f64>, gamma: f64, beta: f64| {
        let c = x.shape()[1];
        let tape = Tape::no_grad();
        tape.constant(x)
            .grn(tape.constant(Tensor::full(&[c], gamma)), tape.constant(Tensor::full(&[c], beta)), 1e-6)
            .unwrap()
            .value()
            .as_ref()
            .clone()
    };
    let z = run(Tensor::zeros(&[1, 3, 5]), 0.4, -0.2);
    assert!(z.data().iter().all(|&v| v == -0.2));

    let mut r = rng(5);
    let x = uniform(&mut r, &[1, 1, 6], 1.0);
    let norm = x.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    let n = norm / (norm + 1e-6);
    let y = run(x.clone(), 0.5, 0.1);
    for (yi, xi) in y.data().iter().zip(x.data()) {
        assert!((yi - (0.5 * xi * n + 0.1 + xi)).abs() < 1e-12);
    }

    let x = uniform(&mut r, &[2, 4, 6], 1.0);
    assert_eq!(run(x.clone(), 0.0, 0.0), x);
}

#[test]
fn backward_examples() {
    let tape = Tape::new();
    let x = tape.leaf(Tensor::new(&[3], vec![0.5, -1.0, 2.0]).unwrap());
    let g = tape.backward(x.sum()).unwrap();
    assert_eq!(g.wrt(x).unwrap(), &[1.0, 1.0, 1.0]);

    let tape = Tape::new();
    let x = tape.leaf(Tensor::new(&[2], vec![1.0, 2.0]).unwrap());
    let g = tape.backward(x.square().sum()).unwrap();
    assert_eq!(g.wrt(x).unwrap(), &[2.0, 4.0]);

    let tape = Tape::new();
    let x = tape.leaf(Tensor::new(&[1], vec![0.0]).unwrap());
    assert!(tape.backward(x.ln().sum()).is_err());
}

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

#[test]
fn elementwise_gradients_match_finite_differences() {
    let mut r = rng(21);
    let a = uniform(&mut r, &[3, 4], 2.0);
    let b = uniform(&mut r, &[3, 4], 2.0);
    let pos = a.map(|v| v.abs() + 0.5);
    let worst = gradcheck(&[a.clone(), b.clone()], H, |_, v| {
        let prod = v[0].mul(v[1]).unwrap();
        let s = prod.sin().add(v[0].cos()).unwrap();
        let t = v[1].atan2(v[0]).unwrap().add(v[0].gelu()).unwrap();
        let u = v[0].leaky_relu(0.1).add(v[1].exp().scale(0.1)).unwrap();
        s.add(t).unwrap().add(u).unwrap().sub(v[1].square()).unwrap().sum()
    });
    assert!(worst < TOL, "worst {worst}");
    let worst = gradcheck(&[pos, b], H, |_, v| {
        v[0].ln().mul(v[1].abs()).unwrap().add(v[1].anti_wrap()).unwrap().add(v[0].relu()).unwrap().mean()
    });
    assert!(worst < TOL, "worst {worst}");
}

#[test]
fn shape_op_gradients_match_finite_differences() {
    let mut r = rng(22);
    let a = uniform(&mut r, &[2, 3, 5], 1.0);
    let b = uniform(&mut r, &[2, 2, 5], 1.0);
    let w = uniform(&mut r, &[2, 5, 5], 1.0);
    let worst = gradcheck(&[a, b, w], H, |tape, v| {
        let c = bivocoder::numerics::Var::concat(&[v[0], v[1]], 1).unwrap();
        let d = c.diff(2).unwrap().narrow(1, 1, 3).unwrap();
        let e = c.diff(1).unwrap().reflect_pad_right(3).unwrap().reshape(&[2, 4, 8]).unwrap();
        let wt = tape.constant(Tensor::from_fn(&[2, 4, 8], |i| (i as f64 * 0.37).sin()));
        let m = v[2].matmul_const_left(std::sync::Arc::new(Tensor::from_fn(&[3, 5], |i| i as f64 * 0.1 - 0.4))).unwrap();
        d.square().sum().add(e.mul(wt).unwrap().sum()).unwrap().add(m.square().mean()).unwrap()
    });
    assert!(worst < TOL, "worst {worst}");
}

#[test]
fn conv_gradients_match_finite_differences() {
    let mut r = rng(23);
    let x = uniform(&mut r, &[2, 4, 11], 1.0);
    let w = uniform(&mut r, &[6, 2, 3], 1.0);
    let b = uniform(&mut r, &[6], 1.0);
    let wd = uniform(&mut r, &[6, 1, 7], 1.0);
    let wt = uniform(&mut r, &[6, 3, 4], 1.0);
    let bt = uniform(&mut r, &[3], 1.0);
    let worst = gradcheck(&[x, w, b, wd, wt, bt], H, |_, v| {
        let y = v[0]
            .conv1d(v[1], Some(v[2]), Conv1dOpts { stride: 2, padding: 1, groups: 2 })
            .unwrap();
        let y = y.conv1d(v[3], None, Conv1dOpts { stride: 1, padding: 3, groups: 6 }).unwrap();
        let y = y.conv_transpose1d(v[4], Some(v[5]), 2, 1).unwrap();
        y.square().sum()
    });
    assert!(worst < TOL, "worst {worst}");

    let x = uniform(&mut r, &[1, 2, 7, 6], 1.0);
    for cout in [3, 10] {
        let w = uniform(&mut r, &[cout, 2, 3, 2], 1.0);
        let b = uniform(&mut r, &[cout], 1.0);
        let worst = gradcheck(&[x.clone(), w, b], H, |_, v| {
            v[0].conv2d(v[1], Some(v[2]), Conv2dOpts { stride: (2, 1), padding: (1, 1) })
                .unwrap()
                .square()
                .sum()
        });
        assert!(worst < TOL, "cout {cout}: worst {worst}");
    }
}

#[test]
fn norm_gradients_match_finite_differences() {
    let mut r = rng(24);
    let x = uniform(&mut r, &[2, 5, 4], 1.0);
    let g = uniform(&mut r, &[5], 1.0);
    let b = uniform(&mut r, &[5], 1.0);
    let probe = uniform(&mut r, &[2, 5, 4], 1.0);
    let worst = gradcheck(&[x.clone(), g.clone(), b.clone()], H, |tape, v| {
        let p = tape.constant(probe.clone());
        v[0].layer_norm_channels(v[1], v[2], 1e-6).unwrap().mul(p).unwrap().sum()
    });
    assert!(worst < TOL, "worst {worst}");
    let worst = gradcheck(&[x, g, b], H, |tape, v| {
        let p = tape.constant(probe.clone());
        v[0].grn(v[1], v[2], 1e-6).unwrap().mul(p).unwrap().sum()
    });
    assert!(worst < TOL, "worst {worst}");
}

#[test]
fn ops_are_deterministic() {
    let mut r = rng(25);
    let x = uniform(&mut r, &[2, 4, 30], 1.0);
    let w = uniform(&mut r, &[8, 4, 7], 1.0);
    let run = || {
        let tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let y = xv.conv1d(tape.constant(w.clone()), None, Conv1dOpts::same(7)).unwrap().gelu().square().sum();
        let g = tape.backward(y).unwrap();
        (y.item().unwrap(), g.wrt(xv).unwrap().to_vec())
    };
    assert_eq!(run(), run());
}
