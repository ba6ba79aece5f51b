use crate::error::{Error, Result};
use crate::numerics::{Float, Tensor, Var};

fn check_affine<T: Float>(op: &str, p: &Tensor<T>, c: usize) -> Result<()> {
    if p.shape() != [c] {
        return Err(Error::dim(format!(
            "{op}: affine parameter shape {:?}, expected [{c}]",
            p.shape()
        )));
    }
    Ok(())
}

fn dims3(op: &str, shape: &[usize]) -> Result<(usize, usize, usize)> {
    match shape {
        &[b, c, t] => Ok((b, c, t)),
        _ => Err(Error::dim(format!("{op} expects [batch, channels, time], got {shape:?}"))),
    }
}

impl<'t, T: Float> Var<'t, T> {
    /// Layer normalization over the channel axis of `[batch, channels, time]`
    /// (population variance), followed by a per-channel affine map.
    pub fn layer_norm_channels(
        self,
        gamma: Var<'t, T>,
        beta: Var<'t, T>,
        eps: T,
    ) -> Result<Var<'t, T>> {
        if eps <= T::zero() {
            return Err(Error::InvalidArgument("layer_norm eps must be > 0".into()));
        }
        let x = self.value();
        let (b, c, t) = dims3("layer_norm", x.shape())?;
        let gm = gamma.value();
        let bt = beta.value();
        check_affine("layer_norm", &gm, c)?;
        check_affine("layer_norm", &bt, c)?;
        let xd = x.data();
        let inv_c = T::one() / T::lit(c as f64);
        let mut xhat = vec![T::zero(); xd.len()];
        let mut inv_std = vec![T::zero(); b * t];
        for bi in 0..b {
            let base = bi * c * t;
            for ti in 0..t {
                let mut mean = T::zero();
                for ci in 0..c {
                    mean += xd[base + ci * t + ti];
                }
                mean *= inv_c;
                let mut var = T::zero();
                for ci in 0..c {
                    let d = xd[base + ci * t + ti] - mean;
                    var += d * d;
                }
                var *= inv_c;
                let is = T::one() / (var + eps).sqrt();
                inv_std[bi * t + ti] = is;
                for ci in 0..c {
                    let i = base + ci * t + ti;
                    xhat[i] = (xd[i] - mean) * is;
                }
            }
        }
        let out: Vec<T> = xhat
            .iter()
            .enumerate()
            .map(|(i, &h)| {
                let ci = (i / t) % c;
                h * gm.data()[ci] + bt.data()[ci]
            })
            .collect();
        let y = Tensor::new(x.shape(), out)?;
        Ok(self.tape().record(y, &[self, gamma, beta], move |g, needs| {
            let mut gx = needs[0].then(|| vec![T::zero(); g.len()]);
            let mut gg = needs[1].then(|| vec![T::zero(); c]);
            let mut gb = needs[2].then(|| vec![T::zero(); c]);
            for bi in 0..b {
                let base = bi * c * t;
                for ti in 0..t {
                    let mut mean_d = T::zero();
                    let mut mean_dx = T::zero();
                    for ci in 0..c {
                        let i = base + ci * t + ti;
                        let d = g[i] * gm.data()[ci];
                        mean_d += d;
                        mean_dx += d * xhat[i];
                        if let Some(gg) = gg.as_mut() {
                            gg[ci] += g[i] * xhat[i];
                        }
                        if let Some(gb) = gb.as_mut() {
                            gb[ci] += g[i];
                        }
                    }
                    if let Some(gx) = gx.as_mut() {
                        mean_d *= inv_c;
                        mean_dx *= inv_c;
                        let is = inv_std[bi * t + ti];
                        for ci in 0..c {
                            let i = base + ci * t + ti;
                            let d = g[i] * gm.data()[ci];
                            gx[i] = is * (d - mean_d - xhat[i] * mean_dx);
                        }
                    }
                }
            }
            vec![gx, gg, gb]
        }))
    }

    /// Global response normalization on `[batch, channels, time]`:
    /// `g_c = ||x_c||_2` over time, `n_c = g_c / (mean_c g + eps)`,
    /// `y = gamma * x * n + beta + x`.
    pub fn grn(self, gamma: Var<'t, T>, beta: Var<'t, T>, eps: T) -> Result<Var<'t, T>> {
        if eps <= T::zero() {
            return Err(Error::InvalidArgument("grn eps must be > 0".into()));
        }
        let x = self.value();
        let (b, c, t) = dims3("grn", x.shape())?;
        let gm = gamma.value();
        let bt = beta.value();
        check_affine("grn", &gm, c)?;
        check_affine("grn", &bt, c)?;
        let xd = x.data();
        let mut norms = vec![T::zero(); b * c];
        let mut denom = vec![T::zero(); b];
        let mut n = vec![T::zero(); b * c];
        for bi in 0..b {
            for ci in 0..c {
                let row = &xd[(bi * c + ci) * t..(bi * c + ci + 1) * t];
                norms[bi * c + ci] = row.iter().map(|&v| v * v).sum::<T>().sqrt();
            }
            let mean = norms[bi * c..(bi + 1) * c].iter().copied().sum::<T>() / T::lit(c as f64);
            denom[bi] = mean + eps;
            for ci in 0..c {
                n[bi * c + ci] = norms[bi * c + ci] / denom[bi];
            }
        }
        let mut out = vec![T::zero(); xd.len()];
        for bi in 0..b {
            for ci in 0..c {
                let scale = gm.data()[ci] * n[bi * c + ci] + T::one();
                let shift = bt.data()[ci];
                let r = (bi * c + ci) * t..(bi * c + ci + 1) * t;
                for (o, &v) in out[r.clone()].iter_mut().zip(&xd[r]) {
                    *o = v * scale + shift;
                }
            }
        }
        let y = Tensor::new(x.shape(), out)?;
        Ok(self.tape().record(y, &[self, gamma, beta], move |g, needs| {
            let xd = x.data();
            let mut gx = needs[0].then(|| vec![T::zero(); g.len()]);
            let mut gg = needs[1].then(|| vec![T::zero(); c]);
            let mut gb = needs[2].then(|| vec![T::zero(); c]);
            let inv_c = T::one() / T::lit(c as f64);
            for bi in 0..b {
                // dL/dn_c
                let mut gn = vec![T::zero(); c];
                for ci in 0..c {
                    let r = (bi * c + ci) * t..(bi * c + ci + 1) * t;
                    let gx_dot: T = g[r.clone()].iter().zip(&xd[r.clone()]).map(|(&a, &b)| a * b).sum();
                    let gsum: T = g[r.clone()].iter().copied().sum();
                    gn[ci] = gm.data()[ci] * gx_dot;
                    if let Some(gg) = gg.as_mut() {
                        gg[ci] += gx_dot * n[bi * c + ci];
                    }
                    if let Some(gb) = gb.as_mut() {
                        gb[ci] += gsum;
                    }
                }
                let Some(gx) = gx.as_mut() else { continue };
                let d = denom[bi];
                let cross: T = (0..c).map(|j| gn[j] * norms[bi * c + j]).sum::<T>() / (d * d);
                for ci in 0..c {
                    let gnorm = gn[ci] / d - cross * inv_c;
                    let nc = norms[bi * c + ci];
                    let scale = gm.data()[ci] * n[bi * c + ci] + T::one();
                    let r = (bi * c + ci) * t..(bi * c + ci + 1) * t;
                    for ((o, &gv), &xv) in gx[r.clone()].iter_mut().zip(&g[r.clone()]).zip(&xd[r]) {
                        *o = gv * scale
                            + if nc > T::zero() { gnorm * xv / nc } else { T::zero() };
                    }
                }
            }
            vec![gx, gg, gb]
        }))
    }
}
