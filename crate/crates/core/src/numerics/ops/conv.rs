use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{gemm, Float, MatRef, Tensor, Var};

/// Geometry of a 1-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv1dOpts {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Default for Conv1dOpts {
    fn default() -> Self {
        Conv1dOpts {
            stride: 1,
            padding: 0,
            groups: 1,
        }
    }
}

impl Conv1dOpts {
    /// Stride 1, "same" padding for an odd kernel.
    pub fn same(kernel: usize) -> Self {
        Conv1dOpts {
            padding: kernel / 2,
            ..Default::default()
        }
    }
}

/// Geometry of a 2-D convolution, as (height, width) pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dOpts {
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

pub fn conv1d_out_len(t: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = t + 2 * padding;
    (padded >= k && stride >= 1 && k >= 1).then(|| (padded - k) / stride + 1)
}

/// `cols[(c, j), t] = x[c, t * stride + j - pad]`, zero outside.
#[allow(clippy::too_many_arguments)]
fn im2col_1d<T: Float>(
    x: &[T],
    channels: usize,
    len: usize,
    k: usize,
    stride: usize,
    pad: usize,
    out_len: usize,
    cols: &mut [T],
) {
    for c in 0..channels {
        let xc = &x[c * len..(c + 1) * len];
        for j in 0..k {
            let row = &mut cols[(c * k + j) * out_len..(c * k + j + 1) * out_len];
            for (t, v) in row.iter_mut().enumerate() {
                let i = (t * stride + j) as isize - pad as isize;
                *v = if i >= 0 && (i as usize) < len {
                    xc[i as usize]
                } else {
                    T::zero()
                };
            }
        }
    }
}

/// Adjoint of [`im2col_1d`]: scatter-adds columns back into `x`.
#[allow(clippy::too_many_arguments)]
fn col2im_1d<T: Float>(
    cols: &[T],
    channels: usize,
    len: usize,
    k: usize,
    stride: usize,
    pad: usize,
    out_len: usize,
    x: &mut [T],
) {
    for c in 0..channels {
        let xc = &mut x[c * len..(c + 1) * len];
        for j in 0..k {
            let row = &cols[(c * k + j) * out_len..(c * k + j + 1) * out_len];
            for (t, &v) in row.iter().enumerate() {
                let i = (t * stride + j) as isize - pad as isize;
                if i >= 0 && (i as usize) < len {
                    xc[i as usize] += v;
                }
            }
        }
    }
}

fn check_bias<T: Float>(bias: Option<&Tensor<T>>, channels: usize) -> Result<()> {
    if let Some(b) = bias {
        if b.shape() != [channels] {
            return Err(Error::dim(format!(
                "bias shape {:?}, expected [{channels}]",
                b.shape()
            )));
        }
    }
    Ok(())
}

fn add_bias<T: Float>(out: &mut [T], bias: &[T], rows_len: usize) {
    for (chunk, &b) in out.chunks_mut(rows_len).zip(bias.iter().cycle()) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn bias_grad<T: Float>(g: &[T], channels: usize, rows_len: usize) -> Vec<T> {
    let mut gb = vec![T::zero(); channels];
    for (i, chunk) in g.chunks(rows_len).enumerate() {
        gb[i % channels] += chunk.iter().copied().sum::<T>();
    }
    gb
}

impl<'t, T: Float> Var<'t, T> {
    /// 1-D cross-correlation of `self: [batch, in_ch, time]` with
    /// `weight: [out_ch, in_ch / groups, k]`.
    pub fn conv1d(
        self,
        weight: Var<'t, T>,
        bias: Option<Var<'t, T>>,
        opts: Conv1dOpts,
    ) -> Result<Var<'t, T>> {
        let x = self.value();
        let w = weight.value();
        let b = bias.map(|b| b.value());
        let (xs, ws) = (x.shape(), w.shape());
        if xs.len() != 3 || ws.len() != 3 {
            return Err(Error::dim(format!(
                "conv1d expects 3-D input and weight, got {xs:?} and {ws:?}"
            )));
        }
        let (batch, cin, tin) = (xs[0], xs[1], xs[2]);
        let (cout, cin_g, k) = (ws[0], ws[1], ws[2]);
        let groups = opts.groups;
        if groups == 0 || cin % groups != 0 || cout % groups != 0 || cin / groups != cin_g {
            return Err(Error::dim(format!(
                "conv1d: input channels {cin}, weight {ws:?}, groups {groups} are inconsistent"
            )));
        }
        check_bias(b.as_deref(), cout)?;
        let tout = conv1d_out_len(tin, k, opts.stride, opts.padding).ok_or_else(|| {
            Error::dim(format!(
                "conv1d: length {tin} with padding {} is shorter than kernel {k}",
                opts.padding
            ))
        })?;
        let cout_g = cout / groups;
        let depthwise = cin_g == 1 && cout_g == 1;
        let pointwise = k == 1 && opts.stride == 1 && opts.padding == 0;
        let geom = Geometry1d {
            tin,
            tout,
            k,
            stride: opts.stride,
            pad: opts.padding,
        };

        let mut out = vec![T::zero(); batch * cout * tout];
        let mut cols = vec![T::zero(); if pointwise || depthwise { 0 } else { cin_g * k * tout }];
        for bi in 0..batch {
            for g in 0..groups {
                let xin = &x.data()[(bi * cin + g * cin_g) * tin..(bi * cin + (g + 1) * cin_g) * tin];
                let wg = &w.data()[g * cout_g * cin_g * k..(g + 1) * cout_g * cin_g * k];
                let og = &mut out[(bi * cout + g * cout_g) * tout..(bi * cout + (g + 1) * cout_g) * tout];
                if depthwise {
                    depthwise_forward(xin, wg, og, &geom);
                } else if pointwise {
                    gemm(MatRef::new(wg, cout_g, cin_g), MatRef::new(xin, cin_g, tin), og, false);
                } else {
                    im2col_1d(xin, cin_g, tin, k, geom.stride, geom.pad, tout, &mut cols);
                    gemm(
                        MatRef::new(wg, cout_g, cin_g * k),
                        MatRef::new(&cols, cin_g * k, tout),
                        og,
                        false,
                    );
                }
            }
        }
        if let Some(b) = &b {
            add_bias(&mut out, b.data(), tout);
        }
        let y = Tensor::new(&[batch, cout, tout], out)?;

        let mut parents = vec![self, weight];
        parents.extend(bias);
        Ok(self.tape().record(y, &parents, move |gout, needs| {
            let mut gx = needs[0].then(|| vec![T::zero(); x.numel()]);
            let mut gw = needs[1].then(|| vec![T::zero(); w.numel()]);
            let mut cols = vec![T::zero(); if pointwise || depthwise { 0 } else { cin_g * k * tout }];
            let mut gcols = vec![T::zero(); if pointwise || depthwise { 0 } else { cin_g * k * tout }];
            for bi in 0..batch {
                for g in 0..groups {
                    let xr = (bi * cin + g * cin_g) * tin..(bi * cin + (g + 1) * cin_g) * tin;
                    let wr = g * cout_g * cin_g * k..(g + 1) * cout_g * cin_g * k;
                    let orr = (bi * cout + g * cout_g) * tout..(bi * cout + (g + 1) * cout_g) * tout;
                    let xin = &x.data()[xr.clone()];
                    let wg = &w.data()[wr.clone()];
                    let go = &gout[orr];
                    if depthwise {
                        depthwise_backward(
                            xin,
                            wg,
                            go,
                            gx.as_mut().map(|v| &mut v[xr.clone()]),
                            gw.as_mut().map(|v| &mut v[wr.clone()]),
                            &geom,
                        );
                        continue;
                    }
                    if pointwise {
                        if let Some(gw) = gw.as_mut() {
                            gemm(MatRef::new(go, cout_g, tout), MatRef::new(xin, cin_g, tin).t(), &mut gw[wr.clone()], true);
                        }
                        if let Some(gx) = gx.as_mut() {
                            gemm(MatRef::new(wg, cout_g, cin_g).t(), MatRef::new(go, cout_g, tout), &mut gx[xr.clone()], true);
                        }
                        continue;
                    }
                    if let Some(gw) = gw.as_mut() {
                        im2col_1d(xin, cin_g, tin, k, geom.stride, geom.pad, tout, &mut cols);
                        gemm(
                            MatRef::new(go, cout_g, tout),
                            MatRef::new(&cols, cin_g * k, tout).t(),
                            &mut gw[wr.clone()],
                            true,
                        );
                    }
                    if let Some(gx) = gx.as_mut() {
                        gemm(
                            MatRef::new(wg, cout_g, cin_g * k).t(),
                            MatRef::new(go, cout_g, tout),
                            &mut gcols,
                            false,
                        );
                        col2im_1d(&gcols, cin_g, tin, k, geom.stride, geom.pad, tout, &mut gx[xr.clone()]);
                    }
                }
            }
            let mut grads = vec![gx, gw];
            if needs.len() > 2 {
                grads.push(needs[2].then(|| bias_grad(gout, cout, tout)));
            }
            grads
        }))
    }

    /// Transposed 1-D convolution (adjoint of [`Var::conv1d`]) of
    /// `self: [batch, in_ch, time]` with `weight: [in_ch, out_ch, k]`.
    pub fn conv_transpose1d(
        self,
        weight: Var<'t, T>,
        bias: Option<Var<'t, T>>,
        stride: usize,
        padding: usize,
    ) -> Result<Var<'t, T>> {
        let x = self.value();
        let w = weight.value();
        let b = bias.map(|b| b.value());
        let (xs, ws) = (x.shape(), w.shape());
        if xs.len() != 3 || ws.len() != 3 || xs[1] != ws[0] {
            return Err(Error::dim(format!(
                "conv_transpose1d: input {xs:?} incompatible with weight {ws:?}"
            )));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("stride must be >= 1".into()));
        }
        let (batch, cin, tin) = (xs[0], xs[1], xs[2]);
        let (cout, k) = (ws[1], ws[2]);
        check_bias(b.as_deref(), cout)?;
        let full = (tin.max(1) - 1) * stride + k;
        if tin == 0 || full < 2 * padding + 1 {
            return Err(Error::dim(format!(
                "conv_transpose1d: length {tin} too short for padding {padding}"
            )));
        }
        let tout = full - 2 * padding;

        let mut out = vec![T::zero(); batch * cout * tout];
        let mut cols = vec![T::zero(); cout * k * tin];
        for bi in 0..batch {
            let xb = &x.data()[bi * cin * tin..(bi + 1) * cin * tin];
            gemm(
                MatRef::new(w.data(), cin, cout * k).t(),
                MatRef::new(xb, cin, tin),
                &mut cols,
                false,
            );
            col2im_1d(&cols, cout, tout, k, stride, padding, tin, &mut out[bi * cout * tout..(bi + 1) * cout * tout]);
        }
        if let Some(b) = &b {
            add_bias(&mut out, b.data(), tout);
        }
        let y = Tensor::new(&[batch, cout, tout], out)?;

        let mut parents = vec![self, weight];
        parents.extend(bias);
        Ok(self.tape().record(y, &parents, move |gout, needs| {
            let mut gx = needs[0].then(|| vec![T::zero(); x.numel()]);
            let mut gw = needs[1].then(|| vec![T::zero(); w.numel()]);
            let mut gcols = vec![T::zero(); cout * k * tin];
            for bi in 0..batch {
                let go = &gout[bi * cout * tout..(bi + 1) * cout * tout];
                im2col_1d(go, cout, tout, k, stride, padding, tin, &mut gcols);
                if let Some(gx) = gx.as_mut() {
                    gemm(
                        MatRef::new(w.data(), cin, cout * k),
                        MatRef::new(&gcols, cout * k, tin),
                        &mut gx[bi * cin * tin..(bi + 1) * cin * tin],
                        false,
                    );
                }
                if let Some(gw) = gw.as_mut() {
                    let xb = &x.data()[bi * cin * tin..(bi + 1) * cin * tin];
                    gemm(MatRef::new(xb, cin, tin), MatRef::new(&gcols, cout * k, tin).t(), gw, true);
                }
            }
            let mut grads = vec![gx, gw];
            if needs.len() > 2 {
                grads.push(needs[2].then(|| bias_grad(gout, cout, tout)));
            }
            grads
        }))
    }

    /// 2-D cross-correlation of `self: [batch, in_ch, h, w]` with
    /// `weight: [out_ch, in_ch, kh, kw]`.
    pub fn conv2d(
        self,
        weight: Var<'t, T>,
        bias: Option<Var<'t, T>>,
        opts: Conv2dOpts,
    ) -> Result<Var<'t, T>> {
        let x = self.value();
        let w = weight.value();
        let b = bias.map(|b| b.value());
        let (xs, ws) = (x.shape(), w.shape());
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] {
            return Err(Error::dim(format!(
                "conv2d: input {xs:?} incompatible with weight {ws:?}"
            )));
        }
        let (batch, cin, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, kh, kw) = (ws[0], ws[2], ws[3]);
        check_bias(b.as_deref(), cout)?;
        let (sh, sw) = opts.stride;
        let (ph, pw) = opts.padding;
        let (Some(oh), Some(ow)) = (conv1d_out_len(h, kh, sh, ph), conv1d_out_len(wd, kw, sw, pw)) else {
            return Err(Error::dim(format!(
                "conv2d: input {h}x{wd} too small for kernel {kh}x{kw}"
            )));
        };
        let g = Geometry2d {
            cin,
            h,
            w: wd,
            kh,
            kw,
            sh,
            sw,
            ph,
            pw,
            oh,
            ow,
        };
        let rows = cin * kh * kw;
        let direct = sw == 1 && cout <= DIRECT_CONV2D_MAX_OUT;
        let mut out = vec![T::zero(); batch * cout * oh * ow];
        let mut cols = vec![T::zero(); if direct { 0 } else { rows * oh * ow }];
        for bi in 0..batch {
            if direct {
                let xb = &x.data()[bi * cin * h * wd..(bi + 1) * cin * h * wd];
                let ob = &mut out[bi * cout * oh * ow..(bi + 1) * cout * oh * ow];
                direct_2d(&g, cout, |co, ci, a, bb, oy, iy, (ox0, ix0, n)| {
                    let wv = w.data()[((co * cin + ci) * kh + a) * kw + bb];
                    let src = &xb[(ci * h + iy) * wd + ix0..][..n];
                    let dst = &mut ob[(co * oh + oy) * ow + ox0..][..n];
                    dst.iter_mut().zip(src).for_each(|(d, &s)| *d += wv * s);
                });
                continue;
            }
            let xb = &x.data()[bi * cin * h * wd..(bi + 1) * cin * h * wd];
            im2col_2d(xb, &g, &mut cols);
            gemm(
                MatRef::new(w.data(), cout, rows),
                MatRef::new(&cols, rows, oh * ow),
                &mut out[bi * cout * oh * ow..(bi + 1) * cout * oh * ow],
                false,
            );
        }
        if let Some(b) = &b {
            add_bias(&mut out, b.data(), oh * ow);
        }
        let y = Tensor::new(&[batch, cout, oh, ow], out)?;

        let mut parents = vec![self, weight];
        parents.extend(bias);
        Ok(self.tape().record(y, &parents, move |gout, needs| {
            let mut gx = needs[0].then(|| vec![T::zero(); x.numel()]);
            let mut gw = needs[1].then(|| vec![T::zero(); w.numel()]);
            let mut cols = vec![T::zero(); if direct { 0 } else { rows * oh * ow }];
            for bi in 0..batch {
                let go = &gout[bi * cout * oh * ow..(bi + 1) * cout * oh * ow];
                if direct {
                    let xoff = bi * cin * h * wd;
                    let xb = &x.data()[xoff..xoff + cin * h * wd];
                    let mut gxb = gx.as_mut().map(|gx| &mut gx[xoff..xoff + cin * h * wd]);
                    let mut gwb = gw.as_deref_mut();
                    direct_2d(&g, cout, |co, ci, a, bb, oy, iy, (ox0, ix0, n)| {
                        let widx = ((co * cin + ci) * kh + a) * kw + bb;
                        let grow = &go[(co * oh + oy) * ow + ox0..][..n];
                        let xo = (ci * h + iy) * wd + ix0;
                        if let Some(gw) = gwb.as_deref_mut() {
                            let xrow = &xb[xo..xo + n];
                            gw[widx] += grow.iter().zip(xrow).fold(T::zero(), |acc, (&g, &x)| acc + g * x);
                        }
                        if let Some(gx) = gxb.as_deref_mut() {
                            let wv = w.data()[widx];
                            gx[xo..xo + n].iter_mut().zip(grow).for_each(|(d, &g)| *d += wv * g);
                        }
                    });
                    continue;
                }
                if let Some(gw) = gw.as_mut() {
                    let xb = &x.data()[bi * cin * h * wd..(bi + 1) * cin * h * wd];
                    im2col_2d(xb, &g, &mut cols);
                    gemm(MatRef::new(go, cout, oh * ow), MatRef::new(&cols, rows, oh * ow).t(), gw, true);
                }
                if let Some(gx) = gx.as_mut() {
                    gemm(MatRef::new(w.data(), cout, rows).t(), MatRef::new(go, cout, oh * ow), &mut cols, false);
                    col2im_2d(&cols, &g, &mut gx[bi * cin * h * wd..(bi + 1) * cin * h * wd]);
                }
            }
            let mut grads = vec![gx, gw];
            if needs.len() > 2 {
                grads.push(needs[2].then(|| bias_grad(gout, cout, oh * ow)));
            }
            grads
        }))
    }

    /// `m · x` per batch item, for a constant `m: [r, k]` and `x: [batch, k, n]`.
    pub fn matmul_const_left(self, m: Arc<Tensor<T>>) -> Result<Var<'t, T>> {
        let x = self.value();
        let (xs, ms) = (x.shape(), m.shape());
        if xs.len() != 3 || ms.len() != 2 || ms[1] != xs[1] {
            return Err(Error::dim(format!(
                "matmul: {ms:?} cannot left-multiply {xs:?}"
            )));
        }
        let (batch, kdim, n) = (xs[0], xs[1], xs[2]);
        let r = ms[0];
        let mut out = vec![T::zero(); batch * r * n];
        for bi in 0..batch {
            gemm(
                MatRef::new(m.data(), r, kdim),
                MatRef::new(&x.data()[bi * kdim * n..(bi + 1) * kdim * n], kdim, n),
                &mut out[bi * r * n..(bi + 1) * r * n],
                false,
            );
        }
        let y = Tensor::new(&[batch, r, n], out)?;
        Ok(self.tape().record(y, &[self], move |g, _| {
            let mut gx = vec![T::zero(); batch * kdim * n];
            for bi in 0..batch {
                gemm(
                    MatRef::new(m.data(), r, kdim).t(),
                    MatRef::new(&g[bi * r * n..(bi + 1) * r * n], r, n),
                    &mut gx[bi * kdim * n..(bi + 1) * kdim * n],
                    false,
                );
            }
            vec![Some(gx)]
        }))
    }
}

struct Geometry1d {
    tin: usize,
    tout: usize,
    k: usize,
    stride: usize,
    pad: usize,
}

fn depthwise_forward<T: Float>(x: &[T], w: &[T], out: &mut [T], g: &Geometry1d) {
    for (t, o) in out.iter_mut().enumerate().take(g.tout) {
        let mut acc = T::zero();
        for (j, &wj) in w.iter().enumerate().take(g.k) {
            let i = (t * g.stride + j) as isize - g.pad as isize;
            if i >= 0 && (i as usize) < g.tin {
                acc += wj * x[i as usize];
            }
        }
        *o = acc;
    }
}

fn depthwise_backward<T: Float>(
    x: &[T],
    w: &[T],
    go: &[T],
    mut gx: Option<&mut [T]>,
    mut gw: Option<&mut [T]>,
    g: &Geometry1d,
) {
    for (t, &gt) in go.iter().enumerate().take(g.tout) {
        for j in 0..g.k {
            let i = (t * g.stride + j) as isize - g.pad as isize;
            if i >= 0 && (i as usize) < g.tin {
                let i = i as usize;
                if let Some(gx) = gx.as_deref_mut() {
                    gx[i] += gt * w[j];
                }
                if let Some(gw) = gw.as_deref_mut() {
                    gw[j] += gt * x[i];
                }
            }
        }
    }
}

/// Below this many output channels a stride-1 (along width) conv2d runs as
/// row-wise multiply-adds; the im2col matrix would dominate otherwise.
const DIRECT_CONV2D_MAX_OUT: usize = 8;

/// Visits every (out channel, in channel, tap, output row) with the valid
/// contiguous span `(first output col, first input col, len)`. Requires `sw == 1`.
fn direct_2d<F>(g: &Geometry2d, cout: usize, mut f: F)
where
    F: FnMut(usize, usize, usize, usize, usize, usize, (usize, usize, usize)),
{
    for bb in 0..g.kw {
        let ox0 = g.pw.saturating_sub(bb);
        let ox1 = g.ow.min((g.w + g.pw).saturating_sub(bb));
        if ox1 <= ox0 {
            continue;
        }
        let ix0 = ox0 + bb - g.pw;
        for co in 0..cout {
            for ci in 0..g.cin {
                for a in 0..g.kh {
                    for oy in 0..g.oh {
                        let iy = (oy * g.sh + a) as isize - g.ph as isize;
                        if iy < 0 || iy as usize >= g.h {
                            continue;
                        }
                        f(co, ci, a, bb, oy, iy as usize, (ox0, ix0, ox1 - ox0));
                    }
                }
            }
        }
    }
}

struct Geometry2d {
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
}

fn im2col_2d<T: Float>(x: &[T], g: &Geometry2d, cols: &mut [T]) {
    let plane = g.oh * g.ow;
    for c in 0..g.cin {
        for a in 0..g.kh {
            for bb in 0..g.kw {
                let row = ((c * g.kh + a) * g.kw + bb) * plane;
                for oy in 0..g.oh {
                    let iy = (oy * g.sh + a) as isize - g.ph as isize;
                    let dst = &mut cols[row + oy * g.ow..row + (oy + 1) * g.ow];
                    if iy < 0 || iy as usize >= g.h {
                        dst.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &x[(c * g.h + iy as usize) * g.w..(c * g.h + iy as usize + 1) * g.w];
                    for (ox, v) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.sw + bb) as isize - g.pw as isize;
                        *v = if ix >= 0 && (ix as usize) < g.w {
                            src[ix as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
            }
        }
    }
}

fn col2im_2d<T: Float>(cols: &[T], g: &Geometry2d, x: &mut [T]) {
    let plane = g.oh * g.ow;
    for c in 0..g.cin {
        for a in 0..g.kh {
            for bb in 0..g.kw {
                let row = ((c * g.kh + a) * g.kw + bb) * plane;
                for oy in 0..g.oh {
                    let iy = (oy * g.sh + a) as isize - g.ph as isize;
                    if iy < 0 || iy as usize >= g.h {
                        continue;
                    }
                    let base = (c * g.h + iy as usize) * g.w;
                    for ox in 0..g.ow {
                        let ix = (ox * g.sw + bb) as isize - g.pw as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            x[base + ix as usize] += cols[row + oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}
