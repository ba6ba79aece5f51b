use crate::error::{Error, Result};
use crate::numerics::{Float, Tensor, Var};

/// Splits a shape around `axis` into (outer, axis length, inner).
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Index into a reflect-padded signal: `-1 -> 1`, `len -> len - 2`, repeating
/// for pads longer than the signal.
pub fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

impl<'t, T: Float> Var<'t, T> {
    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t, T>> {
        let x = self.value();
        let y = x.as_ref().clone().reshape(shape)?;
        Ok(self
            .tape()
            .record(y, &[self], |g, _| vec![Some(g.to_vec())]))
    }

    /// Concatenation along `axis`; all other dimensions must agree.
    pub fn concat(parts: &[Var<'t, T>], axis: usize) -> Result<Var<'t, T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::dim("concat of zero tensors"))?;
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let base = values[0].shape().to_vec();
        if axis >= base.len() {
            return Err(Error::dim(format!("concat axis {axis} out of range")));
        }
        let mut lens = Vec::with_capacity(parts.len());
        for v in &values {
            let s = v.shape();
            if s.len() != base.len()
                || s.iter()
                    .zip(&base)
                    .enumerate()
                    .any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(Error::dim(format!(
                    "concat: incompatible shapes {:?} and {base:?}",
                    s
                )));
            }
            lens.push(s[axis]);
        }
        let total: usize = lens.iter().sum();
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (v, &l) in values.iter().zip(&lens) {
                out.extend_from_slice(&v.data()[o * l * inner..(o + 1) * l * inner]);
            }
        }
        let y = Tensor::new(&shape, out)?;
        Ok(first.tape().record(y, parts, move |g, needs| {
            let mut grads: Vec<Option<Vec<T>>> = needs
                .iter()
                .zip(&lens)
                .map(|(&n, &l)| n.then(|| Vec::with_capacity(outer * l * inner)))
                .collect();
            for o in 0..outer {
                let mut off = o * total * inner;
                for (gp, &l) in grads.iter_mut().zip(&lens) {
                    if let Some(gp) = gp {
                        gp.extend_from_slice(&g[off..off + l * inner]);
                    }
                    off += l * inner;
                }
            }
            grads
        }))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        let shape = x.shape().to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::dim(format!(
                "narrow({axis}, {start}, {len}) out of range for {shape:?}"
            )));
        }
        let (outer, full, inner) = split_axis(&shape, axis);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            out.extend_from_slice(&x.data()[base..base + len * inner]);
        }
        let mut oshape = shape.clone();
        oshape[axis] = len;
        let y = Tensor::new(&oshape, out)?;
        let n = x.numel();
        Ok(self.tape().record(y, &[self], move |g, _| {
            let mut gx = vec![T::zero(); n];
            for o in 0..outer {
                let base = (o * full + start) * inner;
                gx[base..base + len * inner]
                    .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(gx)]
        }))
    }

    /// Forward difference along `axis`: `y[i] = x[i + 1] - x[i]`, one shorter.
    pub fn diff(self, axis: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        let shape = x.shape().to_vec();
        if axis >= shape.len() || shape[axis] < 2 {
            return Err(Error::dim(format!("diff along {axis} of {shape:?}")));
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let mut out = Vec::with_capacity(outer * (len - 1) * inner);
        let xd = x.data();
        for o in 0..outer {
            for i in 0..len - 1 {
                let a = (o * len + i) * inner;
                let b = a + inner;
                out.extend((0..inner).map(|j| xd[b + j] - xd[a + j]));
            }
        }
        let mut oshape = shape.clone();
        oshape[axis] = len - 1;
        let y = Tensor::new(&oshape, out)?;
        let n = x.numel();
        Ok(self.tape().record(y, &[self], move |g, _| {
            let mut gx = vec![T::zero(); n];
            for o in 0..outer {
                for i in 0..len - 1 {
                    let gi = (o * (len - 1) + i) * inner;
                    let a = (o * len + i) * inner;
                    let b = a + inner;
                    for j in 0..inner {
                        gx[b + j] += g[gi + j];
                        gx[a + j] -= g[gi + j];
                    }
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Reflect-pads the last axis on the right by `pad` samples.
    pub fn reflect_pad_right(self, pad: usize) -> Result<Var<'t, T>> {
        if pad == 0 {
            return Ok(self);
        }
        let x = self.value();
        let shape = x.shape().to_vec();
        let len = *shape.last().ok_or_else(|| Error::dim("pad of a scalar"))?;
        if len == 0 {
            return Err(Error::dim("reflect pad of an empty axis"));
        }
        let rows = x.numel() / len;
        let olen = len + pad;
        let src: Vec<usize> = (0..olen).map(|i| reflect_index(i as isize, len)).collect();
        let xd = x.data();
        let mut out = Vec::with_capacity(rows * olen);
        for r in 0..rows {
            out.extend(src.iter().map(|&s| xd[r * len + s]));
        }
        let mut oshape = shape.clone();
        *oshape.last_mut().unwrap() = olen;
        let y = Tensor::new(&oshape, out)?;
        Ok(self.tape().record(y, &[self], move |g, _| {
            let mut gx = vec![T::zero(); rows * len];
            for r in 0..rows {
                for (i, &s) in src.iter().enumerate() {
                    gx[r * len + s] += g[r * olen + i];
                }
            }
            vec![Some(gx)]
        }))
    }
}
