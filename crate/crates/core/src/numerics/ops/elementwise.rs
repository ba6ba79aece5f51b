use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::numerics::{Float, Tensor, Var};

fn same_shape<T: Float>(op: &str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!(
            "{op}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Standard normal density.
#[inline]
fn normal_pdf<T: Float>(x: T) -> T {
    T::lit(1.0 / (2.0 * PI).sqrt()) * (-(x * x) / T::lit(2.0)).exp()
}

/// `x * Phi(x)` with the exact erf form.
#[inline]
pub fn gelu_scalar<T: Float>(x: T) -> T {
    x * T::lit(0.5) * (T::one() + (x * T::lit(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

/// Principal absolute value of a phase difference, in `[0, pi]`.
#[inline]
pub fn anti_wrap_scalar<T: Float>(x: T) -> T {
    let tau = T::lit(TAU);
    (x - tau * (x / tau).round()).abs()
}

impl<'t, T: Float> Var<'t, T> {
    fn unary<F, D>(self, f: F, df: D) -> Var<'t, T>
    where
        F: Fn(T) -> T,
        D: Fn(T, T) -> T + 'static,
    {
        let x = self.value();
        let y = x.map(f);
        let yd = y.data().to_vec();
        self.tape().record(y, &[self], move |g, _| {
            let gx = g
                .iter()
                .zip(x.data())
                .zip(&yd)
                .map(|((&g, &x), &y)| g * df(x, y))
                .collect();
            vec![Some(gx)]
        })
    }

    fn binary<F, D>(self, other: Var<'t, T>, op: &str, f: F, df: D) -> Result<Var<'t, T>>
    where
        F: Fn(T, T) -> T,
        D: Fn(T, T) -> (T, T) + 'static,
    {
        let a = self.value();
        let b = other.value();
        same_shape(op, &a, &b)?;
        let y = Tensor::new(
            a.shape(),
            a.data().iter().zip(b.data()).map(|(&a, &b)| f(a, b)).collect(),
        )?;
        Ok(self.tape().record(y, &[self, other], move |g, needs| {
            let mut ga = needs[0].then(|| Vec::with_capacity(g.len()));
            let mut gb = needs[1].then(|| Vec::with_capacity(g.len()));
            for ((&g, &a), &b) in g.iter().zip(a.data()).zip(b.data()) {
                let (da, db) = df(a, b);
                if let Some(v) = ga.as_mut() {
                    v.push(g * da);
                }
                if let Some(v) = gb.as_mut() {
                    v.push(g * db);
                }
            }
            vec![ga, gb]
        }))
    }

    pub fn add(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, "add", |a, b| a + b, |_, _| (T::one(), T::one()))
    }

    pub fn sub(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, "sub", |a, b| a - b, |_, _| (T::one(), -T::one()))
    }

    pub fn mul(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, "mul", |a, b| a * b, |a, b| (b, a))
    }

    /// Two-argument arctangent `atan2(self, x)`; range `(-pi, pi]`, with
    /// `atan2(0, 0) = 0` and a zero gradient there.
    pub fn atan2(self, x: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(
            x,
            "atan2",
            |y, x| {
                let p = y.atan2(x);
                if p <= -T::lit(PI) {
                    T::lit(PI)
                } else {
                    p
                }
            },
            |y, x| {
                let r2 = x * x + y * y;
                if r2 > T::zero() {
                    (x / r2, -y / r2)
                } else {
                    (T::zero(), T::zero())
                }
            },
        )
    }

    pub fn scale(self, c: T) -> Var<'t, T> {
        self.unary(move |x| x * c, move |_, _| c)
    }

    pub fn add_scalar(self, c: T) -> Var<'t, T> {
        self.unary(move |x| x + c, |_, _| T::one())
    }

    pub fn neg(self) -> Var<'t, T> {
        self.scale(-T::one())
    }

    pub fn square(self) -> Var<'t, T> {
        self.unary(|x| x * x, |x, _| T::lit(2.0) * x)
    }

    pub fn abs(self) -> Var<'t, T> {
        self.unary(|x| x.abs(), |x, _| sign(x))
    }

    pub fn exp(self) -> Var<'t, T> {
        self.unary(|x| x.exp(), |_, y| y)
    }

    pub fn ln(self) -> Var<'t, T> {
        self.unary(|x| x.ln(), |x, _| T::one() / x)
    }

    pub fn cos(self) -> Var<'t, T> {
        self.unary(|x| x.cos(), |x, _| -x.sin())
    }

    pub fn sin(self) -> Var<'t, T> {
        self.unary(|x| x.sin(), |x, _| x.cos())
    }

    pub fn relu(self) -> Var<'t, T> {
        self.unary(
            |x| x.max(T::zero()),
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn leaky_relu(self, slope: T) -> Var<'t, T> {
        self.unary(
            move |x| if x > T::zero() { x } else { x * slope },
            move |x, _| if x > T::zero() { T::one() } else { slope },
        )
    }

    /// Exact GELU, `x * Phi(x)`.
    pub fn gelu(self) -> Var<'t, T> {
        self.unary(gelu_scalar, |x, _| {
            let cdf = T::lit(0.5) * (T::one() + (x * T::lit(std::f64::consts::FRAC_1_SQRT_2)).erf());
            cdf + x * normal_pdf(x)
        })
    }

    /// `max(x, floor)`; gradient flows only where `x > floor`.
    pub fn clamp_min(self, floor: T) -> Var<'t, T> {
        self.unary(
            move |x| x.max(floor),
            move |x, _| if x > floor { T::one() } else { T::zero() },
        )
    }

    /// Elementwise [`anti_wrap_scalar`].
    pub fn anti_wrap(self) -> Var<'t, T> {
        self.unary(anti_wrap_scalar, |x, _| {
            let tau = T::lit(TAU);
            sign(x - tau * (x / tau).round())
        })
    }
}

#[inline]
fn sign<T: Float>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}
