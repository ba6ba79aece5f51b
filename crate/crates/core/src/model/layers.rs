use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numerics::{Conv1dOpts, Conv2dOpts, Float, ParamId, ParamStore, Tape, Tensor, Var};

/// Registers freshly initialized parameters under a name prefix.
pub struct Builder<'a, T: Float> {
    pub store: &'a mut ParamStore<T>,
    pub rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl<'a, T: Float> Builder<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, rng: &'a mut ChaCha8Rng, prefix: &str) -> Self {
        Builder {
            store,
            rng,
            prefix: prefix.to_string(),
        }
    }

    pub fn sub(&mut self, name: &str) -> Builder<'_, T> {
        Builder {
            store: self.store,
            rng: self.rng,
            prefix: format!("{}.{name}", self.prefix),
        }
    }

    fn name(&self, leaf: &str) -> String {
        format!("{}.{leaf}", self.prefix)
    }

    pub fn uniform(&mut self, leaf: &str, shape: &[usize], bound: f64) -> ParamId {
        let rng = &mut *self.rng;
        let t = Tensor::from_fn(shape, |_| T::lit(rng.random_range(-bound..=bound)));
        let name = self.name(leaf);
        self.store.add(name, t)
    }

    pub fn constant(&mut self, leaf: &str, shape: &[usize], value: f64) -> ParamId {
        let name = self.name(leaf);
        self.store.add(name, Tensor::full(shape, T::lit(value)))
    }
}

/// Binds parameters of one store onto a tape.
#[derive(Clone, Copy)]
pub struct Bind<'a, 't, T: Float> {
    pub tape: &'t Tape<T>,
    pub store: &'a ParamStore<T>,
    /// Bind values as constants that receive no gradient.
    pub frozen: bool,
}

impl<'a, 't, T: Float> Bind<'a, 't, T> {
    pub fn new(tape: &'t Tape<T>, store: &'a ParamStore<T>) -> Self {
        Bind {
            tape,
            store,
            frozen: false,
        }
    }

    pub fn frozen(tape: &'t Tape<T>, store: &'a ParamStore<T>) -> Self {
        Bind {
            tape,
            store,
            frozen: true,
        }
    }

    pub fn p(&self, id: ParamId) -> Var<'t, T> {
        if self.frozen {
            self.tape.constant_arc(self.store.get(id).value.clone())
        } else {
            self.tape.param(self.store, id)
        }
    }
}

#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub opts: Conv1dOpts,
}

impl Conv1d {
    pub fn new<T: Float>(
        b: &mut Builder<'_, T>,
        cin: usize,
        cout: usize,
        kernel: usize,
        opts: Conv1dOpts,
    ) -> Self {
        let bound = 1.0 / ((cin / opts.groups * kernel) as f64).sqrt();
        Conv1d {
            weight: b.uniform("weight", &[cout, cin / opts.groups, kernel], bound),
            bias: b.uniform("bias", &[cout], bound),
            opts,
        }
    }

    pub fn forward<'t, T: Float>(&self, p: Bind<'_, 't, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        x.conv1d(p.p(self.weight), Some(p.p(self.bias)), self.opts)
    }
}

#[derive(Debug, Clone)]
pub struct ConvTranspose1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
}

impl ConvTranspose1d {
    pub fn new<T: Float>(b: &mut Builder<'_, T>, cin: usize, cout: usize, kernel: usize, stride: usize) -> Self {
        let bound = 1.0 / ((cout * kernel) as f64).sqrt();
        ConvTranspose1d {
            weight: b.uniform("weight", &[cin, cout, kernel], bound),
            bias: b.uniform("bias", &[cout], bound),
            stride,
        }
    }

    pub fn forward<'t, T: Float>(&self, p: Bind<'_, 't, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        x.conv_transpose1d(p.p(self.weight), Some(p.p(self.bias)), self.stride, 0)
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub opts: Conv2dOpts,
}

impl Conv2d {
    pub fn new<T: Float>(
        b: &mut Builder<'_, T>,
        cin: usize,
        cout: usize,
        kernel: (usize, usize),
        opts: Conv2dOpts,
    ) -> Self {
        let bound = 1.0 / ((cin * kernel.0 * kernel.1) as f64).sqrt();
        Conv2d {
            weight: b.uniform("weight", &[cout, cin, kernel.0, kernel.1], bound),
            bias: b.uniform("bias", &[cout], bound),
            opts,
        }
    }

    pub fn forward<'t, T: Float>(&self, p: Bind<'_, 't, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        x.conv2d(p.p(self.weight), Some(p.p(self.bias)), self.opts)
    }
}
