use crate::numerics::{Float, Tensor, Var};

impl<'t, T: Float> Var<'t, T> {
    /// Sum of all elements, as a scalar.
    pub fn sum(self) -> Var<'t, T> {
        let x = self.value();
        let n = x.numel();
        let s = x.data().iter().copied().sum();
        self.tape()
            .record(Tensor::scalar(s), &[self], move |g, _| vec![Some(vec![g[0]; n])])
    }

    /// Mean of all elements, as a scalar.
    pub fn mean(self) -> Var<'t, T> {
        let n = self.value().numel().max(1);
        self.sum().scale(T::one() / T::lit(n as f64))
    }
}
