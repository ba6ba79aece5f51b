use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Float, ParamStore, Tensor};

/// AdamW hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 2e-4,
            beta1: 0.8,
            beta2: 0.99,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// AdamW with decoupled weight decay and bias correction. Holds one pair of
/// moment buffers per parameter of the store it was created for.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Float> AdamW<T> {
    pub fn new(store: &ParamStore<T>, config: AdamWConfig) -> Self {
        let zeros = || -> Vec<Tensor<T>> {
            store
                .iter()
                .map(|(_, p)| Tensor::zeros(p.value.shape()))
                .collect()
        };
        AdamW {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    /// Restores saved state; buffers must match the store's shapes.
    pub fn from_state(
        store: &ParamStore<T>,
        config: AdamWConfig,
        step: u64,
        first: Vec<Tensor<T>>,
        second: Vec<Tensor<T>>,
    ) -> Result<Self> {
        let opt = AdamW {
            config,
            step,
            first,
            second,
        };
        opt.check(store)?;
        Ok(opt)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor<T>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor<T>] {
        &self.second
    }

    fn check(&self, store: &ParamStore<T>) -> Result<()> {
        if self.first.len() != store.len() || self.second.len() != store.len() {
            return Err(Error::dim(format!(
                "optimizer tracks {} parameters, store has {}",
                self.first.len(),
                store.len()
            )));
        }
        for ((_, p), (m, v)) in store.iter().zip(self.first.iter().zip(&self.second)) {
            if m.shape() != p.value.shape() || v.shape() != p.value.shape() {
                return Err(Error::dim(format!(
                    "moment buffers of {} do not match shape {:?}",
                    p.name,
                    p.value.shape()
                )));
            }
        }
        Ok(())
    }

    /// One update of every parameter at learning rate `lr`. Missing gradients
    /// count as zero. A non-finite gradient rejects the whole step.
    pub fn step(&mut self, store: &mut ParamStore<T>, lr: f64) -> Result<()> {
        self.check(store)?;
        for (_, p) in store.iter() {
            if let Some(g) = &p.grad {
                if !g.is_finite() {
                    return Err(Error::NonFinite(format!("gradient of {}", p.name)));
                }
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bias1 = T::lit(1.0 - c.beta1.powi(t));
        let bias2 = T::lit(1.0 - c.beta2.powi(t));
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let lr_t = T::lit(lr);
        let decay = T::one() - T::lit(lr * c.weight_decay);
        let eps = T::lit(c.eps);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let i = id.index();
            let param = store.get_mut(id);
            let grad = param.grad.as_ref().map(|g| g.data());
            let value = std::sync::Arc::make_mut(&mut param.value);
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (j, p) in value.data_mut().iter_mut().enumerate() {
                let g = grad.map_or(T::zero(), |g| g[j]);
                m[j] = b1 * m[j] + (T::one() - b1) * g;
                v[j] = b2 * v[j] + (T::one() - b2) * g * g;
                let m_hat = m[j] / bias1;
                let v_hat = v[j] / bias2;
                *p = *p * decay - lr_t * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: &[f64]) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("w", Tensor::new(&[values.len()], values.to_vec()).unwrap());
        s
    }

    fn set_grad(s: &mut ParamStore<f64>, g: &[f64]) {
        let id = s.find("w").unwrap();
        s.get_mut(id).grad = Some(Tensor::new(&[g.len()], g.to_vec()).unwrap());
    }

    #[test]
    fn zero_gradient_applies_decay_only() {
        let mut s = store(&[1.0, -2.0]);
        set_grad(&mut s, &[0.0, 0.0]);
        let cfg = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.5,
            ..Default::default()
        };
        let mut opt = AdamW::new(&s, cfg);
        opt.step(&mut s, cfg.lr).unwrap();
        let w = s.get(s.find("w").unwrap()).value.data().to_vec();
        assert!((w[0] - 0.95).abs() < 1e-15);
        assert!((w[1] + 1.9).abs() < 1e-15);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let g = [0.3, -4.0, 1e-3];
        let mut s = store(&[0.0; 3]);
        set_grad(&mut s, &g);
        let cfg = AdamWConfig {
            lr: 0.01,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(&s, cfg);
        opt.step(&mut s, cfg.lr).unwrap();
        let w = s.get(s.find("w").unwrap()).value.data().to_vec();
        for (wi, gi) in w.iter().zip(g) {
            let want = -cfg.lr * gi / (gi.abs() + cfg.eps);
            assert!((wi - want).abs() < 1e-15, "{wi} vs {want}");
            assert!((wi + cfg.lr * gi.signum()).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut s = store(&[0.7, -0.1]);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(&s, cfg);
        for _ in 0..2 {
            set_grad(&mut s, &[0.0, 0.0]);
            opt.step(&mut s, cfg.lr).unwrap();
        }
        assert_eq!(s.get(s.find("w").unwrap()).value.data(), &[0.7, -0.1]);
        assert_eq!(opt.step_count(), 2);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut s = store(&[1.0]);
        set_grad(&mut s, &[f64::NAN]);
        let mut opt = AdamW::new(&s, AdamWConfig::default());
        assert!(matches!(opt.step(&mut s, 1e-3), Err(Error::NonFinite(_))));
        assert_eq!(opt.step_count(), 0);
        assert_eq!(s.get(s.find("w").unwrap()).value.data(), &[1.0]);
    }
}
