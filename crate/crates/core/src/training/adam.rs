use apjfnn_autograd::{Gradients, ParamStore, Real};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let beta_ok = |b: f64| (0.0..1.0).contains(&b);
        if !(self.lr >= 0.0 && self.lr.is_finite())
            || !beta_ok(self.beta1)
            || !beta_ok(self.beta2)
            || !(self.eps > 0.0)
        {
            return Err(Error::Config(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// First and second moment buffers, one per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        let zeros: Vec<Vec<T>> = store
            .iter()
            .map(|(_, _, p)| vec![T::zero(); p.numel()])
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// One bias-corrected Adam update of every parameter.
    pub fn step(
        &mut self,
        store: &mut ParamStore<T>,
        grads: &Gradients<T>,
        cfg: &AdamConfig,
    ) -> Result<()> {
        if grads.len() != store.len() || self.m.len() != store.len() {
            return Err(Error::State(format!(
                "{} gradients and {} moment buffers for {} parameters",
                grads.len(),
                self.m.len(),
                store.len()
            )));
        }
        if let Some((id, _)) = grads.iter().find(|(_, g)| g.is_none()) {
            return Err(Error::State(format!(
                "no gradient for parameter {}",
                store.name(id)
            )));
        }
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (T::c(cfg.beta1), T::c(cfg.beta2));
        let (one_b1, one_b2) = (T::c(1.0 - cfg.beta1), T::c(1.0 - cfg.beta2));
        let corr1 = T::c(1.0 / (1.0 - cfg.beta1.powi(t)));
        let corr2 = T::c(1.0 / (1.0 - cfg.beta2.powi(t)));
        let (lr, eps) = (T::c(cfg.lr), T::c(cfg.eps));
        for (i, (id, g)) in grads.iter().enumerate() {
            let g = g.expect("checked above");
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let theta = store.get_mut(id).data_mut();
            for k in 0..theta.len() {
                m[k] = b1 * m[k] + one_b1 * g[k];
                v[k] = b2 * v[k] + one_b2 * g[k] * g[k];
                let m_hat = m[k] * corr1;
                let v_hat = v[k] * corr2;
                theta[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use apjfnn_autograd::{ParamId, Tensor};

    fn scalar_store(v: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("theta", Tensor::vector(vec![v]));
        s
    }

    #[test]
    fn first_step_from_zero() {
        let mut store = scalar_store(0.0);
        let mut st = AdamState::new(&store);
        let grads = Gradients::from_vec(vec![Some(vec![1.0])]);
        st.step(&mut store, &grads, &AdamConfig::default()).unwrap();
        let theta = store.get(ParamId(0)).data()[0];
        assert!((theta - (-0.001 / (1.0 + 1e-8))).abs() < 1e-15);
        assert!((theta + 0.000999999990).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut store = scalar_store(0.7);
        let mut st = AdamState::new(&store);
        let grads = Gradients::from_vec(vec![Some(vec![0.0])]);
        for _ in 0..3 {
            st.step(&mut store, &grads, &AdamConfig::default()).unwrap();
        }
        assert_eq!(store.get(ParamId(0)).data()[0], 0.7);
        assert_eq!(st.t, 3);
    }

    #[test]
    fn missing_gradient_names_parameter() {
        let mut store = scalar_store(0.0);
        let mut st = AdamState::new(&store);
        let err = st
            .step(&mut store, &Gradients::empty(1), &AdamConfig::default())
            .unwrap_err();
        assert!(
            matches!(err, Error::State(ref m) if m.contains("theta")),
            "{err}"
        );
        assert_eq!(st.t, 0);
    }

    #[test]
    fn matches_scalar_reference_over_many_steps() {
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        let mut store = scalar_store(0.3);
        let mut st = AdamState::new(&store);
        let (mut theta, mut m, mut v) = (0.3f64, 0.0f64, 0.0f64);
        for t in 1..=10 {
            let g = 2.0 * theta - 1.0;
            st.step(&mut store, &Gradients::from_vec(vec![Some(vec![g])]), &cfg)
                .unwrap();
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let m_hat = m / (1.0 - 0.9f64.powi(t));
            let v_hat = v / (1.0 - 0.999f64.powi(t));
            theta -= 0.01 * m_hat / (v_hat.sqrt() + 1e-8);
            assert!((store.get(ParamId(0)).data()[0] - theta).abs() < 1e-14);
        }
    }

    #[test]
    fn invalid_config() {
        assert!(AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        }
        .validate()
        .is_err());
        assert!(AdamConfig {
            lr: -1.0,
            ..AdamConfig::default()
        }
        .validate()
        .is_err());
        assert!(AdamConfig::default().validate().is_ok());
    }
}
