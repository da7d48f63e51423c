//! Adam with bias correction, state keyed by parameter id.

use std::collections::BTreeMap;

use crate::arch::Network;
use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamTensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    /// Betas in the usual order, `(0.9, 0.999)`, with the default learning rate.
    pub fn conventional() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            ..AdamConfig::default()
        }
    }
}

impl Default for AdamConfig {
    /// `lr = 1e-4, beta1 = 0.99, beta2 = 0.9, epsilon = 1e-8`.
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.99,
            beta2: 0.9,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    /// Completed steps.
    pub t: u64,
    pub m: BTreeMap<ParamId, Vec<f64>>,
    pub v: BTreeMap<ParamId, Vec<f64>>,
}

impl AdamState {
    /// Zero moments for every parameter in `params`.
    pub fn for_params<'a>(params: impl IntoIterator<Item = &'a ParamTensor>, config: AdamConfig) -> Self {
        let mut m = BTreeMap::new();
        let mut v = BTreeMap::new();
        for p in params {
            m.insert(p.id, vec![0.0; p.value.len()]);
            v.insert(p.id, vec![0.0; p.value.len()]);
        }
        AdamState { config, t: 0, m, v }
    }

    /// One update of every parameter from its gradient buffer.
    ///
    /// Validates the whole parameter set before touching anything, so a
    /// failed step leaves both state and parameters unchanged.
    pub fn step_params(&mut self, params: &mut [&mut ParamTensor]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::StateMismatch(format!(
                "{} parameters given, state tracks {}",
                params.len(),
                self.m.len()
            )));
        }
        for p in params.iter() {
            let m = self
                .m
                .get(&p.id)
                .ok_or_else(|| Error::StateMismatch(format!("no moments for parameter {}", p.id)))?;
            if m.len() != p.value.len() {
                return Err(Error::StateMismatch(format!("moment length differs for parameter {}", p.id)));
            }
            if p.grad().is_none() {
                return Err(Error::MissingGradient(p.id));
            }
        }

        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.t as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for p in params.iter_mut() {
            let m = self.m.get_mut(&p.id).expect("checked above");
            let v = self.v.get_mut(&p.id).expect("moments come in pairs");
            let grad = p.value.grad().expect("checked above").to_vec();
            for (((theta, g), m), v) in p.value.data_mut().iter_mut().zip(grad).zip(m).zip(v) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *theta -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

pub fn adam_init(net: &Network, config: AdamConfig) -> AdamState {
    AdamState::for_params(net.params(), config)
}

pub fn adam_step(state: &mut AdamState, net: &mut Network) -> Result<()> {
    let mut params = net.params_mut();
    state.step_params(&mut params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{build, NetworkSpec, Vertex};
    use crate::tensor::{Shape, Tensor};

    fn scalar(v: f64) -> ParamTensor {
        ParamTensor::new(ParamId(0), Tensor::filled(Shape::matrix(1, 1), v))
    }

    #[test]
    fn default_hyperparameters() {
        let c = AdamConfig::default();
        assert_eq!((c.lr, c.beta1, c.beta2, c.epsilon), (1e-4, 0.99, 0.9, 1e-8));
        let c = AdamConfig::conventional();
        assert_eq!((c.beta1, c.beta2), (0.9, 0.999));
    }

    #[test]
    fn init_covers_network_ids_with_zero_moments() {
        let net = build(&NetworkSpec::new(Vertex::V8, 3, (3, 8, 8)).with_filter_divisor(16)).unwrap();
        let s = adam_init(&net, AdamConfig::default());
        let ids: Vec<ParamId> = net.params().iter().map(|p| p.id).collect();
        assert_eq!(s.m.keys().copied().collect::<Vec<_>>(), ids);
        assert!(s.m.values().chain(s.v.values()).all(|m| m.iter().all(|&x| x == 0.0)));
        assert_eq!(s.t, 0);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = scalar(0.5);
        let mut s = AdamState::for_params([&p], AdamConfig::default());
        p.accumulate_grad(&[0.0]).unwrap();
        s.step_params(&mut [&mut p]).unwrap();
        assert_eq!(p.value.data(), &[0.5]);
    }

    #[test]
    fn first_step_with_unit_gradient() {
        let mut p = scalar(1.0);
        let cfg = AdamConfig::default();
        let mut s = AdamState::for_params([&p], cfg);
        p.accumulate_grad(&[1.0]).unwrap();
        s.step_params(&mut [&mut p]).unwrap();
        // m_hat = v_hat = 1 after correction
        let expected = 1.0 - cfg.lr / (1.0 + cfg.epsilon);
        assert!((p.value.data()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn descends_convex_scalar() {
        let mut p = scalar(1.0);
        let mut s = AdamState::for_params([&p], AdamConfig::default());
        let mut prev = 1.0;
        for _ in 0..10 {
            let theta = p.value.data()[0];
            p.zero_grad();
            p.accumulate_grad(&[2.0 * theta]).unwrap();
            s.step_params(&mut [&mut p]).unwrap();
            let f = p.value.data()[0].powi(2);
            assert!(f < prev);
            prev = f;
        }
    }

    #[test]
    fn missing_gradient_is_an_error_and_changes_nothing() {
        let mut net = build(&NetworkSpec::new(Vertex::V1, 3, (3, 8, 8)).with_filter_divisor(16)).unwrap();
        let mut s = adam_init(&net, AdamConfig::default());
        let before = net.clone();
        assert!(matches!(adam_step(&mut s, &mut net), Err(Error::MissingGradient(_))));
        assert_eq!(net, before);
        assert_eq!(s.t, 0);
    }

    #[test]
    fn foreign_state_is_rejected() {
        let mut a = build(&NetworkSpec::new(Vertex::V1, 3, (3, 8, 8)).with_filter_divisor(16)).unwrap();
        let b = build(&NetworkSpec::new(Vertex::V6, 3, (3, 8, 8)).with_filter_divisor(16)).unwrap();
        let mut s = adam_init(&b, AdamConfig::default());
        assert!(matches!(adam_step(&mut s, &mut a), Err(Error::StateMismatch(_))));
    }
}
