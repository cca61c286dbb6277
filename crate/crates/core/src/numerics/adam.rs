use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ModelParams, Tensor};

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
            lr: 0.0015,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub m: Tensor,
    pub v: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub moments: BTreeMap<String, Moments>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }
}

/// One bias-corrected Adam update over every parameter, in name order.
/// Gradients are zeroed afterwards. No parameter is touched if any gradient
/// is non-finite.
pub fn adam_step(params: &mut ModelParams, state: &mut AdamState) -> Result<()> {
    for (name, p) in params.iter() {
        if !p.grad.is_finite() {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
    }

    state.step += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    let t = state.step as i32;
    let bias1 = 1.0 - beta1.powi(t);
    let bias2 = 1.0 - beta2.powi(t);

    for (name, p) in params.iter_mut() {
        let mom = state.moments.entry(name.clone()).or_insert_with(|| Moments {
            m: Tensor::zeros(p.value.shape()),
            v: Tensor::zeros(p.value.shape()),
        });
        let grads = p.grad.data();
        let m = mom.m.data_mut();
        let v = mom.v.data_mut();
        let w = p.value.data_mut();
        for i in 0..w.len() {
            let g = grads[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    params.zero_grad();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_params(value: f64, grad: f64) -> ModelParams {
        let mut p = ModelParams::new();
        p.insert("w", Tensor::scalar(value));
        let mut g = crate::numerics::Gradients::new();
        g.add("w", &Tensor::scalar(grad)).unwrap();
        p.accumulate(&g).unwrap();
        p
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar_params(0.0, 1.0);
        let mut s = AdamState::new(AdamConfig::default());
        adam_step(&mut p, &mut s).unwrap();
        // m_hat = 1, v_hat = 1 at t = 1.
        let expected = -0.0015 / (1.0 + 1e-8);
        assert_eq!(p.value("w").unwrap().data()[0], expected);
        assert!((expected + 0.0015).abs() < 1e-10);
        assert_eq!(p.grad("w").unwrap().data()[0], 0.0);
    }

    #[test]
    fn zero_gradient_from_fresh_state_is_noop() {
        let mut p = scalar_params(0.7, 0.0);
        let mut s = AdamState::new(AdamConfig::default());
        adam_step(&mut p, &mut s).unwrap();
        assert_eq!(p.value("w").unwrap().data()[0], 0.7);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = scalar_params(0.0, f64::NAN);
        let mut s = AdamState::new(AdamConfig::default());
        let err = adam_step(&mut p, &mut s).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient(ref n) if n == "w"));
        assert_eq!(s.step, 0);
    }

    #[test]
    fn deterministic_across_runs() {
        let run = || {
            let mut p = scalar_params(0.3, 0.25);
            let mut s = AdamState::new(AdamConfig::default());
            for _ in 0..5 {
                let mut g = crate::numerics::Gradients::new();
                g.add("w", &Tensor::scalar(0.1)).unwrap();
                p.accumulate(&g).unwrap();
                adam_step(&mut p, &mut s).unwrap();
            }
            p.value("w").unwrap().data()[0].to_bits()
        };
        assert_eq!(run(), run());
    }
}
