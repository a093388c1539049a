use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Adam hyperparameters. Defaults: lr 1e-4, betas 0.9 / 0.999, epsilon 1e-8.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Step counter and first/second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub config: AdamConfig,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[Tensor<T>], config: AdamConfig) -> Self {
        Self {
            step: 0,
            m: params.iter().map(Tensor::zeros_like).collect(),
            v: params.iter().map(Tensor::zeros_like).collect(),
            config,
        }
    }

    pub fn reset(&mut self) {
        self.step = 0;
        for t in self.m.iter_mut().chain(self.v.iter_mut()) {
            t.data_mut().fill(T::zero());
        }
    }
}

/// One bias-corrected Adam update of every parameter tensor.
pub fn adam_step<T: Scalar>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![params.len()],
            actual: vec![grads.len(), state.m.len()],
        });
    }
    for ((p, g), (m, v)) in params.iter().zip(grads).zip(state.m.iter().zip(&state.v)) {
        g.expect_shape(p.shape())?;
        m.expect_shape(p.shape())?;
        v.expect_shape(p.shape())?;
    }
    state.step += 1;
    let c = state.config;
    let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
    let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
    let t = state.step as i32;
    let bc1 = T::one() - T::lit(c.beta1.powi(t));
    let bc2 = T::one() - T::lit(c.beta2.powi(t));
    let (lr, eps) = (T::lit(c.lr), T::lit(c.epsilon));
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (((pv, &gv), mv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mv = b1 * *mv + one_b1 * gv;
            *vv = b2 * *vv + one_b2 * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *pv -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
