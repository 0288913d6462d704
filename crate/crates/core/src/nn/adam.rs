use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 0.001, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self { learning_rate, ..Self::default() }
    }
}

/// First/second moment estimates mirroring the trainable parameters.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let (m, v) = params.into_iter().map(|p| (Tensor::zeros(p.shape()), Tensor::zeros(p.shape()))).unzip();
        Self { config, m, v, t: 0 }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step<T: Scalar>(params: &mut [&mut Tensor<T>], grads: &[Tensor<T>], state: &mut AdamState<T>) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam_step: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::Shape(format!("adam_step: {:?} vs grad {:?}", p.shape(), g.shape())));
        }
    }
    state.t += 1;
    let c = state.config;
    let t = state.t as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    let (b1, b2) = (T::c(c.beta1), T::c(c.beta2));
    let (ob1, ob2) = (T::c(1.0 - c.beta1), T::c(1.0 - c.beta2));
    let (inv_bc1, inv_bc2) = (T::c(1.0 / bc1), T::c(1.0 / bc2));
    let (lr, eps) = (T::c(c.learning_rate), T::c(c.epsilon));
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for (((pv, &gv), mv), vv) in
            p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut().iter_mut()).zip(v.data_mut().iter_mut())
        {
            *mv = b1 * *mv + ob1 * gv;
            *vv = b2 * *vv + ob2 * gv * gv;
            let m_hat = *mv * inv_bc1;
            let v_hat = *vv * inv_bc2;
            *pv = *pv - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(steps: usize, g: f64, lr: f64) -> f64 {
        let mut p = Tensor::<f64>::zeros(&[1]);
        let mut st = AdamState::new(AdamConfig::with_learning_rate(lr), [&p]);
        for _ in 0..steps {
            adam_step(&mut [&mut p], &[Tensor::full(&[1], g)], &mut st).unwrap();
        }
        p.data()[0]
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        assert!((run(1, 1.0, 0.001) + 0.001).abs() < 1e-8);
        assert!((run(2, 1.0, 0.001) + 0.002).abs() < 1e-8);
        assert_eq!(run(3, 0.0, 0.001), 0.0);
        assert_eq!(run(5, 3.0, 0.0), 0.0);
    }

    #[test]
    fn second_moment_stays_non_negative() {
        let mut p = Tensor::<f64>::new(vec![3], vec![1.0, -1.0, 0.0]).unwrap();
        let mut st = AdamState::new(AdamConfig::default(), [&p]);
        for i in 0..10 {
            let g = Tensor::new(vec![3], vec![(i as f64).sin(), -2.0, 0.5]).unwrap();
            adam_step(&mut [&mut p], &[g], &mut st).unwrap();
        }
        assert_eq!(st.t, 10);
        assert!(st.v[0].data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn shape_mismatch() {
        let mut p = Tensor::<f64>::zeros(&[2]);
        let mut st = AdamState::new(AdamConfig::default(), [&p]);
        assert!(adam_step(&mut [&mut p], &[Tensor::zeros(&[3])], &mut st).is_err());
        assert_eq!(st.t, 0);
    }
}
