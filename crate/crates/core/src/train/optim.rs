use crate::arch::ParamStore;
use crate::tensor::{Real, Tensor};
use crate::{Error, Result};

/// Mean absolute error and its gradient `sign(pred - target) / count`,
/// with `sign(0) = 0`.
pub fn l1_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            "l1_loss",
            "numel",
            pred.numel(),
            target.numel(),
        ));
    }
    let n = pred.numel();
    let inv = T::from_f64(1.0 / n as f64);
    let mut sum = 0.0f64;
    let grad: Vec<T> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            sum += d.abs().as_f64();
            if d > T::zero() {
                inv
            } else if d < T::zero() {
                -inv
            } else {
                T::zero()
            }
        })
        .collect();
    Ok((sum / n as f64, Tensor::from_vec(pred.shape(), grad)?))
}

/// Adam hyperparameters and the step-halving learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr0: f64,
    pub halve_every: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr0: 1e-4,
            halve_every: 400_000,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    /// Learning rate after `completed` updates: `lr0 · 2^-⌊completed / halve_every⌋`.
    pub fn learning_rate(&self, completed: u64) -> f64 {
        let halvings = (completed / self.halve_every).min(1074) as i32;
        self.lr0 * 0.5f64.powi(halvings)
    }
}

/// First and second moments per canonical parameter.
#[derive(Debug, Clone)]
pub struct AdamState<T: Real = f32> {
    pub m: ParamStore<T>,
    pub v: ParamStore<T>,
    /// Completed updates.
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        AdamState {
            m: store.zeros_like(),
            v: store.zeros_like(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of every canonical parameter. Returns the
/// learning rate used.
pub fn adam_step<T: Real>(
    store: &mut ParamStore<T>,
    grads: &ParamStore<T>,
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<f64> {
    let lr = cfg.learning_rate(state.t);
    let t = state.t + 1;
    let bc1 = 1.0 - cfg.beta1.powi(t.min(i32::MAX as u64) as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t.min(i32::MAX as u64) as i32);
    let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
    let (one, eps) = (T::one(), T::from_f64(cfg.epsilon));
    let step = T::from_f64(lr / bc1);
    let inv_bc2 = T::from_f64(1.0 / bc2);

    for (name, p) in store.iter_mut() {
        let g = grads.param(name)?;
        let m = state
            .m
            .get_mut(name)
            .ok_or_else(|| Error::MissingParam(format!("adam m.{name}")))?;
        if g.shape() != p.shape() || m.shape() != p.shape() {
            return Err(Error::shape("adam_step", "numel", p.numel(), g.numel()));
        }
        let v = state
            .v
            .get_mut(name)
            .ok_or_else(|| Error::MissingParam(format!("adam v.{name}")))?;
        for (((p, &g), m), v) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            *p = *p - step * *m / ((*v * inv_bc2).sqrt() + eps);
        }
    }
    state.t = t;
    Ok(lr)
}
