use serde::{Deserialize, Serialize};

use super::transformer::{Gradients, Transformer};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Step-function learning rate: the initial rate is halved once at each
/// milestone, so `lr(step) = initial · 2^-#{h : step >= h}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial_lr: f64,
    pub halving_steps: Vec<u64>,
}

impl LrSchedule {
    pub fn new(initial_lr: f64, halving_steps: Vec<u64>) -> Result<Self> {
        if !(initial_lr > 0.0 && initial_lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {initial_lr} must be positive")));
        }
        if halving_steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("halving steps must be strictly increasing".into()));
        }
        Ok(LrSchedule { initial_lr, halving_steps })
    }

    pub fn constant(lr: f64) -> Self {
        LrSchedule { initial_lr: lr, halving_steps: Vec::new() }
    }

    pub fn lr(&self, step: u64) -> f64 {
        let halvings = self.halving_steps.iter().filter(|&&h| step >= h).count();
        self.initial_lr * 0.5f64.powi(halvings as i32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<S> {
    pub m: Vec<S>,
    pub v: Vec<S>,
    pub step: u64,
    pub adam: AdamConfig,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(n_params: usize) -> Self {
        OptimizerState { m: vec![S::zero(); n_params], v: vec![S::zero(); n_params], step: 0, adam: AdamConfig::default() }
    }

    pub fn for_model(model: &Transformer<S>) -> Self {
        Self::new(model.param_count())
    }
}

/// One bias-corrected Adam update at the scheduled rate for the current
/// step, then `step += 1`.
pub fn apply_gradient_step<S: Scalar>(
    model: &mut Transformer<S>,
    opt: &mut OptimizerState<S>,
    grads: &Gradients,
    sched: &LrSchedule,
) -> Result<()> {
    let n = model.param_count();
    if grads.len() != n || opt.m.len() != n || opt.v.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "parameters {n}, gradients {}, moments {}/{}",
            grads.len(),
            opt.m.len(),
            opt.v.len()
        )));
    }
    if let Some(i) = grads.data.iter().position(|g| !g.is_finite()) {
        let name = model
            .layout()
            .tensors
            .iter()
            .find(|t| t.range().contains(&i))
            .map(|t| t.name.clone())
            .unwrap_or_default();
        return Err(Error::NonFiniteGradient(name));
    }
    let AdamConfig { beta1, beta2, eps } = opt.adam;
    let lr = sched.lr(opt.step);
    let t = (opt.step + 1) as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    let (m, v) = (&mut opt.m, &mut opt.v);
    model.update_params(|p| {
        for i in 0..p.len() {
            let g = grads.data[i];
            let mi = beta1 * m[i].f64() + (1.0 - beta1) * g;
            let vi = beta2 * v[i].f64() + (1.0 - beta2) * g * g;
            m[i] = S::of(mi);
            v[i] = S::of(vi);
            if g == 0.0 && mi == 0.0 {
                continue;
            }
            let update = lr * (mi / bc1) / ((vi / bc2).sqrt() + eps);
            p[i] = S::of(p[i].f64() - update);
        }
    });
    opt.step += 1;
    Ok(())
}
