use serde::{Deserialize, Serialize};

use super::{Gradients, ParamStore};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    /// Per-step learning-rate decay: the effective rate is `lr / (1 + decay * step)`.
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            decay: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.decay >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid optimizer settings {self:?}"
            )))
        }
    }
}

/// Moment estimates of one parameter. `t` counts the updates this parameter
/// actually received, which drives its bias correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: AdamConfig,
    /// Number of `step` calls so far; drives the learning-rate decay.
    pub step: u64,
    slots: Vec<Option<Moments>>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        Self {
            config,
            step: 0,
            slots: vec![None; store.len()],
        }
    }

    pub fn moments(&self, index: usize) -> Option<&Moments> {
        self.slots.get(index).and_then(Option::as_ref)
    }

    pub fn effective_learning_rate(&self) -> f64 {
        self.config.learning_rate / (1.0 + self.config.decay * self.step as f64)
    }

    /// One Adam update. Parameters without a gradient are left untouched,
    /// including their moments.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        if self.slots.len() != store.len() || grads.len() != store.len() {
            return Err(Error::Shape(
                "optimizer, gradients and parameters disagree in size".into(),
            ));
        }
        for (id, g) in grads.iter() {
            if !g.all_finite() {
                return Err(Error::TrainingFault(format!(
                    "non-finite gradient for {}",
                    store.param(id).name
                )));
            }
            if g.shape() != store.get(id).shape() {
                return Err(Error::Shape(format!(
                    "gradient shape mismatch for {}",
                    store.param(id).name
                )));
            }
        }
        let AdamConfig {
            beta1: b1,
            beta2: b2,
            epsilon: eps,
            ..
        } = self.config;
        let lr = self.effective_learning_rate();
        for (id, g) in grads.iter() {
            if !store.param(id).role.trainable() {
                continue;
            }
            let slot = self.slots[id.0].get_or_insert_with(|| Moments {
                m: vec![0.0; g.len()],
                v: vec![0.0; g.len()],
                t: 0,
            });
            slot.t += 1;
            let c1 = 1.0 - b1.powi(slot.t as i32);
            let c2 = 1.0 - b2.powi(slot.t as i32);
            let value = store.get_mut(id).data_mut();
            for (((p, gv), m), v) in value
                .iter_mut()
                .zip(g.data())
                .zip(&mut slot.m)
                .zip(&mut slot.v)
            {
                *m = b1 * *m + (1.0 - b1) * gv;
                *v = b2 * *v + (1.0 - b2) * gv * gv;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        self.step += 1;
        Ok(())
    }
}

pub fn adam_step(
    state: &mut OptimizerState,
    store: &mut ParamStore,
    grads: &Gradients,
) -> Result<()> {
    state.step(store, grads)
}
