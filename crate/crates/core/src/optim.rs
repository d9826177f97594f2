//! Adam with explicit, serializable moment buffers.

use serde::{Deserialize, Serialize};
use tch::{nn, Kind, Tensor};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        AdamConfig {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
        }
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("{what} learning rate must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{what} {name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("{what} eps must be positive")));
        }
        Ok(())
    }
}

#[derive(Debug)]
struct Slot {
    name: String,
    param: Tensor,
    m: Tensor,
    v: Tensor,
}

/// Adam over the trainable variables of one var store, visited in name order.
#[derive(Debug)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    slots: Vec<Slot>,
}

impl Adam {
    pub fn new(vs: &nn::VarStore, config: AdamConfig) -> Adam {
        let mut vars: Vec<(String, Tensor)> = vs
            .variables()
            .into_iter()
            .filter(|(_, t)| t.requires_grad())
            .collect();
        vars.sort_by(|a, b| a.0.cmp(&b.0));
        let slots = vars
            .into_iter()
            .map(|(name, param)| Slot {
                name,
                m: param.zeros_like().detach(),
                v: param.zeros_like().detach(),
                param,
            })
            .collect();
        Adam {
            config,
            step: 0,
            slots,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn zero_grad(&mut self) {
        for s in &mut self.slots {
            s.param.zero_grad();
        }
    }

    /// Applies one update from the accumulated gradients. Parameters without
    /// a gradient are left untouched.
    pub fn step(&mut self) {
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        tch::no_grad(|| {
            for s in &mut self.slots {
                let g = s.param.grad();
                if !g.defined() {
                    continue;
                }
                let _ = s.m.g_mul_scalar_(beta1).g_add_(&(&g * (1.0 - beta1)));
                let _ = s.v.g_mul_scalar_(beta2).g_add_(&(g.square() * (1.0 - beta2)));
                let denom = (&s.v / bc2).sqrt() + eps;
                let update = (&s.m / bc1) / denom * lr;
                let _ = s.param.g_sub_(&update);
            }
        });
    }

    /// Moment buffers keyed by variable name, for checkpointing.
    pub fn state(&self) -> Vec<(String, &Tensor, &Tensor)> {
        self.slots.iter().map(|s| (s.name.clone(), &s.m, &s.v)).collect()
    }

    /// Restores moments and the step counter. Every slot must be present.
    pub fn load_state(&mut self, step: u64, lookup: impl Fn(&str) -> Option<(Tensor, Tensor)>) -> Result<()> {
        for s in &mut self.slots {
            let (m, v) = lookup(&s.name).ok_or_else(|| {
                Error::Checkpoint(format!("optimizer state for `{}` is missing", s.name))
            })?;
            if m.size() != s.param.size() || v.size() != s.param.size() {
                return Err(Error::Checkpoint(format!(
                    "optimizer state for `{}` has shape {:?}, expected {:?}",
                    s.name,
                    m.size(),
                    s.param.size()
                )));
            }
            tch::no_grad(|| {
                s.m.copy_(&m.to_kind(Kind::Float));
                s.v.copy_(&v.to_kind(Kind::Float));
            });
        }
        self.step = step;
        Ok(())
    }
}
