//! AdamW with decoupled weight decay and the warmup + cosine learning-rate schedule.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Tensor};

/// Learning rate at 0-based `step` of `total`: linear warmup over `ceil(ratio * total)` steps, then cosine to zero.
pub fn lr_schedule(step: usize, total: usize, base: f64, warmup_ratio: f64) -> Result<f64> {
    if total == 0 {
        return Err(Error::Config("schedule needs at least one step".into()));
    }
    if !(0.0..=1.0).contains(&warmup_ratio) {
        return Err(Error::Config(format!("warmup ratio {} outside [0, 1]", warmup_ratio)));
    }
    let w = (warmup_ratio * total as f64).ceil() as usize;
    if step < w {
        return Ok(base * (step + 1) as f64 / w as f64);
    }
    let span = (total - w).max(1) as f64;
    let progress = (step - w) as f64 / span;
    Ok(base * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamW {
    pub hp: AdamParams,
    pub weight_decay: f64,
    t: u64,
    m: BTreeMap<(String, String), Vec<f64>>,
    v: BTreeMap<(String, String), Vec<f64>>,
}

impl AdamW {
    pub fn new(hp: AdamParams, weight_decay: f64) -> Self {
        Self {
            hp,
            weight_decay,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Apply accumulated gradients (divided by `denom`) to every trainable tensor of `groups`, then zero them.
    /// A zero learning rate leaves the weights untouched.
    pub fn step(&mut self, params: &mut ParamStore, groups: &[String], lr: f64, denom: f64) -> Result<()> {
        self.t += 1;
        let (b1, b2) = (self.hp.beta1, self.hp.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for g in groups {
            let Some(group) = params.group(g) else { continue };
            let names: Vec<String> = group.iter().map(|(n, _)| n.clone()).collect();
            for n in names {
                let t = params.get(g, &n)?;
                let Some(grad) = t.grad() else { continue };
                let key = (g.clone(), n.clone());
                let m = self.m.entry(key.clone()).or_insert_with(|| vec![0.0; grad.len()]);
                let v = self.v.entry(key).or_insert_with(|| vec![0.0; grad.len()]);
                let mut w = t.data().to_vec();
                for i in 0..w.len() {
                    let gi = grad[i] / denom;
                    if !gi.is_finite() {
                        return Err(Error::NumericInput { op: "AdamW::step", index: i });
                    }
                    m[i] = b1 * m[i] + (1.0 - b1) * gi;
                    v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                    if lr > 0.0 {
                        let upd = (m[i] / c1) / ((v[i] / c2).sqrt() + self.hp.eps);
                        w[i] -= lr * (upd + self.weight_decay * w[i]);
                    }
                }
                if lr > 0.0 {
                    let (r, c) = t.shape();
                    params.set(g, &n, Tensor::param(r, c, w)?)?;
                } else {
                    t.zero_grad();
                }
            }
        }
        Ok(())
    }
}
