use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::graph::Gradients;
use super::params::ModelParams;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// First and second moment estimates per trainable tensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, Moments>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

/// One Adam update of every trainable tensor in place. Frozen tensors are
/// never written.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(invalid("learning rate must be positive and finite"));
    }
    let names: Vec<String> = params
        .iter()
        .filter(|(_, p)| p.trainable)
        .map(|(n, _)| n.clone())
        .collect();
    for name in &names {
        let g = grads.get(name).ok_or_else(|| Error::MissingParam(name.clone()))?;
        let p = params.get(name)?;
        if g.shape() != p.tensor.shape() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                left: p.tensor.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
        if !g.all_finite() {
            return Err(Error::NonFinite { op: "adam_step" });
        }
    }

    state.step += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let t = state.step as f64;
    let bc1 = 1.0 - libm::pow(beta1, t);
    let bc2 = 1.0 - libm::pow(beta2, t);

    for name in names {
        let g = grads.get(&name).expect("checked above");
        let p = params.get_mut(&name)?;
        let n = p.tensor.len();
        let mom = state.moments.entry(name).or_insert_with(|| Moments {
            m: vec![0.0; n],
            v: vec![0.0; n],
        });
        for ((w, &gi), (m, v)) in p
            .tensor
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(mom.m.iter_mut().zip(mom.v.iter_mut()))
        {
            *m = beta1 * *m + (1.0 - beta1) * gi;
            *v = beta2 * *v + (1.0 - beta2) * gi * gi;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *w -= lr * mhat / (libm::sqrt(vhat) + eps);
        }
    }
    Ok(())
}
