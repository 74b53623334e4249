//! SGD with momentum and Adam, with weight decay folded into the gradient
//! (a single update path regardless of decay setting).

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerCfg {
    Sgd { momentum: f64, weight_decay: f64 },
    Adam { beta1: f64, beta2: f64, weight_decay: f64 },
}

pub const ADAM_EPS: f64 = 1e-8;

/// Optimizer with slot buffers parallel to the trainable entries.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd {
        momentum: f64,
        weight_decay: f64,
        velocity: HashMap<String, Vec<f32>>,
    },
    Adam {
        beta1: f64,
        beta2: f64,
        weight_decay: f64,
        step: u64,
        m: HashMap<String, Vec<f32>>,
        v: HashMap<String, Vec<f32>>,
    },
}

impl Optimizer {
    pub fn new(cfg: &OptimizerCfg) -> Optimizer {
        match *cfg {
            OptimizerCfg::Sgd { momentum, weight_decay } => Optimizer::Sgd {
                momentum,
                weight_decay,
                velocity: HashMap::new(),
            },
            OptimizerCfg::Adam { beta1, beta2, weight_decay } => Optimizer::Adam {
                beta1,
                beta2,
                weight_decay,
                step: 0,
                m: HashMap::new(),
                v: HashMap::new(),
            },
        }
    }

    /// Applies one update: g ← grad + wd·param, then the method's rule.
    pub fn step(
        &mut self,
        store: &mut ParamStore,
        grads: &HashMap<String, Tensor<f32>>,
        lr: f64,
    ) -> Result<()> {
        match self {
            Optimizer::Sgd {
                momentum,
                weight_decay,
                velocity,
            } => {
                let (mom, wd, lr) = (*momentum as f32, *weight_decay as f32, lr as f32);
                for entry in store.iter_mut().filter(|e| e.trainable) {
                    let grad = grads
                        .get(&entry.name)
                        .ok_or_else(|| Error::MissingGrad(entry.name.clone()))?;
                    let slot = velocity
                        .entry(entry.name.clone())
                        .or_insert_with(|| vec![0.0; entry.tensor.count()]);
                    for ((p, &g), v) in entry
                        .tensor
                        .data_mut()
                        .iter_mut()
                        .zip(grad.data())
                        .zip(slot.iter_mut())
                    {
                        let g = g + wd * *p;
                        *v = mom * *v + g;
                        *p -= lr * *v;
                    }
                }
                Ok(())
            }
            Optimizer::Adam {
                beta1,
                beta2,
                weight_decay,
                step,
                m,
                v,
            } => {
                *step += 1;
                let t = *step as f64;
                let (b1, b2, wd) = (*beta1 as f32, *beta2 as f32, *weight_decay as f32);
                let bc1 = 1.0 - (*beta1).powf(t);
                let bc2 = 1.0 - (*beta2).powf(t);
                for entry in store.iter_mut().filter(|e| e.trainable) {
                    let grad = grads
                        .get(&entry.name)
                        .ok_or_else(|| Error::MissingGrad(entry.name.clone()))?;
                    let ms = m
                        .entry(entry.name.clone())
                        .or_insert_with(|| vec![0.0; entry.tensor.count()]);
                    let vs = v
                        .entry(entry.name.clone())
                        .or_insert_with(|| vec![0.0; entry.tensor.count()]);
                    for (((p, &g), mi), vi) in entry
                        .tensor
                        .data_mut()
                        .iter_mut()
                        .zip(grad.data())
                        .zip(ms.iter_mut())
                        .zip(vs.iter_mut())
                    {
                        let g = g + wd * *p;
                        *mi = b1 * *mi + (1.0 - b1) * g;
                        *vi = b2 * *vi + (1.0 - b2) * g * g;
                        let mhat = *mi as f64 / bc1;
                        let vhat = *vi as f64 / bc2;
                        *p -= (lr * mhat / (vhat.sqrt() + ADAM_EPS)) as f32;
                    }
                }
                Ok(())
            }
        }
    }

    /// Slot buffers as named tensors for checkpointing, prefixed per slot
    /// kind; insertion into the checkpoint follows store order.
    pub fn export_slots(&self, store: &ParamStore) -> Vec<(String, Vec<f32>)> {
        let mut out = Vec::new();
        match self {
            Optimizer::Sgd { velocity, .. } => {
                for e in store.iter().filter(|e| e.trainable) {
                    if let Some(v) = velocity.get(&e.name) {
                        out.push((format!("opt.v.{}", e.name), v.clone()));
                    }
                }
            }
            Optimizer::Adam { m, v, step, .. } => {
                out.push(("opt.step".to_string(), vec![*step as f32]));
                for e in store.iter().filter(|e| e.trainable) {
                    if let Some(x) = m.get(&e.name) {
                        out.push((format!("opt.m.{}", e.name), x.clone()));
                    }
                    if let Some(x) = v.get(&e.name) {
                        out.push((format!("opt.v2.{}", e.name), x.clone()));
                    }
                }
            }
        }
        out
    }

    pub fn import_slots(&mut self, slots: &HashMap<String, Vec<f32>>) {
        match self {
            Optimizer::Sgd { velocity, .. } => {
                for (name, data) in slots {
                    if let Some(stripped) = name.strip_prefix("opt.v.") {
                        velocity.insert(stripped.to_string(), data.clone());
                    }
                }
            }
            Optimizer::Adam { m, v, step, .. } => {
                for (name, data) in slots {
                    if name == "opt.step" {
                        *step = data[0] as u64;
                    } else if let Some(s) = name.strip_prefix("opt.m.") {
                        m.insert(s.to_string(), data.clone());
                    } else if let Some(s) = name.strip_prefix("opt.v2.") {
                        v.insert(s.to_string(), data.clone());
                    }
                }
            }
        }
    }
}
