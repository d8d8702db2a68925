//! Parameter updates: adaptive-subgradient (Adagrad) for the recommender
//! and graph encoder, Adam with decoupled weight decay for the language
//! backend. Projection-vector parameters are renormalized after each step.

use crate::autodiff::{Gradients, ParamId, ParamStore, Tensor, Var};
use crate::error::{KirsError, Result};

/// Optimizer family selector.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Adagrad,
    AdamW,
}

impl std::str::FromStr for OptimizerKind {
    type Err = KirsError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adagrad" => Ok(OptimizerKind::Adagrad),
            "adamw" => Ok(OptimizerKind::AdamW),
            other => Err(KirsError::Config(format!("unknown optimizer '{other}'"))),
        }
    }
}

/// Accumulate squared gradients; divide the learning rate by the root of
/// the accumulator (ε = 1e-10 inside the root). L2 regularization is added
/// to the gradients before accumulation.
pub struct Adagrad {
    lr: f64,
    l2: f64,
    eps: f64,
}

impl Adagrad {
    pub fn new(lr: f64, l2: f64) -> Self {
        Adagrad {
            lr,
            l2,
            eps: 1e-10,
        }
    }

    pub fn step(
        &mut self,
        store: &mut ParamStore,
        targets: &[(ParamId, Var)],
        grads: &Gradients,
    ) -> Result<()> {
        for &(id, var) in targets {
            let g = match grads.get(var) {
                Some(g) => g.clone(),
                None => Tensor::zeros(store.value(id).rows(), store.value(id).cols()),
            };
            if g.data().iter().any(|v| !v.is_finite()) {
                return Err(KirsError::contract(format!(
                    "non-finite gradient for parameter {}",
                    store.slot(id).name
                )));
            }
            let slot = store.slot_mut(id);
            if slot.adagrad_acc.is_none() {
                slot.adagrad_acc = Some(Tensor::zeros(slot.value.rows(), slot.value.cols()));
            }
            let acc = slot.adagrad_acc.as_mut().unwrap();
            for ((theta, acc_v), g_raw) in slot
                .value
                .data_mut()
                .iter_mut()
                .zip(acc.data_mut().iter_mut())
                .zip(g.data().iter())
            {
                let g_total = g_raw + self.l2 * *theta;
                *acc_v += g_total * g_total;
                *theta -= self.lr * g_total / (*acc_v + self.eps).sqrt();
            }
        }
        store.renormalize_unit_rows();
        Ok(())
    }
}

/// Adam with decoupled weight decay (the language-backend optimizer).
pub struct AdamW {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }

    pub fn step(
        &mut self,
        store: &mut ParamStore,
        targets: &[(ParamId, Var)],
        grads: &Gradients,
    ) -> Result<()> {
        for &(id, var) in targets {
            let g = match grads.get(var) {
                Some(g) => g.clone(),
                None => continue,
            };
            if g.data().iter().any(|v| !v.is_finite()) {
                return Err(KirsError::contract(format!(
                    "non-finite gradient for parameter {}",
                    store.slot(id).name
                )));
            }
            let slot = store.slot_mut(id);
            if slot.adam_m.is_none() {
                slot.adam_m = Some(Tensor::zeros(slot.value.rows(), slot.value.cols()));
                slot.adam_v = Some(Tensor::zeros(slot.value.rows(), slot.value.cols()));
            }
            slot.adam_t += 1;
            let t = slot.adam_t as f64;
            let bc1 = 1.0 - self.beta1.powf(t);
            let bc2 = 1.0 - self.beta2.powf(t);
            let m = slot.adam_m.as_mut().unwrap().data_mut();
            let v = slot.adam_v.as_mut().unwrap();
            for (((theta, m_v), v_v), g_v) in slot
                .value
                .data_mut()
                .iter_mut()
                .zip(m.iter_mut())
                .zip(v.data_mut().iter_mut())
                .zip(g.data().iter())
            {
                *m_v = self.beta1 * *m_v + (1.0 - self.beta1) * g_v;
                *v_v = self.beta2 * *v_v + (1.0 - self.beta2) * g_v * g_v;
                let m_hat = *m_v / bc1;
                let v_hat = *v_v / bc2;
                *theta -= self.lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * *theta);
            }
        }
        store.renormalize_unit_rows();
        Ok(())
    }
}
