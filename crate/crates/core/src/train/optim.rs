use crate::error::{dim_err, Result};
use crate::model::{ModelParams, Slot};
use crate::numkernel::Gradients;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moment estimates, mirroring the parameter shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Gradients,
    pub v: Gradients,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        OptimizerState {
            m: Gradients::zeros_like(params.set()),
            v: Gradients::zeros_like(params.set()),
            step: 0,
        }
    }
}

/// One Adam step with bias correction, followed by decoupled weight decay
/// `p -= lr·l2·p` on every weight tensor. The two attention biases are not
/// decayed.
pub fn optimizer_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut OptimizerState,
    lr: f64,
    l2: f64,
) -> Result<()> {
    if grads.len() != params.set().len() || state.m.len() != grads.len() {
        return Err(dim_err("gradient and optimizer state must mirror the parameters"));
    }
    for slot in Slot::ALL {
        let id = slot.id();
        if grads.shape_of(id) != params.get(slot).shape() {
            return Err(dim_err(format!(
                "gradient for {} has shape {}, parameter has {}",
                slot.name(),
                grads.shape_of(id),
                params.get(slot).shape()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for slot in Slot::ALL {
        let id = slot.id();
        let decay = if slot.is_bias() { 0.0 } else { lr * l2 };
        let g = grads.get(id).data();
        let m = state.m.slot_mut(id.0);
        for (mi, gi) in m.iter_mut().zip(g) {
            *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
        }
        let v = state.v.slot_mut(id.0);
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
        }
        let m = state.m.get(id).data();
        let v = state.v.get(id).data();
        let p = params.get_mut(slot).data_mut();
        for ((pi, mi), vi) in p.iter_mut().zip(m).zip(v) {
            let step = lr * (mi / c1) / ((vi / c2).sqrt() + ADAM_EPS);
            *pi -= step + decay * *pi;
        }
    }
    Ok(())
}
