//! AdamW with decoupled weight decay:
//!
//! ```text
//! m ← β₁m + (1−β₁)g
//! v ← β₂v + (1−β₂)g²
//! m̂ = m / (1−β₁ᵗ),  v̂ = v / (1−β₂ᵗ)
//! θ ← θ − lr·m̂/(√v̂ + ε) − lr·wd·θ
//! ```
//!
//! Decay applies to every parameter block, biases included.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First/second moment accumulators, one buffer per parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(block_lens: &[usize]) -> Self {
        OptimizerState {
            m: block_lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: block_lens.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }
}

pub fn adamw_step(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut OptimizerState,
    lr: f64,
    hp: &AdamW,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::InvalidArgument(format!(
            "adamw_step: {} param blocks, {} grad blocks, {} state blocks",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (k, ((p, g), m)) in params.iter().zip(grads).zip(&state.m).enumerate() {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(Error::ShapeMismatch {
                op: "adamw_step",
                left: (k, p.len()),
                right: (k, g.len()),
            });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);
    for (k, block) in params.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for (i, theta) in block.iter_mut().enumerate() {
            let g = grads[k][i];
            m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
            v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            *theta = *theta - lr * m_hat / (v_hat.sqrt() + hp.eps) - lr * hp.weight_decay * *theta;
        }
    }
    Ok(())
}
