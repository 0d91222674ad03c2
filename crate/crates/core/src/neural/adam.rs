use serde::{Deserialize, Serialize};

use super::NeuralError;

/// Named contiguous slice of a flattened parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// Builds consecutive blocks from `(name, len)` pairs.
pub fn layout_blocks<I: IntoIterator<Item = (String, usize)>>(entries: I) -> Vec<ParamBlock> {
    let mut offset = 0;
    entries
        .into_iter()
        .map(|(name, len)| {
            let b = ParamBlock { name, offset, len };
            offset += len;
            b
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        Self {
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update in place.
///
/// Non-finite gradients abort the step before anything is modified; the
/// error names the offending block when `blocks` covers it.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    rate: f64,
    blocks: &[ParamBlock],
) -> Result<(), NeuralError> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(NeuralError::DimensionMismatch {
            context: "adam parameter/gradient length".into(),
            expected: params.len(),
            actual: grads.len(),
        });
    }
    if let Some(k) = grads.iter().position(|g| !g.is_finite()) {
        let block = blocks
            .iter()
            .find(|b| k >= b.offset && k < b.offset + b.len)
            .map(|b| b.name.clone())
            .unwrap_or_else(|| format!("index {k}"));
        return Err(NeuralError::NonFiniteGradient { block });
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= rate * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// Rescales `grads` so its Euclidean norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}
