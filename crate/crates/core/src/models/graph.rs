//! Batched single-step evaluation of the relation/dynamics pair.
//!
//! A batch is a flat list of object rows drawn from any number of scenes;
//! `pairs` lists every ordered (receiver, sender) couple inside a scene.
//! Effects are summed over senders in pair order, which is fixed, so
//! results do not depend on how scenes are grouped into batches.

use ndarray::{Array2, ArrayView2};

use super::codec::{write_dyn_row, write_rel_row, DYN_EFFECT_OFFSET, EFFECT_WIDTH};
use super::{ModelError, ModelKind, ModelParams};
use crate::neural::{MlpParams, MlpTape};

#[derive(Clone, Debug)]
pub(crate) struct GraphLayout {
    pub rows: usize,
    /// (receiver, sender) row indices.
    pub pairs: Vec<(usize, usize)>,
    /// (mass, radius) per row.
    pub statics: Vec<[f64; 2]>,
    /// First row of each scene.
    pub scene_start: Vec<usize>,
}

impl GraphLayout {
    /// `scenes[k]` lists the (mass, radius) of every object of scene `k`.
    pub fn new(scenes: &[Vec<[f64; 2]>]) -> Self {
        let mut statics = Vec::new();
        let mut pairs = Vec::new();
        let mut scene_start = Vec::with_capacity(scenes.len());
        for objs in scenes {
            let base = statics.len();
            scene_start.push(base);
            for i in 0..objs.len() {
                for j in 0..objs.len() {
                    if i != j {
                        pairs.push((base + i, base + j));
                    }
                }
            }
            statics.extend_from_slice(objs);
        }
        Self {
            rows: statics.len(),
            pairs,
            statics,
            scene_start,
        }
    }

    pub fn scenes(&self) -> usize {
        self.scene_start.len()
    }

    pub fn scene_rows(&self, k: usize) -> std::ops::Range<usize> {
        let end = self.scene_start.get(k + 1).copied().unwrap_or(self.rows);
        self.scene_start[k]..end
    }
}

/// Engine-derived inputs of one step, per row.
#[derive(Clone, Copy)]
pub(crate) struct EngineDeltas<'a> {
    pub dv: &'a [[f64; 3]],
    pub dp: &'a [[f64; 4]],
}

pub(crate) struct StepInput<'a> {
    pub pos: &'a [[f64; 3]],
    pub vel: &'a [[f64; 3]],
    pub actions: &'a [[f64; 2]],
    pub engine: Option<EngineDeltas<'a>>,
}

pub(crate) struct StepTape {
    rel: MlpTape,
    dynamics: MlpTape,
    /// Receiver minus sender rotation per pair.
    dtheta: Vec<f64>,
}

pub(crate) struct StepOutput {
    pub pos: Vec<[f64; 3]>,
    pub vel: Vec<[f64; 3]>,
    pub tape: Option<StepTape>,
}

pub(crate) fn step_forward(
    params: &ModelParams,
    layout: &GraphLayout,
    input: &StepInput<'_>,
    dt: f64,
    keep_tape: bool,
) -> Result<StepOutput, ModelError> {
    let codec = &params.codec;
    let n = layout.rows;
    if input.pos.len() != n || input.vel.len() != n || input.actions.len() != n {
        return Err(ModelError::contract("step input rows do not match the layout"));
    }
    let sain = params.kind == ModelKind::Sain;
    let engine = match (sain, input.engine) {
        (true, Some(e)) if e.dv.len() == n && e.dp.len() == n => Some(e),
        (true, _) => return Err(ModelError::contract("SAIN step needs engine deltas for every row")),
        (false, _) => None,
    };

    let rw = codec.rel_width();
    let np = layout.pairs.len();
    let mut rel_in = Array2::<f64>::zeros((np, rw));
    let mut dtheta = Vec::with_capacity(np);
    for (row, &(i, j)) in rel_in.rows_mut().into_iter().zip(&layout.pairs) {
        let row = row.into_slice().expect("standard layout");
        write_rel_row(
            row,
            &input.pos[i],
            &input.vel[i],
            &input.pos[j],
            &input.vel[j],
            layout.statics[i],
            layout.statics[j],
            engine.map(|e| &e.dv[i]),
        );
        codec.rel.apply(row);
        dtheta.push(input.pos[i][2] - input.pos[j][2]);
    }
    let (effects, rel_tape) = params.f_rel.forward(rel_in.view())?;

    let dw = codec.dyn_width();
    let mut dyn_in = Array2::<f64>::zeros((n, dw));
    let mut scratch = vec![0.0; dw - EFFECT_WIDTH];
    for (r, row) in dyn_in.rows_mut().into_iter().enumerate() {
        let row = row.into_slice().expect("standard layout");
        write_dyn_row(
            &mut scratch,
            &input.vel[r],
            input.actions[r],
            layout.statics[r],
            engine.map(|e| &e.dp[r]),
        );
        codec.dynamics.apply(&mut scratch);
        row[..DYN_EFFECT_OFFSET].copy_from_slice(&scratch[..DYN_EFFECT_OFFSET]);
        row[DYN_EFFECT_OFFSET + EFFECT_WIDTH..].copy_from_slice(&scratch[DYN_EFFECT_OFFSET..]);
    }
    for (p, &(i, _)) in layout.pairs.iter().enumerate() {
        for k in 0..EFFECT_WIDTH {
            dyn_in[[i, DYN_EFFECT_OFFSET + k]] += effects[[p, k]];
        }
    }
    let (accel, dyn_tape) = params.f_dyn.forward(dyn_in.view())?;

    let mut pos = Vec::with_capacity(n);
    let mut vel = Vec::with_capacity(n);
    for r in 0..n {
        let mut v = [0.0; 3];
        let mut p = [0.0; 3];
        for k in 0..3 {
            v[k] = input.vel[r][k] + dt * (accel[[r, k]] * codec.accel_scale[k]);
            p[k] = input.pos[r][k] + dt * v[k];
        }
        pos.push(p);
        vel.push(v);
    }
    let tape = keep_tape.then_some(StepTape {
        rel: rel_tape,
        dynamics: dyn_tape,
        dtheta,
    });
    Ok(StepOutput { pos, vel, tape })
}

/// Gradient accumulators matching a model's two networks.
#[derive(Clone, Debug)]
pub(crate) struct Grads {
    pub rel: MlpParams,
    pub dynamics: MlpParams,
}

impl Grads {
    pub fn zeros_for(params: &ModelParams) -> Self {
        Self {
            rel: params.f_rel.zeros_like(),
            dynamics: params.f_dyn.zeros_like(),
        }
    }
}

/// Reverse pass of one step. Takes the loss gradient with respect to the
/// step's outputs and returns it with respect to its state inputs.
pub(crate) fn step_backward(
    params: &ModelParams,
    layout: &GraphLayout,
    tape: &StepTape,
    d_pos_next: &[[f64; 3]],
    d_vel_next: &[[f64; 3]],
    dt: f64,
    grads: &mut Grads,
) -> Result<(Vec<[f64; 3]>, Vec<[f64; 3]>), ModelError> {
    let codec = &params.codec;
    let n = layout.rows;
    let mut d_pos = d_pos_next.to_vec();
    let mut d_vel = vec![[0.0; 3]; n];
    let mut d_out = Array2::<f64>::zeros((n, 3));
    for r in 0..n {
        for k in 0..3 {
            // v' = v + dt * a, p' = p + dt * v'
            let dv_next = d_vel_next[r][k] + dt * d_pos_next[r][k];
            d_vel[r][k] = dv_next;
            d_out[[r, k]] = dv_next * dt * codec.accel_scale[k];
        }
    }
    let d_dyn = params.f_dyn.backward(&tape.dynamics, d_out.view(), &mut grads.dynamics)?;

    let dstd = &codec.dynamics.std;
    for r in 0..n {
        for k in 0..3 {
            d_vel[r][k] += d_dyn[[r, k]] / dstd[k];
        }
    }
    let np = layout.pairs.len();
    let mut d_effect = Array2::<f64>::zeros((np, EFFECT_WIDTH));
    for (p, &(i, _)) in layout.pairs.iter().enumerate() {
        for k in 0..EFFECT_WIDTH {
            d_effect[[p, k]] = d_dyn[[i, DYN_EFFECT_OFFSET + k]];
        }
    }
    let d_rel = params.f_rel.backward(&tape.rel, d_effect.view(), &mut grads.rel)?;
    accumulate_relation_grads(d_rel.view(), &codec.rel.std, layout, &tape.dtheta, &mut d_pos, &mut d_vel);
    Ok((d_pos, d_vel))
}

fn accumulate_relation_grads(
    d_rel: ArrayView2<'_, f64>,
    std: &[f64],
    layout: &GraphLayout,
    dtheta: &[f64],
    d_pos: &mut [[f64; 3]],
    d_vel: &mut [[f64; 3]],
) {
    for (p, &(i, j)) in layout.pairs.iter().enumerate() {
        let g = |c: usize| d_rel[[p, c]] / std[c];
        for k in 0..3 {
            d_vel[i][k] += g(k);
            let dd = g(7 + k);
            d_vel[i][k] += dd;
            d_vel[j][k] -= dd;
        }
        let (dx, dy) = (g(3), g(4));
        d_pos[i][0] += dx;
        d_pos[j][0] -= dx;
        d_pos[i][1] += dy;
        d_pos[j][1] -= dy;
        let (s, c) = dtheta[p].sin_cos();
        let dth = g(5) * c - g(6) * s;
        d_pos[i][2] += dth;
        d_pos[j][2] -= dth;
    }
}
