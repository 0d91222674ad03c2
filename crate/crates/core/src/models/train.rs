use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::codec::{write_dyn_row, write_rel_row, FeatureCodec, EFFECT_WIDTH};
use super::graph::{step_backward, Grads};
use super::loss::{object_error, LossWeights};
use super::rollout::RolloutBatch;
use super::{ModelError, ModelKind, ModelParams, NominalEngine};
use crate::neural::{adam_step, clip_global_norm, lr_at, AdamState, StandardizerAccumulator, TrainConfig};
use crate::scenario::TrajectoryRecord;

/// Ground truth of a batch window, steps `0..=steps`, rows per step.
pub(crate) struct Targets {
    pub pos: Vec<Vec<[f64; 3]>>,
    pub vel: Vec<Vec<[f64; 3]>>,
}

impl Targets {
    pub fn from_records(records: &[&TrajectoryRecord], start: usize, steps: usize) -> Self {
        let mut pos = Vec::with_capacity(steps + 1);
        let mut vel = Vec::with_capacity(steps + 1);
        for t in start..=start + steps {
            let mut p = Vec::new();
            let mut v = Vec::new();
            for r in records {
                for d in &r.frames[t].disks {
                    p.push([d[0], d[1], d[2]]);
                    v.push([d[3], d[4], d[5]]);
                }
            }
            pos.push(p);
            vel.push(v);
        }
        Self { pos, vel }
    }
}

/// Mean over scenes of the per-scene window loss; fills `grads` when given.
pub(crate) fn batch_objective(
    params: &ModelParams,
    batch: &RolloutBatch,
    targets: &Targets,
    weights: &LossWeights,
    grads: Option<&mut Grads>,
) -> Result<f64, ModelError> {
    let steps = batch.steps;
    if steps == 0 || batch.layout.scenes() == 0 {
        return Ok(0.0);
    }
    let run = batch.run(params, grads.is_some())?;
    let scale = 1.0 / (steps as f64 * batch.layout.scenes() as f64);
    let n = batch.layout.rows;
    let mut total = 0.0;
    let mut d_pos_loss = vec![vec![[0.0; 3]; n]; steps + 1];
    let mut d_vel_loss = vec![vec![[0.0; 3]; n]; steps + 1];
    for t in 1..=steps {
        for r in 0..n {
            let (v, gp, gv) = object_error(&run.pos[t][r], &run.vel[t][r], &targets.pos[t][r], &targets.vel[t][r], weights);
            total += v;
            for k in 0..3 {
                d_pos_loss[t][r][k] = gp[k] * scale;
                d_vel_loss[t][r][k] = gv[k] * scale;
            }
        }
    }
    if let Some(grads) = grads {
        let dt = params.engine.sim.dt;
        let mut d_pos = vec![[0.0; 3]; n];
        let mut d_vel = vec![[0.0; 3]; n];
        for t in (0..steps).rev() {
            for r in 0..n {
                for k in 0..3 {
                    d_pos[r][k] += d_pos_loss[t + 1][r][k];
                    d_vel[r][k] += d_vel_loss[t + 1][r][k];
                }
            }
            let (dp, dv) = step_backward(params, &batch.layout, &run.tapes[t], &d_pos, &d_vel, dt, grads)?;
            d_pos = dp;
            d_vel = dv;
        }
    }
    Ok(total * scale)
}

/// Objective of a window over recorded trajectories and its gradient with
/// respect to [`ModelParams::flatten`], regularizer included.
pub fn window_objective(
    params: &ModelParams,
    records: &[&TrajectoryRecord],
    steps: usize,
    weights: &LossWeights,
    lambda: f64,
) -> Result<(f64, Vec<f64>), ModelError> {
    let batch = RolloutBatch::from_records(records, 0, steps, params.kind)?;
    let targets = Targets::from_records(records, 0, steps);
    let mut grads = Grads::zeros_for(params);
    let data = batch_objective(params, &batch, &targets, weights, Some(&mut grads))?;
    let mut flat = Vec::with_capacity(params.num_params());
    grads.rel.flatten_into(&mut flat);
    grads.dynamics.flatten_into(&mut flat);
    let theta = params.flatten();
    for (g, p) in flat.iter_mut().zip(&theta) {
        *g += 2.0 * lambda * p;
    }
    Ok((data + lambda * params.squared_norm(), flat))
}

/// Objective value only; see [`window_objective`].
pub fn window_objective_value(
    params: &ModelParams,
    records: &[&TrajectoryRecord],
    steps: usize,
    weights: &LossWeights,
    lambda: f64,
) -> Result<f64, ModelError> {
    let batch = RolloutBatch::from_records(records, 0, steps, params.kind)?;
    let targets = Targets::from_records(records, 0, steps);
    Ok(batch_objective(params, &batch, &targets, weights, None)? + lambda * params.squared_norm())
}

/// Columns that are sines or cosines keep unit scaling.
fn bounded_rel_columns(kind: ModelKind) -> &'static [usize] {
    match kind {
        ModelKind::In | ModelKind::Sain => &[5, 6],
    }
}

fn bounded_dyn_columns(kind: ModelKind) -> &'static [usize] {
    match kind {
        ModelKind::In => &[],
        ModelKind::Sain => &[9, 10],
    }
}

/// Smallest per-column scale kept after fitting; guards against columns that
/// are constant on the training data.
const MIN_FEATURE_STD: f64 = 1e-6;
const FIT_MAX_TRAJECTORIES: usize = 400;

/// Fits input standardizers and the acceleration scale on the windows the
/// model will be trained on, with features computed from the true states.
pub fn fit_codec(kind: ModelKind, records: &[TrajectoryRecord], steps: usize, dt: f64) -> Result<FeatureCodec, ModelError> {
    let mut codec = FeatureCodec::identity(kind);
    let rw = codec.rel_width();
    let dw = codec.dyn_width() - EFFECT_WIDTH;
    let mut rel_acc = StandardizerAccumulator::new(rw);
    let mut dyn_acc = StandardizerAccumulator::new(dw);
    let mut accel_sq = [0.0; 3];
    let mut accel_count = 0usize;
    let picked: Vec<&TrajectoryRecord> = records.iter().take(FIT_MAX_TRAJECTORIES).collect();
    let mut rel_row = vec![0.0; rw];
    let mut dyn_row = vec![0.0; dw];
    for rec in &picked {
        let batch = RolloutBatch::from_records(std::slice::from_ref(rec), 0, steps, kind)?;
        let targets = Targets::from_records(std::slice::from_ref(rec), 0, steps);
        for t in 0..steps {
            let (pos, vel) = (&targets.pos[t], &targets.vel[t]);
            let actions = batch.actions_at(t, pos);
            let engine = batch.engine.as_ref().map(|e| &e[t]);
            for &(i, j) in &batch.layout.pairs {
                write_rel_row(
                    &mut rel_row,
                    &pos[i],
                    &vel[i],
                    &pos[j],
                    &vel[j],
                    batch.layout.statics[i],
                    batch.layout.statics[j],
                    engine.map(|e| &e.0[i]),
                );
                rel_acc.push(&rel_row);
            }
            for r in 0..batch.layout.rows {
                write_dyn_row(&mut dyn_row, &vel[r], actions[r], batch.layout.statics[r], engine.map(|e| &e.1[r]));
                dyn_acc.push(&dyn_row);
                for k in 0..3 {
                    let a = (targets.vel[t + 1][r][k] - vel[r][k]) / dt;
                    accel_sq[k] += a * a;
                }
                accel_count += 1;
            }
        }
    }
    if accel_count == 0 {
        return Ok(codec);
    }
    codec.rel = rel_acc.finish();
    codec.dynamics = dyn_acc.finish();
    for (s, cols) in [
        (&mut codec.rel, bounded_rel_columns(kind)),
        (&mut codec.dynamics, bounded_dyn_columns(kind)),
    ] {
        for v in s.std.iter_mut() {
            *v = v.max(MIN_FEATURE_STD);
        }
        for &c in cols {
            s.mean[c] = 0.0;
            s.std[c] = 1.0;
        }
    }
    for k in 0..3 {
        codec.accel_scale[k] = (accel_sq[k] / accel_count as f64).sqrt().max(MIN_FEATURE_STD);
    }
    Ok(codec)
}

/// Term weights that give each squared-error term unit mean under a
/// constant-velocity predictor on the given windows.
pub fn fit_loss_weights(records: &[TrajectoryRecord], steps: usize, dt: f64) -> LossWeights {
    let (mut sp, mut sv, mut sr, mut count) = (0.0, 0.0, 0.0, 0usize);
    for rec in records.iter().take(FIT_MAX_TRAJECTORIES) {
        let first = &rec.frames[0];
        for t in 1..=steps.min(rec.steps()) {
            for (d0, d) in first.disks.iter().zip(&rec.frames[t].disks) {
                let h = t as f64 * dt;
                let pred_pos = [d0[0] + h * d0[3], d0[1] + h * d0[4], d0[2] + h * d0[5]];
                let pred_vel = [d0[3], d0[4], d0[5]];
                let w = LossWeights { pos: 1.0, vel: 0.0, rot: 0.0 };
                sp += object_error(&pred_pos, &pred_vel, &[d[0], d[1], d[2]], &[d[3], d[4], d[5]], &w).0;
                let w = LossWeights { pos: 0.0, vel: 1.0, rot: 0.0 };
                sv += object_error(&pred_pos, &pred_vel, &[d[0], d[1], d[2]], &[d[3], d[4], d[5]], &w).0;
                let w = LossWeights { pos: 0.0, vel: 0.0, rot: 1.0 };
                sr += object_error(&pred_pos, &pred_vel, &[d[0], d[1], d[2]], &[d[3], d[4], d[5]], &w).0;
                count += 1;
            }
        }
    }
    if count == 0 {
        return LossWeights::UNIT;
    }
    let inv = |s: f64, floor: f64| 1.0 / (s / count as f64).max(floor);
    LossWeights {
        pos: inv(sp, 1e-12),
        vel: inv(sv, 1e-12),
        rot: inv(sr, 1e-12),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub iteration: u64,
    /// Mean training objective since the previous point.
    pub train: f64,
    pub heldout: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub weights: LossWeights,
    pub window: usize,
    pub curve: Vec<LossPoint>,
    pub iterations_run: u64,
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub params: ModelParams,
    pub report: TrainReport,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at iteration {iteration}")]
    Diverged { iteration: u64, last_good: Box<Trained> },
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub struct TrainOptions<'a> {
    pub engine: NominalEngine,
    /// Trajectories scored at every evaluation point; may be empty.
    pub heldout: &'a [TrajectoryRecord],
    pub progress: Option<&'a mut dyn FnMut(&LossPoint)>,
}

impl Default for TrainOptions<'_> {
    fn default() -> Self {
        Self {
            engine: NominalEngine::default(),
            heldout: &[],
            progress: None,
        }
    }
}

const HELDOUT_MAX: usize = 64;
const EVAL_BATCH: usize = 32;

fn window_for(records: &[TrajectoryRecord], cfg: &TrainConfig) -> usize {
    records.iter().map(TrajectoryRecord::steps).min().unwrap_or(0).min(cfg.rollout_length)
}

/// Trains a fresh model by backpropagation through recurrent rollouts of
/// `cfg.rollout_length` steps starting at the first recorded state.
pub fn train(kind: ModelKind, dataset: &[TrajectoryRecord], cfg: &TrainConfig, opts: TrainOptions<'_>) -> Result<Trained, TrainError> {
    cfg.validate().map_err(ModelError::Contract)?;
    opts.engine.validate().map_err(ModelError::Contract)?;
    if dataset.is_empty() {
        return Err(ModelError::contract("cannot train on an empty dataset").into());
    }
    let window = window_for(dataset, cfg);
    let dt = opts.engine.sim.dt;
    let codec = fit_codec(kind, dataset, window, dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = ModelParams::glorot(kind, codec, opts.engine.clone(), &mut rng);
    optimize(params, dataset, cfg, opts, &mut rng)
}

/// Continues training on target-domain data with a fresh schedule whose
/// starting rate is a tenth of `cfg.lr0`. An empty dataset leaves the
/// parameters untouched.
pub fn fine_tune(params: &ModelParams, dataset: &[TrajectoryRecord], cfg: &TrainConfig, opts: TrainOptions<'_>) -> Result<Trained, TrainError> {
    let cfg = TrainConfig {
        lr0: cfg.lr0 * 0.1,
        ..cfg.clone()
    };
    cfg.validate().map_err(ModelError::Contract)?;
    if dataset.is_empty() {
        return Ok(Trained {
            params: params.clone(),
            report: TrainReport {
                config: cfg,
                weights: LossWeights::UNIT,
                window: 0,
                curve: Vec::new(),
                iterations_run: 0,
            },
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_f1e7);
    optimize(params.clone(), dataset, &cfg, opts, &mut rng)
}

fn optimize(
    mut params: ModelParams,
    dataset: &[TrajectoryRecord],
    cfg: &TrainConfig,
    mut opts: TrainOptions<'_>,
    rng: &mut ChaCha8Rng,
) -> Result<Trained, TrainError> {
    let window = window_for(dataset, cfg);
    let dt = params.engine.sim.dt;
    let weights = fit_loss_weights(dataset, window, dt);
    let heldout: Vec<&TrajectoryRecord> = opts
        .heldout
        .iter()
        .filter(|r| r.steps() >= window)
        .take(HELDOUT_MAX)
        .collect();
    let blocks = params.param_blocks();
    let mut flat = params.flatten();
    let mut adam = AdamState::new(flat.len());
    let mut report = TrainReport {
        config: cfg.clone(),
        weights,
        window,
        curve: Vec::new(),
        iterations_run: 0,
    };
    let batch_size = cfg.batch_size.min(dataset.len());
    let mut running = (0.0, 0u64);
    let mut grads = Grads::zeros_for(&params);
    let mut gflat = Vec::with_capacity(flat.len());

    for it in 0..cfg.iterations {
        let idx = sample(rng, dataset.len(), batch_size).into_vec();
        let picked: Vec<&TrajectoryRecord> = idx.iter().map(|&i| &dataset[i]).collect();
        let batch = RolloutBatch::from_records(&picked, 0, window, params.kind)?;
        let targets = Targets::from_records(&picked, 0, window);
        grads.rel.fill_zero();
        grads.dynamics.fill_zero();
        let data = batch_objective(&params, &batch, &targets, &weights, Some(&mut grads))?;
        let objective = data + cfg.l2_lambda * params.squared_norm();
        let diverged = |report: TrainReport, params: &ModelParams| TrainError::Diverged {
            iteration: it,
            last_good: Box::new(Trained {
                params: params.clone(),
                report,
            }),
        };
        if !objective.is_finite() {
            return Err(diverged(report, &params));
        }
        gflat.clear();
        grads.rel.flatten_into(&mut gflat);
        grads.dynamics.flatten_into(&mut gflat);
        for (g, p) in gflat.iter_mut().zip(&flat) {
            *g += 2.0 * cfg.l2_lambda * p;
        }
        clip_global_norm(&mut gflat, cfg.grad_clip_norm);
        if adam_step(&mut flat, &gflat, &mut adam, lr_at(cfg, it), &blocks).is_err() {
            return Err(diverged(report, &params));
        }
        params.assign(&flat);
        report.iterations_run = it + 1;
        running.0 += objective;
        running.1 += 1;

        let last = it + 1 == cfg.iterations;
        if (cfg.eval_every > 0 && (it + 1) % cfg.eval_every == 0) || last {
            let heldout_loss = if heldout.is_empty() {
                None
            } else {
                Some(mean_objective(&params, &heldout, window, &weights)?)
            };
            let point = LossPoint {
                iteration: it + 1,
                train: running.0 / running.1 as f64,
                heldout: heldout_loss,
            };
            running = (0.0, 0);
            if let Some(cb) = opts.progress.as_mut() {
                cb(&point);
            }
            report.curve.push(point);
        }
    }
    Ok(Trained { params, report })
}

/// Mean data objective over trajectories, evaluated in fixed-size chunks.
pub(crate) fn mean_objective(
    params: &ModelParams,
    records: &[&TrajectoryRecord],
    window: usize,
    weights: &LossWeights,
) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for chunk in records.chunks(EVAL_BATCH) {
        let batch = RolloutBatch::from_records(chunk, 0, window, params.kind)?;
        let targets = Targets::from_records(chunk, 0, window);
        total += batch_objective(params, &batch, &targets, weights, None)? * chunk.len() as f64;
    }
    Ok(total / records.len().max(1) as f64)
}
