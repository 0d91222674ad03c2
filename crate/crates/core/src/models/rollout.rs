use std::sync::Arc;

use super::codec::{engine_pose_delta, engine_velocity_delta, CONTACT_GATE_MARGIN};
use super::graph::{step_forward, EngineDeltas, GraphLayout, StepInput, StepTape};
use super::{ModelError, ModelKind, ModelParams};
use crate::scenario::{Frame, TrajectoryRecord};
use crate::sim::{DiskState, PusherState, Trajectory, Vec2, WorldState};

/// Per-object pusher action for one step: the commanded pusher velocity for
/// the disk the pusher is touching, zeros for every other disk.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionEncoding {
    pub per_object: Vec<[f64; 2]>,
}

impl ActionEncoding {
    pub fn none(n: usize) -> Self {
        Self {
            per_object: vec![[0.0; 2]; n],
        }
    }

    /// Gates the pusher command of `world` onto the nearest disk it will be
    /// touching at the end of the step.
    pub fn from_world(world: &WorldState, dt: f64) -> Self {
        let pos: Vec<[f64; 3]> = world.disks.iter().map(|d| [d.pose.x, d.pose.y, d.pose.theta]).collect();
        let radii: Vec<f64> = world.disks.iter().map(|d| d.radius).collect();
        let cmd = world.pusher.velocity;
        let end = world.pusher.position + cmd * dt;
        let mut out = Self::none(pos.len());
        if let Some(i) = gated_disk(&pos, &radii, [end.x, end.y], world.pusher.radius) {
            out.per_object[i] = [cmd.x, cmd.y];
        }
        out
    }

    pub fn active(&self) -> Option<usize> {
        self.per_object.iter().position(|a| a[0] != 0.0 || a[1] != 0.0)
    }
}

fn gated_disk(pos: &[[f64; 3]], radii: &[f64], pusher: [f64; 2], pusher_radius: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (p, r)) in pos.iter().zip(radii).enumerate() {
        let gap = (p[0] - pusher[0]).hypot(p[1] - pusher[1]) - (r + pusher_radius);
        if gap < CONTACT_GATE_MARGIN && best.is_none_or(|(_, g)| gap < g) {
            best = Some((i, gap));
        }
    }
    best.map(|(i, _)| i)
}

/// Everything needed to unroll a batch of scenes.
pub(crate) struct RolloutBatch {
    pub layout: GraphLayout,
    pub steps: usize,
    pub pos0: Vec<[f64; 3]>,
    pub vel0: Vec<[f64; 3]>,
    /// Per scene, pusher centers at steps 0..=steps.
    pub pusher: Vec<Vec<[f64; 2]>>,
    /// Per scene, pusher velocities for steps 0..steps.
    pub commands: Vec<Vec<[f64; 2]>>,
    pub pusher_radius: Vec<f64>,
    /// Per step, engine deltas per row (SAIN only).
    pub engine: Option<Vec<(Vec<[f64; 3]>, Vec<[f64; 4]>)>>,
}

pub(crate) struct RolloutRun {
    /// Steps 0..=steps, rows per step.
    pub pos: Vec<Vec<[f64; 3]>>,
    pub vel: Vec<Vec<[f64; 3]>>,
    pub tapes: Vec<StepTape>,
}

impl RolloutBatch {
    /// Batch over recorded trajectories, `steps` transitions from frame
    /// `start`. Engine deltas come from the stored nominal shadow.
    pub fn from_records(records: &[&TrajectoryRecord], start: usize, steps: usize, kind: ModelKind) -> Result<Self, ModelError> {
        let scenes: Vec<Vec<[f64; 2]>> = records
            .iter()
            .map(|r| r.masses.iter().zip(&r.radii).map(|(&m, &rad)| [m, rad]).collect())
            .collect();
        let layout = GraphLayout::new(&scenes);
        let mut pos0 = Vec::with_capacity(layout.rows);
        let mut vel0 = Vec::with_capacity(layout.rows);
        for r in records {
            if r.steps() < start + steps {
                return Err(ModelError::contract(format!(
                    "trajectory {} has {} steps, window needs {}",
                    r.index,
                    r.steps(),
                    start + steps
                )));
            }
            for d in &r.frames[start].disks {
                pos0.push([d[0], d[1], d[2]]);
                vel0.push([d[3], d[4], d[5]]);
            }
        }
        let pusher = records
            .iter()
            .map(|r| r.frames[start..=start + steps].iter().map(|f| f.pusher).collect())
            .collect();
        let commands = records.iter().map(|r| r.commands[start..start + steps].to_vec()).collect();
        let pusher_radius = records.iter().map(|r| r.pusher_radius).collect();
        let engine = if kind == ModelKind::Sain {
            let shadows: Vec<&[Frame]> = records.iter().map(|r| r.nominal.as_slice()).collect();
            if shadows.iter().any(|s| s.len() < start + steps + 1) {
                return Err(ModelError::contract("SAIN needs the nominal shadow rollout of every trajectory"));
            }
            Some(engine_deltas(&shadows, start, steps))
        } else {
            None
        };
        Ok(Self {
            layout,
            steps,
            pos0,
            vel0,
            pusher,
            commands,
            pusher_radius,
            engine,
        })
    }

    /// Batch over live worlds under per-scene pusher command sequences of equal
    /// length. For SAIN the nominal engine is rolled out here.
    pub fn from_worlds(params: &ModelParams, worlds: &[WorldState], commands: &[Vec<Vec2>]) -> Result<Self, ModelError> {
        if worlds.len() != commands.len() {
            return Err(ModelError::contract("one command sequence per world is required"));
        }
        let steps = commands.first().map_or(0, Vec::len);
        if commands.iter().any(|c| c.len() != steps) {
            return Err(ModelError::contract("command sequences of a batch must have equal length"));
        }
        let scenes: Vec<Vec<[f64; 2]>> = worlds
            .iter()
            .map(|w| w.disks.iter().map(|d| [d.mass, d.radius]).collect())
            .collect();
        let layout = GraphLayout::new(&scenes);
        let mut pos0 = Vec::with_capacity(layout.rows);
        let mut vel0 = Vec::with_capacity(layout.rows);
        for w in worlds {
            for d in &w.disks {
                pos0.push([d.pose.x, d.pose.y, d.pose.theta]);
                vel0.push([d.twist.vx, d.twist.vy, d.twist.omega]);
            }
        }
        let dt = params.engine.sim.dt;
        let mut pusher = Vec::with_capacity(worlds.len());
        for (w, cmds) in worlds.iter().zip(commands) {
            let mut track = Vec::with_capacity(steps + 1);
            let mut p = w.pusher.position;
            track.push([p.x, p.y]);
            for c in cmds {
                p += c * dt;
                track.push([p.x, p.y]);
            }
            pusher.push(track);
        }
        let cmd_rows = commands.iter().map(|c| c.iter().map(|v| [v.x, v.y]).collect()).collect();
        let pusher_radius = worlds.iter().map(|w| w.pusher.radius).collect();
        let engine = if params.kind == ModelKind::Sain {
            let shadows: Vec<Vec<Frame>> = worlds
                .iter()
                .zip(commands)
                .map(|(w, c)| params.engine.rollout(w, c).states.iter().map(Frame::from_world).collect())
                .collect();
            let refs: Vec<&[Frame]> = shadows.iter().map(Vec::as_slice).collect();
            Some(engine_deltas(&refs, 0, steps))
        } else {
            None
        };
        Ok(Self {
            layout,
            steps,
            pos0,
            vel0,
            pusher,
            commands: cmd_rows,
            pusher_radius,
            engine,
        })
    }

    pub fn actions_at(&self, t: usize, pos: &[[f64; 3]]) -> Vec<[f64; 2]> {
        let mut actions = vec![[0.0; 2]; self.layout.rows];
        for k in 0..self.layout.scenes() {
            let cmd = self.commands[k][t];
            if cmd == [0.0, 0.0] {
                continue;
            }
            let rows = self.layout.scene_rows(k);
            let radii: Vec<f64> = rows.clone().map(|r| self.layout.statics[r][1]).collect();
            if let Some(i) = gated_disk(&pos[rows.clone()], &radii, self.pusher[k][t + 1], self.pusher_radius[k]) {
                actions[rows.start + i] = cmd;
            }
        }
        actions
    }

    pub fn run(&self, params: &ModelParams, keep_tapes: bool) -> Result<RolloutRun, ModelError> {
        let dt = params.engine.sim.dt;
        let mut pos = Vec::with_capacity(self.steps + 1);
        let mut vel = Vec::with_capacity(self.steps + 1);
        let mut tapes = Vec::with_capacity(if keep_tapes { self.steps } else { 0 });
        pos.push(self.pos0.clone());
        vel.push(self.vel0.clone());
        for t in 0..self.steps {
            let actions = self.actions_at(t, &pos[t]);
            let engine = self.engine.as_ref().map(|e| EngineDeltas { dv: &e[t].0, dp: &e[t].1 });
            let input = StepInput {
                pos: &pos[t],
                vel: &vel[t],
                actions: &actions,
                engine,
            };
            let out = step_forward(params, &self.layout, &input, dt, keep_tapes)?;
            pos.push(out.pos);
            vel.push(out.vel);
            if let Some(tape) = out.tape {
                tapes.push(tape);
            }
        }
        Ok(RolloutRun { pos, vel, tapes })
    }
}

fn engine_deltas(shadows: &[&[Frame]], start: usize, steps: usize) -> Vec<(Vec<[f64; 3]>, Vec<[f64; 4]>)> {
    (0..steps)
        .map(|t| {
            let mut dv = Vec::new();
            let mut dp = Vec::new();
            for s in shadows {
                let (a, b) = (&s[start + t], &s[start + t + 1]);
                for (prev, next) in a.disks.iter().zip(&b.disks) {
                    dv.push(engine_velocity_delta(prev, next));
                    dp.push(engine_pose_delta(prev, next));
                }
            }
            (dv, dp)
        })
        .collect()
}

/// Converts a run back into world states, scene by scene.
pub(crate) fn run_to_trajectories(
    batch: &RolloutBatch,
    run: &RolloutRun,
    templates: &[WorldState],
    dt: f64,
) -> Vec<Trajectory> {
    (0..batch.layout.scenes())
        .map(|k| {
            let rows = batch.layout.scene_rows(k);
            let states = (0..=batch.steps)
                .map(|t| {
                    let disks = rows
                        .clone()
                        .map(|r| {
                            let [m, rad] = batch.layout.statics[r];
                            let (p, v) = (run.pos[t][r], run.vel[t][r]);
                            DiskState {
                                pose: crate::sim::Pose2 {
                                    x: p[0],
                                    y: p[1],
                                    theta: p[2],
                                },
                                twist: crate::sim::Twist2::new(v[0], v[1], v[2]),
                                mass: m,
                                radius: rad,
                            }
                        })
                        .collect();
                    let velocity = batch.commands[k].get(t).copied().unwrap_or([0.0; 2]);
                    let pusher = batch.pusher[k][t];
                    WorldState {
                        disks,
                        pusher: PusherState {
                            position: Vec2::new(pusher[0], pusher[1]),
                            velocity: Vec2::new(velocity[0], velocity[1]),
                            radius: batch.pusher_radius[k],
                        },
                        surface: Arc::clone(&templates[k].surface),
                        diagnostics: Default::default(),
                    }
                })
                .collect();
            Trajectory { dt, states }
        })
        .collect()
}

fn single_step(
    params: &ModelParams,
    state: &WorldState,
    actions: &ActionEncoding,
    engine: Option<(&WorldState, &WorldState)>,
) -> Result<WorldState, ModelError> {
    let n = state.disks.len();
    if actions.per_object.len() != n {
        return Err(ModelError::contract(format!(
            "{} action rows for {} objects",
            actions.per_object.len(),
            n
        )));
    }
    let layout = GraphLayout::new(&[state.disks.iter().map(|d| [d.mass, d.radius]).collect()]);
    let pos: Vec<[f64; 3]> = state.disks.iter().map(|d| [d.pose.x, d.pose.y, d.pose.theta]).collect();
    let vel: Vec<[f64; 3]> = state.disks.iter().map(|d| [d.twist.vx, d.twist.vy, d.twist.omega]).collect();
    let deltas = match engine {
        Some((prev, next)) => {
            if prev.disks.len() != n || next.disks.len() != n {
                return Err(ModelError::contract("engine states have a different object count"));
            }
            let (a, b) = (Frame::from_world(prev), Frame::from_world(next));
            let dv: Vec<[f64; 3]> = a.disks.iter().zip(&b.disks).map(|(p, q)| engine_velocity_delta(p, q)).collect();
            let dp: Vec<[f64; 4]> = a.disks.iter().zip(&b.disks).map(|(p, q)| engine_pose_delta(p, q)).collect();
            Some((dv, dp))
        }
        None => None,
    };
    let input = StepInput {
        pos: &pos,
        vel: &vel,
        actions: &actions.per_object,
        engine: deltas.as_ref().map(|(dv, dp)| EngineDeltas { dv, dp }),
    };
    let dt = params.engine.sim.dt;
    let out = step_forward(params, &layout, &input, dt, false)?;
    let mut next = state.clone();
    for (r, d) in next.disks.iter_mut().enumerate() {
        d.pose = crate::sim::Pose2 {
            x: out.pos[r][0],
            y: out.pos[r][1],
            theta: out.pos[r][2],
        };
        d.twist = crate::sim::Twist2::new(out.vel[r][0], out.vel[r][1], out.vel[r][2]);
    }
    next.pusher.position += state.pusher.velocity * dt;
    Ok(next)
}

/// One interaction-network step. The pusher advances by its current velocity.
/// Predicted rotations are not wrapped, so `p' = p + dt * v'` holds as
/// computed.
pub fn in_step(state: &WorldState, actions: &ActionEncoding, params: &ModelParams) -> Result<WorldState, ModelError> {
    if params.kind != ModelKind::In {
        return Err(ModelError::contract("in_step needs IN parameters"));
    }
    single_step(params, state, actions, None)
}

/// One SAIN step given two consecutive states of the nominal engine's own
/// rollout.
pub fn sain_step(
    state: &WorldState,
    engine_prev: &WorldState,
    engine_next: &WorldState,
    actions: &ActionEncoding,
    params: &ModelParams,
) -> Result<WorldState, ModelError> {
    if params.kind != ModelKind::Sain {
        return Err(ModelError::contract("sain_step needs SAIN parameters"));
    }
    single_step(params, state, actions, Some((engine_prev, engine_next)))
}

/// Recurrent prediction from `s0` under a pusher velocity plan; returns
/// `commands.len() + 1` states starting with `s0` itself.
pub fn rollout_model(params: &ModelParams, s0: &WorldState, commands: &[Vec2]) -> Result<Trajectory, ModelError> {
    let mut out = rollout_many(params, std::slice::from_ref(s0), &[commands.to_vec()])?;
    let mut traj = out.pop().expect("one scene in, one trajectory out");
    traj.states[0] = s0.clone();
    Ok(traj)
}

/// Batched [`rollout_model`] over scenes with equally long plans.
pub fn rollout_many(params: &ModelParams, worlds: &[WorldState], commands: &[Vec<Vec2>]) -> Result<Vec<Trajectory>, ModelError> {
    let batch = RolloutBatch::from_worlds(params, worlds, commands)?;
    let run = batch.run(params, false)?;
    Ok(run_to_trajectories(&batch, &run, worlds, params.engine.sim.dt))
}

/// Per-step engine inputs SAIN would receive for these rollouts: velocity
/// and pose changes of the nominal shadow, per object row. `None` for IN.
pub fn engine_inputs(params: &ModelParams, worlds: &[WorldState], commands: &[Vec<Vec2>]) -> Result<EngineInputs, ModelError> {
    Ok(RolloutBatch::from_worlds(params, worlds, commands)?.engine)
}

pub type EngineInputs = Option<Vec<(Vec<[f64; 3]>, Vec<[f64; 4]>)>>;

/// Final kinematics rows `[x, y, theta, vx, vy, omega]` of batched rollouts,
/// for callers that only need the end state.
pub fn rollout_final_rows(params: &ModelParams, worlds: &[WorldState], commands: &[Vec<Vec2>]) -> Result<Vec<Vec<[f64; 6]>>, ModelError> {
    let batch = RolloutBatch::from_worlds(params, worlds, commands)?;
    let run = batch.run(params, false)?;
    let (pos, vel) = (run.pos.last().unwrap(), run.vel.last().unwrap());
    Ok((0..batch.layout.scenes())
        .map(|k| {
            batch
                .layout
                .scene_rows(k)
                .map(|r| [pos[r][0], pos[r][1], pos[r][2], vel[r][0], vel[r][1], vel[r][2]])
                .collect()
        })
        .collect())
}
