//! Receding-horizon pushing controller.
//!
//! An action places the pusher on the rim of disk 1 and pushes it a fixed
//! distance. Candidate sequences are expanded best-first by the
//! distance-plus-collinearity heuristic until a sequence of the active
//! horizon is popped; its first action is executed and the search restarts
//! from the observed result.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{DynamicsModel, ModelError};
use crate::scenario::{rotate, row_to_kinematics, Frame};
use crate::sim::{step, SimConfig, Vec2, WorldState};

pub const PUSH_LENGTH: f64 = 0.010;
pub const PUSH_SPEED: f64 = 0.050;
const ALPHA_BINS: usize = 6;
const THETA_BINS: usize = 12;
const ALPHA_RANGE: f64 = PI / 6.0;
const THETA_RANGE: f64 = PI / 3.0;
/// Norm below which a heuristic direction counts as degenerate.
pub const DEGENERATE_NORM: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("scene needs at least two disks, got {0}")]
    TooFewDisks(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Pusher placement on the rim of disk 1 and push direction.
///
/// `contact_angle` is measured from the axis pointing from disk 2 back
/// through disk 1, so zero puts the pusher directly behind disk 1 as seen
/// from disk 2. `push_angle` rotates the push away from the line through
/// the pusher and the center of disk 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlAction {
    pub index: usize,
    pub contact_angle: f64,
    pub push_angle: f64,
    pub push_length: f64,
    pub push_speed: f64,
}

impl ControlAction {
    /// Pusher start and velocity for this action in `world`.
    pub fn placement(&self, world: &WorldState) -> (Vec2, Vec2) {
        let (p1, p2) = (world.disks[0].pose.position(), world.disks[1].pose.position());
        let axis = p1 - p2;
        let back = if axis.norm() > DEGENERATE_NORM { axis.normalize() } else { Vec2::new(-1.0, 0.0) };
        let offset = rotate(back, self.contact_angle) * (world.disks[0].radius + world.pusher.radius);
        let start = p1 + offset;
        let dir = rotate(-offset.normalize(), self.push_angle);
        (start, dir * self.push_speed)
    }

    pub fn push_steps(&self, dt: f64) -> usize {
        (self.push_length / (self.push_speed * dt)).round() as usize
    }

    /// `world` with the pusher moved to the start of this action.
    pub fn staged(&self, world: &WorldState) -> WorldState {
        let (start, _) = self.placement(world);
        let mut w = world.clone();
        w.pusher.position = start;
        w.pusher.velocity = Vec2::zeros();
        w
    }

    /// Pusher velocity plan: the push followed by `settle` resting steps.
    pub fn commands(&self, world: &WorldState, dt: f64, settle: usize) -> Vec<Vec2> {
        let (_, vel) = self.placement(world);
        let n = self.push_steps(dt);
        (0..n + settle).map(|t| if t < n { vel } else { Vec2::zeros() }).collect()
    }
}

/// The 72 actions, contact angle major, both angles at bin midpoints.
pub fn enumerate_actions() -> Vec<ControlAction> {
    let mid = |range: f64, bins: usize, k: usize| -range + (2.0 * k as f64 + 1.0) * range / bins as f64;
    let mut out = Vec::with_capacity(ALPHA_BINS * THETA_BINS);
    for t in 0..THETA_BINS {
        for a in 0..ALPHA_BINS {
            out.push(ControlAction {
                index: out.len(),
                contact_angle: mid(THETA_RANGE, THETA_BINS, t),
                push_angle: mid(ALPHA_RANGE, ALPHA_BINS, a),
                push_length: PUSH_LENGTH,
                push_speed: PUSH_SPEED,
            });
        }
    }
    out
}

/// Distance of disk 2 to the goal plus the cosine distance between
/// `goal - p1` and `p2 - p1`. The cosine term is zero when either vector is
/// degenerate.
pub fn heuristic(p1: Vec2, p2: Vec2, goal: Vec2) -> f64 {
    let (a, b) = (goal - p1, p2 - p1);
    let (na, nb) = (a.norm(), b.norm());
    let cosine = if na < DEGENERATE_NORM || nb < DEGENERATE_NORM {
        0.0
    } else {
        1.0 - (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0)
    };
    (p2 - goal).norm() + cosine
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub position: [f64; 2],
    pub tolerance: f64,
}

impl Goal {
    pub fn point(&self) -> Vec2 {
        Vec2::new(self.position[0], self.position[1])
    }

    pub fn distance(&self, world: &WorldState) -> f64 {
        (world.disks[1].pose.position() - self.point()).norm()
    }

    pub fn reached(&self, world: &WorldState) -> bool {
        self.distance(world) <= self.tolerance
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Hard,
}

impl Difficulty {
    pub fn name(self) -> &'static str {
        match self {
            Self::Easy => "easy",
            Self::Hard => "hard",
        }
    }
}

/// Goal three radii of disk 2 away from its center, in a direction drawn
/// relative to the disk 1 to disk 2 axis: within 30 degrees of it for easy
/// goals, between 30 and 60 degrees off it for hard ones.
pub fn sample_goal<R: Rng + ?Sized>(world: &WorldState, difficulty: Difficulty, rng: &mut R) -> Result<Goal, PlanError> {
    if world.disks.len() < 2 {
        return Err(PlanError::TooFewDisks(world.disks.len()));
    }
    let angle = match difficulty {
        Difficulty::Easy => rng.random_range(-PI / 6.0..=PI / 6.0),
        Difficulty::Hard => {
            let a = rng.random_range(PI / 6.0..=PI / 3.0);
            if rng.random_bool(0.5) {
                a
            } else {
                -a
            }
        }
    };
    let (p1, p2) = (world.disks[0].pose.position(), world.disks[1].pose.position());
    let r2 = world.disks[1].radius;
    let g = p2 + rotate((p2 - p1).normalize(), angle) * (3.0 * r2);
    Ok(Goal {
        position: [g.x, g.y],
        tolerance: r2 / 10.0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Horizon once disk 2 is within `switch_distance` of the goal.
    pub horizon_near: usize,
    pub horizon_far: usize,
    /// m
    pub switch_distance: f64,
    pub max_episode_actions: usize,
    /// Most nodes the search may expand before falling back to the best
    /// single action.
    pub queue_capacity: usize,
    /// Resting steps after each push, so the disks come to rest before the
    /// next observation.
    pub settle_steps: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon_near: 3,
            horizon_far: 2,
            switch_distance: 0.010,
            max_episode_actions: 60,
            queue_capacity: 4096,
            settle_steps: 12,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.horizon_near == 0 || self.horizon_far == 0 {
            return Err("horizons must be at least 1".into());
        }
        if !(self.switch_distance >= 0.0) || self.queue_capacity == 0 {
            return Err("switch distance must be non-negative and queue capacity positive".into());
        }
        Ok(())
    }

    pub fn active_horizon(&self, world: &WorldState, goal: &Goal) -> usize {
        if goal.distance(world) < self.switch_distance {
            self.horizon_near
        } else {
            self.horizon_far
        }
    }
}

/// Search-queue entry.
#[derive(Clone, Debug)]
pub struct PlanNode {
    pub actions: Vec<usize>,
    pub state: WorldState,
    pub cost: f64,
}

impl PartialEq for PlanNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for PlanNode {}

impl PartialOrd for PlanNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PlanNode {
    /// Reversed so the max-heap pops the cheapest node, lowest action
    /// indices first among equals.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.actions.cmp(&self.actions))
    }
}

/// Result of one planning call.
#[derive(Clone, Debug)]
pub struct Plan {
    pub action: ControlAction,
    /// Full sequence the first action was taken from.
    pub sequence: Vec<usize>,
    pub cost: f64,
    pub expansions: usize,
    /// True when the expansion budget ran out.
    pub fell_back: bool,
}

/// Predicted end states of every admissible action from `world`.
fn expand(
    world: &WorldState,
    actions: &[ControlAction],
    model: &DynamicsModel,
    settle: usize,
) -> Result<Vec<(usize, WorldState)>, ModelError> {
    let dt = model.dt();
    let admissible: Vec<&ControlAction> = actions.iter().filter(|a| start_is_clear(a, world)).collect();
    let staged: Vec<WorldState> = admissible.iter().map(|a| a.staged(world)).collect();
    let commands: Vec<Vec<Vec2>> = admissible.iter().map(|a| a.commands(world, dt, settle)).collect();
    let rows = model.final_rows(&staged, &commands)?;
    Ok(admissible
        .iter()
        .zip(staged)
        .zip(rows)
        .map(|((a, mut w), r)| {
            for (d, row) in w.disks.iter_mut().zip(&r) {
                let k = row_to_kinematics(row);
                d.pose = k.pose;
                d.twist = k.twist;
            }
            let travel: Vec2 = commands_travel(a, world, dt, settle);
            w.pusher.position += travel;
            (a.index, w)
        })
        .collect())
}

fn commands_travel(a: &ControlAction, world: &WorldState, dt: f64, settle: usize) -> Vec2 {
    a.commands(world, dt, settle).iter().map(|c| c * dt).sum()
}

/// The pusher may not start inside a disk other than the one it touches.
fn start_is_clear(action: &ControlAction, world: &WorldState) -> bool {
    let (start, _) = action.placement(world);
    world.disks[1..]
        .iter()
        .all(|d| (d.pose.position() - start).norm() >= d.radius + world.pusher.radius)
}

fn node_cost(state: &WorldState, goal: Vec2) -> f64 {
    heuristic(state.disks[0].pose.position(), state.disks[1].pose.position(), goal)
}

/// Chooses the next push with the heuristic as cost.
pub fn plan_next(world: &WorldState, goal: &Goal, model: &DynamicsModel, cfg: &PlannerConfig) -> Result<Plan, PlanError> {
    let g = goal.point();
    plan_next_with_cost(world, goal, model, cfg, |s| node_cost(s, g))
}

/// Best-first search under an arbitrary state cost.
pub fn plan_next_with_cost<F>(
    world: &WorldState,
    goal: &Goal,
    model: &DynamicsModel,
    cfg: &PlannerConfig,
    cost: F,
) -> Result<Plan, PlanError>
where
    F: Fn(&WorldState) -> f64,
{
    if world.disks.len() < 2 {
        return Err(PlanError::TooFewDisks(world.disks.len()));
    }
    let actions = enumerate_actions();
    let horizon = cfg.active_horizon(world, goal);
    let mut heap = BinaryHeap::new();
    heap.push(PlanNode {
        actions: Vec::new(),
        state: world.clone(),
        cost: cost(world),
    });
    let mut best_single: Option<PlanNode> = None;
    let mut expansions = 0;
    while let Some(node) = heap.pop() {
        if node.actions.len() == horizon {
            return Ok(Plan {
                action: actions[node.actions[0]],
                sequence: node.actions,
                cost: node.cost,
                expansions,
                fell_back: false,
            });
        }
        if expansions >= cfg.queue_capacity {
            break;
        }
        expansions += 1;
        for (idx, state) in expand(&node.state, &actions, model, cfg.settle_steps)? {
            let mut seq = node.actions.clone();
            seq.push(idx);
            let child = PlanNode {
                cost: cost(&state),
                actions: seq,
                state,
            };
            if child.actions.len() == 1 && best_single.as_ref().is_none_or(|b| child > *b) {
                best_single = Some(child.clone());
            }
            heap.push(child);
        }
    }
    let fallback = best_single.map(|n| n.actions[0]).unwrap_or(0);
    Ok(Plan {
        action: actions[fallback],
        sequence: vec![fallback],
        cost: f64::NAN,
        expansions,
        fell_back: true,
    })
}

/// Executes `action` in the simulated world, returning every intermediate
/// state after the staged start.
pub fn execute_action(world: &WorldState, action: &ControlAction, sim: &SimConfig, settle: usize) -> Vec<WorldState> {
    let staged = action.staged(world);
    let commands = action.commands(world, sim.dt, settle);
    let mut states = Vec::with_capacity(commands.len() + 1);
    states.push(staged);
    for c in commands {
        let next = step(states.last().unwrap(), c, sim);
        states.push(next);
    }
    states
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub success: bool,
    /// Pushes executed.
    pub steps: usize,
    pub goal: Goal,
    pub final_distance: f64,
    pub actions: Vec<ControlAction>,
    /// Observed frames: the start, then the state after each push.
    pub trajectory: Vec<Frame>,
}

/// Closed-loop episode: plan, execute one push in the true world, observe,
/// repeat until disk 2 is within tolerance or the action cap is hit.
pub fn run_episode(
    world: &WorldState,
    sim: &SimConfig,
    model: &DynamicsModel,
    goal: &Goal,
    cfg: &PlannerConfig,
) -> Result<EpisodeOutcome, PlanError> {
    let mut current = world.clone();
    let mut trajectory = vec![Frame::from_world(&current)];
    let mut actions = Vec::new();
    while !goal.reached(&current) && actions.len() < cfg.max_episode_actions {
        let plan = plan_next(&current, goal, model, cfg)?;
        let states = execute_action(&current, &plan.action, sim, cfg.settle_steps);
        current = states.last().cloned().expect("at least the staged state");
        trajectory.push(Frame::from_world(&current));
        actions.push(plan.action);
    }
    Ok(EpisodeOutcome {
        success: goal.reached(&current),
        steps: actions.len(),
        goal: *goal,
        final_distance: goal.distance(&current),
        actions,
        trajectory,
    })
}

#[cfg(test)]
mod tests;
