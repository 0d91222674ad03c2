//! WebAssembly bindings for the static demo page in `www/`.
//!
//! A [`Demo`] holds one two-disk scene and a goal for the second disk. Pushes
//! run in the analytical engine; planned pushes use the same engine as the
//! planner's model. Every call returns JSON so the page can animate it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sain_core::models::{DynamicsModel, NominalEngine};
use sain_core::planner::{enumerate_actions, execute_action, plan_next, sample_goal, Difficulty, Goal, PlannerConfig};
use sain_core::scenario::{sample_scene, SceneSpec};
use sain_core::sim::{SimConfig, SurfaceModel, WorldState};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Frames sent to the page are thinned to about 60 per push.
const FRAME_STRIDE: usize = 4;

#[derive(Serialize)]
struct DiskView {
    x: f64,
    y: f64,
    theta: f64,
    radius: f64,
}

#[derive(Serialize)]
struct FrameView {
    pusher: [f64; 2],
    disks: Vec<DiskView>,
}

#[derive(Serialize)]
struct PushView {
    action: usize,
    contact_angle: f64,
    push_angle: f64,
    frames: Vec<FrameView>,
    distance: f64,
    reached: bool,
}

#[derive(Serialize)]
struct SceneView {
    goal: [f64; 2],
    tolerance: f64,
    pusher_radius: f64,
    actions: usize,
    frame: FrameView,
    distance: f64,
}

fn frame(w: &WorldState) -> FrameView {
    FrameView {
        pusher: [w.pusher.position.x, w.pusher.position.y],
        disks: w
            .disks
            .iter()
            .map(|d| DiskView {
                x: d.pose.x,
                y: d.pose.y,
                theta: d.pose.theta,
                radius: d.radius,
            })
            .collect(),
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("view types serialize")
}

#[wasm_bindgen]
pub struct Demo {
    world: WorldState,
    goal: Goal,
    sim: SimConfig,
    planner: PlannerConfig,
}

#[wasm_bindgen]
impl Demo {
    /// Samples a scene and a goal; `hard` puts the goal 30 to 60 degrees off
    /// the line through both disks.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, hard: bool) -> Result<Demo, JsError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = SceneSpec::control_matched();
        let world = sample_scene(&scene, SurfaceModel::uniform(0.15), &mut rng).map_err(|e| JsError::new(&e.to_string()))?;
        let difficulty = if hard { Difficulty::Hard } else { Difficulty::Easy };
        let goal = sample_goal(&world, difficulty, &mut rng).map_err(|e| JsError::new(&e.to_string()))?;
        Ok(Demo {
            world,
            goal,
            sim: SimConfig::default(),
            planner: PlannerConfig::default(),
        })
    }

    /// Current state, goal and action count as JSON.
    pub fn scene(&self) -> String {
        to_json(&SceneView {
            goal: self.goal.position,
            tolerance: self.goal.tolerance,
            pusher_radius: self.world.pusher.radius,
            actions: enumerate_actions().len(),
            frame: frame(&self.world),
            distance: self.goal.distance(&self.world),
        })
    }

    /// Executes action `index` of the 72-action set and returns its frames.
    pub fn push(&mut self, index: usize) -> Result<String, JsError> {
        let actions = enumerate_actions();
        let action = actions
            .get(index)
            .copied()
            .ok_or_else(|| JsError::new(&format!("action index {index} out of range 0..{}", actions.len())))?;
        let states = execute_action(&self.world, &action, &self.sim, self.planner.settle_steps);
        let mut frames: Vec<FrameView> = states.iter().step_by(FRAME_STRIDE).map(frame).collect();
        let last = states.last().expect("at least the staged state").clone();
        frames.push(frame(&last));
        self.world = last;
        Ok(to_json(&PushView {
            action: index,
            contact_angle: action.contact_angle,
            push_angle: action.push_angle,
            frames,
            distance: self.goal.distance(&self.world),
            reached: self.goal.reached(&self.world),
        }))
    }

    /// Plans one push with the engine as the model, then executes it.
    pub fn plan_and_push(&mut self) -> Result<String, JsError> {
        let model = DynamicsModel::Physics(NominalEngine::observed(self.sim));
        let plan = plan_next(&self.world, &self.goal, &model, &self.planner).map_err(|e| JsError::new(&e.to_string()))?;
        self.push(plan.action.index)
    }
}
