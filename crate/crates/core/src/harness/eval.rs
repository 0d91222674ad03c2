use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, FinalPoses, MetricsReport};
use super::HarnessError;
use crate::par::par_map;
use crate::models::DynamicsModel;
use crate::planner::{run_episode, sample_goal, Difficulty, EpisodeOutcome, Goal, PlannerConfig};
use crate::scenario::{sample_scene, surrogate_surface, trajectory_seed, SceneSpec, TrajectoryRecord, WorldSpec};
use crate::sim::{SimConfig, SurfaceModel, Vec2, WorldState};

/// Scenes per batched model rollout during evaluation.
const EVAL_CHUNK: usize = 64;

fn poses(rows: &[[f64; 6]]) -> Vec<[f64; 3]> {
    rows.iter().map(|r| [r[0], r[1], r[2]]).collect()
}

/// Rolls `model` from the first frame of every record under its recorded
/// pusher commands and scores the state reached after `horizon` steps.
pub fn eval_prediction(
    model: &DynamicsModel,
    label: &str,
    dataset_name: &str,
    records: &[TrajectoryRecord],
    horizon: usize,
    threads: usize,
) -> Result<MetricsReport, HarnessError> {
    if let Some(r) = records.iter().find(|r| r.steps() < horizon) {
        return Err(HarnessError::Config(format!(
            "trajectory {} has {} steps, horizon is {horizon}",
            r.index,
            r.steps()
        )));
    }
    let chunks: Vec<&[TrajectoryRecord]> = records.chunks(EVAL_CHUNK).collect();
    let results = par_map(&chunks, threads, |chunk| -> Result<Vec<FinalPoses>, HarnessError> {
        let worlds: Vec<WorldState> = chunk.iter().map(|r| r.world_at(0)).collect();
        let commands: Vec<Vec<Vec2>> = chunk.iter().map(|r| r.command_vec()[..horizon].to_vec()).collect();
        let finals = model.final_rows(&worlds, &commands)?;
        Ok(chunk
            .iter()
            .zip(finals)
            .map(|(r, f)| FinalPoses {
                predicted: poses(&f),
                initial: poses(&r.frames[0].disks),
                truth: poses(&r.frames[horizon].disks),
            })
            .collect())
    });
    let mut all = Vec::with_capacity(records.len());
    for r in results {
        all.extend(r?);
    }
    Ok(compute_metrics(label, dataset_name, horizon, &all)?)
}

/// Episodes a control evaluation runs: scenes, goals and the world that
/// executes the pushes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlSuite {
    pub n_easy: usize,
    pub n_hard: usize,
    pub seed: u64,
    pub scene: SceneSpec,
    pub world: WorldSpec,
    pub sim: SimConfig,
}

impl Default for ControlSuite {
    fn default() -> Self {
        Self {
            n_easy: 25,
            n_hard: 25,
            seed: 0,
            scene: SceneSpec::control_matched(),
            world: WorldSpec::Simulation,
            sim: SimConfig::default(),
        }
    }
}

/// One episode's setup.
#[derive(Clone, Debug)]
pub struct EpisodeSetup {
    pub index: usize,
    pub difficulty: Difficulty,
    pub world: WorldState,
    pub sim: SimConfig,
    pub goal: Goal,
}

impl ControlSuite {
    /// Deterministic episode list: easy episodes first, then hard ones.
    /// Episode `k` depends only on the suite seed and `k`.
    pub fn episodes(&self) -> Result<Vec<EpisodeSetup>, HarnessError> {
        self.scene.validate().map_err(HarnessError::Config)?;
        let shared = match &self.world {
            WorldSpec::SurrogateReal(s) => Some(Arc::new(surrogate_surface(s))),
            WorldSpec::Simulation => None,
        };
        let difficulties = std::iter::repeat_n(Difficulty::Easy, self.n_easy).chain(std::iter::repeat_n(Difficulty::Hard, self.n_hard));
        difficulties
            .enumerate()
            .map(|(index, difficulty)| {
                let mut rng = ChaCha8Rng::seed_from_u64(trajectory_seed(self.seed, index));
                let mu = self.scene.mu.draw(0, &mut rng);
                let (surface, sim) = match (&self.world, &shared) {
                    (WorldSpec::SurrogateReal(s), Some(surface)) => (
                        Arc::clone(surface),
                        SimConfig {
                            contact_mu: self.sim.contact_mu * s.contact_mu_factor,
                            ..self.sim
                        },
                    ),
                    _ => (Arc::new(SurfaceModel::uniform(mu)), self.sim),
                };
                let world = sample_scene(&self.scene, surface, &mut rng)?;
                let goal = sample_goal(&world, difficulty, &mut rng)?;
                Ok(EpisodeSetup {
                    index,
                    difficulty,
                    world,
                    sim,
                    goal,
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub index: usize,
    pub difficulty: Difficulty,
    pub outcome: EpisodeOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlReport {
    pub model: String,
    pub easy_success: f64,
    pub hard_success: f64,
    pub episodes: Vec<EpisodeRecord>,
}

impl ControlReport {
    pub fn rate(&self, d: Difficulty) -> f64 {
        let (hit, n) = self
            .episodes
            .iter()
            .filter(|e| e.difficulty == d)
            .fold((0, 0), |(h, n), e| (h + e.outcome.success as usize, n + 1));
        if n == 0 {
            0.0
        } else {
            hit as f64 / n as f64
        }
    }
}

/// Runs every episode of `suite` with `model` planning and the suite's
/// world executing.
pub fn eval_control(
    model: &DynamicsModel,
    label: &str,
    suite: &ControlSuite,
    planner: &PlannerConfig,
    threads: usize,
) -> Result<ControlReport, HarnessError> {
    planner.validate().map_err(HarnessError::Config)?;
    let setups = suite.episodes()?;
    let outcomes = par_map(&setups, threads, |s| run_episode(&s.world, &s.sim, model, &s.goal, planner));
    let mut episodes = Vec::with_capacity(setups.len());
    for (s, o) in setups.iter().zip(outcomes) {
        episodes.push(EpisodeRecord {
            index: s.index,
            difficulty: s.difficulty,
            outcome: o?,
        });
    }
    let mut report = ControlReport {
        model: label.into(),
        easy_success: 0.0,
        hard_success: 0.0,
        episodes,
    };
    report.easy_success = report.rate(Difficulty::Easy);
    report.hard_success = report.rate(Difficulty::Hard);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::NominalEngine;
    use crate::scenario::{generate_dataset, DatasetSpec, PushSetup, PushSpec};

    #[test]
    fn exact_engine_predicts_its_own_data() {
        let spec = DatasetSpec {
            count: 4,
            seed: 3,
            nominal: NominalEngine::observed(SimConfig::default()),
            push: PushSpec {
                setup: PushSetup::PositionControl,
                ..PushSpec::default()
            },
            ..DatasetSpec::default()
        };
        let ds = generate_dataset(&spec).unwrap();
        let model = DynamicsModel::Physics(NominalEngine::observed(SimConfig::default()));
        let m = eval_prediction(&model, "physics", "d", &ds.records, 200, 2).unwrap();
        for o in &m.objects {
            assert!(o.pos_mm < 0.01, "{o:?}");
        }
        assert!(eval_prediction(&model, "physics", "d", &ds.records, 481, 1).is_err());
    }

    #[test]
    fn suites_are_reproducible() {
        let suite = ControlSuite {
            n_easy: 2,
            n_hard: 2,
            ..ControlSuite::default()
        };
        let a = suite.episodes().unwrap();
        let b = suite.episodes().unwrap();
        assert_eq!(a.len(), 4);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.world, y.world);
            assert_eq!(x.goal, y.goal);
        }
        assert_eq!(a[3].difficulty, Difficulty::Hard);
    }
}
