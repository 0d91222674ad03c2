//! Scene sampling, push generation, observation noise and the dataset file
//! format.

mod dataset;
mod generate;
mod record;
mod spec;

use thiserror::Error;

pub use dataset::{generate_dataset, generate_dataset_threads, load_dataset, save_dataset, Dataset, DatasetHeader, DATASET_FORMAT_VERSION};
pub use generate::{
    apply_observation_noise, attach_nominal, friction_field, generate_trajectory, position_control_commands,
    sample_push_direction, sample_scene, steps_for, surrogate_surface, trajectory_seed, DatasetSpec,
};
pub use generate::rotate;
pub use record::{kinematics_to_row, row_to_kinematics, Frame, PushSetup, TrajectoryRecord};
pub use spec::{NoiseSpec, ParamDist, PushSpec, SceneSpec, SurrogateRealSpec, WorldSpec};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("could not place disks without overlap in {tries} tries")]
    Placement { tries: usize },
    #[error("trajectory {index}: no push reached the intended travel")]
    Calibration { index: usize },
    #[error("trajectory {index}: {source}")]
    Trajectory {
        index: usize,
        #[source]
        source: Box<ScenarioError>,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dataset format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error(transparent)]
    Json(serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ScenarioError {
    pub(crate) fn at(self, index: usize) -> Self {
        Self::Trajectory {
            index,
            source: Box::new(self),
        }
    }
}
