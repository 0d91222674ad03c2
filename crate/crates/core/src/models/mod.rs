//! Forward models of the pushing scene: the analytical engine alone, the
//! interaction network (IN) and the simulator-augmented interaction network
//! (SAIN), which additionally sees the per-step state changes of a nominal
//! engine rolled out alongside it.
//!
//! Both learned models share one structure. A relation network maps every
//! ordered object pair to an effect vector; effects are summed per receiver
//! and fed with the receiver's own state to a dynamics network that predicts
//! its acceleration. Velocities integrate the acceleration and poses
//! integrate the new velocity.

mod codec;
mod engine;
mod graph;
mod loss;
mod rollout;
mod train;

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use codec::{
    decode_kinematics, dyn_layer_widths, dyn_width, encode_kinematics, rel_layer_widths, rel_width, FeatureCodec,
    CONTACT_GATE_MARGIN, DYN_EFFECT_OFFSET, DYN_OUTPUT_WIDTH, EFFECT_WIDTH, HIDDEN_WIDTHS,
};
pub use engine::{NominalEngine, NOMINAL_MASSES, NOMINAL_MU, NOMINAL_RADII};
pub use loss::{trajectory_loss, LossWeights};
pub use rollout::{engine_inputs, in_step, rollout_final_rows, rollout_many, rollout_model, sain_step, ActionEncoding, EngineInputs};
pub use train::{
    fine_tune, fit_codec, fit_loss_weights, train, window_objective, window_objective_value, LossPoint, TrainError,
    TrainOptions, TrainReport, Trained,
};

use crate::neural::{decode_checkpoint, layout_blocks, write_checkpoint, MlpParams, NeuralError, ParamBlock, TrainConfig};
use crate::sim::{Trajectory, Vec2, WorldState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    In,
    Sain,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::In => "in",
            Self::Sain => "sain",
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ModelError {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Self::Contract(msg.into())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub f_rel: MlpParams,
    pub f_dyn: MlpParams,
    pub codec: FeatureCodec,
    /// Engine rolled out alongside SAIN; for IN only its step size is used.
    pub engine: NominalEngine,
}

impl ModelParams {
    /// All weights and biases zero: predicts constant velocity.
    pub fn zeros(kind: ModelKind, codec: FeatureCodec, engine: NominalEngine) -> Self {
        Self {
            kind,
            f_rel: MlpParams::zeros(&rel_layer_widths(kind)),
            f_dyn: MlpParams::zeros(&dyn_layer_widths(kind)),
            codec,
            engine,
        }
    }

    pub fn glorot<R: Rng + ?Sized>(kind: ModelKind, codec: FeatureCodec, engine: NominalEngine, rng: &mut R) -> Self {
        let f_rel = MlpParams::glorot(&rel_layer_widths(kind), rng);
        let f_dyn = MlpParams::glorot(&dyn_layer_widths(kind), rng);
        Self {
            kind,
            f_rel,
            f_dyn,
            codec,
            engine,
        }
    }

    pub fn num_params(&self) -> usize {
        self.f_rel.num_params() + self.f_dyn.num_params()
    }

    pub fn squared_norm(&self) -> f64 {
        self.f_rel.squared_norm() + self.f_dyn.squared_norm()
    }

    /// Relation parameters followed by dynamics parameters.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.f_rel.flatten_into(&mut out);
        self.f_dyn.flatten_into(&mut out);
        out
    }

    pub fn assign(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params(), "flat parameter length");
        let used = self.f_rel.assign_from(flat);
        self.f_dyn.assign_from(&flat[used..]);
    }

    pub fn param_blocks(&self) -> Vec<ParamBlock> {
        let rel = self.f_rel.block_layout().into_iter().map(|(n, l)| (format!("rel.{n}"), l));
        let dy = self.f_dyn.block_layout().into_iter().map(|(n, l)| (format!("dyn.{n}"), l));
        layout_blocks(rel.chain(dy))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.codec.kind != self.kind {
            return Err(ModelError::contract("codec kind differs from model kind"));
        }
        if self.f_rel.widths() != rel_layer_widths(self.kind) {
            return Err(ModelError::contract(format!(
                "relation network widths {:?} do not match {:?}",
                self.f_rel.widths(),
                rel_layer_widths(self.kind)
            )));
        }
        if self.f_dyn.widths() != dyn_layer_widths(self.kind) {
            return Err(ModelError::contract(format!(
                "dynamics network widths {:?} do not match {:?}",
                self.f_dyn.widths(),
                dyn_layer_widths(self.kind)
            )));
        }
        self.codec.validate().map_err(ModelError::Contract)?;
        self.engine.validate().map_err(ModelError::Contract)?;
        Ok(())
    }

    pub fn write_checkpoint<W: Write>(&self, writer: W, meta: &CheckpointMeta) -> Result<(), ModelError> {
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            kind: self.kind,
            rel_widths: self.f_rel.widths(),
            dyn_widths: self.f_dyn.widths(),
            codec: self.codec.clone(),
            engine: self.engine.clone(),
            meta: meta.clone(),
        };
        write_checkpoint(writer, &header, &self.flatten())?;
        Ok(())
    }

    pub fn to_checkpoint_bytes(&self, meta: &CheckpointMeta) -> Result<Vec<u8>, ModelError> {
        let mut out = Vec::new();
        self.write_checkpoint(&mut out, meta)?;
        Ok(out)
    }

    pub fn read_checkpoint<R: Read>(reader: R) -> Result<(Self, CheckpointMeta), ModelError> {
        let (h, blob): (CheckpointHeader, Vec<f64>) = decode_checkpoint(reader)?;
        if h.format != CHECKPOINT_FORMAT {
            return Err(ModelError::Checkpoint(format!("unknown checkpoint format {:?}", h.format)));
        }
        let mut params = Self::zeros(h.kind, h.codec, h.engine);
        if params.f_rel.widths() != h.rel_widths || params.f_dyn.widths() != h.dyn_widths {
            return Err(ModelError::Checkpoint("layer shapes do not match the model kind".into()));
        }
        if blob.len() != params.num_params() {
            return Err(ModelError::Checkpoint(format!(
                "blob holds {} values, model needs {}",
                blob.len(),
                params.num_params()
            )));
        }
        params.assign(&blob);
        params.validate()?;
        Ok((params, h.meta))
    }

    pub fn save(&self, path: &Path, meta: &CheckpointMeta) -> Result<(), ModelError> {
        let bytes = self.to_checkpoint_bytes(meta)?;
        std::fs::write(path, bytes).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<(Self, CheckpointMeta), ModelError> {
        let file = std::fs::File::open(path).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::read_checkpoint(file)
    }
}

pub const CHECKPOINT_FORMAT: &str = "sain-model/1";

/// Provenance stored next to the weights.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub train_config: Option<TrainConfig>,
    pub report: Option<TrainReport>,
    /// Hashes of the datasets the parameters were fitted on.
    pub datasets: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    kind: ModelKind,
    rel_widths: Vec<usize>,
    dyn_widths: Vec<usize>,
    codec: FeatureCodec,
    engine: NominalEngine,
    meta: CheckpointMeta,
}

/// Any forward model usable for evaluation and planning.
#[derive(Clone, Debug)]
pub enum DynamicsModel {
    Physics(NominalEngine),
    Learned(ModelParams),
}

impl DynamicsModel {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Physics(_) => "physics",
            Self::Learned(p) => p.kind.name(),
        }
    }

    pub fn dt(&self) -> f64 {
        match self {
            Self::Physics(e) => e.sim.dt,
            Self::Learned(p) => p.engine.sim.dt,
        }
    }

    pub fn rollout(&self, s0: &WorldState, commands: &[Vec2]) -> Result<Trajectory, ModelError> {
        match self {
            Self::Physics(e) => Ok(e.rollout(s0, commands)),
            Self::Learned(p) => rollout_model(p, s0, commands),
        }
    }

    /// End states `[x, y, theta, vx, vy, omega]` per disk of several rollouts.
    pub fn final_rows(&self, worlds: &[WorldState], commands: &[Vec<Vec2>]) -> Result<Vec<Vec<[f64; 6]>>, ModelError> {
        match self {
            Self::Physics(e) => Ok(worlds
                .iter()
                .zip(commands)
                .map(|(w, c)| {
                    let traj = e.rollout(w, c);
                    traj.last()
                        .disks
                        .iter()
                        .map(|d| crate::scenario::kinematics_to_row(&d.kinematics()))
                        .collect()
                })
                .collect()),
            Self::Learned(p) => rollout_final_rows(p, worlds, commands),
        }
    }
}

#[cfg(test)]
mod tests;
