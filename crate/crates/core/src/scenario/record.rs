use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::sim::{DiskKinematics, DiskState, Pose2, PusherState, SimConfig, SurfaceModel, Trajectory, Twist2, Vec2, WorldState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PushSetup {
    /// Dynamic pusher driven by a constant calibrated force.
    DirectForce,
    /// Kinematic pusher following a velocity profile.
    PositionControl,
}

/// Observation of one instant: pusher center and `[x, y, theta, vx, vy, omega]`
/// per disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub pusher: [f64; 2],
    pub disks: Vec<[f64; 6]>,
}

impl Frame {
    pub fn from_world(world: &WorldState) -> Self {
        Self {
            pusher: [world.pusher.position.x, world.pusher.position.y],
            disks: world.disks.iter().map(|d| kinematics_to_row(&d.kinematics())).collect(),
        }
    }

    pub fn disk(&self, i: usize) -> DiskKinematics {
        row_to_kinematics(&self.disks[i])
    }

    pub fn pusher_position(&self) -> Vec2 {
        Vec2::new(self.pusher[0], self.pusher[1])
    }
}

pub fn kinematics_to_row(k: &DiskKinematics) -> [f64; 6] {
    [k.pose.x, k.pose.y, k.pose.theta, k.twist.vx, k.twist.vy, k.twist.omega]
}

pub fn row_to_kinematics(r: &[f64; 6]) -> DiskKinematics {
    DiskKinematics {
        pose: Pose2::new(r[0], r[1], r[2]),
        twist: Twist2::new(r[3], r[4], r[5]),
    }
}

/// One recorded push.
///
/// `frames` has one more entry than `commands`; `commands[t]` is the pusher
/// velocity that carries `frames[t].pusher` to `frames[t + 1].pusher`, so a
/// kinematic replay reproduces the recorded pusher track. `nominal` is the
/// shadow rollout of the nominal engine from `frames[0]` under the same
/// commands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub index: usize,
    pub seed: u64,
    pub setup: PushSetup,
    pub masses: Vec<f64>,
    pub radii: Vec<f64>,
    pub pusher_radius: f64,
    /// Ground surface of the world that produced the frames.
    pub surface: Arc<SurfaceModel>,
    /// Disk-disk and pusher-disk coefficient of that world.
    pub contact_mu: f64,
    /// Constant drive force of a direct-force push (N).
    pub push_force: Option<[f64; 2]>,
    pub commands: Vec<[f64; 2]>,
    pub frames: Vec<Frame>,
    pub nominal: Vec<Frame>,
}

impl TrajectoryRecord {
    pub fn num_disks(&self) -> usize {
        self.masses.len()
    }

    /// Number of transitions.
    pub fn steps(&self) -> usize {
        self.commands.len()
    }

    pub fn command(&self, t: usize) -> Vec2 {
        Vec2::new(self.commands[t][0], self.commands[t][1])
    }

    pub fn command_vec(&self) -> Vec<Vec2> {
        (0..self.steps()).map(|t| self.command(t)).collect()
    }

    /// Observed world at step `t`, with the pusher moving at that step's
    /// command (zero after the last one).
    pub fn world_at(&self, t: usize) -> WorldState {
        world_from_frame(self, &self.frames[t], t)
    }

    /// State of the nominal shadow rollout at step `t`, carrying the recorded
    /// statics of the observed disks.
    pub fn nominal_world_at(&self, t: usize) -> WorldState {
        world_from_frame(self, &self.nominal[t], t)
    }

    pub fn truth_trajectory(&self, dt: f64) -> Trajectory {
        Trajectory {
            dt,
            states: (0..self.frames.len()).map(|t| self.world_at(t)).collect(),
        }
    }

    pub fn sim_config(&self, base: &SimConfig) -> SimConfig {
        SimConfig {
            contact_mu: self.contact_mu,
            ..*base
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let n = self.num_disks();
        if n == 0 || self.radii.len() != n {
            return Err(format!("{} masses but {} radii", n, self.radii.len()));
        }
        if self.frames.len() != self.commands.len() + 1 {
            return Err(format!(
                "{} frames for {} commands",
                self.frames.len(),
                self.commands.len()
            ));
        }
        if !self.nominal.is_empty() && self.nominal.len() != self.frames.len() {
            return Err(format!(
                "nominal rollout has {} frames, expected {}",
                self.nominal.len(),
                self.frames.len()
            ));
        }
        for (t, f) in self.frames.iter().chain(&self.nominal).enumerate() {
            if f.disks.len() != n {
                return Err(format!("frame {t} has {} disks, expected {n}", f.disks.len()));
            }
            if !f.pusher.iter().chain(f.disks.iter().flatten()).all(|v| v.is_finite()) {
                return Err(format!("frame {t} holds a non-finite value"));
            }
        }
        let finite_statics = self
            .masses
            .iter()
            .chain(&self.radii)
            .chain(self.commands.iter().flatten())
            .all(|v| v.is_finite());
        if !finite_statics || !self.contact_mu.is_finite() || !self.pusher_radius.is_finite() {
            return Err("non-finite statics or commands".into());
        }
        Ok(())
    }
}

fn world_from_frame(rec: &TrajectoryRecord, frame: &Frame, t: usize) -> WorldState {
    let disks = frame
        .disks
        .iter()
        .zip(rec.masses.iter().zip(&rec.radii))
        .map(|(row, (&mass, &radius))| {
            let k = row_to_kinematics(row);
            DiskState {
                pose: k.pose,
                twist: k.twist,
                mass,
                radius,
            }
        })
        .collect();
    let velocity = if t < rec.commands.len() { rec.command(t) } else { Vec2::zeros() };
    WorldState {
        disks,
        pusher: PusherState {
            position: frame.pusher_position(),
            velocity,
            radius: rec.pusher_radius,
        },
        surface: Arc::clone(&rec.surface),
        diagnostics: Default::default(),
    }
}
