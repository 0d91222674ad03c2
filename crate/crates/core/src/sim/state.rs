use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::surface::SurfaceModel;
use super::Vec2;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Twist2 {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl Twist2 {
    pub fn new(vx: f64, vy: f64, omega: f64) -> Self {
        Self { vx, vy, omega }
    }

    pub fn linear(&self) -> Vec2 {
        Vec2::new(self.vx, self.vy)
    }

    pub fn is_zero(&self) -> bool {
        self.vx == 0.0 && self.vy == 0.0 && self.omega == 0.0
    }
}

/// Pose and twist of one disk, without its static properties.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiskKinematics {
    pub pose: Pose2,
    pub twist: Twist2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiskState {
    pub pose: Pose2,
    pub twist: Twist2,
    /// kg
    pub mass: f64,
    /// m
    pub radius: f64,
}

impl DiskState {
    pub fn at_rest(x: f64, y: f64, mass: f64, radius: f64) -> Self {
        Self {
            pose: Pose2::new(x, y, 0.0),
            twist: Twist2::default(),
            mass,
            radius,
        }
    }

    /// Moment of inertia of a uniform solid disk about its center.
    pub fn inertia(&self) -> f64 {
        0.5 * self.mass * self.radius * self.radius
    }

    pub fn kinematics(&self) -> DiskKinematics {
        DiskKinematics {
            pose: self.pose,
            twist: self.twist,
        }
    }

    pub fn kinetic_energy(&self) -> f64 {
        let v2 = self.twist.vx * self.twist.vx + self.twist.vy * self.twist.vy;
        0.5 * self.mass * v2 + 0.5 * self.inertia() * self.twist.omega * self.twist.omega
    }
}

pub const DEFAULT_PUSHER_RADIUS: f64 = 0.0048;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PusherState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
}

impl PusherState {
    pub fn at(position: Vec2) -> Self {
        Self {
            position,
            velocity: Vec2::zeros(),
            radius: DEFAULT_PUSHER_RADIUS,
        }
    }
}

/// Counters the engine bumps when it has to repair the state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub deep_penetrations: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    /// Ordered; the index is the object identity used everywhere else.
    pub disks: Vec<DiskState>,
    pub pusher: PusherState,
    pub surface: Arc<SurfaceModel>,
    #[serde(default)]
    pub diagnostics: Diagnostics,
}

impl WorldState {
    pub fn new(disks: Vec<DiskState>, pusher: PusherState, surface: SurfaceModel) -> Self {
        Self {
            disks,
            pusher,
            surface: Arc::new(surface),
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.disks.iter().map(DiskState::kinetic_energy).sum()
    }

    pub fn kinematics(&self) -> Vec<DiskKinematics> {
        self.disks.iter().map(DiskState::kinematics).collect()
    }

    /// Replaces poses and twists, keeping statics, pusher and surface.
    pub fn with_kinematics(&self, kin: &[DiskKinematics]) -> Self {
        assert_eq!(kin.len(), self.disks.len(), "object count mismatch");
        let mut out = self.clone();
        for (d, k) in out.disks.iter_mut().zip(kin) {
            d.pose = k.pose;
            d.twist = k.twist;
        }
        out
    }

    /// Largest pairwise disk overlap in meters (0 when nothing overlaps).
    pub fn max_disk_overlap(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.disks.len() {
            for j in (i + 1)..self.disks.len() {
                let (a, b) = (&self.disks[i], &self.disks[j]);
                let d = (b.pose.position() - a.pose.position()).norm();
                worst = worst.max(a.radius + b.radius - d);
            }
        }
        worst
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// s
    pub dt: f64,
    pub restitution: f64,
    /// Coulomb coefficient for disk-disk and pusher-disk contacts.
    pub contact_mu: f64,
    /// m
    pub penetration_tolerance: f64,
    pub baumgarte_beta: f64,
    pub solver_iterations: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1.0 / 240.0,
            restitution: 0.0,
            contact_mu: 0.3,
            penetration_tolerance: 1e-4,
            baumgarte_beta: 0.2,
            solver_iterations: 10,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(format!("dt must be positive, got {}", self.dt));
        }
        if !(0.0..=1.0).contains(&self.restitution) {
            return Err(format!("restitution must be in [0, 1], got {}", self.restitution));
        }
        if self.solver_iterations == 0 {
            return Err("solver_iterations must be at least 1".into());
        }
        if !(self.contact_mu >= 0.0) {
            return Err(format!("contact_mu must be non-negative, got {}", self.contact_mu));
        }
        Ok(())
    }
}

/// A sequence of world states produced by stepping the engine.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<WorldState>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &WorldState {
        self.states.last().expect("trajectory is never empty")
    }
}
