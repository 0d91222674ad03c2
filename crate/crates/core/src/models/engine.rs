use serde::{Deserialize, Serialize};

use crate::sim::{rollout_physics, SimConfig, SurfaceModel, Trajectory, Vec2, WorldState};

pub const NOMINAL_MU: f64 = 0.15;
pub const NOMINAL_MASSES: [f64; 2] = [0.896, 1.1];
pub const NOMINAL_RADII: [f64; 2] = [0.0525, 0.058];

/// Analytical engine with optionally overridden parameters.
///
/// Each override replaces the corresponding property of the world it is
/// given; `None` keeps what the world carries. Per-disk lists shorter than
/// the scene repeat their last entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NominalEngine {
    pub mu: Option<f64>,
    pub masses: Option<Vec<f64>>,
    pub radii: Option<Vec<f64>>,
    pub sim: SimConfig,
}

impl Default for NominalEngine {
    fn default() -> Self {
        Self {
            mu: Some(NOMINAL_MU),
            masses: Some(NOMINAL_MASSES.to_vec()),
            radii: Some(NOMINAL_RADII.to_vec()),
            sim: SimConfig::default(),
        }
    }
}

impl NominalEngine {
    /// Engine that trusts every property of the world it is handed.
    pub fn observed(sim: SimConfig) -> Self {
        Self {
            mu: None,
            masses: None,
            radii: None,
            sim,
        }
    }

    /// Copy of `world` with the overrides applied. Overlaps the new radii
    /// create are removed by sliding disks apart along their center lines,
    /// away from the pusher and from lower-indexed disks; velocities are
    /// left as they are.
    pub fn prepare(&self, world: &WorldState) -> WorldState {
        let mut out = world.clone();
        if let Some(mu) = self.mu {
            out.surface = std::sync::Arc::new(SurfaceModel {
                gravity: world.surface.gravity,
                ..SurfaceModel::uniform(mu)
            });
        }
        for (i, d) in out.disks.iter_mut().enumerate() {
            if let Some(m) = self.masses.as_deref().and_then(|m| pick(m, i)) {
                d.mass = m;
            }
            if let Some(r) = self.radii.as_deref().and_then(|r| pick(r, i)) {
                d.radius = r;
            }
        }
        separate(&mut out);
        out
    }

    pub fn rollout(&self, world: &WorldState, commands: &[Vec2]) -> Trajectory {
        rollout_physics(&self.prepare(world), commands, &self.sim)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.sim.validate()?;
        if let Some(mu) = self.mu {
            if !(mu > 0.0 && mu < 1.0) {
                return Err(format!("nominal mu must be in (0, 1), got {mu}"));
            }
        }
        for list in [&self.masses, &self.radii].into_iter().flatten() {
            if list.is_empty() || !list.iter().all(|v| *v > 0.0 && v.is_finite()) {
                return Err("nominal masses and radii must be positive and non-empty".into());
            }
        }
        Ok(())
    }
}

fn separate(world: &mut WorldState) {
    const PASSES: usize = 8;
    let n = world.disks.len();
    for _ in 0..PASSES {
        let mut moved = false;
        let p = world.pusher.position;
        for d in &mut world.disks {
            let gap = d.pose.position() - p;
            let need = d.radius + world.pusher.radius;
            if let Some(shift) = push_out(gap, need) {
                d.pose.x += shift.x;
                d.pose.y += shift.y;
                moved = true;
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                let gap = world.disks[j].pose.position() - world.disks[i].pose.position();
                let need = world.disks[i].radius + world.disks[j].radius;
                if let Some(shift) = push_out(gap, need) {
                    world.disks[j].pose.x += shift.x;
                    world.disks[j].pose.y += shift.y;
                    moved = true;
                }
            }
        }
        if !moved {
            break;
        }
    }
}

fn push_out(gap: Vec2, need: f64) -> Option<Vec2> {
    let dist = gap.norm();
    if dist >= need || dist == 0.0 {
        return None;
    }
    Some(gap * ((need - dist) / dist))
}

fn pick(list: &[f64], i: usize) -> Option<f64> {
    list.get(i).or(list.last()).copied()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{DiskState, PusherState};

    #[test]
    fn overrides_apply_and_extend() {
        let disks = (0..3).map(|k| DiskState::at_rest(0.2 * k as f64, 0.0, 1.0, 0.05)).collect();
        let w = WorldState::new(disks, PusherState::at(Vec2::new(-1.0, 0.0)), SurfaceModel::uniform(0.2));
        let p = NominalEngine::default().prepare(&w);
        assert_eq!(p.surface.mu_nominal, NOMINAL_MU);
        let masses: Vec<f64> = p.disks.iter().map(|d| d.mass).collect();
        assert_eq!(masses, vec![0.896, 1.1, 1.1]);
        assert_eq!(p.disks[2].radius, 0.058);
        assert_eq!(NominalEngine::observed(SimConfig::default()).prepare(&w), w);
    }

    #[test]
    fn prepare_separates_grown_disks() {
        let disks = vec![DiskState::at_rest(0.0, 0.0, 1.0, 0.05), DiskState::at_rest(0.1, 0.0, 1.0, 0.05)];
        let pusher = PusherState {
            position: Vec2::new(-0.0548, 0.0),
            velocity: Vec2::zeros(),
            radius: 0.0048,
        };
        let w = WorldState::new(disks, pusher, SurfaceModel::uniform(0.2));
        let engine = NominalEngine {
            radii: Some(vec![0.06]),
            ..NominalEngine::default()
        };
        let p = engine.prepare(&w);
        assert!(p.max_disk_overlap() <= 1e-12);
        let pusher_gap = (p.disks[0].pose.position() - p.pusher.position).norm();
        assert!((pusher_gap - 0.0648).abs() < 1e-12);
        assert!(p.disks.iter().all(|d| d.twist.is_zero() && d.pose.y == 0.0));
    }
}
