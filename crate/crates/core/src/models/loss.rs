use serde::{Deserialize, Serialize};

use super::{ModelError, ModelParams};
use crate::sim::Trajectory;

/// Multipliers of the three squared-error terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub pos: f64,
    pub vel: f64,
    pub rot: f64,
}

impl LossWeights {
    /// Plain SI units.
    pub const UNIT: Self = Self {
        pos: 1.0,
        vel: 1.0,
        rot: 1.0,
    };
}

/// Squared error of one object at one step, and its gradient with respect
/// to the predicted pose and velocity.
pub(crate) fn object_error(
    pred_pos: &[f64; 3],
    pred_vel: &[f64; 3],
    pos: &[f64; 3],
    vel: &[f64; 3],
    w: &LossWeights,
) -> (f64, [f64; 3], [f64; 3]) {
    let (dx, dy) = (pred_pos[0] - pos[0], pred_pos[1] - pos[1]);
    let (sp, cp) = pred_pos[2].sin_cos();
    let (st, ct) = pos[2].sin_cos();
    let (ds, dc) = (sp - st, cp - ct);
    let mut value = w.pos * (dx * dx + dy * dy) + w.rot * (ds * ds + dc * dc);
    let mut g_vel = [0.0; 3];
    for k in 0..3 {
        let d = pred_vel[k] - vel[k];
        value += w.vel * d * d;
        g_vel[k] = 2.0 * w.vel * d;
    }
    // d/dtheta [(sin a - sin b)^2 + (cos a - cos b)^2] = 2 sin(a - b)
    let g_rot = 2.0 * w.rot * (sp * ct - cp * st);
    (value, [2.0 * w.pos * dx, 2.0 * w.pos * dy, g_rot], g_vel)
}

/// Position, velocity and sin/cos rotation squared errors summed over
/// objects and averaged over the `len - 1` predicted steps, plus
/// `lambda * |theta|^2` when parameters are given.
pub fn trajectory_loss(
    pred: &Trajectory,
    truth: &Trajectory,
    params: Option<&ModelParams>,
    lambda: f64,
) -> Result<f64, ModelError> {
    if pred.len() != truth.len() {
        return Err(ModelError::contract(format!(
            "trajectory lengths differ: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    let steps = pred.len().saturating_sub(1);
    let mut total = 0.0;
    for (p, t) in pred.states.iter().zip(&truth.states).skip(1) {
        if p.disks.len() != t.disks.len() {
            return Err(ModelError::contract("object counts differ"));
        }
        for (a, b) in p.disks.iter().zip(&t.disks) {
            let row = |d: &crate::sim::DiskState| ([d.pose.x, d.pose.y, d.pose.theta], [d.twist.vx, d.twist.vy, d.twist.omega]);
            let ((pp, pv), (tp, tv)) = (row(a), row(b));
            total += object_error(&pp, &pv, &tp, &tv, &LossWeights::UNIT).0;
        }
    }
    let data = if steps == 0 { 0.0 } else { total / steps as f64 };
    let reg = params.map_or(0.0, |p| lambda * p.squared_norm());
    Ok(data + reg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{DiskState, PusherState, SurfaceModel, Vec2, WorldState};

    fn traj(x: f64, y: f64) -> Trajectory {
        let w = |x, y| {
            WorldState::new(
                vec![DiskState::at_rest(x, y, 1.0, 0.05)],
                PusherState::at(Vec2::new(-1.0, 0.0)),
                SurfaceModel::uniform(0.15),
            )
        };
        Trajectory {
            dt: 1.0 / 240.0,
            states: vec![w(0.0, 0.0), w(x, y)],
        }
    }

    #[test]
    fn identical_trajectories_cost_nothing() {
        assert_eq!(trajectory_loss(&traj(0.1, 0.2), &traj(0.1, 0.2), None, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn three_four_millimeter_offset() {
        let l = trajectory_loss(&traj(0.003, 0.004), &traj(0.0, 0.0), None, 0.0).unwrap();
        assert!((l - 25e-6).abs() < 1e-18, "{l}");
    }

    #[test]
    fn rotation_gradient_matches_difference() {
        let (a, b) = (0.7, -0.4);
        let f = |th: f64| object_error(&[0.0, 0.0, th], &[0.0; 3], &[0.0, 0.0, b], &[0.0; 3], &LossWeights::UNIT).0;
        let g = object_error(&[0.0, 0.0, a], &[0.0; 3], &[0.0, 0.0, b], &[0.0; 3], &LossWeights::UNIT).1[2];
        let h = 1e-6;
        assert!((g - (f(a + h) - f(a - h)) / (2.0 * h)).abs() < 1e-8);
        assert!((g - 2.0 * (a - b).sin()).abs() < 1e-14);
    }
}
