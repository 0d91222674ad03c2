//! Deterministic analytical engine for disks sliding on a frictional plane
//! and pushed by a cylindrical pusher.
//!
//! One step is semi-implicit: the pusher drive is applied, a sequential
//! impulse solver enforces non-approaching contacts (restitution and
//! Coulomb-bounded tangential impulses) together with bounded ground friction,
//! poses are integrated with the solved velocities, and any residual overlap
//! is projected out.

mod contact;
mod friction;
mod state;
mod surface;

pub use friction::{coulomb_friction, ANGULAR_DEADBAND, LINEAR_DEADBAND};
pub use state::{
    wrap_angle, Diagnostics, DiskKinematics, DiskState, Pose2, PusherState, SimConfig, Trajectory, Twist2,
    WorldState, DEFAULT_PUSHER_RADIUS,
};
pub use surface::{FrictionField, SurfaceMode, SurfaceModel, STANDARD_GRAVITY};

use contact::{project_positions, Solver};

pub type Vec2 = nalgebra::Vector2<f64>;

/// How the pusher moves during one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PusherDrive {
    /// Kinematic pusher following a commanded velocity; contacts cannot slow it.
    Velocity(Vec2),
    /// Dynamic pusher of the given mass pushed by a constant external force.
    Force { force: Vec2, mass: f64 },
}

/// Resolves contacts of the current configuration without ground friction:
/// after the call no detected contact is approaching. The pusher keeps its
/// velocity. Deep overlap is projected out and counted in the diagnostics.
pub fn resolve_contacts(world: &WorldState, cfg: &SimConfig) -> WorldState {
    let mut out = world.clone();
    let mut solver = Solver::new(&out, 0.0, cfg);
    solver.solve(cfg.solver_iterations);
    solver.store(&mut out);
    project_positions(&mut out, 0.0, None, cfg);
    out
}

/// Advances the world by one step with a kinematic pusher.
pub fn step(world: &WorldState, pusher_cmd: Vec2, cfg: &SimConfig) -> WorldState {
    step_driven(world, PusherDrive::Velocity(pusher_cmd), cfg)
}

pub fn step_driven(world: &WorldState, drive: PusherDrive, cfg: &SimConfig) -> WorldState {
    let dt = cfg.dt;
    let mut out = world.clone();
    let pusher_inv_mass = match drive {
        PusherDrive::Velocity(v) => {
            out.pusher.velocity = v;
            0.0
        }
        PusherDrive::Force { force, mass } => {
            out.pusher.velocity += force * (dt / mass);
            1.0 / mass
        }
    };

    let mut solver = Solver::new(&out, pusher_inv_mass, cfg);
    solver.add_ground_friction(&out, dt);
    solver.solve(cfg.solver_iterations);
    solver.store(&mut out);
    if let PusherDrive::Velocity(v) = drive {
        out.pusher.velocity = v;
    }

    for d in &mut out.disks {
        d.pose.x += dt * d.twist.vx;
        d.pose.y += dt * d.twist.vy;
        d.pose.theta = wrap_angle(d.pose.theta + dt * d.twist.omega);
    }
    out.pusher.position += out.pusher.velocity * dt;

    project_positions(&mut out, pusher_inv_mass, Some(cfg.baumgarte_beta), cfg);
    out
}

/// Rolls the engine forward under a per-step pusher velocity plan.
pub fn rollout_physics(world: &WorldState, pusher_plan: &[Vec2], cfg: &SimConfig) -> Trajectory {
    let mut states = Vec::with_capacity(pusher_plan.len() + 1);
    states.push(world.clone());
    for cmd in pusher_plan {
        let next = step(states.last().unwrap(), *cmd, cfg);
        states.push(next);
    }
    Trajectory { dt: cfg.dt, states }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_disks(v1: Vec2) -> WorldState {
        let mut a = DiskState::at_rest(0.0, 0.0, 1.0, 0.05);
        a.twist.vx = v1.x;
        a.twist.vy = v1.y;
        let b = DiskState::at_rest(0.1, 0.0, 1.0, 0.05);
        WorldState::new(vec![a, b], PusherState::at(Vec2::new(-1.0, 0.0)), SurfaceModel::uniform(0.2))
    }

    #[test]
    fn head_on_inelastic_collision_shares_momentum() {
        let w = resolve_contacts(&two_disks(Vec2::new(0.1, 0.0)), &SimConfig::default());
        for d in &w.disks {
            assert!((d.twist.vx - 0.05).abs() < 1e-12, "{}", d.twist.vx);
            assert!(d.twist.vy.abs() < 1e-15);
        }
    }

    #[test]
    fn no_contacts_is_identity() {
        let mut w = two_disks(Vec2::new(0.1, 0.0));
        w.disks[1].pose.x = 0.5;
        assert_eq!(resolve_contacts(&w, &SimConfig::default()), w);
    }

    #[test]
    fn kinematic_pusher_transfers_velocity() {
        let disk = DiskState::at_rest(0.0, 0.0, 1.0, 0.05);
        let mut pusher = PusherState::at(Vec2::new(-0.05 - DEFAULT_PUSHER_RADIUS, 0.0));
        pusher.velocity = Vec2::new(0.05, 0.0);
        let w = WorldState::new(vec![disk], pusher, SurfaceModel::uniform(0.2));
        let out = resolve_contacts(&w, &SimConfig::default());
        assert!(out.disks[0].twist.vx >= 0.05 - 1e-12);
        assert_eq!(out.pusher.velocity, Vec2::new(0.05, 0.0));
    }

    #[test]
    fn rest_is_a_fixed_point() {
        let w = two_disks(Vec2::zeros());
        let next = step(&w, Vec2::zeros(), &SimConfig::default());
        assert_eq!(next, w);
    }

    #[test]
    fn sliding_disk_stops_at_closed_form_time() {
        let disk = {
            let mut d = DiskState::at_rest(0.0, 0.0, 1.0, 0.05);
            d.twist.vx = 0.1;
            d
        };
        let mut w = WorldState::new(vec![disk], PusherState::at(Vec2::new(-1.0, 0.0)), SurfaceModel::uniform(0.15));
        let cfg = SimConfig::default();
        let mut steps = 0;
        while w.disks[0].twist.vx > 0.0 {
            w = step(&w, Vec2::zeros(), &cfg);
            steps += 1;
            assert!(steps < 100);
        }
        let t_stop = 0.1 / (0.15 * 9.81);
        assert!((steps as f64 * cfg.dt - t_stop).abs() <= cfg.dt + 1e-12, "{steps}");
    }

    #[test]
    fn pushed_disk_gains_velocity_along_normal() {
        let disk = DiskState::at_rest(0.0, 0.0, 1.0, 0.05);
        let w = WorldState::new(
            vec![disk],
            PusherState::at(Vec2::new(-0.05 - DEFAULT_PUSHER_RADIUS, 0.0)),
            SurfaceModel::uniform(0.2),
        );
        let next = step(&w, Vec2::new(0.05, 0.0), &SimConfig::default());
        assert!((next.disks[0].twist.vx - 0.05).abs() < 1e-12);
        assert!(next.disks[0].pose.x > 0.0);
    }

    #[test]
    fn rollout_matches_repeated_steps() {
        let w = two_disks(Vec2::new(0.02, 0.01));
        let plan: Vec<Vec2> = (0..30).map(|k| Vec2::new(0.01 * (k % 3) as f64, 0.0)).collect();
        let cfg = SimConfig::default();
        let traj = rollout_physics(&w, &plan, &cfg);
        assert_eq!(traj.len(), plan.len() + 1);
        assert_eq!(traj.states[0], w);
        for k in 0..plan.len() {
            assert_eq!(traj.states[k + 1], step(&traj.states[k], plan[k], &cfg));
        }
    }
}
