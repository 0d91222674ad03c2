use super::state::DiskState;
use super::surface::SurfaceModel;
use super::Vec2;

/// Below these speeds the surface exerts no kinetic friction.
pub const LINEAR_DEADBAND: f64 = 1e-6;
pub const ANGULAR_DEADBAND: f64 = 1e-6;

/// Ground friction force and spin torque on a disk sliding on the surface.
///
/// The linear part is the Coulomb force `-mu m g v/|v|`; the torque is the
/// integral of Coulomb shear over a uniformly loaded disk,
/// `-(2/3) mu m g r sign(omega)`. Friction is looked up at the disk center.
pub fn coulomb_friction(disk: &DiskState, surface: &SurfaceModel) -> (Vec2, f64) {
    let mu = surface.mu_at(disk.pose.position());
    let normal = disk.mass * surface.gravity;
    let v = disk.twist.linear();
    let speed = v.norm();
    let force = if speed > LINEAR_DEADBAND {
        -v * (mu * normal / speed)
    } else {
        Vec2::zeros()
    };
    let omega = disk.twist.omega;
    let torque = if omega.abs() > ANGULAR_DEADBAND {
        -(2.0 / 3.0) * mu * normal * disk.radius * omega.signum()
    } else {
        0.0
    };
    (force, torque)
}

/// Largest linear and angular impulse the surface can deliver in one step.
pub(crate) fn friction_impulse_limits(disk: &DiskState, surface: &SurfaceModel, dt: f64) -> (f64, f64) {
    let mu = surface.mu_at(disk.pose.position());
    let normal = disk.mass * surface.gravity;
    (mu * normal * dt, (2.0 / 3.0) * mu * normal * disk.radius * dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::state::{Pose2, Twist2};

    fn disk(v: (f64, f64), omega: f64, r: f64) -> DiskState {
        DiskState {
            pose: Pose2::default(),
            twist: Twist2::new(v.0, v.1, omega),
            mass: 1.0,
            radius: r,
        }
    }

    #[test]
    fn linear_force_is_coulomb() {
        let (f, t) = coulomb_friction(&disk((0.1, 0.0), 0.0, 0.05), &SurfaceModel::uniform(0.2));
        assert!((f.x + 1.962).abs() < 1e-12);
        assert_eq!(f.y, 0.0);
        assert_eq!(t, 0.0);
    }

    #[test]
    fn zero_inside_deadband() {
        let (f, t) = coulomb_friction(&disk((0.0, 0.0), 0.0, 0.05), &SurfaceModel::uniform(0.2));
        assert_eq!(f, Vec2::zeros());
        assert_eq!(t, 0.0);
        let (f, t) = coulomb_friction(&disk((5e-7, 0.0), 5e-7, 0.05), &SurfaceModel::uniform(0.2));
        assert_eq!(f, Vec2::zeros());
        assert_eq!(t, 0.0);
    }

    /// Oracle: integrate mu * p * rho over a uniformly loaded disk with a
    /// midpoint rule in polar coordinates, p = m g / (pi r^2).
    fn spin_torque_quadrature(mu: f64, m: f64, g: f64, r: f64) -> f64 {
        let n = 2000;
        let pressure = m * g / (std::f64::consts::PI * r * r);
        let dr = r / n as f64;
        let mut total = 0.0;
        for k in 0..n {
            let rho = (k as f64 + 0.5) * dr;
            total += mu * pressure * rho * 2.0 * std::f64::consts::PI * rho * dr;
        }
        total
    }

    #[test]
    fn spin_torque_matches_quadrature() {
        let expected = -spin_torque_quadrature(0.2, 1.0, 9.81, 0.05);
        assert!((expected + 0.0654).abs() < 1e-6);
        let (_, t) = coulomb_friction(&disk((0.0, 0.0), 1.0, 0.05), &SurfaceModel::uniform(0.2));
        assert!((t - expected).abs() < 1e-7, "{t} vs {expected}");
    }

    #[test]
    fn force_antiparallel_and_bounded() {
        let s = SurfaceModel::uniform(0.17);
        for &(vx, vy) in &[(0.3, -0.2), (-1e-3, 4e-3), (2.0, 2.0)] {
            let d = disk((vx, vy), 0.0, 0.05);
            let (f, _) = coulomb_friction(&d, &s);
            assert!(f.norm() <= 0.17 * 9.81 + 1e-12);
            let v = d.twist.linear();
            assert!((f.dot(&v) + f.norm() * v.norm()).abs() < 1e-12);
        }
    }
}
