use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sain_core::scenario::{sample_scene, SceneSpec};
use sain_core::sim::{rollout_physics, step, SimConfig, SurfaceModel, Vec2, WorldState, STANDARD_GRAVITY};

fn scene(seed: u64, n_disks: usize, mu: f64) -> WorldState {
    let spec = SceneSpec {
        n_disks,
        ..SceneSpec::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_scene(&spec, SurfaceModel::uniform(mu), &mut rng).unwrap()
}

fn with_random_velocities(mut w: WorldState, seed: u64, speed: f64) -> WorldState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for d in &mut w.disks {
        d.twist.vx = rng.random_range(-speed..speed);
        d.twist.vy = rng.random_range(-speed..speed);
        d.twist.omega = rng.random_range(-1.0..1.0);
    }
    w
}

fn push_plan(angle: f64, steps: usize) -> Vec<Vec2> {
    let v = Vec2::new(angle.cos(), angle.sin()) * 0.05;
    (0..steps).map(|k| if k < steps / 2 { v } else { Vec2::zeros() }).collect()
}

fn mirror(w: &WorldState) -> WorldState {
    let mut m = w.clone();
    for d in &mut m.disks {
        d.pose.y = -d.pose.y;
        d.pose.theta = -d.pose.theta;
        d.twist.vy = -d.twist.vy;
        d.twist.omega = -d.twist.omega;
    }
    m.pusher.position.y = -m.pusher.position.y;
    m.pusher.velocity.y = -m.pusher.velocity.y;
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn identical_inputs_give_identical_trajectories(seed in any::<u64>(), angle in -0.5f64..0.5) {
        let w = scene(seed, 3, 0.15);
        let plan = push_plan(angle, 120);
        let cfg = SimConfig::default();
        prop_assert_eq!(rollout_physics(&w, &plan, &cfg), rollout_physics(&w, &plan, &cfg));
    }

    #[test]
    fn kinetic_energy_never_grows_without_drive(seed in any::<u64>(), n in 2usize..=3, mu in 0.05f64..0.25) {
        let mut w = with_random_velocities(scene(seed, n, mu), seed, 0.2);
        let cfg = SimConfig::default();
        for _ in 0..150 {
            let next = step(&w, Vec2::zeros(), &cfg);
            prop_assert!(next.kinetic_energy() <= w.kinetic_energy() + 1e-15,
                "{} -> {}", w.kinetic_energy(), next.kinetic_energy());
            w = next;
        }
    }

    #[test]
    fn ground_friction_impulse_is_bounded(seed in any::<u64>(), mu in 0.05f64..0.25, speed in 0.0f64..0.3) {
        // disks far apart: the only force is ground friction
        let mut w = with_random_velocities(scene(seed, 3, mu), seed, speed.max(1e-6));
        for (i, d) in w.disks.iter_mut().enumerate() {
            d.pose.x += i as f64;
        }
        w.pusher.position = Vec2::new(-10.0, 0.0);
        let cfg = SimConfig::default();
        for _ in 0..60 {
            let next = step(&w, Vec2::zeros(), &cfg);
            for (a, b) in w.disks.iter().zip(&next.disks) {
                let dp = (b.twist.linear() - a.twist.linear()).norm() * a.mass;
                prop_assert!(dp <= mu * a.mass * STANDARD_GRAVITY * cfg.dt + 1e-12, "{dp}");
            }
            w = next;
        }
    }

    #[test]
    fn mirrored_scenes_give_mirrored_trajectories(seed in any::<u64>(), angle in -0.5f64..0.5, n in 2usize..=3) {
        let w = with_random_velocities(scene(seed, n, 0.15), seed, 0.05);
        let plan = push_plan(angle, 120);
        let plan_m: Vec<Vec2> = plan.iter().map(|v| Vec2::new(v.x, -v.y)).collect();
        let cfg = SimConfig::default();
        let a = rollout_physics(&w, &plan, &cfg);
        let b = rollout_physics(&mirror(&w), &plan_m, &cfg);
        for (s, m) in a.states.iter().zip(&b.states) {
            let s = mirror(s);
            for (x, y) in s.disks.iter().zip(&m.disks) {
                prop_assert!((x.pose.x - y.pose.x).abs() < 1e-9);
                prop_assert!((x.pose.y - y.pose.y).abs() < 1e-9);
                prop_assert!(sain_core::sim::wrap_angle(x.pose.theta - y.pose.theta).abs() < 1e-9);
                prop_assert!((x.twist.vx - y.twist.vx).abs() < 1e-9);
                prop_assert!((x.twist.vy - y.twist.vy).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pushed_disks_never_interpenetrate(seed in any::<u64>(), angle in -0.5f64..0.5, n in 2usize..=3) {
        let w = scene(seed, n, 0.15);
        let cfg = SimConfig::default();
        let traj = rollout_physics(&w, &push_plan(angle, 240), &cfg);
        for s in &traj.states {
            prop_assert!(s.max_disk_overlap() <= cfg.penetration_tolerance, "{}", s.max_disk_overlap());
        }
    }
}

#[test]
fn sliding_disk_stop_time_matches_closed_form() {
    let mut w = scene(1, 2, 0.15);
    w.disks.truncate(1);
    w.pusher.position = Vec2::new(-10.0, 0.0);
    w.disks[0].twist.vx = 0.1;
    let cfg = SimConfig::default();
    let mut steps = 0;
    while w.disks[0].twist.linear().norm() > 0.0 {
        w = step(&w, Vec2::zeros(), &cfg);
        steps += 1;
        assert!(steps < 1000);
    }
    let t_stop = 0.1 / (0.15 * STANDARD_GRAVITY);
    assert!((steps as f64 * cfg.dt - t_stop).abs() <= cfg.dt, "{steps} steps");
}
