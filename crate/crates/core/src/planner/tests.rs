use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::models::NominalEngine;
use crate::sim::{DiskState, PusherState, SurfaceModel};

fn pair(gap_x: f64) -> WorldState {
    let disks = vec![
        DiskState::at_rest(0.0, 0.0, 0.9, 0.054),
        DiskState::at_rest(0.054 + 0.059 + gap_x, 0.0, 1.0, 0.059),
    ];
    WorldState {
        disks,
        pusher: PusherState::at(Vec2::new(-0.1, 0.0)),
        surface: Arc::new(SurfaceModel::uniform(0.15)),
        diagnostics: Default::default(),
    }
}

fn physics() -> DynamicsModel {
    DynamicsModel::Physics(NominalEngine::observed(SimConfig::default()))
}

#[test]
fn seventy_two_actions_at_bin_midpoints() {
    let actions = enumerate_actions();
    assert_eq!(actions.len(), 72);
    assert_eq!(actions, enumerate_actions());
    let min_alpha = actions.iter().map(|a| a.push_angle).fold(f64::INFINITY, f64::min);
    let min_theta = actions.iter().map(|a| a.contact_angle).fold(f64::INFINITY, f64::min);
    assert!((min_alpha + 5.0 * PI / 36.0).abs() < 1e-15);
    assert!((min_theta + 11.0 * PI / 36.0).abs() < 1e-15);
    let max_alpha = actions.iter().map(|a| a.push_angle).fold(f64::NEG_INFINITY, f64::max);
    assert!((max_alpha - 5.0 * PI / 36.0).abs() < 1e-15);
    for (i, a) in actions.iter().enumerate() {
        assert_eq!(a.index, i);
        assert_eq!((a.push_length, a.push_speed), (0.010, 0.050));
    }
    let mut alphas: Vec<f64> = actions.iter().map(|a| a.push_angle).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    assert_eq!(alphas.len(), 6);
}

#[test]
fn heuristic_examples() {
    let v = |x, y| Vec2::new(x, y);
    assert!((heuristic(v(0.0, 0.0), v(0.1, 0.0), v(0.2, 0.0)) - 0.1).abs() < 1e-15);
    assert_eq!(heuristic(v(0.0, 0.0), v(0.2, 0.0), v(0.2, 0.0)), 0.0);
    assert!((heuristic(v(0.0, 0.0), v(0.0, 0.1), v(0.1, 0.0)) - (0.02f64.sqrt() + 1.0)).abs() < 1e-12);
    // degenerate directions drop the cosine term
    assert!((heuristic(v(0.1, 0.0), v(0.1, 0.0), v(0.3, 0.0)) - 0.2).abs() < 1e-15);
    assert!((heuristic(v(0.3, 0.0), v(0.1, 0.0), v(0.3, 0.0)) - 0.2).abs() < 1e-15);
}

proptest! {
    #[test]
    fn heuristic_is_rigid_motion_invariant(
        pts in proptest::array::uniform6(-0.5f64..0.5),
        angle in -PI..PI,
        shift in proptest::array::uniform2(-1.0f64..1.0),
    ) {
        let p1 = Vec2::new(pts[0], pts[1]);
        let p2 = Vec2::new(pts[2], pts[3]);
        let g = Vec2::new(pts[4], pts[5]);
        let t = Vec2::new(shift[0], shift[1]);
        let moved = |p: Vec2| rotate(p, angle) + t;
        let a = heuristic(p1, p2, g);
        let b = heuristic(moved(p1), moved(p2), moved(g));
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
    }

    #[test]
    fn goals_respect_difficulty(seed in any::<u64>()) {
        let w = pair(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (d, lo, hi) in [(Difficulty::Easy, 0.0, PI / 6.0), (Difficulty::Hard, PI / 6.0, PI / 3.0)] {
            let g = sample_goal(&w, d, &mut rng).unwrap();
            let rel = g.point() - w.disks[1].pose.position();
            prop_assert!((rel.norm() - 3.0 * 0.059).abs() < 1e-12);
            let a = rel.y.atan2(rel.x).abs();
            prop_assert!(a >= lo - 1e-12 && a <= hi + 1e-12);
            prop_assert!((g.tolerance - 0.0059).abs() < 1e-15);
        }
    }
}

#[test]
fn goal_distance_for_the_larger_real_disk() {
    let mut w = pair(0.0);
    w.disks[1].radius = 0.058;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = sample_goal(&w, Difficulty::Easy, &mut rng).unwrap();
    assert!((g.distance(&w) - 0.174).abs() < 1e-12);
}

#[test]
fn horizon_switches_at_ten_millimeters() {
    let w = pair(0.0);
    let cfg = PlannerConfig::default();
    let p2 = w.disks[1].pose.position();
    let at = |d: f64| Goal {
        position: [p2.x + d, p2.y],
        tolerance: 0.0059,
    };
    assert_eq!(cfg.active_horizon(&w, &at(0.009)), 3);
    assert_eq!(cfg.active_horizon(&w, &at(0.050)), 2);
    assert_eq!(cfg.active_horizon(&w, &at(0.0101)), 2);
}

#[test]
fn placement_touches_disk_one_from_behind() {
    let w = pair(0.0);
    for a in enumerate_actions() {
        let (start, vel) = a.placement(&w);
        let d = w.disks[0].pose.position() - start;
        assert!((d.norm() - 0.054 - w.pusher.radius).abs() < 1e-12);
        assert!(start.x < 0.0);
        assert!((vel.norm() - 0.05).abs() < 1e-12);
        assert!((vel.normalize().dot(&d.normalize()) - a.push_angle.cos()).abs() < 1e-12);
        assert_eq!(a.push_steps(1.0 / 240.0), 48);
    }
}

#[test]
fn dead_ahead_goal_picks_central_bins() {
    let w = pair(0.0);
    let goal = Goal {
        position: [0.4, 0.0],
        tolerance: 0.0059,
    };
    let cfg = PlannerConfig {
        horizon_near: 1,
        horizon_far: 1,
        ..PlannerConfig::default()
    };
    let model = physics();
    let plan = plan_next(&w, &goal, &model, &cfg).unwrap();
    let oracle = enumerate_actions()
        .into_iter()
        .map(|a| {
            let states = execute_action(&w, &a, &SimConfig::default(), cfg.settle_steps);
            let s = states.last().unwrap();
            (heuristic(s.disks[0].pose.position(), s.disks[1].pose.position(), goal.point()), a.index)
        })
        .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)))
        .unwrap();
    assert_eq!(plan.action.index, oracle.1);
    assert!(plan.action.push_angle.abs() < PI / 18.0);
    assert!(plan.action.contact_angle.abs() < PI / 18.0);
    assert!(!plan.fell_back);
}

#[test]
fn scaling_costs_keeps_the_choice() {
    let w = pair(0.0);
    let goal = Goal {
        position: [0.25, 0.08],
        tolerance: 0.0059,
    };
    let cfg = PlannerConfig::default();
    let model = physics();
    let g = goal.point();
    let base = |s: &WorldState| heuristic(s.disks[0].pose.position(), s.disks[1].pose.position(), g);
    let a = plan_next_with_cost(&w, &goal, &model, &cfg, base).unwrap();
    let b = plan_next_with_cost(&w, &goal, &model, &cfg, |s| 7.5 * base(s)).unwrap();
    assert_eq!(a.sequence, b.sequence);
    assert_eq!(a.sequence.len(), 2);
}

#[test]
fn exhausted_budget_falls_back_to_best_single_action() {
    let w = pair(0.0);
    let goal = Goal {
        position: [0.3, 0.0],
        tolerance: 0.0059,
    };
    let cfg = PlannerConfig {
        queue_capacity: 1,
        ..PlannerConfig::default()
    };
    let plan = plan_next(&w, &goal, &physics(), &cfg).unwrap();
    assert!(plan.fell_back);
    let h1 = PlannerConfig {
        horizon_far: 1,
        ..PlannerConfig::default()
    };
    assert_eq!(plan.action, plan_next(&w, &goal, &physics(), &h1).unwrap().action);
}

#[test]
fn reached_goal_ends_the_episode_at_once() {
    let w = pair(0.0);
    let p2 = w.disks[1].pose.position();
    let goal = Goal {
        position: [p2.x + 0.001, p2.y],
        tolerance: 0.0059,
    };
    let out = run_episode(&w, &SimConfig::default(), &physics(), &goal, &PlannerConfig::default()).unwrap();
    assert!(out.success);
    assert_eq!(out.steps, 0);
    assert_eq!(out.trajectory.len(), 1);
}

#[test]
fn one_push_moves_disk_two_toward_the_goal() {
    let w = pair(0.0);
    let goal = Goal {
        position: [0.35, 0.0],
        tolerance: 0.0059,
    };
    let cfg = PlannerConfig {
        max_episode_actions: 1,
        ..PlannerConfig::default()
    };
    let out = run_episode(&w, &SimConfig::default(), &physics(), &goal, &cfg).unwrap();
    assert_eq!(out.steps, 1);
    assert!(out.final_distance < goal.distance(&w) - 0.005);
    assert_eq!(out.trajectory.len(), 2);
    let wider = Goal { tolerance: 1.0, ..goal };
    assert!(run_episode(&w, &SimConfig::default(), &physics(), &wider, &cfg).unwrap().success);
}

#[test]
fn single_disk_scenes_are_rejected() {
    let mut w = pair(0.0);
    w.disks.truncate(1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(sample_goal(&w, Difficulty::Easy, &mut rng), Err(PlanError::TooFewDisks(1))));
}
