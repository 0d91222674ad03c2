use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::rollout::RolloutBatch;
use super::*;
use crate::neural::{grad_check, GradCheckOptions};
use crate::scenario::{generate_dataset, sample_scene, DatasetSpec, PushSetup, PushSpec, SceneSpec, TrajectoryRecord};
use crate::sim::{SimConfig, SurfaceModel};

fn scene(n: usize, seed: u64) -> WorldState {
    let spec = SceneSpec {
        n_disks: n,
        ..SceneSpec::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = sample_scene(&spec, SurfaceModel::uniform(0.15), &mut rng).unwrap();
    for (k, d) in w.disks.iter_mut().enumerate() {
        d.twist = crate::sim::Twist2::new(0.01 * k as f64, -0.02, 0.3 - 0.1 * k as f64);
        d.pose.theta = 0.4 * k as f64 - 0.2;
    }
    w.pusher.velocity = (w.disks[0].pose.position() - w.pusher.position).normalize() * 0.05;
    w
}

fn glorot(kind: ModelKind, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ModelParams::glorot(kind, FeatureCodec::identity(kind), NominalEngine::default(), &mut rng)
}

fn step_any(params: &ModelParams, w: &WorldState) -> WorldState {
    let actions = ActionEncoding::from_world(w, params.engine.sim.dt);
    match params.kind {
        ModelKind::In => in_step(w, &actions, params).unwrap(),
        ModelKind::Sain => {
            let shadow = params.engine.rollout(w, &[w.pusher.velocity]);
            sain_step(w, &shadow.states[0], &shadow.states[1], &actions, params).unwrap()
        }
    }
}

fn small_dataset(count: usize, seed: u64) -> Vec<TrajectoryRecord> {
    let spec = DatasetSpec {
        count,
        seed,
        push: PushSpec {
            setup: PushSetup::PositionControl,
            duration: 0.25,
            target_displacement: 0.01,
            ..PushSpec::default()
        },
        ..DatasetSpec::default()
    };
    generate_dataset(&spec).unwrap().records
}

#[test]
fn object_order_does_not_matter() {
    for kind in [ModelKind::In, ModelKind::Sain] {
        let params = glorot(kind, 3);
        let w = scene(3, 11);
        let perm = [2usize, 0, 1];
        let mut wp = w.clone();
        wp.disks = perm.iter().map(|&i| w.disks[i]).collect();
        let dt = params.engine.sim.dt;
        let (a, ap) = (ActionEncoding::from_world(&w, dt), ActionEncoding::from_world(&wp, dt));
        let (next, next_p) = match kind {
            ModelKind::In => (in_step(&w, &a, &params).unwrap(), in_step(&wp, &ap, &params).unwrap()),
            ModelKind::Sain => {
                let s = params.engine.rollout(&w, &[w.pusher.velocity]);
                let mut s0 = s.states[0].clone();
                let mut s1 = s.states[1].clone();
                s0.disks = perm.iter().map(|&i| s.states[0].disks[i]).collect();
                s1.disks = perm.iter().map(|&i| s.states[1].disks[i]).collect();
                (
                    sain_step(&w, &s.states[0], &s.states[1], &a, &params).unwrap(),
                    sain_step(&wp, &s0, &s1, &ap, &params).unwrap(),
                )
            }
        };
        for (k, &i) in perm.iter().enumerate() {
            let (x, y) = (next.disks[i], next_p.disks[k]);
            for (u, v) in [
                (x.pose.x, y.pose.x),
                (x.pose.y, y.pose.y),
                (x.pose.theta, y.pose.theta),
                (x.twist.vx, y.twist.vx),
                (x.twist.vy, y.twist.vy),
                (x.twist.omega, y.twist.omega),
            ] {
                assert!((u - v).abs() <= 1e-9, "{kind:?}: {u} vs {v}");
            }
        }
    }
}

#[test]
fn poses_integrate_new_velocities() {
    for kind in [ModelKind::In, ModelKind::Sain] {
        let params = glorot(kind, 5);
        let w = scene(2, 4);
        let next = step_any(&params, &w);
        let dt = params.engine.sim.dt;
        for (a, b) in w.disks.iter().zip(&next.disks) {
            assert_eq!(b.pose.x, a.pose.x + dt * b.twist.vx);
            assert_eq!(b.pose.y, a.pose.y + dt * b.twist.vy);
            assert_eq!(b.pose.theta, a.pose.theta + dt * b.twist.omega);
            assert_eq!((b.mass, b.radius), (a.mass, a.radius));
        }
        assert_eq!(next.pusher.position, w.pusher.position + w.pusher.velocity * dt);
    }
}

#[test]
fn zero_weights_predict_constant_velocity() {
    for kind in [ModelKind::In, ModelKind::Sain] {
        let params = ModelParams::zeros(kind, FeatureCodec::identity(kind), NominalEngine::default());
        let w = scene(2, 8);
        let cmds = vec![w.pusher.velocity; 30];
        let traj = rollout_model(&params, &w, &cmds).unwrap();
        assert_eq!(traj.states.len(), 31);
        assert_eq!(traj.states[0], w);
        let dt = params.engine.sim.dt;
        for t in 1..traj.states.len() {
            for (a, b) in traj.states[t - 1].disks.iter().zip(&traj.states[t].disks) {
                assert_eq!(b.twist, a.twist);
                assert_eq!(b.pose.x, a.pose.x + dt * a.twist.vx);
            }
        }

        let mut rest = w.clone();
        for d in &mut rest.disks {
            d.twist = Default::default();
        }
        let still = rollout_model(&params, &rest, &cmds).unwrap();
        assert_eq!(still.last().disks, rest.disks);
    }
}

#[test]
fn sain_without_engine_weights_matches_in() {
    let inp = glorot(ModelKind::In, 9);
    let mut sain = ModelParams::zeros(ModelKind::Sain, FeatureCodec::identity(ModelKind::Sain), NominalEngine::default());
    for (dst, src) in [(&mut sain.f_rel, &inp.f_rel), (&mut sain.f_dyn, &inp.f_dyn)] {
        for (k, (d, s)) in dst.layers_mut().iter_mut().zip(src.layers()).enumerate() {
            if k == 0 {
                let cols = s.weight.ncols();
                d.weight.slice_mut(ndarray::s![.., ..cols]).assign(&s.weight);
            } else {
                d.weight.assign(&s.weight);
            }
            d.bias.assign(&s.bias);
        }
    }
    let w = scene(2, 21);
    let a = step_any(&inp, &w);
    let b = step_any(&sain, &w);
    assert_eq!(a.disks, b.disks);
}

#[test]
fn engine_shadow_ignores_weights() {
    let worlds = vec![scene(2, 1), scene(3, 2)];
    let commands: Vec<Vec<Vec2>> = worlds.iter().map(|w| vec![w.pusher.velocity; 20]).collect();
    let a = RolloutBatch::from_worlds(&glorot(ModelKind::Sain, 1), &worlds, &commands).unwrap();
    let b = RolloutBatch::from_worlds(&glorot(ModelKind::Sain, 2), &worlds, &commands).unwrap();
    assert_eq!(a.engine, b.engine);
    assert!(a.engine.is_some());
}

#[test]
fn batched_rollouts_match_single_ones() {
    let params = glorot(ModelKind::Sain, 4);
    let worlds = vec![scene(2, 5), scene(3, 6)];
    let commands: Vec<Vec<Vec2>> = worlds.iter().map(|w| vec![w.pusher.velocity; 15]).collect();
    let many = rollout_many(&params, &worlds, &commands).unwrap();
    for ((w, c), traj) in worlds.iter().zip(&commands).zip(&many) {
        let single = rollout_model(&params, w, c).unwrap();
        assert_eq!(single.last().disks, traj.last().disks);
    }
}

#[test]
fn window_gradient_matches_finite_differences() {
    let records = small_dataset(3, 2);
    let refs: Vec<&TrajectoryRecord> = records.iter().collect();
    let dt = SimConfig::default().dt;
    let steps = 8;
    let weights = fit_loss_weights(&records, steps, dt);
    for kind in [ModelKind::In, ModelKind::Sain] {
        let codec = fit_codec(kind, &records, steps, dt).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = ModelParams::glorot(kind, codec, NominalEngine::default(), &mut rng);
        let (_, grad) = window_objective(&params, &refs, steps, &weights, 1e-3).unwrap();
        let mut probe = params.clone();
        let report = grad_check(
            &params.flatten(),
            &grad,
            |theta| {
                probe.assign(theta);
                window_objective_value(&probe, &refs, steps, &weights, 1e-3).unwrap()
            },
            1e-4,
            &GradCheckOptions {
                sample: 96,
                step: 1e-5,
                min_magnitude: 1e-8,
                seed: 3,
            },
        );
        assert!(report.passed, "{kind:?}: {report:?}");
    }
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let params = glorot(ModelKind::Sain, 12);
    let meta = CheckpointMeta {
        seed: 12,
        datasets: vec!["abc".into()],
        ..CheckpointMeta::default()
    };
    let bytes = params.to_checkpoint_bytes(&meta).unwrap();
    let (back, meta_back) = ModelParams::read_checkpoint(bytes.as_slice()).unwrap();
    assert_eq!(back, params);
    assert_eq!(meta_back, meta);
    assert!(ModelParams::read_checkpoint(&bytes[..bytes.len() - 8]).is_err());
}

#[test]
fn fine_tune_on_nothing_is_identity() {
    let params = glorot(ModelKind::In, 2);
    let out = fine_tune(&params, &[], &TrainConfig::default(), TrainOptions::default()).unwrap();
    assert_eq!(out.params, params);
    assert_eq!(out.report.iterations_run, 0);
}

#[test]
fn training_reduces_the_objective() {
    let records = small_dataset(6, 4);
    let cfg = TrainConfig {
        iterations: 60,
        batch_size: 4,
        rollout_length: 20,
        eval_every: 0,
        lr0: 3e-3,
        ..TrainConfig::default()
    };
    for kind in [ModelKind::In, ModelKind::Sain] {
        let trained = train(kind, &records, &cfg, TrainOptions::default()).unwrap();
        let refs: Vec<&TrajectoryRecord> = records.iter().collect();
        let w = &trained.report.weights;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = ModelParams::glorot(kind, trained.params.codec.clone(), NominalEngine::default(), &mut rng);
        let before = window_objective_value(&init, &refs, 20, w, cfg.l2_lambda).unwrap();
        let after = window_objective_value(&trained.params, &refs, 20, w, cfg.l2_lambda).unwrap();
        assert!(after < before, "{kind:?}: {after} !< {before}");
        trained.params.validate().unwrap();
    }
}

#[test]
fn dynamics_model_dispatch() {
    let w = scene(2, 3);
    let cmds = vec![w.pusher.velocity; 10];
    let physics = DynamicsModel::Physics(NominalEngine::default());
    let learned = DynamicsModel::Learned(glorot(ModelKind::In, 1));
    assert_eq!((physics.name(), learned.name()), ("physics", "in"));
    for m in [&physics, &learned] {
        let traj = m.rollout(&w, &cmds).unwrap();
        let rows = m.final_rows(std::slice::from_ref(&w), std::slice::from_ref(&cmds)).unwrap();
        let last = &traj.last().disks[1];
        assert!((rows[0][1][0] - last.pose.x).abs() < 1e-12);
    }
}
