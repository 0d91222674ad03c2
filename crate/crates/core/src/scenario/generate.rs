use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::record::{Frame, PushSetup, TrajectoryRecord};
use super::spec::{uniform, NoiseSpec, PushSpec, SceneSpec, SurrogateRealSpec, WorldSpec};
use super::ScenarioError;
use crate::models::NominalEngine;
use crate::sim::{
    step_driven, wrap_angle, DiskState, FrictionField, PusherDrive, PusherState, SimConfig, SurfaceModel, Vec2,
    WorldState,
};

const MAX_PLACEMENT_TRIES: usize = 100;
const MAX_PUSH_TRIES: usize = 20;
const BISECTION_STEPS: usize = 40;

/// Rotates `v` counter-clockwise by `angle` (rad).
pub fn rotate(v: Vec2, angle: f64) -> Vec2 {
    let (s, c) = angle.sin_cos();
    Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// Samples disks and a pusher resting against disk 1 from behind.
///
/// Disk 1 sits at the origin; every further disk touches disk 1 at an angle
/// in `[-placement_angle, placement_angle]` from the +x axis, resampled until
/// no two disks overlap. The pusher touches disk 1 at an angle in
/// `[-pusher_angle, pusher_angle]` measured from the -x axis.
pub fn sample_scene<R: Rng + ?Sized>(spec: &SceneSpec, surface: impl Into<Arc<SurfaceModel>>, rng: &mut R) -> Result<WorldState, ScenarioError> {
    spec.validate().map_err(ScenarioError::Config)?;
    let n = spec.n_disks;
    let masses: Vec<f64> = (0..n).map(|i| spec.mass.draw(i, rng)).collect();
    let radii: Vec<f64> = (0..n).map(|i| spec.radius.draw(i, rng)).collect();
    let mut centers = vec![Vec2::zeros()];
    'outer: for _ in 0..MAX_PLACEMENT_TRIES {
        centers.truncate(1);
        for k in 1..n {
            let a = uniform(rng, -spec.placement_angle, spec.placement_angle);
            let c = Vec2::new(a.cos(), a.sin()) * (radii[0] + radii[k]);
            let clear = centers
                .iter()
                .enumerate()
                .skip(1)
                .all(|(j, cj)| (c - cj).norm() >= radii[j] + radii[k]);
            if !clear {
                continue 'outer;
            }
            centers.push(c);
        }
        break;
    }
    if centers.len() != n {
        return Err(ScenarioError::Placement { tries: MAX_PLACEMENT_TRIES });
    }
    let phi = uniform(rng, -spec.pusher_angle, spec.pusher_angle);
    let pusher_pos = -Vec2::new(phi.cos(), phi.sin()) * (radii[0] + spec.pusher_radius);
    let disks = centers
        .iter()
        .zip(masses.iter().zip(&radii))
        .map(|(c, (&m, &r))| DiskState::at_rest(c.x, c.y, m, r))
        .collect();
    let pusher = PusherState {
        position: pusher_pos,
        velocity: Vec2::zeros(),
        radius: spec.pusher_radius,
    };
    Ok(WorldState {
        disks,
        pusher,
        surface: surface.into(),
        diagnostics: Default::default(),
    })
}

/// Unit push direction: the pusher-to-disk-1 axis rotated by a uniform angle.
pub fn sample_push_direction<R: Rng + ?Sized>(world: &WorldState, push_angle: f64, rng: &mut R) -> Vec2 {
    let axis = (world.disks[0].pose.position() - world.pusher.position).normalize();
    rotate(axis, uniform(rng, -push_angle, push_angle))
}

pub fn steps_for(duration: f64, dt: f64) -> usize {
    (duration / dt).round() as usize
}

/// Velocity profile of a position-controlled push: `speed` along `dir` until
/// `distance` is covered, then rest.
pub fn position_control_commands(dir: Vec2, speed: f64, distance: f64, dt: f64, steps: usize) -> Vec<Vec2> {
    let moving = (distance / (speed * dt)).round() as usize;
    (0..steps)
        .map(|t| if t < moving { dir * speed } else { Vec2::zeros() })
        .collect()
}

fn run_force(world: &WorldState, force: Vec2, mass: f64, steps: usize, cfg: &SimConfig) -> Vec<WorldState> {
    let mut states = Vec::with_capacity(steps + 1);
    states.push(world.clone());
    for _ in 0..steps {
        let next = step_driven(states.last().unwrap(), PusherDrive::Force { force, mass }, cfg);
        states.push(next);
    }
    states
}

fn travel(states: &[WorldState]) -> (f64, f64) {
    let (first, last) = (&states[0], states.last().unwrap());
    let pusher = (last.pusher.position - first.pusher.position).norm();
    let disk = (last.disks[0].pose.position() - first.disks[0].pose.position()).norm();
    (pusher, disk)
}

/// Finds the constant force along `dir` under which the pusher and the disk
/// it pushes both cover the target travel. Below the breakaway force the
/// pusher can only slide along the disk, so the bisection runs on the
/// smaller of the two travels. `None` when the best push misses the
/// tolerance band.
fn calibrate_force(world: &WorldState, dir: Vec2, push: &PushSpec, steps: usize, cfg: &SimConfig) -> Option<(f64, Vec<WorldState>)> {
    let target = push.target_displacement;
    let total_mass: f64 = world.disks.iter().map(|d| d.mass).sum();
    let mut hi = total_mass * world.surface.mu_nominal * world.surface.gravity;
    let mut lo = 0.0;
    let mut best: Option<(f64, f64, Vec<WorldState>)> = None;
    let consider = |f: f64, states: Vec<WorldState>, best: &mut Option<(f64, f64, Vec<WorldState>)>| {
        let (p, d) = travel(&states);
        let err = (p - target).abs().max((d - target).abs());
        let g = p.min(d);
        if best.as_ref().is_none_or(|(e, _, _)| err < *e) {
            *best = Some((err, f, states));
        }
        g
    };
    for _ in 0..16 {
        let states = run_force(world, dir * hi, push.pusher_mass, steps, cfg);
        if consider(hi, states, &mut best) >= target {
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..BISECTION_STEPS {
        if best.as_ref().is_some_and(|(e, _, _)| *e <= 0.01 * target) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let states = run_force(world, dir * mid, push.pusher_mass, steps, cfg);
        if consider(mid, states, &mut best) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best.filter(|(e, _, _)| *e <= push.displacement_tolerance * target)
        .map(|(_, f, s)| (f, s))
}

/// Everything that determines a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub count: usize,
    pub seed: u64,
    pub scene: SceneSpec,
    pub push: PushSpec,
    pub sim: SimConfig,
    pub world: WorldSpec,
    /// Noise added to simulated observations (the surrogate world carries its own).
    pub noise: NoiseSpec,
    /// Engine whose shadow rollout is stored with every trajectory.
    pub nominal: NominalEngine,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            count: 100,
            seed: 0,
            scene: SceneSpec::default(),
            push: PushSpec::default(),
            sim: SimConfig::default(),
            world: WorldSpec::Simulation,
            noise: NoiseSpec::default(),
            nominal: NominalEngine::default(),
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.count == 0 {
            return Err("count must be at least 1".into());
        }
        self.scene.validate()?;
        self.push.validate()?;
        self.sim.validate()?;
        self.nominal.validate()?;
        if let WorldSpec::SurrogateReal(s) = &self.world {
            s.validate()?;
        }
        Ok(())
    }

    pub fn effective_noise(&self) -> NoiseSpec {
        match &self.world {
            WorldSpec::Simulation => self.noise,
            WorldSpec::SurrogateReal(s) => s.noise,
        }
    }
}

/// Seed of trajectory `index`, a fixed function of the dataset seed.
pub fn trajectory_seed(dataset_seed: u64, index: usize) -> u64 {
    let mut z = dataset_seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Smooth random friction field: a normalized sum of random Fourier
/// features with a squared-exponential spectrum, rescaled so its extremes
/// over the grid sit exactly at `mean +- amplitude`.
pub fn friction_field(spec: &SurrogateRealSpec) -> FrictionField {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.field_seed);
    let k = spec.fourier_features;
    let feats: Vec<(f64, f64, f64)> = (0..k)
        .map(|_| {
            let wx: f64 = StandardNormal.sample(&mut rng);
            let wy: f64 = StandardNormal.sample(&mut rng);
            let phase = rng.random_range(0.0..2.0 * PI);
            (wx / spec.correlation_length, wy / spec.correlation_length, phase)
        })
        .collect();
    let n = (2.0 * spec.extent / spec.grid_spacing).round() as usize + 1;
    let origin = [-spec.extent, -spec.extent];
    let raw: Vec<f64> = (0..n * n)
        .map(|idx| {
            let (ix, iy) = (idx % n, idx / n);
            let x = origin[0] + ix as f64 * spec.grid_spacing;
            let y = origin[1] + iy as f64 * spec.grid_spacing;
            feats.iter().map(|(wx, wy, ph)| (wx * x + wy * y + ph).cos()).sum::<f64>()
        })
        .collect();
    let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    FrictionField {
        origin,
        spacing: spec.grid_spacing,
        nx: n,
        ny: n,
        values: raw.iter().map(|v| spec.mu_mean + spec.mu_amplitude * v / peak).collect(),
    }
}

/// Surface and simulator settings of the world a spec describes, for a
/// scene whose uniform friction was drawn as `mu`.
pub(crate) fn world_physics(spec: &DatasetSpec, shared_field: Option<&Arc<SurfaceModel>>, mu: f64) -> (Arc<SurfaceModel>, SimConfig) {
    match (&spec.world, shared_field) {
        (WorldSpec::SurrogateReal(s), Some(surface)) => (
            Arc::clone(surface),
            SimConfig {
                contact_mu: spec.sim.contact_mu * s.contact_mu_factor,
                ..spec.sim
            },
        ),
        _ => (Arc::new(SurfaceModel::uniform(mu)), spec.sim),
    }
}

/// Shared surface of a surrogate world.
pub fn surrogate_surface(spec: &SurrogateRealSpec) -> SurfaceModel {
    SurfaceModel::spatial(friction_field(spec), spec.mu_mean)
}

/// Simulates one push from a sampled scene.
pub fn generate_trajectory(spec: &DatasetSpec, index: usize, shared: Option<&Arc<SurfaceModel>>) -> Result<TrajectoryRecord, ScenarioError> {
    let seed = trajectory_seed(spec.seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = steps_for(spec.push.duration, spec.sim.dt);
    for _ in 0..MAX_PUSH_TRIES {
        let mu = spec.scene.mu.draw(0, &mut rng);
        let (surface, cfg) = world_physics(spec, shared, mu);
        let world = sample_scene(&spec.scene, surface, &mut rng).map_err(|e| e.at(index))?;
        let dir = sample_push_direction(&world, spec.push.push_angle, &mut rng);
        let (states, commands, force) = match spec.push.setup {
            PushSetup::PositionControl => {
                let cmds = position_control_commands(dir, spec.push.push_speed, spec.push.target_displacement, cfg.dt, steps);
                let mut states = Vec::with_capacity(steps + 1);
                states.push(world.clone());
                for c in &cmds {
                    let next = crate::sim::step(states.last().unwrap(), *c, &cfg);
                    states.push(next);
                }
                (states, cmds, None)
            }
            PushSetup::DirectForce => {
                let Some((f, states)) = calibrate_force(&world, dir, &spec.push, steps, &cfg) else {
                    continue;
                };
                let cmds = states
                    .windows(2)
                    .map(|w| (w[1].pusher.position - w[0].pusher.position) / cfg.dt)
                    .collect();
                (states, cmds, Some([dir.x * f, dir.y * f]))
            }
        };
        let mut frames: Vec<Frame> = states.iter().map(Frame::from_world).collect();
        let noise = spec.effective_noise();
        if !noise.is_zero() {
            let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e6f_6973_65);
            apply_noise_to_frames(&mut frames, noise, cfg.dt, &mut noise_rng);
        }
        let mut rec = TrajectoryRecord {
            index,
            seed,
            setup: spec.push.setup,
            masses: world.disks.iter().map(|d| d.mass).collect(),
            radii: world.disks.iter().map(|d| d.radius).collect(),
            pusher_radius: world.pusher.radius,
            surface: Arc::clone(&world.surface),
            contact_mu: cfg.contact_mu,
            push_force: force,
            commands: commands.iter().map(|c| [c.x, c.y]).collect(),
            frames,
            nominal: Vec::new(),
        };
        attach_nominal(&mut rec, &spec.nominal);
        return Ok(rec);
    }
    Err(ScenarioError::Calibration { index })
}

/// Stores the nominal engine's rollout from the observed first frame under
/// the recorded pusher commands.
pub fn attach_nominal(rec: &mut TrajectoryRecord, engine: &NominalEngine) {
    let world = rec.world_at(0);
    let traj = engine.rollout(&world, &rec.command_vec());
    rec.nominal = traj.states.iter().map(Frame::from_world).collect();
}

/// Gaussian noise on observed poses; velocities are rebuilt as backward
/// differences of the noisy poses. The first frame keeps its velocity.
pub fn apply_observation_noise<R: Rng + ?Sized>(rec: &TrajectoryRecord, noise: NoiseSpec, dt: f64, rng: &mut R) -> TrajectoryRecord {
    let mut out = rec.clone();
    if !noise.is_zero() {
        apply_noise_to_frames(&mut out.frames, noise, dt, rng);
    }
    out
}

fn apply_noise_to_frames<R: Rng + ?Sized>(frames: &mut [Frame], noise: NoiseSpec, dt: f64, rng: &mut R) {
    let pos = Normal::new(0.0, noise.sigma_pos).expect("finite sigma");
    let rot = Normal::new(0.0, noise.sigma_rot).expect("finite sigma");
    for f in frames.iter_mut() {
        for d in &mut f.disks {
            d[0] += pos.sample(rng);
            d[1] += pos.sample(rng);
            d[2] = wrap_angle(d[2] + rot.sample(rng));
        }
    }
    for t in (1..frames.len()).rev() {
        for i in 0..frames[t].disks.len() {
            let (prev, cur) = (frames[t - 1].disks[i], frames[t].disks[i]);
            frames[t].disks[i][3] = (cur[0] - prev[0]) / dt;
            frames[t].disks[i][4] = (cur[1] - prev[1]) / dt;
            frames[t].disks[i][5] = wrap_angle(cur[2] - prev[2]) / dt;
        }
    }
}
