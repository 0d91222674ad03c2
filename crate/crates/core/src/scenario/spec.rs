use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sim::DEFAULT_PUSHER_RADIUS;

/// Distribution of one per-disk or per-scene parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "dist")]
pub enum ParamDist {
    Uniform { lo: f64, hi: f64 },
    /// Listed per disk; scenes with more disks repeat the last value.
    Fixed { values: Vec<f64> },
}

impl ParamDist {
    pub fn uniform(lo: f64, hi: f64) -> Self {
        Self::Uniform { lo, hi }
    }

    pub fn fixed(values: &[f64]) -> Self {
        Self::Fixed {
            values: values.to_vec(),
        }
    }

    /// Draws the value for disk `i`. Fixed values consume no randomness.
    pub fn draw<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> f64 {
        match self {
            Self::Uniform { lo, hi } => uniform(rng, *lo, *hi),
            Self::Fixed { values } => values.get(i).or(values.last()).copied().unwrap_or(f64::NAN),
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match self {
            Self::Uniform { lo, hi } => (*lo, *hi),
            Self::Fixed { values } => values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v))),
        }
    }

    fn validate(&self, name: &str) -> Result<(), String> {
        let (lo, hi) = self.bounds();
        if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo > 0.0) {
            return Err(format!("{name}: invalid range [{lo}, {hi}]"));
        }
        Ok(())
    }
}

/// Uniform draw on `[lo, hi]` that never leaves the interval.
pub(crate) fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        return lo;
    }
    rng.random_range(lo..=hi)
}

/// Initial configuration sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub n_disks: usize,
    /// Ground friction of a uniform surface.
    pub mu: ParamDist,
    pub mass: ParamDist,
    pub radius: ParamDist,
    /// Disks after the first touch it at an angle in `[-a, a]` (rad).
    pub placement_angle: f64,
    /// Pusher touches disk 1 from behind at an angle in `[-a, a]` (rad).
    pub pusher_angle: f64,
    pub pusher_radius: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            n_disks: 2,
            mu: ParamDist::uniform(0.05, 0.25),
            mass: ParamDist::uniform(0.85, 1.15),
            radius: ParamDist::uniform(0.05, 0.06),
            placement_angle: PI / 3.0,
            pusher_angle: PI / 3.0,
            pusher_radius: DEFAULT_PUSHER_RADIUS,
        }
    }
}

impl SceneSpec {
    /// Fixed disks used for control evaluation in simulation.
    pub fn control_matched() -> Self {
        Self {
            mu: ParamDist::fixed(&[0.15]),
            mass: ParamDist::fixed(&[0.9, 1.0]),
            radius: ParamDist::fixed(&[0.054, 0.059]),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(2..=3).contains(&self.n_disks) {
            return Err(format!("n_disks must be 2 or 3, got {}", self.n_disks));
        }
        self.mu.validate("mu")?;
        self.mass.validate("mass")?;
        self.radius.validate("radius")?;
        if self.mu.bounds().1 >= 1.0 {
            return Err("mu must stay below 1".into());
        }
        for (name, a) in [("placement_angle", self.placement_angle), ("pusher_angle", self.pusher_angle)] {
            if !(0.0..=PI / 2.0).contains(&a) {
                return Err(format!("{name} must be in [0, pi/2], got {a}"));
            }
        }
        if !(self.pusher_radius > 0.0) {
            return Err("pusher_radius must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PushSpec {
    pub setup: super::PushSetup,
    /// s
    pub duration: f64,
    /// Push direction deviates from the pusher-to-disk axis by up to this
    /// angle (rad).
    pub push_angle: f64,
    /// Intended net pusher travel (m).
    pub target_displacement: f64,
    /// Accepted relative deviation from the intended travel.
    pub displacement_tolerance: f64,
    /// Speed of a position-controlled push (m/s); the pusher stops once it
    /// has covered the intended travel.
    pub push_speed: f64,
    /// Mass of the force-driven pusher (kg).
    pub pusher_mass: f64,
}

impl Default for PushSpec {
    fn default() -> Self {
        Self {
            setup: super::PushSetup::DirectForce,
            duration: 2.0,
            push_angle: PI / 6.0,
            target_displacement: 0.010,
            displacement_tolerance: 0.2,
            push_speed: 0.050,
            pusher_mass: 0.1,
        }
    }
}

impl PushSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.duration > 0.0 && self.target_displacement > 0.0 && self.push_speed > 0.0 && self.pusher_mass > 0.0) {
            return Err("duration, displacement, speed and pusher mass must be positive".into());
        }
        if !(0.0..1.0).contains(&self.displacement_tolerance) {
            return Err("displacement_tolerance must be in [0, 1)".into());
        }
        if !(0.0..=PI / 2.0).contains(&self.push_angle) {
            return Err("push_angle must be in [0, pi/2]".into());
        }
        Ok(())
    }
}

/// Gaussian observation noise on poses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// m
    pub sigma_pos: f64,
    /// rad
    pub sigma_rot: f64,
}

impl NoiseSpec {
    /// Magnitude named as the default noise level of simulated data.
    pub const COARSE: Self = Self {
        sigma_pos: 5e-4,
        sigma_rot: 5e-3,
    };

    pub fn is_zero(&self) -> bool {
        self.sigma_pos == 0.0 && self.sigma_rot == 0.0
    }
}

/// Target-domain stand-in: position-dependent ground friction, a stronger
/// contact coefficient and noisy observations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateRealSpec {
    pub mu_mean: f64,
    pub mu_amplitude: f64,
    /// m
    pub correlation_length: f64,
    /// Half-width of the square the friction grid covers (m).
    pub extent: f64,
    /// m
    pub grid_spacing: f64,
    pub fourier_features: usize,
    /// Scales disk-disk and pusher-disk friction; 2.0 turns the default 0.3
    /// into the ~0.6 of dry steel on steel.
    pub contact_mu_factor: f64,
    pub noise: NoiseSpec,
    pub field_seed: u64,
}

impl Default for SurrogateRealSpec {
    fn default() -> Self {
        Self {
            mu_mean: 0.15,
            mu_amplitude: 0.05,
            correlation_length: 0.1,
            extent: 0.5,
            grid_spacing: 0.01,
            fourier_features: 64,
            contact_mu_factor: 2.0,
            noise: NoiseSpec {
                sigma_pos: 2e-5,
                sigma_rot: 5e-4,
            },
            field_seed: 7,
        }
    }
}

impl SurrogateRealSpec {
    /// The real disks: the smaller one is pushed.
    pub fn scene() -> SceneSpec {
        SceneSpec {
            mu: ParamDist::fixed(&[0.15]),
            mass: ParamDist::fixed(&[0.896, 1.1]),
            radius: ParamDist::fixed(&[0.0525, 0.058]),
            ..SceneSpec::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let (lo, hi) = (self.mu_mean - self.mu_amplitude, self.mu_mean + self.mu_amplitude);
        if !(lo > 0.0 && hi < 1.0 && self.mu_amplitude >= 0.0) {
            return Err(format!("friction field range [{lo}, {hi}] must lie in (0, 1)"));
        }
        if !(self.correlation_length > 0.0 && self.extent > 0.0 && self.grid_spacing > 0.0) {
            return Err("field lengths must be positive".into());
        }
        if self.fourier_features == 0 || !(self.contact_mu_factor > 0.0) {
            return Err("need at least one feature and a positive contact factor".into());
        }
        if self.noise.sigma_pos < 0.0 || self.noise.sigma_rot < 0.0 {
            return Err("noise must be non-negative".into());
        }
        Ok(())
    }
}

/// Which world produces the observations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WorldSpec {
    /// Uniform friction per scene, drawn from the scene spec.
    Simulation,
    SurrogateReal(SurrogateRealSpec),
}
