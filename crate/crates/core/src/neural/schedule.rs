use serde::{Deserialize, Serialize};

/// Optimization settings for recurrent rollout training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub decay_factor: f64,
    /// Iterations between learning-rate decays.
    pub decay_every: u64,
    pub iterations: u64,
    /// Trajectories per batch.
    pub batch_size: usize,
    pub l2_lambda: f64,
    /// Steps per training window.
    pub rollout_length: usize,
    pub seed: u64,
    pub grad_clip_norm: f64,
    /// Held-out loss is recorded every this many iterations (0 disables).
    pub eval_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-3,
            decay_factor: 0.5,
            decay_every: 2500,
            iterations: 10_000,
            batch_size: 100,
            l2_lambda: 1e-3,
            rollout_length: 200,
            seed: 0,
            grad_clip_norm: 5.0,
            eval_every: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lr0 > 0.0) || !(self.decay_factor > 0.0) {
            return Err("learning rate and decay factor must be positive".into());
        }
        if self.decay_every == 0 || self.batch_size == 0 || self.rollout_length == 0 {
            return Err("decay_every, batch_size and rollout_length must be positive".into());
        }
        if self.l2_lambda < 0.0 || !(self.grad_clip_norm > 0.0) {
            return Err("l2_lambda must be non-negative and grad_clip_norm positive".into());
        }
        Ok(())
    }
}

/// Step-decayed learning rate, `lr0 * decay_factor^floor(iteration / decay_every)`.
pub fn lr_at(cfg: &TrainConfig, iteration: u64) -> f64 {
    let drops = (iteration / cfg.decay_every) as i32;
    cfg.lr0 * cfg.decay_factor.powi(drops)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_at(&cfg, 0), 1e-3);
        assert_eq!(lr_at(&cfg, 2499), 1e-3);
        assert_eq!(lr_at(&cfg, 2500), 5e-4);
        assert!((lr_at(&cfg, 7500) - 1.25e-4).abs() < 1e-18);
        assert!((lr_at(&cfg, 9999) - 1.25e-4).abs() < 1e-18);
    }
}
