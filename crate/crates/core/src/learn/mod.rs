//! Proximal policy optimization on batched environments.

pub mod artifact;
pub mod eval;
pub mod mlp;
pub mod policy;
pub mod ppo;
pub mod real;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use artifact::{ArtifactMeta, PolicyArtifact};
pub use eval::{evaluate, Controller, EvalOutcome, EvalSetup, PolicyController, ProportionalController, Truth};
pub use policy::Policy;
pub use train::{read_curve_csv, train, write_curve_csv, CurveRow, TrainOptions, TrainOutcome, UpdateStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    /// Initial learning rate, decayed linearly to zero over training.
    pub lr_start: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub grad_clip_norm: f64,
    /// Steps collected per instance between updates.
    pub rollout_len: usize,
    pub minibatch: usize,
    pub epochs: usize,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    pub total_steps: u64,
    pub seed: u64,
    pub adam_eps: f64,
    pub normalize_advantages: bool,
    /// Divide rewards by a running estimate of the discounted-return std.
    pub reward_scaling: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            lr_start: 1e-4,
            gamma: 0.997,
            gae_lambda: 0.95,
            clip: 0.2,
            entropy_coef: 0.01,
            value_coef: 0.5,
            grad_clip_norm: 0.5,
            rollout_len: 128,
            minibatch: 1024,
            epochs: 16,
            hidden: vec![384, 384],
            init_log_std: 0.5f64.ln(),
            total_steps: 2_000_000,
            seed: 0,
            adam_eps: 1e-5,
            normalize_advantages: true,
            reward_scaling: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self, n_envs: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let positive = [
            ("lr_start", self.lr_start),
            ("clip", self.clip),
            ("grad_clip_norm", self.grad_clip_norm),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        for (name, v) in [("gamma", self.gamma), ("gae_lambda", self.gae_lambda)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        for (name, v) in [("entropy_coef", self.entropy_coef), ("value_coef", self.value_coef)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        if !self.init_log_std.is_finite() {
            return bad("init_log_std must be finite".into());
        }
        if self.rollout_len == 0 || self.minibatch == 0 || self.epochs == 0 || self.total_steps == 0 {
            return bad("rollout_len, minibatch, epochs and total_steps must be >= 1".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!("hidden sizes must be non-empty and positive, got {:?}", self.hidden));
        }
        let buffer = self.rollout_len * n_envs;
        if buffer % self.minibatch != 0 {
            return bad(format!(
                "minibatch {} must divide rollout_len × n_envs = {buffer}",
                self.minibatch
            ));
        }
        Ok(())
    }

    /// Transitions per update cycle.
    pub fn buffer_len(&self, n_envs: usize) -> usize {
        self.rollout_len * n_envs
    }

    /// Number of update cycles needed to consume `total_steps`.
    pub fn n_updates(&self, n_envs: usize) -> u64 {
        self.total_steps.div_ceil(self.buffer_len(n_envs) as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_at_desk_scale() {
        let c = PpoConfig::default();
        c.validate(64).unwrap();
        assert_eq!(c.buffer_len(64) / c.minibatch, 8);
        assert!(c.validate(63).is_err());
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let c = PpoConfig::default();
        let s = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<PpoConfig>(&s).unwrap(), c);
        assert!(toml::from_str::<PpoConfig>("learning_rate = 1.0").is_err());
    }
}
