//! Hyperparameter presets for trainers that attach through the bridge.
//!
//! Nothing in this crate executes these algorithms; the presets are shipped so a
//! remote trainer can be configured with the same settings as the in-repo PPO run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::PpoConfig;

/// A learning rate that decays linearly from `start` to `end` over training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSchedule {
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Td3Preset {
    pub learning_rate: LinearSchedule,
    pub gamma: f64,
    pub replay_buffer_size: u64,
    pub minibatch: usize,
    pub updates_per_env_step: usize,
    /// Gaussian exploration noise `N(mean, std)` added to actions.
    pub exploration_noise_mean: f64,
    pub exploration_noise_std: f64,
    /// Polyak rate for target networks.
    pub tau: f64,
    pub hidden: Vec<usize>,
}

impl Default for Td3Preset {
    fn default() -> Self {
        Self {
            learning_rate: LinearSchedule { start: 0.003, end: 0.0 },
            gamma: 0.997,
            replay_buffer_size: 2_000_000,
            minibatch: 512,
            updates_per_env_step: 4,
            exploration_noise_mean: 0.0,
            exploration_noise_std: 0.1,
            tau: 0.005,
            hidden: vec![384, 384],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DreamerV3Preset {
    pub gamma: f64,
    pub replay_buffer_size: u64,
    pub batch_size: usize,
    pub sequence_length: usize,
    pub updates_per_env_step: usize,
    pub rssm_hidden: usize,
    pub rssm_deterministic: usize,
    pub discrete_latents: usize,
    pub mlp_units: usize,
    pub cnn_depth: usize,
}

impl Default for DreamerV3Preset {
    fn default() -> Self {
        Self {
            gamma: 0.997,
            replay_buffer_size: 2_000_000,
            batch_size: 16,
            sequence_length: 64,
            updates_per_env_step: 32,
            rssm_hidden: 384,
            rssm_deterministic: 3072,
            discrete_latents: 24,
            mlp_units: 384,
            cnn_depth: 24,
        }
    }
}

/// Recurrent PPO: the feed-forward settings plus an LSTM core.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoLstmPreset {
    pub ppo: PpoConfig,
    pub lstm_hidden: usize,
}

impl Default for PpoLstmPreset {
    fn default() -> Self {
        Self {
            ppo: PpoConfig::default(),
            lstm_hidden: 384,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum RemotePreset {
    Td3(Td3Preset),
    #[serde(rename = "dreamer_v3")]
    DreamerV3(DreamerV3Preset),
    PpoLstm(PpoLstmPreset),
}

impl RemotePreset {
    pub const NAMES: [&'static str; 3] = ["td3", "dreamer_v3", "ppo_lstm"];

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "td3" => Ok(Self::Td3(Td3Preset::default())),
            "dreamer_v3" | "dreamerv3" => Ok(Self::DreamerV3(DreamerV3Preset::default())),
            "ppo_lstm" => Ok(Self::PpoLstm(PpoLstmPreset::default())),
            _ => Err(Error::config(format!(
                "unknown preset '{name}' (expected one of {})",
                Self::NAMES.join(", ")
            ))),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("presets serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_toml() {
        for name in RemotePreset::NAMES {
            let p = RemotePreset::by_name(name).unwrap();
            let back: RemotePreset = toml::from_str(&p.to_toml()).unwrap();
            assert_eq!(back, p);
        }
        assert!(RemotePreset::by_name("sac").is_err());
    }

    #[test]
    fn table_values() {
        let t = Td3Preset::default();
        assert_eq!((t.minibatch, t.updates_per_env_step, t.tau), (512, 4, 0.005));
        let d = DreamerV3Preset::default();
        assert_eq!((d.batch_size, d.sequence_length, d.rssm_deterministic), (16, 64, 3072));
        assert_eq!(PpoLstmPreset::default().lstm_hidden, 384);
    }
}
