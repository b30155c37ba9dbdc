//! Rover waypoint-tracking simulation and training stack.
//!
//! The crate is organised bottom-up:
//!
//! - [`terrain`] generates lunar-analogue heightfields (Perlin base, crater layer,
//!   Poisson-disk boulders) and answers height/slope queries.
//! - [`dynamics`] steps a slip-augmented skid-steer (unicycle) model on a heightfield.
//! - [`env`] is the waypoint-tracking task: trajectories, noisy delayed observations,
//!   shaped reward and the episode lifecycle.
//! - [`vecsim`] runs many environments in the stacked or procedural regime.
//! - [`filters`] holds the streaming action-smoothing filters.
//! - [`learn`] is a from-scratch PPO trainer and the policy artifact format.
//! - [`metrics`] computes tracking error and jerk from episode logs.
//! - [`bridge`] serves a [`vecsim::VecEnv`] over a length-prefixed TCP protocol.
//! - [`presets`] documents settings for trainers attached through the bridge.
//! - [`config`] and [`plot`] back the command line tool.

pub mod bridge;
pub mod config;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod filters;
pub mod geom;
pub mod learn;
pub mod metrics;
pub mod plot;
pub mod presets;
pub mod rng;
pub mod terrain;
pub mod vecsim;

pub use error::{Error, Result};
pub use geom::{wrap_angle, Pose2, Vec2};

pub use dynamics::{DynamicsParams, RoverState};
pub use env::{EnvConfig, EnvStepRecord, EpisodeLog, Observation, RewardTerms, WaypointEnv};
pub use filters::{ActionFilter, FilterSpec};
pub use learn::{PolicyArtifact, PpoConfig};
pub use metrics::MetricsSummary;
pub use terrain::{BoulderSet, HeightField, Terrain, TerrainParams};
pub use vecsim::{BatchStep, Regime, RegimeConfig, VecEnv};

/// Observation vector length: relative position (2) + sin/cos of yaw error (2).
pub const OBS_DIM: usize = 4;
/// Action vector length: normalized linear and angular velocity.
pub const ACT_DIM: usize = 2;
