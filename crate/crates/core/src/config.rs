//! The run configuration file: simulation regime, trainer and evaluation grid.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::TrajectoryKind;
use crate::error::{Error, Result};
use crate::filters::FilterSpec;
use crate::learn::PpoConfig;
use crate::rng::{derive_seed, Stream};
use crate::terrain::{generate_terrain, Terrain, TerrainParams};
use crate::vecsim::RegimeConfig;

/// Evaluation speeds (m/s) used unless overridden.
pub const EVAL_SPEEDS: [f64; 3] = [0.05, 0.15, 0.25];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    /// A trained policy artifact, driven by its mean action.
    #[default]
    Policy,
    /// Proportional tracker on the true state.
    Proportional,
    Zero,
    Random,
}

/// One evaluated variant: a named controller and, for policies, its artifact path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyRef {
    pub name: String,
    #[serde(default)]
    pub controller: ControllerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl PolicyRef {
    /// Parses `name=path` (a policy artifact) or a bare controller name.
    pub fn parse(s: &str) -> Result<Self> {
        if let Some((name, path)) = s.split_once('=') {
            if name.is_empty() || path.is_empty() {
                return Err(Error::config(format!("expected NAME=PATH, got '{s}'")));
            }
            return Ok(Self {
                name: name.into(),
                controller: ControllerKind::Policy,
                path: Some(path.into()),
            });
        }
        let controller = match s {
            "proportional" => ControllerKind::Proportional,
            "zero" => ControllerKind::Zero,
            "random" => ControllerKind::Random,
            _ => {
                return Err(Error::config(format!(
                    "'{s}' is neither NAME=PATH nor one of proportional, zero, random"
                )))
            }
        };
        Ok(Self {
            name: s.into(),
            controller,
            path: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalGrid {
    pub policies: Vec<PolicyRef>,
    pub trajectories: Vec<TrajectoryKind>,
    pub speeds: Vec<f64>,
    pub filters: Vec<FilterSpec>,
    /// Episodes per grid cell; episode `e` runs on held-out terrain `e % terrains`.
    pub episodes: usize,
    pub laps: usize,
    /// Number of held-out terrains and the seed they are derived from.
    pub terrains: usize,
    pub terrain_seed: u64,
    pub seed: u64,
}

impl Default for EvalGrid {
    fn default() -> Self {
        Self {
            policies: Vec::new(),
            trajectories: vec![TrajectoryKind::Capsule],
            speeds: EVAL_SPEEDS.to_vec(),
            filters: FilterSpec::SWEEP.to_vec(),
            episodes: 10,
            laps: 2,
            terrains: 10,
            terrain_seed: 0x00e0_a1,
            seed: 0,
        }
    }
}

impl EvalGrid {
    pub fn validate(&self) -> Result<()> {
        if self.trajectories.is_empty() || self.speeds.is_empty() || self.filters.is_empty() {
            return Err(Error::config("eval grid needs at least one trajectory, speed and filter"));
        }
        if let Some(t) = self.trajectories.iter().find(|t| **t == TrajectoryKind::Training) {
            return Err(Error::config(format!("'{t}' is not an evaluation trajectory")));
        }
        if let Some(s) = self.speeds.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::config(format!("eval speeds must be > 0, got {s}")));
        }
        if self.episodes == 0 || self.terrains == 0 || self.laps < 2 {
            return Err(Error::config("eval needs episodes >= 1, terrains >= 1 and laps >= 2"));
        }
        for p in &self.policies {
            if (p.controller == ControllerKind::Policy) != p.path.is_some() {
                return Err(Error::config(format!(
                    "policy '{}': a path is required for trained policies and only for them",
                    p.name
                )));
            }
        }
        self.filters.iter().try_for_each(FilterSpec::validate)
    }

    /// Seed of held-out terrain `k`; disjoint from the training streams.
    pub fn heldout_seed(&self, k: usize) -> u64 {
        derive_seed(&[self.terrain_seed, Stream::Eval as u64, k as u64])
    }

    /// Generates the held-out evaluation terrains with the given generator settings.
    pub fn heldout_terrains(&self, params: &TerrainParams) -> Result<Vec<Arc<Terrain>>> {
        (0..self.terrains)
            .into_par_iter()
            .map(|k| generate_terrain(&params.with_seed(self.heldout_seed(k))).map(Arc::new))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub regime: RegimeConfig,
    pub ppo: PpoConfig,
    pub eval: EvalGrid,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        // TOML integers are signed 64-bit
        for (name, s) in [
            ("regime.master_seed", self.regime.master_seed),
            ("regime.terrain.seed", self.regime.terrain.seed),
            ("ppo.seed", self.ppo.seed),
            ("eval.terrain_seed", self.eval.terrain_seed),
            ("eval.seed", self.eval.seed),
        ] {
            if s > i64::MAX as u64 {
                return Err(Error::config(format!("{name} must be < 2^63, got {s}")));
            }
        }
        self.regime.validate()?;
        self.ppo.validate(self.regime.n_envs)?;
        self.eval.validate()
    }

    pub fn from_toml_str(s: &str, path: &Path) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| Error::format(path, e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }
}
