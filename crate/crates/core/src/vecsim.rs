//! Batched environments in the stacked (one shared terrain) or procedural (one terrain
//! per instance) regime.
//!
//! Stepping is data-parallel over instances. Each instance owns its random streams and
//! writes a disjoint output slot, so results never depend on the worker count.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, StepInfo, WaypointEnv};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, mix64, Stream};
use crate::terrain::{generate_terrain, Terrain, TerrainParams};
use crate::{ACT_DIM, OBS_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// All instances share one static terrain.
    Stacked,
    /// Each instance gets its own generated terrain.
    #[default]
    Procedural,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Stacked => "stacked",
            Regime::Procedural => "procedural",
        })
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stacked" => Ok(Regime::Stacked),
            "procedural" => Ok(Regime::Procedural),
            _ => Err(Error::config(format!("unknown regime '{s}' (expected stacked or procedural)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeConfig {
    pub regime: Regime,
    pub n_envs: usize,
    pub master_seed: u64,
    /// Worker threads for stepping; 0 uses every available core.
    pub workers: usize,
    pub terrain: TerrainParams,
    pub env: EnvConfig,
}

impl Default for RegimeConfig {
    fn default() -> Self {
        Self {
            regime: Regime::Procedural,
            n_envs: 64,
            master_seed: 0,
            workers: 0,
            terrain: TerrainParams::default(),
            env: EnvConfig::default(),
        }
    }
}

impl RegimeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_envs == 0 {
            return Err(Error::config("n_envs must be >= 1"));
        }
        self.terrain.validate()?;
        self.env.validate()
    }

    /// Terrain seed for instance `i` (all instances share one seed when stacked).
    pub fn terrain_seed(&self, instance: usize) -> u64 {
        let base = [self.terrain.seed, self.master_seed, Stream::Terrain as u64];
        match self.regime {
            Regime::Stacked => derive_seed(&base),
            Regime::Procedural => derive_seed(&[base[0], base[1], base[2], instance as u64]),
        }
    }
}

/// Per-instance results of one batch step beyond the flat arrays.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BatchInfo {
    pub step: StepInfo,
    /// Set when the instance finished an episode and was reset this step.
    pub reset: bool,
    /// Last observation of the finished episode (the reset observation replaced it).
    pub final_observation: Option<[f64; OBS_DIM]>,
    /// Undiscounted return of the finished episode.
    pub episode_return: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchStep {
    /// `n_envs × 4`, row-major.
    pub observations: Vec<f64>,
    pub rewards: Vec<f64>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    pub infos: Vec<BatchInfo>,
}

struct Slot {
    env: WaypointEnv,
    episode: u64,
    ret: f64,
}

pub struct VecEnv {
    cfg: RegimeConfig,
    slots: Vec<Slot>,
    terrains: Vec<Arc<Terrain>>,
    pool: rayon::ThreadPool,
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

impl VecEnv {
    /// Builds all instances. The stacked regime generates one terrain; the procedural
    /// regime generates `n_envs` distinct ones (in parallel).
    pub fn new(cfg: RegimeConfig) -> Result<Self> {
        cfg.validate()?;
        let pool = build_pool(cfg.workers)?;
        let terrains: Vec<Arc<Terrain>> = match cfg.regime {
            Regime::Stacked => vec![Arc::new(generate_terrain(&cfg.terrain.with_seed(cfg.terrain_seed(0)))?)],
            Regime::Procedural => pool.install(|| {
                (0..cfg.n_envs)
                    .into_par_iter()
                    .map(|i| {
                        generate_terrain(&cfg.terrain.with_seed(cfg.terrain_seed(i)))
                            .map(Arc::new)
                            .map_err(|e| Error::Instance {
                                index: i,
                                source: Box::new(e),
                            })
                    })
                    .collect::<Result<Vec<_>>>()
            })?,
        };
        Self::with_terrains(cfg, terrains, pool)
    }

    /// Builds instances over caller-supplied terrains: one shared terrain, or one per
    /// instance.
    pub fn from_terrains(cfg: RegimeConfig, terrains: Vec<Arc<Terrain>>) -> Result<Self> {
        cfg.validate()?;
        if terrains.len() != 1 && terrains.len() != cfg.n_envs {
            return Err(Error::usage("need one terrain or one per instance"));
        }
        let pool = build_pool(cfg.workers)?;
        Self::with_terrains(cfg, terrains, pool)
    }

    fn with_terrains(cfg: RegimeConfig, terrains: Vec<Arc<Terrain>>, pool: rayon::ThreadPool) -> Result<Self> {
        let env_cfg = Arc::new(cfg.env.clone());
        let slots = (0..cfg.n_envs)
            .map(|i| {
                let terrain = terrains[i.min(terrains.len() - 1)].clone();
                Ok(Slot {
                    env: WaypointEnv::new(env_cfg.clone(), terrain, cfg.master_seed, i as u64)?,
                    episode: 0,
                    ret: 0.0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cfg,
            slots,
            terrains,
            pool,
        })
    }

    pub fn config(&self) -> &RegimeConfig {
        &self.cfg
    }

    pub fn n_envs(&self) -> usize {
        self.slots.len()
    }

    pub fn env(&self, i: usize) -> &WaypointEnv {
        &self.slots[i].env
    }

    pub fn env_mut(&mut self, i: usize) -> &mut WaypointEnv {
        &mut self.slots[i].env
    }

    /// Number of distinct terrain objects held.
    pub fn unique_terrains(&self) -> usize {
        self.terrains.len()
    }

    /// Terrain checksum seen by each instance.
    pub fn terrain_checksums(&self) -> Vec<u64> {
        self.slots.iter().map(|s| s.env.terrain().checksum()).collect()
    }

    /// Approximate heap footprint (bytes) of terrains and per-instance state.
    pub fn heap_bytes(&self) -> usize {
        let terrain: usize = self.terrains.iter().map(|t| t.heightfield.heap_bytes()).sum();
        let per_env = std::mem::size_of::<Slot>() + 2048 + (self.cfg.env.max_steps + 1) * std::mem::size_of::<crate::geom::Pose2>();
        terrain + self.slots.len() * per_env
    }

    /// Resets every instance to episode 0 and returns the `n × 4` observations.
    pub fn reset(&mut self) -> Vec<f64> {
        let mut obs = vec![0.0; self.slots.len() * OBS_DIM];
        self.pool.install(|| {
            self.slots
                .par_iter_mut()
                .zip(obs.par_chunks_mut(OBS_DIM))
                .for_each(|(s, o)| {
                    s.episode = 0;
                    s.ret = 0.0;
                    o.copy_from_slice(&s.env.reset(0).to_array());
                });
        });
        obs
    }

    /// Steps every instance with its action from the row-major `n × 2` array.
    /// Truncated instances are reset with their next episode index.
    pub fn step(&mut self, actions: &[f64]) -> Result<BatchStep> {
        let n = self.slots.len();
        if actions.len() != n * ACT_DIM {
            return Err(Error::usage(format!(
                "expected {} action values for {n} instances, got {}",
                n * ACT_DIM,
                actions.len()
            )));
        }
        let mut out = BatchStep {
            observations: vec![0.0; n * OBS_DIM],
            rewards: vec![0.0; n],
            terminated: vec![false; n],
            truncated: vec![false; n],
            infos: vec![BatchInfo::default(); n],
        };
        let min_len = (n / (4 * self.pool.current_num_threads().max(1))).max(1);
        let results: Vec<Result<()>> = self.pool.install(|| {
            self.slots
                .par_iter_mut()
                .zip(actions.par_chunks(ACT_DIM))
                .zip(out.observations.par_chunks_mut(OBS_DIM))
                .zip(out.rewards.par_iter_mut())
                .zip(out.truncated.par_iter_mut())
                .zip(out.infos.par_iter_mut())
                .with_min_len(min_len)
                .map(|(((((s, a), o), r), tr), info)| {
                    let res = s.env.step([a[0], a[1]])?;
                    s.ret += res.reward.total;
                    *r = res.reward.total;
                    *tr = res.truncated;
                    info.step = res.info;
                    let mut obs = res.observation;
                    if res.truncated || res.terminated {
                        info.reset = true;
                        info.final_observation = Some(obs.to_array());
                        info.episode_return = Some(s.ret);
                        s.ret = 0.0;
                        s.episode += 1;
                        obs = s.env.reset(s.episode);
                    }
                    o.copy_from_slice(&obs.to_array());
                    Ok(())
                })
                .collect()
        });
        for (i, r) in results.into_iter().enumerate() {
            r.map_err(|e| Error::Instance {
                index: i,
                source: Box::new(e),
            })?;
        }
        Ok(out)
    }

    /// Order-sensitive digest of a batch result, for determinism checks.
    pub fn digest(step: &BatchStep) -> u64 {
        let mut h = 0u64;
        let mut feed = |x: u64| h = mix64(h ^ x);
        step.observations.iter().for_each(|v| feed(v.to_bits()));
        step.rewards.iter().for_each(|v| feed(v.to_bits()));
        step.truncated.iter().for_each(|&v| feed(v as u64));
        h
    }

}
