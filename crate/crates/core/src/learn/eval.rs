//! Closed-loop evaluation of controllers on named trajectories.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::policy::Policy;
use crate::env::{EnvConfig, EpisodeLog, Observation, TrajectoryKind, WaypointEnv, WaypointTrajectory};
use crate::error::{Error, Result};
use crate::filters::FilterSpec;
use crate::geom::{wrap_angle, Pose2};
use crate::metrics::{first_lap_end, MetricsSummary};
use crate::rng::{seeded, stream, Stream};
use crate::terrain::Terrain;
use crate::vecsim::{RegimeConfig, VecEnv};
use crate::{ACT_DIM, OBS_DIM};

/// Ground truth available to scripted controllers. Learned policies ignore it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truth {
    pub rover: Pose2,
    pub target: Pose2,
}

pub trait Controller {
    fn act(&mut self, obs: &Observation, truth: &Truth) -> [f64; ACT_DIM];

    fn reset(&mut self) {}
}

impl<C: Controller + ?Sized> Controller for Box<C> {
    fn act(&mut self, obs: &Observation, truth: &Truth) -> [f64; ACT_DIM] {
        (**self).act(obs, truth)
    }

    fn reset(&mut self) {
        (**self).reset()
    }
}

/// Deterministic mean action of a trained policy.
pub struct PolicyController(pub Arc<Policy<f32>>);

impl Controller for PolicyController {
    fn act(&mut self, obs: &Observation, _: &Truth) -> [f64; ACT_DIM] {
        self.0.greedy(obs.to_array())
    }
}

/// Uniform actions on `[-1, 1]²`.
pub struct RandomController(pub ChaCha8Rng);

impl Controller for RandomController {
    fn act(&mut self, _: &Observation, _: &Truth) -> [f64; ACT_DIM] {
        std::array::from_fn(|_| self.0.random_range(-1.0..=1.0))
    }
}

pub struct ZeroController;

impl Controller for ZeroController {
    fn act(&mut self, _: &Observation, _: &Truth) -> [f64; ACT_DIM] {
        [0.0; ACT_DIM]
    }
}

/// Proportional tracker with speed feed-forward, acting on the true poses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProportionalController {
    /// Feed-forward as a fraction of full linear command.
    pub feed_forward: f64,
    pub k_x: f64,
    pub k_y: f64,
    pub k_yaw: f64,
}

impl ProportionalController {
    pub fn new(speed: f64, max_lin_speed: f64) -> Self {
        Self {
            feed_forward: speed / max_lin_speed,
            k_x: 8.0,
            k_y: 6.0,
            k_yaw: 1.5,
        }
    }
}

impl Controller for ProportionalController {
    fn act(&mut self, _: &Observation, truth: &Truth) -> [f64; ACT_DIM] {
        let rel = truth.rover.to_local(truth.target.position);
        let e = wrap_angle(truth.target.yaw - truth.rover.yaw);
        [
            (self.k_x * rel.x + self.feed_forward).clamp(-1.0, 1.0),
            (self.k_y * rel.y + self.k_yaw * e).clamp(-1.0, 1.0),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSetup {
    pub kind: TrajectoryKind,
    /// Target speed (m/s).
    pub speed: f64,
    pub filter: FilterSpec,
    pub episodes: usize,
    /// Laps driven per episode; the first is discarded.
    pub laps: usize,
    pub seed: u64,
}

impl EvalSetup {
    pub fn new(kind: TrajectoryKind, speed: f64, filter: FilterSpec) -> Self {
        Self {
            kind,
            speed,
            filter,
            episodes: 1,
            laps: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    /// Equal-weight mean over episodes.
    pub summary: MetricsSummary,
    pub episodes: Vec<MetricsSummary>,
    /// Full logs including the discarded first lap.
    pub logs: Vec<EpisodeLog>,
    /// Index of the first record kept for metrics in each log.
    pub kept_from: Vec<usize>,
}

/// Runs `setup.episodes` independent episodes; episode `e` uses `terrains[e % len]`.
/// Metrics cover everything after the rover's first completed lap.
pub fn evaluate<C, F>(env_cfg: &EnvConfig, terrains: &[Arc<Terrain>], setup: &EvalSetup, make: F) -> Result<EvalOutcome>
where
    C: Controller,
    F: Fn(usize) -> C + Sync,
{
    if terrains.is_empty() || setup.episodes == 0 || setup.laps < 2 {
        return Err(Error::usage("evaluate needs a terrain, ≥ 1 episode and ≥ 2 laps"));
    }
    let base = WaypointTrajectory::eval(setup.kind, setup.speed)?;
    let lap_time = base.lap_time().ok_or_else(|| Error::usage("trajectory has no lap time"))?;
    let length = base.loop_length().unwrap_or(0.0);
    let dt = env_cfg.dynamics.dt;
    let steps = (setup.laps as f64 * lap_time / dt).ceil() as usize;
    let cfg = Arc::new(env_cfg.clone());

    let runs: Vec<Result<(EpisodeLog, usize, MetricsSummary)>> = (0..setup.episodes)
        .into_par_iter()
        .map(|e| {
            let terrain = terrains[e % terrains.len()].clone();
            let hf = &terrain.heightfield;
            let center = hf.origin() + crate::geom::Vec2::new(0.5, 0.5) * hf.extent();
            let tr = Arc::new(base.clone().translated(center));
            let mut env = WaypointEnv::new(cfg.clone(), terrain, setup.seed, e as u64)?;
            env.set_filter(setup.filter)?;
            env.enable_logging();
            let mut ctl = make(e);
            ctl.reset();
            let mut obs = env.reset_tracking(0, tr.clone(), steps);
            for _ in 0..steps {
                let truth = Truth {
                    rover: env.rover().expect("episode running").pose(),
                    target: env.target().expect("episode running"),
                };
                obs = env.step(ctl.act(&obs, &truth))?.observation;
            }
            let log = env.take_log().expect("logging enabled");
            let start = tr.pose(0.0).position;
            let end = first_lap_end(&log, start, length)
                .unwrap_or(((lap_time / dt).round() as usize).saturating_sub(1))
                .min(log.len().saturating_sub(5));
            let kept = end + 1;
            let m = MetricsSummary::from_log(&log.slice_from(kept), setup.laps - 1)?;
            Ok((log, kept, m))
        })
        .collect();

    let mut out = EvalOutcome {
        summary: MetricsSummary::default(),
        episodes: Vec::new(),
        logs: Vec::new(),
        kept_from: Vec::new(),
    };
    for r in runs {
        let (log, kept, m) = r?;
        out.logs.push(log);
        out.kept_from.push(kept);
        out.episodes.push(m);
    }
    out.summary = MetricsSummary::mean(&out.episodes).expect("at least one episode");
    Ok(out)
}

/// Mean undiscounted return of full training episodes under `policy`, which maps an
/// `n × 4` observation batch to `n × 2` actions. Each instance runs `episodes_per_env`
/// episodes.
pub fn training_return(
    regime: &RegimeConfig,
    episodes_per_env: usize,
    mut policy: impl FnMut(&[f64]) -> Vec<f64>,
) -> Result<(f64, f64)> {
    let mut vec = VecEnv::new(regime.clone())?;
    let n = vec.n_envs();
    let mut obs = vec.reset();
    let mut returns = Vec::with_capacity(n * episodes_per_env);
    let mut done = vec![0usize; n];
    while done.iter().any(|&d| d < episodes_per_env) {
        let actions = policy(&obs);
        let step = vec.step(&actions)?;
        for (i, info) in step.infos.iter().enumerate() {
            if let Some(r) = info.episode_return {
                if done[i] < episodes_per_env {
                    returns.push(r);
                }
                done[i] += 1;
            }
        }
        obs = step.observations;
    }
    Ok(mean_std(&returns))
}

/// Mean return of the uniform random policy on training episodes.
pub fn random_return(regime: &RegimeConfig, episodes_per_env: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = seeded(seed, Stream::Eval);
    training_return(regime, episodes_per_env, |obs| {
        (0..obs.len() / OBS_DIM * ACT_DIM).map(|_| rng.random_range(-1.0..=1.0)).collect()
    })
}

/// Mean return of a policy's greedy actions on training episodes.
pub fn greedy_return(policy: &Policy<f32>, regime: &RegimeConfig, episodes_per_env: usize) -> Result<(f64, f64)> {
    training_return(regime, episodes_per_env, |obs| {
        obs.chunks_exact(OBS_DIM)
            .flat_map(|o| policy.greedy([o[0], o[1], o[2], o[3]]))
            .collect()
    })
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// A random controller seeded per episode.
pub fn random_controller(seed: u64, episode: usize) -> RandomController {
    RandomController(stream(seed, episode as u64, 0, Stream::Eval))
}
