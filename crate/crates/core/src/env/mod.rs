//! The waypoint-tracking task.
//!
//! One control step runs, in order: action filter, action delay line, clamp and map to
//! velocities, dynamics, target advance, reward on the true state, observation through
//! the observation delay line. Episodes end only by truncation.

mod delay;
mod log;
mod observe;
mod reward;
mod trajectory;

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use delay::{DelayLine, DelayParams};
pub use log::{EnvStepRecord, EpisodeLog, COLUMNS as LOG_COLUMNS};
pub use observe::{make_observation, NoiseModel, NoiseParams, Observation};
pub use reward::{compute_reward, RewardTerms, RewardWeights};
pub use trajectory::{
    gen_training_trajectory, TrainingPathParams, TrajectoryKind, WaypointTrajectory, CAPSULE_RADIUS, CAPSULE_STRAIGHT,
    CIRCLE_RADIUS, LEMNISCATE_SCALE, LISSAJOUS_AXES, RECT_CORNER_RADIUS, RECT_SIZE,
};

use crate::dynamics::{map_action, step_rover, DynamicsParams, RoverState};
use crate::error::{Error, Result};
use crate::filters::{ActionFilter, FilterSpec};
use crate::geom::{Pose2, Vec2};
use crate::rng::{derive_seed, stream, Stream};
use crate::terrain::Terrain;
use crate::ACT_DIM;

/// Which per-episode randomizations are active, and their ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Randomization {
    pub gravity: bool,
    pub base_offset: bool,
    pub slip: bool,
    pub obs_noise: bool,
    pub delays: bool,
    /// Gravity magnitude range (m/s²).
    pub gravity_magnitude: [f64; 2],
    /// Largest tilt of the gravity vector away from vertical (deg).
    pub gravity_tilt_max_deg: f64,
    pub slip_lin: [f64; 2],
    pub slip_ang: [f64; 2],
    /// Per-axis std of the base-frame position offset (m).
    pub offset_pos_std: f64,
    pub offset_yaw_std_deg: f64,
}

impl Default for Randomization {
    fn default() -> Self {
        Self {
            gravity: true,
            base_offset: true,
            slip: true,
            obs_noise: true,
            delays: true,
            gravity_magnitude: [1.62, 9.81],
            gravity_tilt_max_deg: 2.0,
            slip_lin: [0.0, 0.3],
            slip_ang: [0.0, 0.3],
            offset_pos_std: 0.005,
            offset_yaw_std_deg: 1.0,
        }
    }
}

impl Randomization {
    /// Every toggle off: nominal dynamics, exact observations, no delays.
    pub fn off() -> Self {
        Self {
            gravity: false,
            base_offset: false,
            slip: false,
            obs_noise: false,
            delays: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |r: [f64; 2]| r[0] <= r[1] && r[0].is_finite() && r[1].is_finite();
        if !ordered(self.gravity_magnitude) || self.gravity_magnitude[0] < 0.0 {
            return Err(Error::config("randomization.gravity_magnitude must be an ordered range >= 0"));
        }
        for (n, r) in [("slip_lin", self.slip_lin), ("slip_ang", self.slip_ang)] {
            if !ordered(r) || r[0] < 0.0 || r[1] >= 1.0 {
                return Err(Error::config(format!("randomization.{n} must be an ordered range in [0, 1)")));
            }
        }
        if !(self.gravity_tilt_max_deg >= 0.0 && self.offset_pos_std >= 0.0 && self.offset_yaw_std_deg >= 0.0) {
            return Err(Error::config("randomization: tilt and offset spreads must be >= 0"));
        }
        Ok(())
    }

    /// Draws the episode dynamics from `nominal`. All draws are made whether or not the
    /// toggles are on so the stream layout is fixed.
    pub fn draw_dynamics(&self, nominal: &DynamicsParams, rng: &mut impl Rng) -> DynamicsParams {
        let mut uniform = |r: [f64; 2]| {
            let u: f64 = rng.random();
            r[0] + (r[1] - r[0]) * u
        };
        let g_mag = uniform(self.gravity_magnitude);
        let tilt = uniform([0.0, self.gravity_tilt_max_deg.to_radians()]);
        let azimuth = uniform([-PI, PI]);
        let slip_lin = uniform(self.slip_lin);
        let slip_ang = uniform(self.slip_ang);
        let z: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));

        let mut p = nominal.clone();
        if self.gravity {
            let (st, ct) = tilt.sin_cos();
            let (sa, ca) = azimuth.sin_cos();
            p.gravity = [g_mag * st * ca, g_mag * st * sa, -g_mag * ct];
        }
        if self.slip {
            p.slip_lin = slip_lin;
            p.slip_ang = slip_ang;
        }
        if self.base_offset {
            p.base_frame_offset = Pose2::new(
                Vec2::new(z[0], z[1]) * self.offset_pos_std,
                z[2] * self.offset_yaw_std_deg.to_radians(),
            );
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub dynamics: DynamicsParams,
    pub randomization: Randomization,
    pub noise: NoiseParams,
    pub delays: DelayParams,
    pub reward: RewardWeights,
    pub trajectory: TrainingPathParams,
    /// Training episodes spawn the rover uniformly within this distance of the target.
    pub spawn_radius: f64,
    /// Truncation horizon of training episodes (steps).
    pub max_steps: usize,
    pub filter: FilterSpec,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dynamics: DynamicsParams::default(),
            randomization: Randomization::default(),
            noise: NoiseParams::default(),
            delays: DelayParams::default(),
            reward: RewardWeights::default(),
            trajectory: TrainingPathParams::default(),
            spawn_radius: 1.5,
            max_steps: 1500,
            filter: FilterSpec::None,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.dynamics.validate()?;
        self.randomization.validate()?;
        self.noise.validate()?;
        self.delays.validate()?;
        self.reward.validate()?;
        self.trajectory.validate()?;
        self.filter.validate()?;
        if self.max_steps == 0 || !(self.spawn_radius >= 0.0) {
            return Err(Error::config("env: max_steps >= 1 and spawn_radius >= 0 required"));
        }
        Ok(())
    }
}

/// Side information for one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StepInfo {
    /// The rover hit the terrain border and was clamped.
    pub left_extent: bool,
    /// The raw action had a non-finite component (treated as 0).
    pub nonfinite_action: bool,
    pub obs_delay: usize,
    pub act_delay: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: RewardTerms,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

struct Episode {
    index: u64,
    trajectory: Arc<WaypointTrajectory>,
    max_steps: usize,
    dynamics: DynamicsParams,
    noise: NoiseModel,
    obs_rng: ChaCha8Rng,
    delay_rng: ChaCha8Rng,
    delays: (usize, usize),
    act_line: DelayLine<[f64; ACT_DIM]>,
    obs_line: DelayLine<Observation>,
    rover: RoverState,
    step: usize,
    prev_applied: [f64; ACT_DIM],
    done: bool,
}

/// One environment instance on a shared terrain.
pub struct WaypointEnv {
    cfg: Arc<EnvConfig>,
    terrain: Arc<Terrain>,
    master_seed: u64,
    instance: u64,
    filter: ActionFilter,
    episode: Option<Episode>,
    log: Option<EpisodeLog>,
}

impl WaypointEnv {
    pub fn new(cfg: Arc<EnvConfig>, terrain: Arc<Terrain>, master_seed: u64, instance: u64) -> Result<Self> {
        cfg.validate()?;
        let filter = ActionFilter::new(cfg.filter)?;
        Ok(Self {
            cfg,
            terrain,
            master_seed,
            instance,
            filter,
            episode: None,
            log: None,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn terrain(&self) -> &Arc<Terrain> {
        &self.terrain
    }

    pub fn instance(&self) -> u64 {
        self.instance
    }

    /// Replaces the action filter; takes effect at the next reset.
    pub fn set_filter(&mut self, spec: FilterSpec) -> Result<()> {
        self.filter = ActionFilter::new(spec)?;
        Ok(())
    }

    /// Starts recording an [`EpisodeLog`] from the next reset on.
    pub fn enable_logging(&mut self) {
        self.log = Some(EpisodeLog::new(self.cfg.dynamics.dt));
    }

    pub fn log(&self) -> Option<&EpisodeLog> {
        self.log.as_ref()
    }

    pub fn take_log(&mut self) -> Option<EpisodeLog> {
        let dt = self.cfg.dynamics.dt;
        self.log.as_mut().map(|l| std::mem::replace(l, EpisodeLog::new(dt)))
    }

    fn stream(&self, episode: u64, purpose: Stream) -> ChaCha8Rng {
        stream(self.master_seed, self.instance, episode, purpose)
    }

    /// Starts training episode `episode` on a freshly drawn random target path.
    pub fn reset(&mut self, episode: u64) -> Observation {
        let cfg = &self.cfg;
        let half = 0.5 * self.terrain.heightfield.extent() - cfg.trajectory.border_margin;
        let center = self.terrain.heightfield.origin() + Vec2::new(1.0, 1.0) * (0.5 * self.terrain.heightfield.extent());
        let seed = derive_seed(&[self.master_seed, self.instance, episode]);
        let mut tr = gen_training_trajectory(seed, half.max(0.0), &cfg.trajectory, cfg.dynamics.dt, cfg.max_steps);
        if center != Vec2::ZERO {
            tr = tr.translated(center);
        }
        let start = tr.pose(0.0);
        let mut rng = self.stream(episode, Stream::Spawn);
        let r = cfg.spawn_radius * rng.random::<f64>().sqrt();
        let a = rng.random_range(-PI..PI);
        let yaw = rng.random_range(-PI..PI);
        let p = self.terrain.heightfield.clamp(start.position + Vec2::from_angle(a) * r).value;
        let max_steps = cfg.max_steps;
        self.begin(episode, Arc::new(tr), Pose2::new(p, yaw), max_steps)
    }

    /// Starts episode `episode` tracking `trajectory` from its start pose for `max_steps`.
    pub fn reset_tracking(&mut self, episode: u64, trajectory: Arc<WaypointTrajectory>, max_steps: usize) -> Observation {
        let start = trajectory.pose(0.0);
        self.begin(episode, trajectory, start, max_steps.max(1))
    }

    fn begin(&mut self, index: u64, trajectory: Arc<WaypointTrajectory>, start: Pose2, max_steps: usize) -> Observation {
        let cfg = self.cfg.clone();
        let rz = &cfg.randomization;
        let dynamics = rz.draw_dynamics(&cfg.dynamics, &mut self.stream(index, Stream::Dynamics));
        let mut obs_rng = self.stream(index, Stream::ObsNoise);
        let drawn = NoiseModel::draw(&cfg.noise, &mut obs_rng);
        let noise = if rz.obs_noise { drawn } else { NoiseModel::NONE };
        let mut delay_rng = self.stream(index, Stream::Delay);
        let drawn = cfg.delays.draw(&mut delay_rng);
        let delays = if rz.delays { drawn } else { (0, 0) };

        let rover = RoverState::at(start);
        let target = trajectory.pose(0.0);
        let obs0 = make_observation(rover.pose().compose(&dynamics.base_frame_offset), target, &noise, &mut obs_rng);
        self.filter.reset();
        if let Some(log) = self.log.as_mut() {
            log.records.clear();
        }
        self.episode = Some(Episode {
            index,
            trajectory,
            max_steps,
            dynamics,
            noise,
            obs_rng,
            delay_rng,
            delays,
            act_line: DelayLine::new(delays.1, [0.0; ACT_DIM]),
            obs_line: DelayLine::new(delays.0, obs0),
            rover,
            step: 0,
            prev_applied: [0.0; ACT_DIM],
            done: false,
        });
        obs0
    }

    /// Advances one control step.
    pub fn step(&mut self, action: [f64; ACT_DIM]) -> Result<StepResult> {
        let ep = self
            .episode
            .as_mut()
            .ok_or_else(|| Error::usage("step called before reset"))?;
        if ep.done {
            return Err(Error::usage("step called after truncation without reset"));
        }
        if self.cfg.randomization.delays {
            ep.delays = self.cfg.delays.maybe_resample(ep.step, ep.delays, &mut ep.delay_rng);
            ep.obs_line.set_delay(ep.delays.0);
            ep.act_line.set_delay(ep.delays.1);
        }

        let (filtered, _) = self.filter.step(action);
        let (delayed, _) = ep.act_line.push(filtered);
        let (cmd, nonfinite) = map_action(delayed, &ep.dynamics);
        let applied = [cmd.v / ep.dynamics.max_lin_speed, cmd.omega / ep.dynamics.max_ang_speed];
        let moved = step_rover(&ep.rover, cmd, &ep.dynamics, &self.terrain.heightfield);
        ep.rover = moved.value;
        ep.step += 1;
        let t = ep.step as f64 * ep.dynamics.dt;
        let target = ep.trajectory.pose(t);
        let reward = compute_reward(ep.rover.pose(), target, applied, ep.prev_applied, &self.cfg.reward);
        ep.prev_applied = applied;
        let fresh = make_observation(
            ep.rover.pose().compose(&ep.dynamics.base_frame_offset),
            target,
            &ep.noise,
            &mut ep.obs_rng,
        );
        let (observation, _) = ep.obs_line.push(fresh);
        let truncated = ep.step >= ep.max_steps;
        ep.done = truncated;

        if let Some(log) = self.log.as_mut() {
            log.records.push(EnvStepRecord {
                t,
                rover: ep.rover.pose(),
                target,
                raw_action: action,
                applied_action: applied,
                observation,
                reward,
                terminated: false,
                truncated,
            });
        }
        Ok(StepResult {
            observation,
            reward,
            terminated: false,
            truncated,
            info: StepInfo {
                left_extent: moved.clamped,
                nonfinite_action: nonfinite || action.iter().any(|a| !a.is_finite()),
                obs_delay: ep.delays.0,
                act_delay: ep.delays.1,
            },
        })
    }

    pub fn episode_index(&self) -> Option<u64> {
        self.episode.as_ref().map(|e| e.index)
    }

    pub fn step_index(&self) -> usize {
        self.episode.as_ref().map_or(0, |e| e.step)
    }

    pub fn rover(&self) -> Option<RoverState> {
        self.episode.as_ref().map(|e| e.rover)
    }

    pub fn target(&self) -> Option<Pose2> {
        self.episode
            .as_ref()
            .map(|e| e.trajectory.pose(e.step as f64 * e.dynamics.dt))
    }

    pub fn trajectory(&self) -> Option<&Arc<WaypointTrajectory>> {
        self.episode.as_ref().map(|e| &e.trajectory)
    }

    /// Dynamics drawn for the current episode.
    pub fn dynamics(&self) -> Option<&DynamicsParams> {
        self.episode.as_ref().map(|e| &e.dynamics)
    }

    pub fn noise(&self) -> Option<NoiseModel> {
        self.episode.as_ref().map(|e| e.noise)
    }

    /// Current `(observation, action)` delays.
    pub fn delays(&self) -> Option<(usize, usize)> {
        self.episode.as_ref().map(|e| e.delays)
    }

    /// Forces the delays of the running episode (testing and diagnostics).
    pub fn set_delays(&mut self, obs: usize, act: usize) {
        if let Some(ep) = self.episode.as_mut() {
            ep.delays = (obs, act);
            ep.obs_line.set_delay(obs);
            ep.act_line.set_delay(act);
        }
    }
}
