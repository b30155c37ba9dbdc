//! Slip-augmented skid-steer rover model.
//!
//! The rover is a planar unicycle: commanded body velocities are scaled by
//! per-episode slip coefficients, and a drift proportional to the tangential part of
//! gravity on the local slope pushes it downhill. Integration is explicit midpoint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{wrap_angle, Pose2, Vec2};
use crate::terrain::{HeightField, Sampled};

pub const DEFAULT_MAX_LIN_SPEED: f64 = 0.40;
pub const DEFAULT_MAX_ANG_SPEED: f64 = std::f64::consts::PI / 3.0;
pub const DEFAULT_DT: f64 = 0.04;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsParams {
    /// Track width between left and right wheels (m).
    pub wheelbase: f64,
    pub max_lin_speed: f64,
    pub max_ang_speed: f64,
    pub dt: f64,
    /// World-frame gravity (m/s²), z up.
    pub gravity: [f64; 3],
    pub slip_lin: f64,
    pub slip_ang: f64,
    /// Maps tangential gravity (m/s²) to drift velocity (m/s); unit is seconds.
    pub downhill_drift_gain: f64,
    /// Constant body-frame offset between the true pose and the sensed pose.
    pub base_frame_offset: Pose2,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self {
            wheelbase: 0.295,
            max_lin_speed: DEFAULT_MAX_LIN_SPEED,
            max_ang_speed: DEFAULT_MAX_ANG_SPEED,
            dt: DEFAULT_DT,
            gravity: [0.0, 0.0, -9.81],
            slip_lin: 0.0,
            slip_ang: 0.0,
            downhill_drift_gain: 0.05,
            base_frame_offset: Pose2::default(),
        }
    }
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_lin_speed > 0.0 && self.max_ang_speed > 0.0) {
            return Err(Error::config("dynamics: max speeds must be > 0"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::config("dynamics: dt must be > 0"));
        }
        for (name, s) in [("slip_lin", self.slip_lin), ("slip_ang", self.slip_ang)] {
            if !(0.0..1.0).contains(&s) {
                return Err(Error::config(format!("dynamics: {name} must be in [0, 1)")));
            }
        }
        if self.gravity.iter().any(|g| !g.is_finite()) || self.downhill_drift_gain < 0.0 {
            return Err(Error::config("dynamics: invalid gravity or drift gain"));
        }
        Ok(())
    }

    /// Left/right track speeds (m/s) that realise a body twist on a skid-steer base.
    pub fn track_speeds(&self, cmd: Command) -> (f64, f64) {
        let half = 0.5 * self.wheelbase * cmd.omega;
        (cmd.v - half, cmd.v + half)
    }
}

/// Body-frame velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Command {
    pub v: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RoverState {
    pub position: Vec2,
    /// Heading in `(-π, π]`.
    pub yaw: f64,
    /// Last applied command.
    pub cmd: Command,
}

impl RoverState {
    pub fn at(pose: Pose2) -> Self {
        Self {
            position: pose.position,
            yaw: wrap_angle(pose.yaw),
            cmd: Command::default(),
        }
    }

    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.position, self.yaw)
    }
}

/// Maps a normalized action to velocities. Components are clamped to `[-1, 1]`;
/// non-finite components become 0 and set the returned flag.
pub fn map_action(a: [f64; 2], p: &DynamicsParams) -> (Command, bool) {
    let mut flagged = false;
    let mut clean = |x: f64| {
        if x.is_finite() {
            x.clamp(-1.0, 1.0)
        } else {
            flagged = true;
            0.0
        }
    };
    let (a0, a1) = (clean(a[0]), clean(a[1]));
    (
        Command {
            v: a0 * p.max_lin_speed,
            omega: a1 * p.max_ang_speed,
        },
        flagged,
    )
}

/// Downhill drift velocity at `p`: gain times the horizontal part of gravity's
/// component tangent to the local surface.
pub fn drift_velocity(p: Vec2, params: &DynamicsParams, hf: &HeightField) -> Vec2 {
    if params.downhill_drift_gain == 0.0 {
        return Vec2::ZERO;
    }
    let grad = hf.sample_slope(p.x, p.y).value;
    let inv = 1.0 / (1.0 + grad.norm_sq()).sqrt();
    let n = [-grad.x * inv, -grad.y * inv, inv];
    let g = params.gravity;
    let gn = g[0] * n[0] + g[1] * n[1] + g[2] * n[2];
    Vec2::new(g[0] - gn * n[0], g[1] - gn * n[1]) * params.downhill_drift_gain
}

/// Advances the rover by one `dt`. The returned flag is set when the rover would have
/// left the terrain and was clamped onto its border.
pub fn step_rover(
    s: &RoverState,
    cmd: Command,
    p: &DynamicsParams,
    hf: &HeightField,
) -> Sampled<RoverState> {
    let dt = p.dt;
    let v = (1.0 - p.slip_lin) * cmd.v;
    let omega = (1.0 - p.slip_ang) * cmd.omega;

    let drift0 = drift_velocity(s.position, p, hf);
    let yaw_mid = s.yaw + 0.5 * omega * dt;
    let heading_mid = Vec2::from_angle(yaw_mid);
    let mid = s.position + (Vec2::from_angle(s.yaw) * v + drift0) * (0.5 * dt);
    let drift_mid = if p.downhill_drift_gain == 0.0 {
        Vec2::ZERO
    } else {
        drift_velocity(hf.clamp(mid).value, p, hf)
    };
    let next = s.position + (heading_mid * v + drift_mid) * dt;
    let clamped = hf.clamp(next);
    Sampled {
        value: RoverState {
            position: clamped.value,
            yaw: wrap_angle(s.yaw + omega * dt),
            cmd,
        },
        clamped: clamped.clamped,
    }
}
