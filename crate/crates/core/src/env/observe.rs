//! Observation construction and the sensing noise model.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{wrap_angle, Pose2, Vec2};
use crate::OBS_DIM;

/// What the policy sees: target position in the rover frame and the encoded yaw error.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Observation {
    pub rel_pos: Vec2,
    /// `(sin e, cos e)` of the relative yaw error `e = target yaw − rover yaw`.
    pub yaw_err_enc: [f64; 2],
}

impl Observation {
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        [
            self.rel_pos.x,
            self.rel_pos.y,
            self.yaw_err_enc[0],
            self.yaw_err_enc[1],
        ]
    }

    pub fn from_array(a: [f64; OBS_DIM]) -> Self {
        Self {
            rel_pos: Vec2::new(a[0], a[1]),
            yaw_err_enc: [a[2], a[3]],
        }
    }

    /// Recovers the yaw error angle from its encoding.
    pub fn yaw_err(&self) -> f64 {
        self.yaw_err_enc[0].atan2(self.yaw_err_enc[1])
    }
}

/// Standard deviations of the sensing noise. Position values are per axis (m), yaw
/// values in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseParams {
    pub bias_pos_std: f64,
    pub bias_yaw_std: f64,
    pub step_pos_std: f64,
    pub step_yaw_std: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            bias_pos_std: 0.01,
            bias_yaw_std: 2.5f64.to_radians(),
            step_pos_std: 0.0025,
            step_yaw_std: 0.5f64.to_radians(),
        }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.bias_pos_std,
            self.bias_yaw_std,
            self.step_pos_std,
            self.step_yaw_std,
        ];
        if all.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::config("noise: standard deviations must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Per-episode noise state: a persistent bias plus the per-step jitter spread.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseModel {
    pub bias_pos: Vec2,
    pub bias_yaw: f64,
    pub step_pos_std: f64,
    pub step_yaw_std: f64,
}

impl NoiseModel {
    pub const NONE: NoiseModel = NoiseModel {
        bias_pos: Vec2::ZERO,
        bias_yaw: 0.0,
        step_pos_std: 0.0,
        step_yaw_std: 0.0,
    };

    /// Draws the episode bias.
    pub fn draw(params: &NoiseParams, rng: &mut impl Rng) -> Self {
        let mut g = |s: f64| s * rng.sample::<f64, _>(rand_distr::StandardNormal);
        Self {
            bias_pos: Vec2::new(g(params.bias_pos_std), g(params.bias_pos_std)),
            bias_yaw: g(params.bias_yaw_std),
            step_pos_std: params.step_pos_std,
            step_yaw_std: params.step_yaw_std,
        }
    }
}

fn jitter(std: f64, rng: &mut impl Rng) -> f64 {
    // always consume the draw so the stream layout does not depend on the spread
    let z: f64 = Normal::new(0.0, 1.0).unwrap().sample(rng);
    std * z
}

/// Builds the observation of `target` from the (offset) rover pose. Noise is added to
/// the rover-frame position and to the yaw error angle before it is encoded.
pub fn make_observation(
    rover: Pose2,
    target: Pose2,
    noise: &NoiseModel,
    rng: &mut impl Rng,
) -> Observation {
    let mut rel = rover.to_local(target.position);
    rel.x += noise.bias_pos.x + jitter(noise.step_pos_std, rng);
    rel.y += noise.bias_pos.y + jitter(noise.step_pos_std, rng);
    let e = wrap_angle(target.yaw - rover.yaw) + noise.bias_yaw + jitter(noise.step_yaw_std, rng);
    let (s, c) = e.sin_cos();
    Observation {
        rel_pos: rel,
        yaw_err_enc: [s, c],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, Stream};
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn noiseless_examples() {
        let mut rng = seeded(0, Stream::ObsNoise);
        let o = make_observation(
            Pose2::default(),
            Pose2::new(Vec2::new(1.0, 0.0), 0.0),
            &NoiseModel::NONE,
            &mut rng,
        );
        assert_eq!(o.rel_pos, Vec2::new(1.0, 0.0));
        assert_eq!(o.yaw_err_enc, [0.0, 1.0]);

        let o = make_observation(
            Pose2::new(Vec2::ZERO, 0.3),
            Pose2::new(Vec2::ZERO, 0.3 + FRAC_PI_2),
            &NoiseModel::NONE,
            &mut rng,
        );
        assert!((o.yaw_err_enc[0] - 1.0).abs() < 1e-12 && o.yaw_err_enc[1].abs() < 1e-12);
    }

    #[test]
    fn target_expressed_in_rover_frame() {
        let mut rng = seeded(0, Stream::ObsNoise);
        let rover = Pose2::new(Vec2::new(1.0, 1.0), FRAC_PI_2);
        let o = make_observation(rover, Pose2::new(Vec2::new(1.0, 2.0), 0.0), &NoiseModel::NONE, &mut rng);
        assert!((o.rel_pos - Vec2::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn encoding_stays_on_unit_circle_under_noise() {
        let mut rng = seeded(4, Stream::ObsNoise);
        let noise = NoiseModel::draw(&NoiseParams::default(), &mut rng);
        for i in 0..1000 {
            let o = make_observation(
                Pose2::new(Vec2::ZERO, i as f64 * 0.01),
                Pose2::new(Vec2::new(1.0, 2.0), -(i as f64) * 0.02),
                &noise,
                &mut rng,
            );
            let [s, c] = o.yaw_err_enc;
            assert!((s * s + c * c - 1.0).abs() < 1e-9);
        }
    }
}
