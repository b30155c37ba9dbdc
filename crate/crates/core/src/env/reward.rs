//! Shaped tracking reward.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{wrap_angle, Pose2};
use crate::ACT_DIM;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub w_dist: f64,
    pub w_heading: f64,
    pub w_pos: f64,
    pub w_yaw: f64,
    pub w_still: f64,
    pub w_rate: f64,
    /// Position alignment width (m).
    pub sigma_pos: f64,
    /// Yaw alignment width (rad).
    pub sigma_yaw: f64,
    /// Action-change width for the stillness term.
    pub sigma_act: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w_dist: 0.1,
            w_heading: 0.2,
            w_pos: 1.0,
            w_yaw: 0.5,
            w_still: 0.5,
            w_rate: 0.05,
            sigma_pos: 0.2,
            sigma_yaw: 10f64.to_radians(),
            sigma_act: 0.1,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [
            self.w_dist,
            self.w_heading,
            self.w_pos,
            self.w_yaw,
            self.w_still,
            self.w_rate,
        ];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::config("reward: weights must be finite and >= 0"));
        }
        if !(self.sigma_pos > 0.0 && self.sigma_yaw > 0.0 && self.sigma_act > 0.0) {
            return Err(Error::config("reward: widths must be > 0"));
        }
        Ok(())
    }

    /// Per-step reward when the rover sits on the target with a steady action.
    pub fn maximum(&self) -> f64 {
        self.w_heading + self.w_pos + self.w_yaw + self.w_still
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardTerms {
    pub dist_penalty: f64,
    pub heading_reward: f64,
    pub pos_align_reward: f64,
    pub yaw_align_reward: f64,
    pub stillness_reward: f64,
    pub action_rate_penalty: f64,
    pub total: f64,
}

impl RewardTerms {
    pub const NAMES: [&'static str; 6] = [
        "dist_penalty",
        "heading_reward",
        "pos_align_reward",
        "yaw_align_reward",
        "stillness_reward",
        "action_rate_penalty",
    ];

    pub fn terms(&self) -> [f64; 6] {
        [
            self.dist_penalty,
            self.heading_reward,
            self.pos_align_reward,
            self.yaw_align_reward,
            self.stillness_reward,
            self.action_rate_penalty,
        ]
    }
}

/// Reward for the true rover pose against the target. `action` and `prev_action` are
/// the applied (normalized) actions of this and the previous step.
pub fn compute_reward(
    rover: Pose2,
    target: Pose2,
    action: [f64; ACT_DIM],
    prev_action: [f64; ACT_DIM],
    w: &RewardWeights,
) -> RewardTerms {
    let dp = target.position - rover.position;
    let d2 = dp.norm_sq();
    let d = d2.sqrt();
    // cosine of the bearing error, taken as 1 when the rover sits on the target
    let cos_bearing = if d > 0.0 {
        let (s, c) = rover.yaw.sin_cos();
        (dp.x * c + dp.y * s) / d
    } else {
        1.0
    };
    let e = wrap_angle(target.yaw - rover.yaw);
    let da2: f64 = action
        .iter()
        .zip(prev_action)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();

    let g_pos = (-d2 / (w.sigma_pos * w.sigma_pos)).exp();
    let g_yaw = (-e * e / (w.sigma_yaw * w.sigma_yaw)).exp();
    let g_act = (-da2 / (w.sigma_act * w.sigma_act)).exp();

    let mut r = RewardTerms {
        dist_penalty: -w.w_dist * d,
        heading_reward: w.w_heading * cos_bearing,
        pos_align_reward: w.w_pos * g_pos,
        yaw_align_reward: w.w_yaw * g_pos * g_yaw,
        stillness_reward: w.w_still * g_pos * g_yaw * g_act,
        action_rate_penalty: -w.w_rate * da2,
        total: 0.0,
    };
    r.total = r.terms().iter().sum();
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;

    #[test]
    fn optimum_closed_form() {
        let w = RewardWeights::default();
        let p = Pose2::new(Vec2::new(0.3, -1.0), 0.7);
        let r = compute_reward(p, p, [0.2, 0.1], [0.2, 0.1], &w);
        assert!((r.total - w.maximum()).abs() < 1e-15);
        assert_eq!(r.dist_penalty, 0.0);
        assert_eq!(r.action_rate_penalty, 0.0);
    }

    #[test]
    fn decreasing_far_from_target() {
        let w = RewardWeights::default();
        let target = Pose2::default();
        let mut prev = f64::INFINITY;
        for k in 0..50 {
            let rover = Pose2::new(Vec2::new(1.0 + 0.5 * k as f64, 0.0), std::f64::consts::PI);
            let r = compute_reward(rover, target, [0.0; 2], [0.0; 2], &w).total;
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn total_is_sum_of_terms() {
        let w = RewardWeights::default();
        let r = compute_reward(
            Pose2::new(Vec2::new(0.1, 0.2), 1.0),
            Pose2::new(Vec2::new(-0.3, 0.4), -2.0),
            [0.5, -0.5],
            [0.1, 0.9],
            &w,
        );
        assert_eq!(r.total, r.terms().iter().sum::<f64>());
        assert!(r.terms().iter().all(|t| t.is_finite()));
    }
}
