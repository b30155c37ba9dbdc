use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rovertrack::env::{
    compute_reward, make_observation, NoiseModel, NoiseParams, Randomization, RewardWeights, TrajectoryKind,
    WaypointTrajectory,
};
use rovertrack::rng::{seeded, Stream};
use rovertrack::terrain::generate_terrain;
use rovertrack::{wrap_angle, EnvConfig, Error, Pose2, TerrainParams, Vec2, WaypointEnv};

fn flat_env(cfg: EnvConfig) -> WaypointEnv {
    let t = Arc::new(generate_terrain(&TerrainParams::flat(12.0, 65)).unwrap());
    WaypointEnv::new(Arc::new(cfg), t, 1, 0).unwrap()
}

fn quiet() -> EnvConfig {
    EnvConfig {
        randomization: Randomization::off(),
        ..EnvConfig::default()
    }
}

#[test]
fn step_noise_statistics() {
    let params = NoiseParams::default();
    let noise = NoiseModel {
        bias_pos: Vec2::ZERO,
        bias_yaw: 0.0,
        step_pos_std: params.step_pos_std,
        step_yaw_std: params.step_yaw_std,
    };
    let rover = Pose2::new(Vec2::new(0.2, -0.1), 0.3);
    let target = Pose2::new(Vec2::new(1.0, 0.5), 0.3);
    let clean = make_observation(rover, target, &NoiseModel::NONE, &mut seeded(0, Stream::ObsNoise));
    let mut rng = seeded(17, Stream::ObsNoise);
    let n = 100_000;
    let (mut sx, mut sxx, mut sy, mut syy) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..n {
        let o = make_observation(rover, target, &noise, &mut rng);
        let dx = o.rel_pos.x - clean.rel_pos.x;
        let de = wrap_angle(o.yaw_err() - clean.yaw_err());
        sx += dx;
        sxx += dx * dx;
        sy += de;
        syy += de * de;
        assert!((o.yaw_err_enc[0].hypot(o.yaw_err_enc[1]) - 1.0).abs() < 1e-9);
    }
    let nf = n as f64;
    for (s, ss, sigma) in [(sx, sxx, params.step_pos_std), (sy, syy, params.step_yaw_std)] {
        let mean = s / nf;
        let std = (ss / nf - mean * mean).sqrt();
        assert!(mean.abs() < 3.0 * sigma / nf.sqrt(), "mean {mean}");
        assert!((std / sigma - 1.0).abs() < 0.02, "std {std} vs {sigma}");
    }
    assert!((params.step_pos_std - 0.0025).abs() < 1e-15);
    assert!((params.step_yaw_std - 0.5f64.to_radians()).abs() < 1e-15);
}

/// The shaped reward written out directly from its definition.
fn reward_oracle(rover: Pose2, target: Pose2, a: [f64; 2], ap: [f64; 2], w: &RewardWeights) -> f64 {
    let dx = target.position.x - rover.position.x;
    let dy = target.position.y - rover.position.y;
    let d = (dx * dx + dy * dy).sqrt();
    let bearing = if d == 0.0 { 0.0 } else { dy.atan2(dx) - rover.yaw };
    let mut e = (target.yaw - rover.yaw) % (2.0 * PI);
    if e > PI {
        e -= 2.0 * PI;
    } else if e <= -PI {
        e += 2.0 * PI;
    }
    let da2 = (a[0] - ap[0]).powi(2) + (a[1] - ap[1]).powi(2);
    let gp = (-(d * d) / w.sigma_pos.powi(2)).exp();
    let gy = (-(e * e) / w.sigma_yaw.powi(2)).exp();
    let ga = (-da2 / w.sigma_act.powi(2)).exp();
    -w.w_dist * d + w.w_heading * bearing.cos() + w.w_pos * gp + w.w_yaw * gp * gy + w.w_still * gp * gy * ga
        - w.w_rate * da2
}

#[test]
fn reward_matches_formula_oracle() {
    let w = RewardWeights::default();
    let mut rng = seeded(5, Stream::Policy);
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    for _ in 0..1000 {
        let rover = Pose2::new(Vec2::new(u(-3.0, 3.0), u(-3.0, 3.0)), u(-PI, PI));
        let target = Pose2::new(Vec2::new(u(-3.0, 3.0), u(-3.0, 3.0)), u(-PI, PI));
        let a = [u(-1.0, 1.0), u(-1.0, 1.0)];
        let ap = [u(-1.0, 1.0), u(-1.0, 1.0)];
        let r = compute_reward(rover, target, a, ap, &w);
        let oracle = reward_oracle(rover, target, a, ap, &w);
        assert!((r.total - oracle).abs() < 1e-12, "{} vs {oracle}", r.total);
        assert!((r.terms().iter().sum::<f64>() - r.total).abs() < 1e-12);
    }
}

#[test]
fn episodes_truncate_at_1500_steps_and_refuse_further_steps() {
    let mut env = flat_env(EnvConfig::default());
    env.reset(0);
    for k in 1..=1500 {
        let r = env.step([0.1, 0.0]).unwrap();
        assert_eq!(r.truncated, k == 1500);
        assert!(!r.terminated);
    }
    assert!(matches!(env.step([0.0, 0.0]), Err(Error::Usage(_))));
    env.reset(1);
    assert!(env.step([0.0, 0.0]).is_ok());
}

#[test]
fn stepping_before_reset_is_a_usage_error() {
    let mut env = flat_env(EnvConfig::default());
    assert!(matches!(env.step([0.0, 0.0]), Err(Error::Usage(_))));
}

#[test]
fn zero_delays_observe_the_state_this_action_produced() {
    let mut env = flat_env(quiet());
    env.reset(0);
    for k in 0..50 {
        let r = env.step([0.6, if k % 2 == 0 { 0.5 } else { -0.2 }]).unwrap();
        let expected = make_observation(
            env.rover().unwrap().pose(),
            env.target().unwrap(),
            &NoiseModel::NONE,
            &mut seeded(0, Stream::ObsNoise),
        );
        assert_eq!(r.observation, expected);
    }
}

#[test]
fn action_delay_of_three_shifts_the_effect_by_three_steps() {
    let mut env = flat_env(quiet());
    env.reset_tracking(0, Arc::new(WaypointTrajectory::stationary(Pose2::default())), 100);
    env.set_delays(0, 3);
    let start = env.rover().unwrap().position;
    let t_issue = 5;
    for k in 0..20 {
        let a = if k == t_issue { [1.0, 0.0] } else { [0.0, 0.0] };
        env.step(a).unwrap();
        let moved = env.rover().unwrap().position != start;
        // the step with index k applies the action issued at k - 3
        assert_eq!(moved, k >= t_issue + 3, "step {k}");
    }
}

#[test]
fn noise_bias_is_fixed_per_episode_and_differs_between_episodes() {
    let mut env = flat_env(EnvConfig::default());
    env.reset(0);
    let b0 = env.noise().unwrap();
    for _ in 0..100 {
        env.step([0.2, 0.1]).unwrap();
        assert_eq!(env.noise().unwrap(), b0);
    }
    env.reset(1);
    let b1 = env.noise().unwrap();
    assert_ne!(b0.bias_pos, b1.bias_pos);
    assert_ne!(b0.bias_yaw, b1.bias_yaw);
}

#[test]
fn observations_stay_encoded_on_the_unit_circle() {
    let mut env = flat_env(EnvConfig::default());
    env.reset(3);
    let mut rng = seeded(2, Stream::Policy);
    for _ in 0..1500 {
        let r = env.step([rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).unwrap();
        let [s, c] = r.observation.yaw_err_enc;
        assert!((s * s + c * c - 1.0).abs() < 1e-9);
        assert!(r.reward.total.is_finite());
    }
}

#[test]
fn eval_paths_run_at_constant_speed() {
    for kind in [
        TrajectoryKind::Capsule,
        TrajectoryKind::Rectangle,
        TrajectoryKind::Circle,
        TrajectoryKind::Lissajous,
        TrajectoryKind::Lemniscate,
    ] {
        for speed in [0.05, 0.15, 0.25] {
            let tr = WaypointTrajectory::eval(kind, speed).unwrap();
            let lap = tr.lap_time().unwrap();
            assert!((lap - tr.loop_length().unwrap() / speed).abs() < 1e-3 * lap);
            let dt = 0.04;
            let mut t = 0.0;
            while t + dt < lap {
                let d = (tr.pose(t + dt).position - tr.pose(t).position).norm() / dt;
                // chord speed falls slightly below arc speed on the tightest curves
                assert!((d / speed - 1.0).abs() < 2e-3, "{kind:?} at {t}: {d}");
                t += dt;
            }
        }
    }
}
