use std::f64::consts::PI;
use std::sync::Arc;

use rovertrack::config::EvalGrid;
use rovertrack::env::{Randomization, TrajectoryKind, CIRCLE_RADIUS};
use rovertrack::learn::eval::{evaluate, EvalSetup, ProportionalController, ZeroController};
use rovertrack::learn::{read_curve_csv, train, write_curve_csv, CurveRow, TrainOptions};
use rovertrack::terrain::generate_terrain;
use rovertrack::{Error, FilterSpec, PolicyArtifact, PpoConfig, RegimeConfig, TerrainParams};

fn tiny() -> (PpoConfig, RegimeConfig) {
    let ppo = PpoConfig {
        rollout_len: 16,
        minibatch: 32,
        epochs: 2,
        hidden: vec![16, 16],
        total_steps: 4 * 16 * 3,
        seed: 3,
        ..PpoConfig::default()
    };
    let regime = RegimeConfig {
        n_envs: 4,
        env: rovertrack::EnvConfig {
            max_steps: 40,
            ..Default::default()
        },
        ..RegimeConfig::default()
    };
    (ppo, regime)
}

#[test]
fn tiny_training_is_deterministic_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let (ppo, regime) = tiny();
    let opts = TrainOptions {
        checkpoint: Some(dir.path().join("p.rtp")),
        checkpoint_every: 1,
        curve_csv: Some(dir.path().join("curve.csv")),
    };
    let a = train(&ppo, &regime, &opts).unwrap();
    let b = train(&ppo, &regime, &TrainOptions::default()).unwrap();
    assert_eq!(a.updates.len() as u64, ppo.n_updates(regime.n_envs));
    assert_eq!(a.policy.params, b.policy.params);
    assert_eq!(a.curve, b.curve);
    for u in &a.updates {
        assert!(u.loss.total.is_finite() && u.grad_norm.is_finite());
        assert!(u.lr > 0.0 && u.lr <= ppo.lr_start);
    }
    // episodes of 40 steps finish during the second and third rollouts
    assert!(!a.curve.is_empty());

    let saved = PolicyArtifact::read(dir.path().join("p.rtp")).unwrap();
    assert_eq!(saved, a.artifact);
    assert_eq!(saved.to_policy().unwrap().params, a.policy.params);
    assert_eq!(saved.meta.global_step, 4 * 16 * 3);
    assert_eq!(read_curve_csv(&dir.path().join("curve.csv")).unwrap(), a.curve);

    let c = train(&PpoConfig { seed: 4, ..ppo }, &regime, &TrainOptions::default()).unwrap();
    assert_ne!(c.policy.params, a.policy.params);
}

#[test]
fn invalid_trainer_settings_are_config_errors() {
    let (ppo, regime) = tiny();
    let bad = PpoConfig { minibatch: 48, ..ppo.clone() };
    assert!(matches!(train(&bad, &regime, &TrainOptions::default()), Err(Error::Config(_))));
    let bad = PpoConfig { gamma: 1.5, ..ppo };
    assert!(matches!(train(&bad, &regime, &TrainOptions::default()), Err(Error::Config(_))));
}

#[test]
fn corrupted_artifacts_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (ppo, regime) = tiny();
    let out = train(&PpoConfig { total_steps: 64, ..ppo }, &regime, &TrainOptions::default()).unwrap();
    let path = dir.path().join("a.rtp");
    out.artifact.write(&path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    let k = bytes.len() / 2;
    bytes[k] ^= 0x10;
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(PolicyArtifact::read(&path), Err(Error::Format { .. })));
    std::fs::write(&path, &bytes[..10]).unwrap();
    assert!(matches!(PolicyArtifact::read(&path), Err(Error::Format { .. })));

    let mut art = out.artifact.clone();
    art.tensors[0].shape[0] += 1;
    assert!(art.to_policy().is_err());
}

#[test]
fn curve_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let rows = vec![
        CurveRow { global_step: 96_000, mean_return: -118.75, std_return: 40.5 },
        CurveRow { global_step: 192_000, mean_return: 0.1 + 0.2, std_return: 1e-17 },
    ];
    let p = dir.path().join("c.csv");
    write_curve_csv(&p, &rows).unwrap();
    assert_eq!(read_curve_csv(&p).unwrap(), rows);
    assert!(std::fs::read_to_string(&p).unwrap().starts_with("step,mean_return,std_return\n"));
}

#[test]
fn standing_still_on_the_circle_gives_the_mean_chord_length() {
    // a fixed point on a circle of radius R is on average 4R/π from a point moving
    // uniformly around it
    let mut env = RegimeConfig::default().env;
    env.randomization = Randomization::off();
    env.dynamics.downhill_drift_gain = 0.0;
    let terrains = vec![Arc::new(generate_terrain(&TerrainParams::flat(12.0, 33)).unwrap())];
    let setup = EvalSetup::new(TrajectoryKind::Circle, 0.15, FilterSpec::None);
    let out = evaluate(&env, &terrains, &setup, |_| ZeroController).unwrap();
    let expected = 4.0 * CIRCLE_RADIUS / PI;
    assert!((out.summary.ate_pos / expected - 1.0).abs() < 5e-3, "{} vs {expected}", out.summary.ate_pos);
    assert_eq!(out.summary.jerk_abs, 0.0);
}

fn capsule_tracker(env: &rovertrack::EnvConfig, episodes: usize) -> rovertrack::learn::EvalOutcome {
    let grid = EvalGrid::default();
    let terrains = grid.heldout_terrains(&RegimeConfig::default().terrain).unwrap();
    let mut setup = EvalSetup::new(TrajectoryKind::Capsule, 0.05, FilterSpec::None);
    setup.episodes = episodes;
    let max_lin = env.dynamics.max_lin_speed;
    evaluate(env, &terrains, &setup, |_| ProportionalController::new(0.05, max_lin)).unwrap()
}

#[test]
fn undisturbed_proportional_tracker_is_accurate_at_low_speed() {
    let mut env = RegimeConfig::default().env;
    env.randomization = Randomization::off();
    env.dynamics.downhill_drift_gain = 0.0;
    let out = capsule_tracker(&env, 3);
    assert!(out.summary.ate_pos < 0.05, "{} m", out.summary.ate_pos);
    assert!(out.summary.ate_yaw < 2f64.to_radians(), "{} deg", out.summary.ate_yaw.to_degrees());
    let lap = rovertrack::env::WaypointTrajectory::eval(TrajectoryKind::Capsule, 0.05).unwrap().lap_time().unwrap();
    for (log, kept) in out.logs.iter().zip(&out.kept_from) {
        // the first lap is discarded
        assert!((*kept as f64 * 0.04 - lap).abs() < 0.1 * lap, "kept from {kept}");
        assert!(log.len() > *kept);
    }
}

#[test]
fn slope_drift_costs_the_tracker_heading_accuracy() {
    // holding the path against downhill drift needs a crab angle, which the yaw metric counts
    let env = RegimeConfig::default().env;
    let drifting = capsule_tracker(&env, 5).summary;
    let still = capsule_tracker(
        &rovertrack::EnvConfig {
            dynamics: rovertrack::DynamicsParams {
                downhill_drift_gain: 0.0,
                ..env.dynamics.clone()
            },
            ..env.clone()
        },
        5,
    )
    .summary;
    assert!(drifting.ate_pos < 0.10, "{} m", drifting.ate_pos);
    assert!(drifting.ate_yaw > 2.0 * still.ate_yaw);
}
