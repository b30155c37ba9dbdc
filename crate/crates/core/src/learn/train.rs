use std::io::Write as _;
use std::path::{Path, PathBuf};

use super::artifact::{ArtifactMeta, PolicyArtifact};
use super::eval::mean_std;
use super::mlp::MlpCache;
use super::policy::{sample_pre_squash, squashed_log_prob, Policy, PolicyCache};
use super::ppo::{clip_global_norm, compute_gae, learning_rate, loss_and_grad, minibatches, normalize, Adam, Batch, LossCoefs, LossStats, TransitionEnd};
use super::PpoConfig;
use crate::error::{Error, Result};
use crate::rng::{seeded, stream, Stream};
use crate::vecsim::{RegimeConfig, VecEnv};
use crate::{ACT_DIM, OBS_DIM};

/// One learning-curve point: episodes that finished during a rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub global_step: u64,
    pub mean_return: f64,
    pub std_return: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub global_step: u64,
    pub lr: f64,
    /// Loss terms averaged over all minibatches of the update.
    pub loss: LossStats,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Written after every `checkpoint_every` updates and at the end.
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_every: u64,
    /// Learning curve CSV, rewritten after each update.
    pub curve_csv: Option<PathBuf>,
}

pub struct TrainOutcome {
    pub policy: Policy<f32>,
    pub artifact: PolicyArtifact,
    pub curve: Vec<CurveRow>,
    pub updates: Vec<UpdateStats>,
}

/// Running mean and variance (parallel-merge form).
#[derive(Debug, Clone, Copy)]
struct RunningStats {
    mean: f64,
    var: f64,
    count: f64,
}

impl RunningStats {
    fn new() -> Self {
        Self {
            mean: 0.0,
            var: 1.0,
            count: 1e-4,
        }
    }

    fn update(&mut self, xs: &[f64]) {
        let (m, s) = mean_std(xs);
        let n = xs.len() as f64;
        let delta = m - self.mean;
        let tot = self.count + n;
        self.mean += delta * n / tot;
        let m2 = self.var * self.count + s * s * n + delta * delta * self.count * n / tot;
        self.var = m2 / tot;
        self.count = tot;
    }
}

struct Rollout {
    obs: Vec<f32>,
    u: Vec<f64>,
    logp: Vec<f64>,
    values: Vec<f64>,
    rewards: Vec<f64>,
    ends: Vec<TransitionEnd>,
}

fn to_f32(xs: &[f64]) -> Vec<f32> {
    xs.iter().map(|&v| v as f32).collect()
}

/// Trains a policy. Deterministic for a given `(cfg.seed, regime)` regardless of the
/// number of simulation workers.
pub fn train(cfg: &PpoConfig, regime: &RegimeConfig, opts: &TrainOptions) -> Result<TrainOutcome> {
    cfg.validate(regime.n_envs)?;
    let mut vec = VecEnv::new(regime.clone())?;
    let n = vec.n_envs();
    let t_len = cfg.rollout_len;
    let buf_len = cfg.buffer_len(n);
    let n_updates = cfg.n_updates(n);
    let coefs = LossCoefs {
        clip: cfg.clip,
        entropy: cfg.entropy_coef,
        value: cfg.value_coef,
    };

    let mut policy = Policy::<f32>::new(&cfg.hidden, cfg.init_log_std, &mut seeded(cfg.seed, Stream::Init));
    let mut adam = Adam::<f32>::new(policy.params.len(), cfg.adam_eps);
    let mut act_rng = seeded(cfg.seed, Stream::Policy);
    let mut cache = PolicyCache::default();
    let mut vcache = MlpCache::default();
    let mut grad = vec![0.0f32; policy.params.len()];

    let mut ret_stats = RunningStats::new();
    let mut running_ret = vec![0.0; n];
    let mut obs = vec.reset();
    let mut global_step = 0u64;
    let mut curve = Vec::new();
    let mut updates = Vec::new();

    let meta = |global_step| ArtifactMeta {
        ppo: cfg.clone(),
        regime: regime.clone(),
        seed: cfg.seed,
        global_step,
    };
    let save = |p: &Policy<f32>, step: u64| -> Result<()> {
        if let Some(path) = &opts.checkpoint {
            PolicyArtifact::from_policy(p, meta(step)).write(path)?;
        }
        Ok(())
    };

    for update in 0..n_updates {
        let mut ro = Rollout {
            obs: Vec::with_capacity(buf_len * OBS_DIM),
            u: Vec::with_capacity(buf_len * ACT_DIM),
            logp: Vec::with_capacity(buf_len),
            values: Vec::with_capacity(buf_len),
            rewards: Vec::with_capacity(buf_len),
            ends: Vec::with_capacity(buf_len),
        };
        let mut finished = Vec::new();
        let log_std = policy.log_std();

        for _ in 0..t_len {
            let x = to_f32(&obs);
            policy.forward(&x, n, &mut cache);
            let means = cache.actor.output();
            let mut actions = vec![0.0; n * ACT_DIM];
            for i in 0..n {
                let mu: [f64; ACT_DIM] = std::array::from_fn(|j| means[i * ACT_DIM + j] as f64);
                let u = sample_pre_squash(&mu, &log_std, &mut act_rng);
                ro.logp.push(squashed_log_prob(&u, &mu, &log_std));
                ro.u.extend_from_slice(&u);
                for j in 0..ACT_DIM {
                    actions[i * ACT_DIM + j] = u[j].tanh();
                }
            }
            ro.values.extend(cache.critic.output().iter().map(|&v| v as f64));
            ro.obs.extend_from_slice(&x);

            let step = vec.step(&actions)?;
            global_step += n as u64;

            let mut rewards = step.rewards.clone();
            if cfg.reward_scaling {
                for (i, r) in rewards.iter().enumerate() {
                    running_ret[i] = running_ret[i] * cfg.gamma + r;
                }
                ret_stats.update(&running_ret);
                let scale = 1.0 / (ret_stats.var + 1e-8).sqrt();
                rewards.iter_mut().for_each(|r| *r *= scale);
            }

            // bootstrap values for instances cut by the time limit
            let cut: Vec<usize> = (0..n).filter(|&i| step.infos[i].final_observation.is_some()).collect();
            let mut boot = vec![0.0; n];
            if !cut.is_empty() {
                let fo: Vec<f32> = cut
                    .iter()
                    .flat_map(|&i| step.infos[i].final_observation.unwrap().map(|v| v as f32))
                    .collect();
                let v = policy.values(&fo, cut.len(), &mut vcache);
                for (k, &i) in cut.iter().enumerate() {
                    boot[i] = v[k];
                }
            }
            for i in 0..n {
                let info = &step.infos[i];
                let end = if step.terminated[i] {
                    TransitionEnd::Terminated
                } else if info.reset {
                    TransitionEnd::Truncated { bootstrap: boot[i] }
                } else {
                    TransitionEnd::Continue
                };
                if info.reset {
                    running_ret[i] = 0.0;
                }
                if let Some(r) = info.episode_return {
                    finished.push(r);
                }
                ro.ends.push(end);
            }
            ro.rewards.extend_from_slice(&rewards);
            obs = step.observations;
        }

        // advantages per instance, buffer is time-major (index t·n + i)
        let last = policy.values(&to_f32(&obs), n, &mut vcache);
        let mut adv = vec![0.0; buf_len];
        let mut ret = vec![0.0; buf_len];
        for i in 0..n {
            let col = |xs: &[f64]| (0..t_len).map(|t| xs[t * n + i]).collect::<Vec<_>>();
            let ends: Vec<TransitionEnd> = (0..t_len).map(|t| ro.ends[t * n + i]).collect();
            let (a, r) = compute_gae(&col(&ro.rewards), &col(&ro.values), &ends, last[i], cfg.gamma, cfg.gae_lambda)?;
            for t in 0..t_len {
                adv[t * n + i] = a[t];
                ret[t * n + i] = r[t];
            }
        }
        if cfg.normalize_advantages {
            normalize(&mut adv);
        }

        if !finished.is_empty() {
            let (m, s) = mean_std(&finished);
            curve.push(CurveRow {
                global_step,
                mean_return: m,
                std_return: s,
            });
        }

        let frac = (update as f64) / (n_updates as f64);
        let lr = learning_rate(cfg.lr_start, frac);
        let last_good = policy.params.clone();
        let mut shuffle = stream(cfg.seed, update, 0, Stream::Shuffle);
        let mut acc = LossStats::default();
        let mut grad_norm = 0.0;
        let mut n_mb = 0usize;

        let mut mb_obs = Vec::with_capacity(cfg.minibatch * OBS_DIM);
        let mut mb_u = Vec::with_capacity(cfg.minibatch * ACT_DIM);
        let mut mb_lp = Vec::with_capacity(cfg.minibatch);
        let mut mb_adv = Vec::with_capacity(cfg.minibatch);
        let mut mb_ret = Vec::with_capacity(cfg.minibatch);
        for _ in 0..cfg.epochs {
            for idx in minibatches(buf_len, cfg.minibatch, &mut shuffle) {
                mb_obs.clear();
                mb_u.clear();
                mb_lp.clear();
                mb_adv.clear();
                mb_ret.clear();
                for &k in &idx {
                    mb_obs.extend_from_slice(&ro.obs[k * OBS_DIM..(k + 1) * OBS_DIM]);
                    mb_u.extend_from_slice(&ro.u[k * ACT_DIM..(k + 1) * ACT_DIM]);
                    mb_lp.push(ro.logp[k]);
                    mb_adv.push(adv[k]);
                    mb_ret.push(ret[k]);
                }
                let batch = Batch {
                    obs: &mb_obs,
                    u: &mb_u,
                    logp_old: &mb_lp,
                    advantages: &mb_adv,
                    returns: &mb_ret,
                };
                grad.fill(0.0);
                let stats = loss_and_grad(&policy, &batch, &coefs, Some(&mut grad), &mut cache);
                let norm = clip_global_norm(&mut grad, cfg.grad_clip_norm);
                if !stats.total.is_finite() || !norm.is_finite() {
                    policy.params = last_good;
                    save(&policy, global_step - buf_len as u64)?;
                    return Err(Error::NonFinite(format!(
                        "update {update}: loss {:?}, gradient norm {norm}; parameters restored to the previous update",
                        stats
                    )));
                }
                adam.step(&mut policy.params, &grad, lr);
                acc.policy += stats.policy;
                acc.value += stats.value;
                acc.entropy += stats.entropy;
                acc.approx_kl += stats.approx_kl;
                acc.clip_fraction += stats.clip_fraction;
                acc.total += stats.total;
                grad_norm += norm;
                n_mb += 1;
            }
        }
        if policy.params.iter().any(|p| !p.is_finite()) {
            policy.params = last_good;
            save(&policy, global_step - buf_len as u64)?;
            return Err(Error::NonFinite(format!("update {update}: parameters became non-finite")));
        }
        let k = 1.0 / n_mb as f64;
        let us = UpdateStats {
            global_step,
            lr,
            loss: LossStats {
                policy: acc.policy * k,
                value: acc.value * k,
                entropy: acc.entropy * k,
                approx_kl: acc.approx_kl * k,
                clip_fraction: acc.clip_fraction * k,
                total: acc.total * k,
            },
            grad_norm: grad_norm * k,
        };
        log::info!(
            "update {}/{} step {} return {} kl {:.4} clip {:.3} entropy {:.3} value {:.4}",
            update + 1,
            n_updates,
            global_step,
            curve.last().map_or("-".to_string(), |r: &CurveRow| format!("{:.2}", r.mean_return)),
            us.loss.approx_kl,
            us.loss.clip_fraction,
            us.loss.entropy,
            us.loss.value
        );
        updates.push(us);
        if let Some(path) = &opts.curve_csv {
            write_curve_csv(path, &curve)?;
        }
        if opts.checkpoint_every > 0 && (update + 1) % opts.checkpoint_every == 0 {
            save(&policy, global_step)?;
        }
    }
    save(&policy, global_step)?;
    let artifact = PolicyArtifact::from_policy(&policy, meta(global_step));
    Ok(TrainOutcome {
        policy,
        artifact,
        curve,
        updates,
    })
}

pub fn write_curve_csv(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "step,mean_return,std_return")?;
    for r in rows {
        writeln!(f, "{},{},{}", r.global_step, r.mean_return, r.std_return)?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_curve_csv(path: &Path) -> Result<Vec<CurveRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("step,mean_return,std_return") {
        return Err(Error::format(path, "unexpected learning-curve header"));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || Error::format(path, format!("bad row '{l}'"));
            if f.len() != 3 {
                return Err(bad());
            }
            Ok(CurveRow {
                global_step: f[0].parse().map_err(|_| bad())?,
                mean_return: f[1].parse().map_err(|_| bad())?,
                std_return: f[2].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}
