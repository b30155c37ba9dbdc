//! Advantage estimation, the clipped-surrogate loss with hand-derived gradients, and
//! the optimizer.

use rand::seq::SliceRandom;
use rand::Rng;

use super::policy::{gaussian_entropy, squash_log_jacobian, Policy, PolicyCache, gaussian_log_prob};
use super::real::Real;
use crate::error::{Error, Result};
use crate::{ACT_DIM, OBS_DIM};

/// How a transition ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransitionEnd {
    Continue,
    /// True terminal state: no bootstrap.
    Terminated,
    /// Time-limit cut: bootstrap from the value of the state reached.
    Truncated { bootstrap: f64 },
}

/// Generalized advantage estimation over one environment's time series.
///
/// `last_value` bootstraps the final transition when it is [`TransitionEnd::Continue`].
/// Returns `(advantages, returns)` with `returns = advantages + values`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    ends: &[TransitionEnd],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || ends.len() != n {
        return Err(Error::usage(format!(
            "gae: length mismatch (rewards {n}, values {}, ends {})",
            values.len(),
            ends.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let (next_v, cont) = match ends[t] {
            TransitionEnd::Continue => (if t + 1 < n { values[t + 1] } else { last_value }, 1.0),
            TransitionEnd::Terminated => (0.0, 0.0),
            TransitionEnd::Truncated { bootstrap } => (bootstrap, 0.0),
        };
        let delta = rewards[t] + gamma * next_v - values[t];
        next_adv = delta + gamma * lambda * cont * next_adv;
        adv[t] = next_adv;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}

/// A minibatch of stored transitions.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a, T> {
    /// `B × 4`
    pub obs: &'a [T],
    /// Pre-squash actions, `B × 2`.
    pub u: &'a [f64],
    pub logp_old: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

impl<T> Batch<'_, T> {
    pub fn len(&self) -> usize {
        self.logp_old.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logp_old.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefs {
    pub clip: f64,
    pub entropy: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossStats {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub total: f64,
}

/// Evaluates `L = −mean(min(ρA, clip(ρ)A)) − c_e·H + c_v·mean((V − R)²)` and, when
/// `grad` is given, accumulates `∂L/∂θ` into it.
pub fn loss_and_grad<T: Real>(
    policy: &Policy<T>,
    batch: &Batch<T>,
    coefs: &LossCoefs,
    grad: Option<&mut [T]>,
    cache: &mut PolicyCache<T>,
) -> LossStats {
    let b = batch.len();
    assert_eq!(batch.obs.len(), b * OBS_DIM);
    assert_eq!(batch.u.len(), b * ACT_DIM);
    policy.forward(batch.obs, b, cache);
    let log_std = policy.log_std();
    let inv_var: [f64; ACT_DIM] = std::array::from_fn(|j| (-2.0 * log_std[j]).exp());
    let mean_out = cache.actor.output();
    let v_out = cache.critic.output();
    let inv_b = 1.0 / b as f64;

    let mut d_mean = vec![T::zero(); b * ACT_DIM];
    let mut d_v = vec![T::zero(); b];
    let mut d_log_std = [0.0; ACT_DIM];
    let mut stats = LossStats::default();

    for i in 0..b {
        let mu: [f64; ACT_DIM] = std::array::from_fn(|j| mean_out[i * ACT_DIM + j].f64());
        let u = &batch.u[i * ACT_DIM..(i + 1) * ACT_DIM];
        let lp = gaussian_log_prob(u, &mu, &log_std) - squash_log_jacobian(u);
        let log_ratio = lp - batch.logp_old[i];
        let ratio = log_ratio.exp();
        let a = batch.advantages[i];
        let s1 = ratio * a;
        let s2 = ratio.clamp(1.0 - coefs.clip, 1.0 + coefs.clip) * a;
        stats.policy -= s1.min(s2) * inv_b;
        stats.approx_kl += ((ratio - 1.0) - log_ratio) * inv_b;
        if (ratio - 1.0).abs() > coefs.clip {
            stats.clip_fraction += inv_b;
        }
        // ∂L/∂logπ is zero when the clipped branch is the active minimum
        let g_lp = if s1 <= s2 { -a * ratio * inv_b } else { 0.0 };
        for j in 0..ACT_DIM {
            let diff = u[j] - mu[j];
            d_mean[i * ACT_DIM + j] = T::of(g_lp * diff * inv_var[j]);
            d_log_std[j] += g_lp * (diff * diff * inv_var[j] - 1.0);
        }
        let err = v_out[i].f64() - batch.returns[i];
        stats.value += err * err * inv_b;
        d_v[i] = T::of(2.0 * coefs.value * err * inv_b);
    }
    stats.entropy = gaussian_entropy(&log_std);
    stats.total = stats.policy - coefs.entropy * stats.entropy + coefs.value * stats.value;

    if let Some(grad) = grad {
        for (j, d) in d_log_std.iter().enumerate() {
            grad[policy.log_std_at + j] += T::of(d - coefs.entropy);
        }
        policy.actor.backward(&policy.params, &mut cache.actor, &d_mean, grad);
        policy.critic.backward(&policy.params, &mut cache.critic, &d_v, grad);
    }
    stats
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> Adam<T> {
    pub fn new(n: usize, eps: f64) -> Self {
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T], lr: f64) {
        self.t += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let step = T::of(lr / c1);
        let c2s = T::of(1.0 / c2.sqrt());
        let eps = T::of(self.eps);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (T::one() - b1) * *g;
            *v = b2 * *v + (T::one() - b2) * *g * *g;
            *p -= step * *m / (v.sqrt() * c2s + eps);
        }
    }
}

/// Scales `grad` so its global ℓ₂ norm is at most `max_norm`; returns the norm before
/// clipping.
pub fn clip_global_norm<T: Real>(grad: &mut [T], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g.f64() * g.f64()).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = T::of(max_norm / norm);
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Linear decay to zero: the rate at training fraction `f ∈ [0, 1]`.
pub fn learning_rate(lr_start: f64, f: f64) -> f64 {
    lr_start * (1.0 - f.clamp(0.0, 1.0))
}

/// A random partition of `0..n` into consecutive minibatches of `size`.
pub fn minibatches(n: usize, size: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(size).map(<[usize]>::to_vec).collect()
}

/// Normalizes to zero mean and unit variance in place.
pub fn normalize(xs: &mut [f64]) {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return;
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var.sqrt() + 1e-8);
    xs.iter_mut().for_each(|x| *x = (*x - mean) * inv);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, Stream};

    #[test]
    fn gae_base_cases() {
        let (a, r) = compute_gae(&[1.5], &[0.0], &[TransitionEnd::Continue], 0.0, 0.99, 0.95).unwrap();
        assert_eq!((a[0], r[0]), (1.5, 1.5));
        let rew = [1.0, -0.5, 2.0];
        let val = [0.3, 0.1, -0.2];
        let ends = [TransitionEnd::Continue; 3];
        let (a, _) = compute_gae(&rew, &val, &ends, 0.7, 0.9, 0.0).unwrap();
        let next = [0.1, -0.2, 0.7];
        for t in 0..3 {
            assert!((a[t] - (rew[t] + 0.9 * next[t] - val[t])).abs() < 1e-15);
        }
    }

    #[test]
    fn gae_truncation_bootstraps_and_cuts() {
        let ends = [TransitionEnd::Truncated { bootstrap: 2.0 }, TransitionEnd::Continue];
        let (a, _) = compute_gae(&[1.0, 5.0], &[0.5, 0.0], &ends, 0.0, 0.5, 1.0).unwrap();
        assert_eq!(a[0], 1.0 + 0.5 * 2.0 - 0.5);
        let ends = [TransitionEnd::Terminated, TransitionEnd::Continue];
        let (a, _) = compute_gae(&[1.0, 5.0], &[0.5, 0.0], &ends, 0.0, 0.5, 1.0).unwrap();
        assert_eq!(a[0], 0.5);
    }

    #[test]
    fn gae_length_mismatch_is_usage_error() {
        assert!(matches!(
            compute_gae(&[1.0, 2.0], &[0.0], &[TransitionEnd::Continue; 2], 0.0, 0.9, 0.9),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let mut g = vec![3.0f64, 4.0];
        assert_eq!(clip_global_norm(&mut g, 0.5), 5.0);
        assert!((g[0] - 0.3).abs() < 1e-15 && (g[1] - 0.4).abs() < 1e-15);
        let mut small = vec![0.1f64];
        clip_global_norm(&mut small, 0.5);
        assert_eq!(small[0], 0.1);
    }

    #[test]
    fn learning_rate_schedule() {
        for k in 0..=10 {
            let f = k as f64 / 10.0;
            assert!((learning_rate(1e-4, f) - 1e-4 * (1.0 - f)).abs() < 1e-12);
        }
    }

    #[test]
    fn minibatches_partition_the_buffer() {
        let parts = minibatches(8192, 1024, &mut seeded(0, Stream::Shuffle));
        assert_eq!(parts.len(), 8);
        let mut all: Vec<usize> = parts.concat();
        all.sort_unstable();
        assert_eq!(all, (0..8192).collect::<Vec<_>>());
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = vec![1.0f64, -1.0];
        let mut opt = Adam::new(2, 1e-8);
        opt.step(&mut p, &[0.3, -2.0], 0.01);
        assert!((p[0] - 0.99).abs() < 1e-9 && (p[1] + 0.99).abs() < 1e-9);
    }
    fn toy() -> (Policy<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut rng = seeded(9, Stream::Init);
        let mut p = Policy::<f64>::new(&[5, 4], -0.4, &mut rng);
        p.params.iter_mut().enumerate().for_each(|(k, v)| *v += 0.3 * (k as f64 * 1.3).sin());
        let b = 12;
        let obs: Vec<f64> = (0..b * OBS_DIM).map(|k| (k as f64 * 0.37).sin()).collect();
        let u: Vec<f64> = (0..b * ACT_DIM).map(|k| 0.8 * (k as f64 * 0.91).cos()).collect();
        let adv: Vec<f64> = (0..b).map(|k| (k as f64 * 1.7).sin()).collect();
        let ret: Vec<f64> = (0..b).map(|k| (k as f64 * 0.5).cos()).collect();
        // old log-probs spread so some ratios leave the clip band
        let mut c = PolicyCache::default();
        p.forward(&obs, b, &mut c);
        let ls = p.log_std();
        let lp: Vec<f64> = (0..b)
            .map(|i| {
                let mu = [c.actor.output()[2 * i], c.actor.output()[2 * i + 1]];
                let u = &u[2 * i..2 * i + 2];
                gaussian_log_prob(u, &mu, &ls) - squash_log_jacobian(u) + 0.4 * (i as f64 * 2.3).sin()
            })
            .collect();
        (p, obs, u, lp, adv, ret)
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let (mut p, obs, u, lp, adv, ret) = toy();
        let batch = Batch { obs: &obs, u: &u, logp_old: &lp, advantages: &adv, returns: &ret };
        for coefs in [
            LossCoefs { clip: 0.2, entropy: 0.0, value: 0.0 },
            LossCoefs { clip: 0.2, entropy: 0.01, value: 0.0 },
            LossCoefs { clip: 0.2, entropy: 0.0, value: 0.5 },
            LossCoefs { clip: 0.2, entropy: 0.01, value: 0.5 },
        ] {
            let mut c = PolicyCache::default();
            let mut g = vec![0.0; p.params.len()];
            let st = loss_and_grad(&p, &batch, &coefs, Some(&mut g), &mut c);
            assert!(st.clip_fraction > 0.0 && st.clip_fraction < 1.0);
            for k in 0..p.params.len() {
                let h = 1e-6;
                let x = p.params[k];
                p.params[k] = x + h;
                let up = loss_and_grad(&p, &batch, &coefs, None, &mut c).total;
                p.params[k] = x - h;
                let dn = loss_and_grad(&p, &batch, &coefs, None, &mut c).total;
                p.params[k] = x;
                let fd = (up - dn) / (2.0 * h);
                assert!((fd - g[k]).abs() <= 1e-4 * fd.abs().max(1e-3), "{coefs:?} param {k}: fd {fd} analytic {}", g[k]);
            }
        }
    }

    #[test]
    fn clipped_sample_has_zero_surrogate_gradient() {
        let (p, obs, u, mut lp, _, ret) = toy();
        // ρ = e ≫ 1.2 with A > 0 on every sample
        let mut c = PolicyCache::default();
        let lp0: Vec<f64> = lp.clone();
        lp.iter_mut().for_each(|v| *v -= 1.0);
        let adv = vec![1.0; lp.len()];
        let batch = Batch { obs: &obs, u: &u, logp_old: &lp, advantages: &adv, returns: &ret };
        let coefs = LossCoefs { clip: 0.2, entropy: 0.0, value: 0.0 };
        let mut g = vec![0.0; p.params.len()];
        loss_and_grad(&p, &batch, &coefs, Some(&mut g), &mut c);
        assert!(g.iter().all(|&v| v == 0.0));
        let batch = Batch { logp_old: &lp0, ..batch };
        loss_and_grad(&p, &batch, &coefs, Some(&mut g), &mut c);
        assert!(g.iter().any(|&v| v != 0.0));
    }
}
