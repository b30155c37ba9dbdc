//! Actor-critic networks and the tanh-squashed Gaussian action distribution.

use std::f64::consts::LN_2;

use rand::Rng;
use rand_distr::StandardNormal;

use super::mlp::{MlpCache, MlpLayout};
use super::real::Real;
use crate::{ACT_DIM, OBS_DIM};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Separate actor and critic MLPs plus a state-independent log-std, all in one flat
/// parameter vector laid out `[actor | log_std | critic]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy<T> {
    pub actor: MlpLayout,
    pub critic: MlpLayout,
    pub log_std_at: usize,
    pub params: Vec<T>,
}

/// Forward caches for one batch.
#[derive(Debug, Clone, Default)]
pub struct PolicyCache<T> {
    pub actor: MlpCache<T>,
    pub critic: MlpCache<T>,
}

impl<T: Real> Policy<T> {
    /// An uninitialized (all-zero) policy with the given hidden sizes.
    pub fn zeros(hidden: &[usize]) -> Self {
        let sizes = |out: usize| {
            let mut s = vec![OBS_DIM];
            s.extend_from_slice(hidden);
            s.push(out);
            s
        };
        let actor = MlpLayout::new(&sizes(ACT_DIM), 0);
        let log_std_at = actor.len();
        let critic = MlpLayout::new(&sizes(1), log_std_at + ACT_DIM);
        let n = critic.base() + critic.len();
        Self {
            actor,
            critic,
            log_std_at,
            params: vec![T::zero(); n],
        }
    }

    pub fn new(hidden: &[usize], init_log_std: f64, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(hidden);
        p.actor.init(&mut p.params, 0.01, rng);
        p.critic.init(&mut p.params, 1.0, rng);
        p.params[p.log_std_at..p.log_std_at + ACT_DIM].fill(T::of(init_log_std));
        p
    }

    /// Closed-form parameter count for hidden sizes `h`.
    pub fn param_count(hidden: &[usize]) -> usize {
        let with = |out: usize| {
            let mut s = vec![OBS_DIM];
            s.extend_from_slice(hidden);
            s.push(out);
            MlpLayout::count(&s)
        };
        with(ACT_DIM) + ACT_DIM + with(1)
    }

    pub fn hidden(&self) -> Vec<usize> {
        let s = self.actor.sizes();
        s[1..s.len() - 1].to_vec()
    }

    pub fn log_std(&self) -> [f64; ACT_DIM] {
        std::array::from_fn(|j| self.params[self.log_std_at + j].f64())
    }

    /// Forward pass of both networks on a `batch × 4` observation matrix.
    pub fn forward(&self, obs: &[T], batch: usize, cache: &mut PolicyCache<T>) {
        self.actor.forward(&self.params, obs, batch, &mut cache.actor);
        self.critic.forward(&self.params, obs, batch, &mut cache.critic);
    }

    pub fn values(&self, obs: &[T], batch: usize, cache: &mut MlpCache<T>) -> Vec<f64> {
        self.critic.forward(&self.params, obs, batch, cache);
        cache.output().iter().map(|v| v.f64()).collect()
    }

    /// Deterministic action `tanh(μ(obs))` for one observation.
    pub fn greedy(&self, obs: [f64; OBS_DIM]) -> [f64; ACT_DIM] {
        let x: Vec<T> = obs.iter().map(|&v| T::of(v)).collect();
        let mut c = MlpCache::default();
        self.actor.forward(&self.params, &x, 1, &mut c);
        let m = c.output();
        std::array::from_fn(|j| m[j].f64().tanh())
    }
}

/// Log-density of the pre-squash Gaussian at `u`.
pub fn gaussian_log_prob(u: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    u.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((u, m), ls)| {
            let z = (u - m) * (-ls).exp();
            -0.5 * z * z - ls - HALF_LN_2PI
        })
        .sum()
}

/// `Σ ln(1 − tanh²(u))`, evaluated stably as `2(ln 2 − u − softplus(−2u))`.
pub fn squash_log_jacobian(u: &[f64]) -> f64 {
    u.iter()
        .map(|&u| {
            let x = -2.0 * u;
            let softplus = if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
            2.0 * (LN_2 - u - softplus)
        })
        .sum()
}

/// Log-density of the squashed action `tanh(u)`.
pub fn squashed_log_prob(u: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    gaussian_log_prob(u, mean, log_std) - squash_log_jacobian(u)
}

/// Entropy of the pre-squash Gaussian.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| 0.5 + HALF_LN_2PI + ls).sum()
}

/// Draws `u = μ + σ·ε`.
pub fn sample_pre_squash(mean: &[f64], log_std: &[f64], rng: &mut impl Rng) -> [f64; ACT_DIM] {
    std::array::from_fn(|j| {
        let e: f64 = rng.sample(StandardNormal);
        mean[j] + log_std[j].exp() * e
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, Stream};
    use std::f64::consts::PI;

    #[test]
    fn constant_matches() {
        assert!((0.5 * (2.0 * PI).ln() - HALF_LN_2PI).abs() < 1e-15);
    }

    #[test]
    fn param_count_and_layout() {
        let p = Policy::<f32>::zeros(&[384, 384]);
        assert_eq!(p.params.len(), Policy::<f32>::param_count(&[384, 384]));
        assert_eq!(p.params.len(), 2 * (4 * 384 + 384 + 384 * 384 + 384) + 384 * 2 + 2 + 384 + 1 + 2);
        assert_eq!(p.hidden(), vec![384, 384]);
    }

    #[test]
    fn greedy_action_is_inside_unit_box() {
        let mut p = Policy::<f64>::new(&[8, 8], 0.5f64.ln(), &mut seeded(2, Stream::Init));
        p.params.iter_mut().for_each(|v| *v *= 50.0);
        for i in 0..100 {
            let o = [i as f64, -3.0 * i as f64, 0.5, -0.5];
            let a = p.greedy(o);
            assert!(a.iter().all(|x| x.abs() <= 1.0 && x.is_finite()));
        }
    }

    #[test]
    fn squash_jacobian_is_stable_and_correct() {
        for u in [-30.0, -3.0, -0.2, 0.0, 0.7, 5.0, 40.0] {
            let direct = (1.0 - f64::tanh(u).powi(2)).ln();
            let stable = squash_log_jacobian(&[u]);
            if direct.is_finite() {
                assert!((direct - stable).abs() < 1e-9 * (1.0 + direct.abs()), "{u}");
            }
            assert!(stable.is_finite());
        }
    }

    #[test]
    fn squashed_density_integrates_to_one() {
        // 1-D check on a fine grid over the open interval (-1, 1)
        let (m, ls) = (0.4, -0.3);
        let n = 200_000;
        let h = 2.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let a: f64 = -1.0 + (i as f64 + 0.5) * h;
            let u = a.atanh();
            acc += squashed_log_prob(&[u], &[m], &[ls]).exp() * h;
        }
        assert!((acc - 1.0).abs() < 1e-4, "{acc}");
    }
}
