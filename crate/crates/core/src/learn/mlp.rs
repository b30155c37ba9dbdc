//! Fully connected tanh networks over a borrowed flat parameter slice.

use rand::Rng;
use rand_distr::StandardNormal;

use super::real::Real;

/// Layer sizes and where each weight matrix and bias lives in the flat vector.
/// Weights are stored `in × out`, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpLayout {
    sizes: Vec<usize>,
    offsets: Vec<(usize, usize)>,
    base: usize,
    len: usize,
}

/// Activations saved by the forward pass: the input followed by each layer's output
/// (tanh for hidden layers, linear for the last).
#[derive(Debug, Clone, Default)]
pub struct MlpCache<T> {
    pub acts: Vec<Vec<T>>,
    batch: usize,
    scratch: Vec<T>,
}

impl<T: Real> MlpCache<T> {
    pub fn output(&self) -> &[T] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl MlpLayout {
    /// `sizes = [input, hidden.., output]`, placed at `base` in the flat vector.
    pub fn new(sizes: &[usize], base: usize) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0));
        let mut offsets = Vec::with_capacity(sizes.len() - 1);
        let mut at = base;
        for w in sizes.windows(2) {
            let w_off = at;
            at += w[0] * w[1];
            offsets.push((w_off, at));
            at += w[1];
        }
        Self {
            sizes: sizes.to_vec(),
            offsets,
            base,
            len: at - base,
        }
    }

    /// Closed-form parameter count `Σ (nᵢ·nᵢ₊₁ + nᵢ₊₁)`.
    pub fn count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// `(name suffix, offset, shape)` for each tensor, for serialization.
    pub fn tensors(&self) -> Vec<(String, usize, Vec<usize>)> {
        let mut out = Vec::new();
        for (l, (w, b)) in self.offsets.iter().enumerate() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            out.push((format!("l{l}.weight"), *w, vec![i, o]));
            out.push((format!("l{l}.bias"), *b, vec![o]));
        }
        out
    }

    /// Scaled-normal initialization: hidden weights `N(0, 1/fan_in)`, the output layer
    /// additionally scaled by `out_gain`; biases zero.
    pub fn init<T: Real>(&self, params: &mut [T], out_gain: f64, rng: &mut impl Rng) {
        let last = self.offsets.len() - 1;
        for (l, &(w, b)) in self.offsets.iter().enumerate() {
            let fan_in = self.sizes[l];
            let gain = if l == last { out_gain } else { 1.0 };
            let std = gain / (fan_in as f64).sqrt();
            for p in &mut params[w..b] {
                let z: f64 = rng.sample(StandardNormal);
                *p = T::of(std * z);
            }
            params[b..b + self.sizes[l + 1]].fill(T::zero());
        }
    }

    /// Forward pass on a row-major `batch × input` matrix.
    pub fn forward<T: Real>(&self, params: &[T], x: &[T], batch: usize, cache: &mut MlpCache<T>) {
        assert_eq!(x.len(), batch * self.input_dim());
        let nl = self.offsets.len();
        cache.acts.resize_with(nl + 1, Vec::new);
        cache.batch = batch;
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(x);
        for (l, &(w, b)) in self.offsets.iter().enumerate() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let (prev, rest) = cache.acts.split_at_mut(l + 1);
            let a = &prev[l];
            let z = &mut rest[0];
            z.resize(batch * o, T::zero());
            let bias = &params[b..b + o];
            for row in z.chunks_exact_mut(o) {
                row.copy_from_slice(bias);
            }
            T::gemm(
                batch,
                i,
                o,
                T::one(),
                a,
                i as isize,
                1,
                &params[w..b],
                o as isize,
                1,
                T::one(),
                z,
                o as isize,
                1,
            );
            if l + 1 < nl {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
        }
    }

    /// Accumulates parameter gradients into `grad` given `d loss / d output`.
    pub fn backward<T: Real>(&self, params: &[T], cache: &mut MlpCache<T>, dout: &[T], grad: &mut [T]) {
        let batch = cache.batch;
        let nl = self.offsets.len();
        let mut delta = std::mem::take(&mut cache.scratch);
        delta.clear();
        delta.extend_from_slice(dout);
        let mut next = Vec::new();
        for l in (0..nl).rev() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.offsets[l];
            let a = &cache.acts[l];
            T::gemm(
                i,
                batch,
                o,
                T::one(),
                a,
                1,
                i as isize,
                &delta,
                o as isize,
                1,
                T::one(),
                &mut grad[w..b],
                o as isize,
                1,
            );
            let gb = &mut grad[b..b + o];
            for row in delta.chunks_exact(o) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += *d;
                }
            }
            if l > 0 {
                next.clear();
                next.resize(batch * i, T::zero());
                T::gemm(
                    batch,
                    o,
                    i,
                    T::one(),
                    &delta,
                    o as isize,
                    1,
                    &params[w..b],
                    1,
                    o as isize,
                    T::zero(),
                    &mut next,
                    i as isize,
                    1,
                );
                for (d, h) in next.iter_mut().zip(a) {
                    *d *= T::one() - *h * *h;
                }
                std::mem::swap(&mut delta, &mut next);
            }
        }
        cache.scratch = delta;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, Stream};

    #[test]
    fn parameter_count_closed_form() {
        let l = MlpLayout::new(&[4, 384, 384, 2], 0);
        assert_eq!(l.len(), 4 * 384 + 384 + 384 * 384 + 384 + 384 * 2 + 2);
        assert_eq!(l.len(), MlpLayout::count(&[4, 384, 384, 2]));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let layout = MlpLayout::new(&[3, 5, 4, 2], 0);
        let mut p = vec![0.0f64; layout.len()];
        layout.init(&mut p, 1.0, &mut seeded(1, Stream::Init));
        p.iter_mut().enumerate().for_each(|(k, v)| *v += 0.01 * (k as f64).sin());
        let batch = 3;
        let x: Vec<f64> = (0..batch * 3).map(|k| (k as f64 * 0.7).cos()).collect();
        let loss = |p: &[f64]| {
            let mut c = MlpCache::default();
            layout.forward(p, &x, batch, &mut c);
            c.output().iter().enumerate().map(|(k, y)| (k as f64 + 1.0) * y * y).sum::<f64>()
        };
        let mut c = MlpCache::default();
        layout.forward(&p, &x, batch, &mut c);
        let dout: Vec<f64> = c.output().iter().enumerate().map(|(k, y)| 2.0 * (k as f64 + 1.0) * y).collect();
        let mut g = vec![0.0; p.len()];
        layout.backward(&p, &mut c, &dout, &mut g);
        for k in 0..p.len() {
            let h = 1e-6;
            let mut q = p.clone();
            q[k] += h;
            let up = loss(&q);
            q[k] -= 2.0 * h;
            let fd = (up - loss(&q)) / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {k}: {fd} vs {}", g[k]);
        }
    }
}
