//! Fixed-capacity delay lines whose length can change mid-episode without dropping
//! or duplicating queued items.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A FIFO that releases each pushed item after `delay` further pushes.
///
/// When the delay shrinks, the backlog is released at once (in order) and the newest
/// released item becomes the output. When it grows, the previous output is held until
/// the queue has refilled.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayLine<T> {
    queue: VecDeque<T>,
    delay: usize,
    last: T,
}

impl<T: Copy> DelayLine<T> {
    /// A line pre-filled with `delay` copies of `initial`.
    pub fn new(delay: usize, initial: T) -> Self {
        let mut queue = VecDeque::with_capacity(delay + 4);
        queue.extend(std::iter::repeat_n(initial, delay));
        Self {
            queue,
            delay,
            last: initial,
        }
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn set_delay(&mut self, delay: usize) {
        self.delay = delay;
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    /// Pushes `x` and returns the current output together with how many queued items
    /// were released by this push.
    pub fn push(&mut self, x: T) -> (T, usize) {
        self.queue.push_back(x);
        let mut released = 0;
        while self.queue.len() > self.delay {
            self.last = self.queue.pop_front().unwrap();
            released += 1;
        }
        (self.last, released)
    }

    /// Like [`push`](Self::push) but hands every released item to `sink` in order.
    pub fn push_into(&mut self, x: T, mut sink: impl FnMut(T)) -> T {
        self.queue.push_back(x);
        while self.queue.len() > self.delay {
            let y = self.queue.pop_front().unwrap();
            sink(y);
            self.last = y;
        }
        self.last
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DelayParams {
    pub max_obs_steps: usize,
    pub max_act_steps: usize,
    /// Steps between resampling opportunities (25 steps = 1 s at 25 Hz).
    pub resample_period: usize,
    /// Probability that a channel resamples at each opportunity.
    pub resample_prob: f64,
}

impl Default for DelayParams {
    fn default() -> Self {
        Self {
            max_obs_steps: 1,
            max_act_steps: 3,
            resample_period: 25,
            resample_prob: 0.01,
        }
    }
}

impl DelayParams {
    pub fn validate(&self) -> Result<()> {
        if self.resample_period == 0 || !(0.0..=1.0).contains(&self.resample_prob) {
            return Err(Error::config(
                "delays: resample_period must be >= 1 and resample_prob in [0, 1]",
            ));
        }
        Ok(())
    }

    /// Initial `(obs, act)` delays, uniform over `0..=max`.
    pub fn draw(&self, rng: &mut impl Rng) -> (usize, usize) {
        (
            rng.random_range(0..=self.max_obs_steps),
            rng.random_range(0..=self.max_act_steps),
        )
    }

    /// Resampling check made before control step `step`; returns the new delays.
    pub fn maybe_resample(
        &self,
        step: usize,
        current: (usize, usize),
        rng: &mut impl Rng,
    ) -> (usize, usize) {
        if step == 0 || step % self.resample_period != 0 {
            return current;
        }
        let (mut o, mut a) = current;
        // both Bernoulli draws always happen so the stream position is fixed
        let (ro, ra) = (rng.random::<f64>(), rng.random::<f64>());
        if ro < self.resample_prob {
            o = rng.random_range(0..=self.max_obs_steps);
        }
        if ra < self.resample_prob {
            a = rng.random_range(0..=self.max_act_steps);
        }
        (o, a)
    }
}
