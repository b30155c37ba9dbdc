//! Streaming action-smoothing filters applied channel-wise to the 2-vector action.
//!
//! All filters are warm-started: the first sample after [`ActionFilter::reset`] fills
//! the history (or the recursive state) so a constant input passes through unchanged.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ACT_DIM;

/// Where the Savitzky-Golay polynomial is evaluated inside its window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SgEval {
    /// Newest sample: no lag on polynomial inputs, little smoothing.
    Endpoint,
    /// Window centre: `(window - 1) / 2` samples of delay, full smoothing.
    #[default]
    Center,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FilterSpec {
    #[default]
    None,
    MovingAverage {
        window: usize,
    },
    SavitzkyGolay {
        order: usize,
        window: usize,
        #[serde(default)]
        eval: SgEval,
    },
    Butterworth {
        order: usize,
        cutoff_hz: f64,
        sample_hz: f64,
    },
}

impl FilterSpec {
    pub const MOVING_AVERAGE: FilterSpec = FilterSpec::MovingAverage { window: 5 };
    pub const SAVITZKY_GOLAY: FilterSpec = FilterSpec::SavitzkyGolay {
        order: 3,
        window: 9,
        eval: SgEval::Center,
    };
    pub const BUTTERWORTH: FilterSpec = FilterSpec::Butterworth {
        order: 4,
        cutoff_hz: 2.5,
        sample_hz: 25.0,
    };

    /// The four variants compared in filter sweeps, unfiltered first.
    pub const SWEEP: [FilterSpec; 4] = [
        FilterSpec::None,
        FilterSpec::MOVING_AVERAGE,
        FilterSpec::SAVITZKY_GOLAY,
        FilterSpec::BUTTERWORTH,
    ];

    /// Parses the short command-line names `none`, `ma`, `sg`, `sg-endpoint`, `bw`.
    pub fn from_short_name(name: &str) -> Result<Self> {
        Ok(match name {
            "none" => FilterSpec::None,
            "ma" => FilterSpec::MOVING_AVERAGE,
            "sg" => FilterSpec::SAVITZKY_GOLAY,
            "sg-endpoint" => FilterSpec::SavitzkyGolay {
                order: 3,
                window: 9,
                eval: SgEval::Endpoint,
            },
            "bw" => FilterSpec::BUTTERWORTH,
            other => {
                return Err(Error::config(format!(
                    "unknown filter '{other}' (expected none, ma, sg, sg-endpoint or bw)"
                )))
            }
        })
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            FilterSpec::None => "none",
            FilterSpec::MovingAverage { .. } => "ma",
            FilterSpec::SavitzkyGolay {
                eval: SgEval::Endpoint,
                ..
            } => "sg-endpoint",
            FilterSpec::SavitzkyGolay { .. } => "sg",
            FilterSpec::Butterworth { .. } => "bw",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            FilterSpec::None => "Unfiltered",
            FilterSpec::MovingAverage { .. } => "Moving Average",
            FilterSpec::SavitzkyGolay { .. } => "Savitzky-Golay",
            FilterSpec::Butterworth { .. } => "Butterworth",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            FilterSpec::None => Ok(()),
            FilterSpec::MovingAverage { window } if window >= 1 => Ok(()),
            FilterSpec::MovingAverage { .. } => Err(Error::config("moving average: window must be >= 1")),
            FilterSpec::SavitzkyGolay { order, window, eval } => {
                if window < 1 || order >= window {
                    Err(Error::config("savitzky-golay: need order < window"))
                } else if eval == SgEval::Center && window % 2 == 0 {
                    Err(Error::config("savitzky-golay: centred evaluation needs an odd window"))
                } else {
                    Ok(())
                }
            }
            FilterSpec::Butterworth {
                order,
                cutoff_hz,
                sample_hz,
            } => {
                if order == 0 {
                    Err(Error::config("butterworth: order must be >= 1"))
                } else if !(cutoff_hz > 0.0 && cutoff_hz < 0.5 * sample_hz) {
                    Err(Error::config("butterworth: need 0 < cutoff < sample/2"))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn design(&self) -> Result<Design> {
        self.validate()?;
        Ok(match *self {
            FilterSpec::None => Design::Passthrough,
            FilterSpec::MovingAverage { window } => Design::Fir(vec![1.0 / window as f64; window]),
            FilterSpec::SavitzkyGolay { order, window, eval } => {
                let at = match eval {
                    SgEval::Endpoint => window - 1,
                    SgEval::Center => (window - 1) / 2,
                };
                Design::Fir(savgol_weights(order, window, at))
            }
            FilterSpec::Butterworth {
                order,
                cutoff_hz,
                sample_hz,
            } => Design::Iir(butterworth_sos(order, cutoff_hz, sample_hz)),
        })
    }
}

impl fmt::Display for FilterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

/// Least-squares polynomial smoothing weights over `window` equally spaced samples
/// (oldest first), evaluated at sample index `at`.
///
/// Builds an orthonormal polynomial basis on the sample grid by modified Gram-Schmidt;
/// the weights are row `at` of the resulting projection (hat) matrix.
pub fn savgol_weights(order: usize, window: usize, at: usize) -> Vec<f64> {
    assert!(order < window && at < window);
    let half = (window as f64 - 1.0) / 2.0;
    let scale = if half > 0.0 { half } else { 1.0 };
    let xs: Vec<f64> = (0..window).map(|i| (i as f64 - half) / scale).collect();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(order + 1);
    for k in 0..=order {
        let mut v: Vec<f64> = xs.iter().map(|x| x.powi(k as i32)).collect();
        // two passes keep the basis orthogonal to working precision
        for _ in 0..2 {
            for q in &basis {
                let proj: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= proj * b);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        basis.push(v);
    }
    (0..window)
        .map(|j| basis.iter().map(|q| q[j] * q[at]).sum())
        .collect()
}

/// One biquad `b0 + b1 z⁻¹ + b2 z⁻² / 1 + a1 z⁻¹ + a2 z⁻²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    pub fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Direct form II transposed state that holds a constant input `x` in steady state.
    fn steady_state(&self, x: f64) -> [f64; 2] {
        let y = self.dc_gain() * x;
        let z2 = self.b[2] * x - self.a[1] * y;
        let z1 = self.b[1] * x - self.a[0] * y + z2;
        [z1, z2]
    }

    #[inline]
    fn step(&self, z: &mut [f64; 2], x: f64) -> f64 {
        let y = self.b[0] * x + z[0];
        z[0] = self.b[1] * x - self.a[0] * y + z[1];
        z[1] = self.b[2] * x - self.a[1] * y;
        y
    }
}

/// Low-pass Butterworth as cascaded second-order sections, bilinear transform with
/// the cutoff prewarped. Odd orders get a trailing first-order section.
pub fn butterworth_sos(order: usize, cutoff_hz: f64, sample_hz: f64) -> Vec<Biquad> {
    let k = (PI * cutoff_hz / sample_hz).tan();
    let k2 = k * k;
    let mut out = Vec::with_capacity(order.div_ceil(2));
    for i in 0..order / 2 {
        let zeta = (PI * (2 * i + 1) as f64 / (2 * order) as f64).sin();
        let den = k2 + 2.0 * zeta * k + 1.0;
        let b0 = k2 / den;
        out.push(Biquad {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k2 - 1.0) / den, (k2 - 2.0 * zeta * k + 1.0) / den],
        });
    }
    if order % 2 == 1 {
        let b0 = k / (k + 1.0);
        out.push(Biquad {
            b: [b0, b0, 0.0],
            a: [(k - 1.0) / (k + 1.0), 0.0],
        });
    }
    out
}

/// Expands a section cascade into direct-form numerator and denominator polynomials
/// in `z⁻¹` (leading denominator coefficient 1).
pub fn sos_to_tf(sections: &[Biquad]) -> (Vec<f64>, Vec<f64>) {
    let mul = |p: &[f64], q: &[f64]| {
        let mut r = vec![0.0; p.len() + q.len() - 1];
        for (i, a) in p.iter().enumerate() {
            for (j, b) in q.iter().enumerate() {
                r[i + j] += a * b;
            }
        }
        r
    };
    let mut num = vec![1.0];
    let mut den = vec![1.0];
    for s in sections {
        num = mul(&num, &s.b);
        den = mul(&den, &[1.0, s.a[0], s.a[1]]);
    }
    (num, den)
}

#[derive(Debug, Clone, PartialEq)]
enum Design {
    Passthrough,
    /// Taps ordered oldest sample first.
    Fir(Vec<f64>),
    Iir(Vec<Biquad>),
}

#[derive(Debug, Clone, PartialEq)]
struct Channel {
    /// Ring buffer of past inputs for FIR designs; `head` is the oldest slot.
    history: Vec<f64>,
    head: usize,
    sections: Vec<[f64; 2]>,
    last: f64,
}

impl Channel {
    fn new(design: &Design) -> Self {
        Self {
            history: match design {
                Design::Fir(t) => vec![0.0; t.len()],
                _ => Vec::new(),
            },
            head: 0,
            sections: match design {
                Design::Iir(s) => vec![[0.0; 2]; s.len()],
                _ => Vec::new(),
            },
            last: 0.0,
        }
    }

    fn warm(&mut self, design: &Design, x: f64) {
        self.history.iter_mut().for_each(|h| *h = x);
        self.head = 0;
        if let Design::Iir(secs) = design {
            let mut u = x;
            for (z, s) in self.sections.iter_mut().zip(secs) {
                *z = s.steady_state(u);
                u *= s.dc_gain();
            }
        }
        self.last = x;
    }

    fn step(&mut self, design: &Design, x: f64) -> f64 {
        let y = match design {
            Design::Passthrough => x,
            Design::Fir(taps) => {
                let n = taps.len();
                self.history[self.head] = x;
                self.head = (self.head + 1) % n;
                let mut acc = 0.0;
                for (i, t) in taps.iter().enumerate() {
                    acc += t * self.history[(self.head + i) % n];
                }
                acc
            }
            Design::Iir(secs) => {
                let mut u = x;
                for (z, s) in self.sections.iter_mut().zip(secs) {
                    u = s.step(z, u);
                }
                u
            }
        };
        self.last = y;
        y
    }
}

/// Per-environment filter state for the 2-channel action.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionFilter {
    spec: FilterSpec,
    design: Design,
    channels: [Channel; ACT_DIM],
    warm: bool,
}

impl ActionFilter {
    pub fn new(spec: FilterSpec) -> Result<Self> {
        let design = spec.design()?;
        let ch = Channel::new(&design);
        Ok(Self {
            spec,
            channels: [ch.clone(), ch],
            design,
            warm: false,
        })
    }

    pub fn spec(&self) -> FilterSpec {
        self.spec
    }

    /// Restores the initial condition; the next input warm-starts the filter.
    pub fn reset(&mut self) {
        let ch = Channel::new(&self.design);
        self.channels = [ch.clone(), ch];
        self.warm = false;
    }

    /// Resets to an all-zero history instead of warm-starting on the next input.
    pub fn reset_zeroed(&mut self) {
        self.reset();
        self.warm = true;
    }

    /// Filters one action. Non-finite components repeat that channel's previous output
    /// and set the returned flag.
    pub fn step(&mut self, x: [f64; ACT_DIM]) -> ([f64; ACT_DIM], bool) {
        let mut flagged = false;
        let mut out = [0.0; ACT_DIM];
        if !self.warm {
            for (c, v) in self.channels.iter_mut().zip(x) {
                c.warm(&self.design, if v.is_finite() { v } else { 0.0 });
            }
            self.warm = true;
        }
        for ((c, v), o) in self.channels.iter_mut().zip(x).zip(out.iter_mut()) {
            *o = if v.is_finite() {
                c.step(&self.design, v)
            } else {
                flagged = true;
                c.last
            };
        }
        (out, flagged)
    }

    /// Worst-case output magnitude for inputs bounded by 1: the ℓ₁ norm of the impulse
    /// response (truncated after 4096 samples for recursive designs).
    pub fn gain_bound(&self) -> f64 {
        match &self.design {
            Design::Passthrough => 1.0,
            Design::Fir(t) => t.iter().map(|c| c.abs()).sum(),
            Design::Iir(_) => {
                let mut ch = Channel::new(&self.design);
                (0..4096)
                    .map(|i| ch.step(&self.design, if i == 0 { 1.0 } else { 0.0 }).abs())
                    .sum()
            }
        }
    }

    /// FIR taps (oldest first), if this is a finite-response filter.
    pub fn taps(&self) -> Option<&[f64]> {
        match &self.design {
            Design::Fir(t) => Some(t),
            _ => None,
        }
    }

    pub fn sections(&self) -> Option<&[Biquad]> {
        match &self.design {
            Design::Iir(s) => Some(s),
            _ => None,
        }
    }
}
