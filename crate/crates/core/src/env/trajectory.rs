//! Time-parameterized target trajectories: randomized training paths and the named
//! closed evaluation loops traversed at constant speed.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{wrap_angle, Pose2, Vec2};
use crate::rng::{seeded, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    Training,
    Capsule,
    Rectangle,
    Circle,
    Lissajous,
    Lemniscate,
}

impl TrajectoryKind {
    pub const EVAL: [TrajectoryKind; 5] = [
        TrajectoryKind::Capsule,
        TrajectoryKind::Rectangle,
        TrajectoryKind::Circle,
        TrajectoryKind::Lissajous,
        TrajectoryKind::Lemniscate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrajectoryKind::Training => "training",
            TrajectoryKind::Capsule => "capsule",
            TrajectoryKind::Rectangle => "rectangle",
            TrajectoryKind::Circle => "circle",
            TrajectoryKind::Lissajous => "lissajous",
            TrajectoryKind::Lemniscate => "lemniscate",
        }
    }
}

impl fmt::Display for TrajectoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrajectoryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [TrajectoryKind::Training]
            .into_iter()
            .chain(TrajectoryKind::EVAL)
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown trajectory '{s}' (expected capsule, rectangle, circle, lissajous or lemniscate)"
                ))
            })
    }
}

// Eval path geometry, centred on the origin. Every loop stays within ±2.5 m.
pub const CAPSULE_STRAIGHT: f64 = 2.0;
pub const CAPSULE_RADIUS: f64 = 0.75;
pub const RECT_SIZE: (f64, f64) = (3.0, 2.0);
pub const RECT_CORNER_RADIUS: f64 = 0.3;
pub const CIRCLE_RADIUS: f64 = 1.5;
pub const LISSAJOUS_AXES: (f64, f64) = (2.0, 1.2);
pub const LEMNISCATE_SCALE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Segment {
    Line { start: Vec2, heading: f64, length: f64 },
    /// Counter-clockwise arc starting at `start_angle` around `center`.
    Arc { center: Vec2, radius: f64, start_angle: f64, sweep: f64 },
}

impl Segment {
    fn length(&self) -> f64 {
        match *self {
            Segment::Line { length, .. } => length,
            Segment::Arc { radius, sweep, .. } => radius * sweep,
        }
    }

    fn pose(&self, s: f64) -> Pose2 {
        match *self {
            Segment::Line { start, heading, .. } => {
                Pose2::new(start + Vec2::from_angle(heading) * s, heading)
            }
            Segment::Arc {
                center,
                radius,
                start_angle,
                ..
            } => {
                let th = start_angle + s / radius;
                Pose2::new(center + Vec2::from_angle(th) * radius, wrap_angle(th + FRAC_PI_2))
            }
        }
    }
}

/// Closed loop of straight and circular pieces, parameterized directly by arc length.
fn rounded_rectangle(width: f64, height: f64, r: f64) -> Vec<Segment> {
    let (hx, hy) = (0.5 * width - r, 0.5 * height - r);
    let mut segs = Vec::with_capacity(8);
    let corners = [
        Vec2::new(hx, -hy),
        Vec2::new(hx, hy),
        Vec2::new(-hx, hy),
        Vec2::new(-hx, -hy),
    ];
    let lens = [2.0 * hx, 2.0 * hy, 2.0 * hx, 2.0 * hy];
    // start at the bottom-left end of the bottom edge, heading +x
    for (k, c) in corners.iter().enumerate() {
        let heading = k as f64 * FRAC_PI_2;
        let prev = corners[(k + 3) % 4];
        let start = prev + Vec2::from_angle(heading - FRAC_PI_2) * r;
        if lens[k] > 0.0 {
            segs.push(Segment::Line {
                start,
                heading,
                length: lens[k],
            });
        }
        if r > 0.0 {
            segs.push(Segment::Arc {
                center: *c,
                radius: r,
                start_angle: heading - FRAC_PI_2,
                sweep: FRAC_PI_2,
            });
        }
    }
    segs
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Curve {
    /// `(a cos u, b sin 2u)`
    Lissajous { a: f64, b: f64 },
    /// Lemniscate of Bernoulli `(a cos u, a sin u cos u) / (1 + sin² u)`
    Lemniscate { a: f64 },
}

impl Curve {
    fn point(&self, u: f64) -> Vec2 {
        match *self {
            Curve::Lissajous { a, b } => Vec2::new(a * u.cos(), b * (2.0 * u).sin()),
            Curve::Lemniscate { a } => {
                let (s, c) = u.sin_cos();
                let d = 1.0 + s * s;
                Vec2::new(a * c / d, a * s * c / d)
            }
        }
    }

    fn derivative(&self, u: f64) -> Vec2 {
        match *self {
            Curve::Lissajous { a, b } => Vec2::new(-a * u.sin(), 2.0 * b * (2.0 * u).cos()),
            Curve::Lemniscate { a } => {
                let (s, c) = u.sin_cos();
                let d = 1.0 + s * s;
                let d2 = d * d;
                Vec2::new(
                    -a * s * (d + 2.0 * c * c) / d2,
                    a * ((c * c - s * s) * d - 2.0 * s * s * c * c) / d2,
                )
            }
        }
    }

    fn speed(&self, u: f64) -> f64 {
        self.derivative(u).norm()
    }
}

const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

/// Cumulative arc length of a parametric curve on `u ∈ [0, 2π]`, with inversion.
#[derive(Debug, Clone, PartialEq)]
struct ArcTable {
    curve: Curve,
    du: f64,
    cumulative: Vec<f64>,
}

impl ArcTable {
    const INTERVALS: usize = 2048;

    fn new(curve: Curve) -> Self {
        let du = TAU / Self::INTERVALS as f64;
        let mut cumulative = Vec::with_capacity(Self::INTERVALS + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for k in 0..Self::INTERVALS {
            let u0 = k as f64 * du;
            acc += Self::integrate(&curve, u0, u0 + du);
            cumulative.push(acc);
        }
        Self {
            curve,
            du,
            cumulative,
        }
    }

    fn integrate(curve: &Curve, u0: f64, u1: f64) -> f64 {
        let (m, h) = (0.5 * (u0 + u1), 0.5 * (u1 - u0));
        h * GL_NODES
            .iter()
            .zip(GL_WEIGHTS)
            .map(|(x, w)| w * curve.speed(m + h * x))
            .sum::<f64>()
    }

    fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Parameter `u` at arc length `s ∈ [0, length)`.
    fn parameter_at(&self, s: f64) -> f64 {
        let k = self
            .cumulative
            .partition_point(|&c| c <= s)
            .saturating_sub(1)
            .min(Self::INTERVALS - 1);
        let u0 = k as f64 * self.du;
        let rem = s - self.cumulative[k];
        let mut u = u0 + rem / self.curve.speed(u0).max(1e-12);
        for _ in 0..4 {
            let f = Self::integrate(&self.curve, u0, u) - rem;
            u -= f / self.curve.speed(u).max(1e-12);
        }
        u.clamp(u0, u0 + self.du)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Path {
    Piecewise { segments: Vec<Segment>, length: f64 },
    Parametric(ArcTable),
    /// Pose samples on a uniform time grid.
    Sampled { dt: f64, poses: Vec<Pose2> },
}

/// A target pose as a function of time.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointTrajectory {
    kind: TrajectoryKind,
    speed: f64,
    path: Path,
    offset: Vec2,
}

impl WaypointTrajectory {
    /// A named closed loop traversed at constant `speed` (m/s), yaw along the tangent.
    pub fn eval(kind: TrajectoryKind, speed: f64) -> Result<Self> {
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(Error::config("eval trajectory speed must be > 0"));
        }
        let path = match kind {
            TrajectoryKind::Training => {
                return Err(Error::config("training trajectories are generated per episode"))
            }
            TrajectoryKind::Capsule => {
                let w = CAPSULE_STRAIGHT + 2.0 * CAPSULE_RADIUS;
                piecewise(rounded_rectangle(w, 2.0 * CAPSULE_RADIUS, CAPSULE_RADIUS))
            }
            TrajectoryKind::Rectangle => {
                piecewise(rounded_rectangle(RECT_SIZE.0, RECT_SIZE.1, RECT_CORNER_RADIUS))
            }
            TrajectoryKind::Circle => piecewise(vec![Segment::Arc {
                center: Vec2::ZERO,
                radius: CIRCLE_RADIUS,
                start_angle: -FRAC_PI_2,
                sweep: TAU,
            }]),
            TrajectoryKind::Lissajous => Path::Parametric(ArcTable::new(Curve::Lissajous {
                a: LISSAJOUS_AXES.0,
                b: LISSAJOUS_AXES.1,
            })),
            TrajectoryKind::Lemniscate => Path::Parametric(ArcTable::new(Curve::Lemniscate {
                a: LEMNISCATE_SCALE,
            })),
        };
        Ok(Self {
            kind,
            speed,
            path,
            offset: Vec2::ZERO,
        })
    }

    /// Holds the target still at `pose`.
    pub fn stationary(pose: Pose2) -> Self {
        Self {
            kind: TrajectoryKind::Training,
            speed: 0.0,
            path: Path::Sampled {
                dt: 1.0,
                poses: vec![pose],
            },
            offset: Vec2::ZERO,
        }
    }

    pub fn kind(&self) -> TrajectoryKind {
        self.kind
    }

    /// Nominal speed (m/s); for training paths this is the per-episode speed cap.
    pub fn speed(&self) -> f64 {
        self.speed
    }

    /// Length of one loop (m); `None` for open training paths.
    pub fn loop_length(&self) -> Option<f64> {
        match &self.path {
            Path::Piecewise { length, .. } => Some(*length),
            Path::Parametric(t) => Some(t.length()),
            Path::Sampled { .. } => None,
        }
    }

    /// Time to complete one loop (s).
    pub fn lap_time(&self) -> Option<f64> {
        self.loop_length().map(|l| l / self.speed)
    }

    /// The same trajectory shifted by `offset`.
    pub fn translated(mut self, offset: Vec2) -> Self {
        self.offset += offset;
        self
    }

    /// Pose at arc length `s` along a closed loop (wrapped into one lap).
    pub fn pose_at_arc(&self, s: f64) -> Pose2 {
        let mut p = self.local_pose_at_arc(s);
        p.position += self.offset;
        p
    }

    fn local_pose_at_arc(&self, s: f64) -> Pose2 {
        match &self.path {
            Path::Piecewise { segments, length } => {
                let mut s = s.rem_euclid(*length);
                for seg in segments {
                    let l = seg.length();
                    if s < l {
                        return seg.pose(s);
                    }
                    s -= l;
                }
                let last = segments.last().unwrap();
                last.pose(last.length())
            }
            Path::Parametric(table) => {
                let u = table.parameter_at(s.rem_euclid(table.length()));
                let d = table.curve.derivative(u);
                Pose2::new(table.curve.point(u), d.y.atan2(d.x))
            }
            Path::Sampled { .. } => self.sampled_pose(s / self.speed.max(f64::MIN_POSITIVE)),
        }
    }

    pub fn pose(&self, t: f64) -> Pose2 {
        match &self.path {
            Path::Sampled { .. } => {
                let mut p = self.sampled_pose(t);
                p.position += self.offset;
                p
            }
            _ => self.pose_at_arc(self.speed * t),
        }
    }

    fn sampled_pose(&self, t: f64) -> Pose2 {
        match &self.path {
            Path::Sampled { dt, poses } => {
                let u = (t / dt).max(0.0);
                let i = u.floor() as usize;
                if i + 1 >= poses.len() {
                    return *poses.last().unwrap();
                }
                let f = u - i as f64;
                let (a, b) = (poses[i], poses[i + 1]);
                if f == 0.0 {
                    return a;
                }
                Pose2::new(
                    a.position + (b.position - a.position) * f,
                    wrap_angle(a.yaw + wrap_angle(b.yaw - a.yaw) * f),
                )
            }
            _ => unreachable!("sampled_pose on a loop"),
        }
    }
}

fn piecewise(segments: Vec<Segment>) -> Path {
    let length = segments.iter().map(Segment::length).sum();
    Path::Piecewise { segments, length }
}

/// Parameters of the randomized training-path process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingPathParams {
    /// Per-episode speed cap is drawn uniformly from this range (m/s).
    pub speed_range: [f64; 2],
    /// Relaxation time of the velocity process (s).
    pub relaxation_time: f64,
    /// Distance kept between the path and the terrain border (m).
    pub border_margin: f64,
}

impl Default for TrainingPathParams {
    fn default() -> Self {
        Self {
            speed_range: [0.0, 0.25],
            relaxation_time: 5.0,
            border_margin: 1.5,
        }
    }
}

impl TrainingPathParams {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.speed_range;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::config("trajectory.speed_range must satisfy 0 <= min <= max"));
        }
        if !(self.relaxation_time > 0.0) || self.border_margin < 0.0 {
            return Err(Error::config("trajectory: relaxation_time > 0 and border_margin >= 0 required"));
        }
        Ok(())
    }
}

/// Smoothly randomized open path: an Ornstein-Uhlenbeck velocity with stationary
/// per-axis spread equal to the episode speed cap, clamped to that cap, reflected at
/// `±half_bounds`. Sampled every `dt` for `steps` steps; yaw follows the velocity.
pub fn gen_training_trajectory(
    seed: u64,
    half_bounds: f64,
    params: &TrainingPathParams,
    dt: f64,
    steps: usize,
) -> WaypointTrajectory {
    let mut rng = seeded(seed, Stream::Trajectory);
    let [lo, hi] = params.speed_range;
    let cap = if hi > lo { rng.random_range(lo..hi) } else { lo };
    let b = half_bounds.max(0.0);
    let mut p = if b > 0.0 {
        Vec2::new(rng.random_range(-b..=b), rng.random_range(-b..=b))
    } else {
        Vec2::ZERO
    };
    let mut yaw = rng.random_range(-PI..PI);
    let decay = (-dt / params.relaxation_time).exp();
    let kick = cap * (1.0 - decay * decay).sqrt();
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut state = Vec2::new(cap * normal(), cap * normal());

    let clamp = |v: Vec2| {
        let n = v.norm();
        if n > cap {
            v * (cap / n)
        } else {
            v
        }
    };
    let heading = |v: Vec2, prev: f64| {
        if v.norm() > 1e-9 {
            v.y.atan2(v.x)
        } else {
            prev
        }
    };
    yaw = heading(clamp(state), yaw);
    let mut poses = Vec::with_capacity(steps + 1);
    poses.push(Pose2::new(p, yaw));
    for _ in 0..steps {
        state = state * decay + Vec2::new(normal(), normal()) * kick;
        let v = clamp(state);
        p += v * dt;
        for (pc, sc) in [(&mut p.x, &mut state.x), (&mut p.y, &mut state.y)] {
            if *pc > b {
                *pc = 2.0 * b - *pc;
                *sc = -sc.abs();
            } else if *pc < -b {
                *pc = -2.0 * b - *pc;
                *sc = sc.abs();
            }
        }
        yaw = heading(clamp(state), yaw);
        poses.push(Pose2::new(p, yaw));
    }
    WaypointTrajectory {
        kind: TrajectoryKind::Training,
        speed: cap,
        path: Path::Sampled { dt, poses },
        offset: Vec2::ZERO,
    }
}
