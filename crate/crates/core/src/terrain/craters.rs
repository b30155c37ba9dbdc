//! Impact crater layer.
//!
//! Crater centres are the feature points of a jittered Voronoi lattice laid over the
//! terrain; each crater contributes a closed-form radial profile: a smoothstep bowl
//! inside the radius plus a raised rim annulus centred on the radius. Contributions
//! from overlapping craters add.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geom::Vec2;
use crate::rng::{hash_cell, mix64};

/// Rim half-width in units of the crater radius; the rim spans `[1 − w, 1 + w]`.
pub const RIM_HALF_WIDTH: f64 = 0.5;
/// Displacement is exactly zero beyond this multiple of the radius.
pub const OUTER_EXTENT: f64 = 1.0 + RIM_HALF_WIDTH;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crater {
    pub center: Vec2,
    pub radius: f64,
    /// Bowl depth at the centre (positive number, displacement is `-depth`).
    pub depth: f64,
    pub rim_height: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CraterSet {
    pub craters: Vec<Crater>,
}

#[inline]
fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Radial profile at normalized distance `r = d / radius`.
pub fn crater_profile(r: f64, depth: f64, rim_height: f64) -> f64 {
    let bowl = if r < 1.0 {
        -depth * (1.0 - smoothstep(r))
    } else {
        0.0
    };
    let u = (r - 1.0) / RIM_HALF_WIDTH;
    let rim = if u.abs() < 1.0 {
        let s = 1.0 - u * u;
        rim_height * s * s
    } else {
        0.0
    };
    bowl + rim
}

impl Crater {
    pub fn displacement(&self, p: Vec2) -> f64 {
        let d = (p - self.center).norm();
        if d >= OUTER_EXTENT * self.radius {
            return 0.0;
        }
        crater_profile(d / self.radius, self.depth, self.rim_height)
    }
}

impl CraterSet {
    pub fn displacement(&self, p: Vec2) -> f64 {
        self.craters.iter().map(|c| c.displacement(p)).sum()
    }

    pub fn len(&self) -> usize {
        self.craters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.craters.is_empty()
    }
}

/// Displacement of the crater layer on a `resolution²` grid (row-major, `y` major).
pub fn crater_layer(
    craters: &CraterSet,
    origin: Vec2,
    cell_size: f64,
    resolution: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; resolution * resolution];
    for c in &craters.craters {
        // only touch the cells inside the crater's support
        let reach = OUTER_EXTENT * c.radius;
        let lo = |v: f64, o: f64| (((v - reach - o) / cell_size).floor().max(0.0)) as usize;
        let hi = |v: f64, o: f64| {
            (((v + reach - o) / cell_size).ceil().max(0.0) as usize).min(resolution - 1)
        };
        let (x0, x1) = (lo(c.center.x, origin.x), hi(c.center.x, origin.x));
        let (y0, y1) = (lo(c.center.y, origin.y), hi(c.center.y, origin.y));
        for iy in y0..=y1.min(resolution - 1) {
            for ix in x0..=x1 {
                let p = Vec2::new(
                    origin.x + ix as f64 * cell_size,
                    origin.y + iy as f64 * cell_size,
                );
                out[iy * resolution + ix] += c.displacement(p);
            }
        }
    }
    out
}

/// Jittered Voronoi feature point of lattice cell `(ix, iy)`, in cell units.
pub fn voronoi_feature(ix: i64, iy: i64, seed: u64) -> (f64, f64) {
    let h = hash_cell(ix, iy, seed);
    let to_unit = |bits: u64| (bits >> 11) as f64 / (1u64 << 53) as f64;
    let jx = to_unit(h);
    let jy = to_unit(mix64(h));
    (ix as f64 + 0.15 + 0.7 * jx, iy as f64 + 0.15 + 0.7 * jy)
}

pub struct CraterSampling {
    pub count: usize,
    pub radius_range: [f64; 2],
    pub depth_range: [f64; 2],
    pub rim_height_range: [f64; 2],
}

/// Places `count` craters on distinct cells of a jittered Voronoi lattice covering
/// the square `[origin, origin + extent]²`.
pub fn place_craters<R: Rng>(
    spec: &CraterSampling,
    origin: Vec2,
    extent: f64,
    lattice_seed: u64,
    rng: &mut R,
) -> CraterSet {
    if spec.count == 0 {
        return CraterSet::default();
    }
    let cells_per_side = (spec.count as f64).sqrt().ceil() as i64;
    let cell = extent / cells_per_side as f64;
    let mut cells: Vec<(i64, i64)> = (0..cells_per_side)
        .flat_map(|iy| (0..cells_per_side).map(move |ix| (ix, iy)))
        .collect();
    cells.shuffle(rng);
    let uniform = |rng: &mut R, r: [f64; 2]| {
        if r[1] > r[0] {
            rng.random_range(r[0]..r[1])
        } else {
            r[0]
        }
    };
    let craters = cells
        .into_iter()
        .take(spec.count)
        .map(|(ix, iy)| {
            let (fx, fy) = voronoi_feature(ix, iy, lattice_seed);
            Crater {
                center: Vec2::new(origin.x + fx * cell, origin.y + fy * cell),
                radius: uniform(rng, spec.radius_range),
                depth: uniform(rng, spec.depth_range),
                rim_height: uniform(rng, spec.rim_height_range),
            }
        })
        .collect();
    CraterSet { craters }
}
