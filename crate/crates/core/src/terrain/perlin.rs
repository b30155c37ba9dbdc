//! Seeded 2D gradient (Perlin) noise.
//!
//! Lattice gradients come from a counter-based hash of `(cell, seed)`, so the noise
//! needs no permutation table and evaluates identically on every platform: only
//! IEEE additions and multiplications are involved.

use std::f64::consts::SQRT_2;

use crate::rng::hash_cell;

/// Eight gradient directions, all of length √2, which bounds the noise to [-1, 1].
const GRADIENTS: [(f64, f64); 8] = [
    (1.0, 1.0),
    (-1.0, 1.0),
    (1.0, -1.0),
    (-1.0, -1.0),
    (SQRT_2, 0.0),
    (-SQRT_2, 0.0),
    (0.0, SQRT_2),
    (0.0, -SQRT_2),
];

/// Gradient vector attached to lattice cell `(ix, iy)`.
#[inline]
pub fn lattice_gradient(ix: i64, iy: i64, seed: u64) -> (f64, f64) {
    GRADIENTS[(hash_cell(ix, iy, seed) >> 61) as usize]
}

/// Quintic fade `6t⁵ − 15t⁴ + 10t³`; C² so the noise is C¹ across cell borders.
#[inline]
pub fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Gradient noise at `(x, y)` with `frequency` lattice cells per unit length.
///
/// Returns a value in `[-1, 1]` that vanishes on lattice points.
pub fn perlin2(x: f64, y: f64, frequency: f64, seed: u64) -> f64 {
    debug_assert!(frequency > 0.0);
    let px = x * frequency;
    let py = y * frequency;
    let x0 = px.floor();
    let y0 = py.floor();
    let (ix, iy) = (x0 as i64, y0 as i64);
    let (fx, fy) = (px - x0, py - y0);

    let corner = |cx: i64, cy: i64, dx: f64, dy: f64| {
        let (gx, gy) = lattice_gradient(cx, cy, seed);
        gx * dx + gy * dy
    };
    let n00 = corner(ix, iy, fx, fy);
    let n10 = corner(ix + 1, iy, fx - 1.0, fy);
    let n01 = corner(ix, iy + 1, fx, fy - 1.0);
    let n11 = corner(ix + 1, iy + 1, fx - 1.0, fy - 1.0);

    let u = fade(fx);
    let v = fade(fy);
    lerp(lerp(n00, n10, u), lerp(n01, n11, u), v)
}
