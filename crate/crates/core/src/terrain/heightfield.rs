use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::rng::mix64;

/// Result of a terrain query; `clamped` is set when the query point was outside the
/// field and was moved onto its border.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampled<T> {
    pub value: T,
    pub clamped: bool,
}

/// Square grid of elevations (metres), row-major with `y` as the slow axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightField {
    resolution: usize,
    cell_size: f64,
    origin: Vec2,
    elevations: Vec<f64>,
}

impl HeightField {
    /// Flat field covering `[origin, origin + extent]²`.
    pub fn flat(extent: f64, resolution: usize, origin: Vec2) -> Result<Self> {
        if !(extent > 0.0) || resolution < 2 {
            return Err(Error::config(format!(
                "heightfield needs extent > 0 and resolution >= 2 (got {extent}, {resolution})"
            )));
        }
        Ok(Self {
            resolution,
            cell_size: extent / (resolution - 1) as f64,
            origin,
            elevations: vec![0.0; resolution * resolution],
        })
    }

    pub fn from_elevations(
        extent: f64,
        resolution: usize,
        origin: Vec2,
        elevations: Vec<f64>,
    ) -> Result<Self> {
        let mut hf = Self::flat(extent, resolution, origin)?;
        if elevations.len() != resolution * resolution {
            return Err(Error::config(format!(
                "expected {} elevations, got {}",
                resolution * resolution,
                elevations.len()
            )));
        }
        if elevations.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("non-finite elevation"));
        }
        hf.elevations = elevations;
        Ok(hf)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn extent(&self) -> f64 {
        self.cell_size * (self.resolution - 1) as f64
    }

    pub fn elevations(&self) -> &[f64] {
        &self.elevations
    }

    pub(crate) fn elevations_mut(&mut self) -> &mut [f64] {
        &mut self.elevations
    }

    /// World position of grid node `(ix, iy)`.
    pub fn node_position(&self, ix: usize, iy: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + ix as f64 * self.cell_size,
            self.origin.y + iy as f64 * self.cell_size,
        )
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.elevations[iy * self.resolution + ix]
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let e = self.extent();
        let (dx, dy) = (p.x - self.origin.x, p.y - self.origin.y);
        (0.0..=e).contains(&dx) && (0.0..=e).contains(&dy)
    }

    /// Moves `p` onto the field if it lies outside.
    pub fn clamp(&self, p: Vec2) -> Sampled<Vec2> {
        let e = self.extent();
        let q = Vec2::new(
            p.x.clamp(self.origin.x, self.origin.x + e),
            p.y.clamp(self.origin.y, self.origin.y + e),
        );
        Sampled {
            value: q,
            clamped: q != p,
        }
    }

    /// Cell index and local coordinates in `[0, 1]²` of a (clamped) point.
    fn locate(&self, p: Vec2) -> (usize, usize, f64, f64) {
        let last = self.resolution - 2;
        let u = (p.x - self.origin.x) / self.cell_size;
        let v = (p.y - self.origin.y) / self.cell_size;
        let ix = (u.floor().max(0.0) as usize).min(last);
        let iy = (v.floor().max(0.0) as usize).min(last);
        (ix, iy, u - ix as f64, v - iy as f64)
    }

    fn corners(&self, ix: usize, iy: usize) -> [f64; 4] {
        let r = self.resolution;
        let k = iy * r + ix;
        [
            self.elevations[k],
            self.elevations[k + 1],
            self.elevations[k + r],
            self.elevations[k + r + 1],
        ]
    }

    /// Bilinear elevation at `(x, y)`.
    pub fn sample_height(&self, x: f64, y: f64) -> Sampled<f64> {
        let Sampled { value: p, clamped } = self.clamp(Vec2::new(x, y));
        let (ix, iy, fx, fy) = self.locate(p);
        let [h00, h10, h01, h11] = self.corners(ix, iy);
        let value = h00 * (1.0 - fx) * (1.0 - fy)
            + h10 * fx * (1.0 - fy)
            + h01 * (1.0 - fx) * fy
            + h11 * fx * fy;
        Sampled { value, clamped }
    }

    /// Gradient `(∂h/∂x, ∂h/∂y)` of the bilinear patch containing `(x, y)`.
    pub fn sample_slope(&self, x: f64, y: f64) -> Sampled<Vec2> {
        let Sampled { value: p, clamped } = self.clamp(Vec2::new(x, y));
        let (ix, iy, fx, fy) = self.locate(p);
        let [h00, h10, h01, h11] = self.corners(ix, iy);
        let gx = ((h10 - h00) * (1.0 - fy) + (h11 - h01) * fy) / self.cell_size;
        let gy = ((h01 - h00) * (1.0 - fx) + (h11 - h10) * fx) / self.cell_size;
        Sampled {
            value: Vec2::new(gx, gy),
            clamped,
        }
    }

    /// Order-sensitive 64-bit digest of the geometry and every elevation bit.
    pub fn checksum(&self) -> u64 {
        let mut h = mix64(self.resolution as u64);
        for w in [self.cell_size, self.origin.x, self.origin.y]
            .iter()
            .chain(self.elevations.iter())
        {
            h = mix64(h ^ w.to_bits());
        }
        h
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.elevations
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn heap_bytes(&self) -> usize {
        self.elevations.capacity() * std::mem::size_of::<f64>()
    }

    /// Writes the field as an 8-line text header followed by row-major
    /// little-endian `f32` elevations.
    pub fn write_binary(&self, path: &Path, seed: u64) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "ROVERTRACK HEIGHTFIELD")?;
        writeln!(w, "version 1")?;
        writeln!(w, "extent {}", self.extent())?;
        writeln!(w, "resolution {}", self.resolution)?;
        writeln!(w, "seed {seed}")?;
        writeln!(w, "cell_size {}", self.cell_size)?;
        writeln!(w, "origin {} {}", self.origin.x, self.origin.y)?;
        writeln!(w, "data f32le row-major")?;
        for v in &self.elevations {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a file produced by [`HeightField::write_binary`]; returns the field
    /// (elevations rounded to `f32`) and the recorded seed.
    pub fn read_binary(path: &Path) -> Result<(Self, u64)> {
        let bad = |reason: &str| Error::format(path, reason);
        let mut r = BufReader::new(File::open(path)?);
        let mut lines = Vec::with_capacity(8);
        for _ in 0..8 {
            let mut line = String::new();
            if r.read_line(&mut line)? == 0 {
                return Err(bad("truncated header"));
            }
            lines.push(line.trim_end().to_string());
        }
        if lines[0] != "ROVERTRACK HEIGHTFIELD" || lines[1] != "version 1" {
            return Err(bad("not a version 1 heightfield"));
        }
        let field = |i: usize, key: &str| -> Result<String> {
            lines[i]
                .strip_prefix(key)
                .map(|s| s.trim().to_string())
                .ok_or_else(|| bad(&format!("expected `{key}` on header line {}", i + 1)))
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number in header"));
        let extent = num(&field(2, "extent")?)?;
        let resolution: usize = field(3, "resolution")?
            .parse()
            .map_err(|_| bad("bad resolution"))?;
        let seed: u64 = field(4, "seed")?.parse().map_err(|_| bad("bad seed"))?;
        let origin_s = field(6, "origin")?;
        let mut parts = origin_s.split_whitespace();
        let ox = num(parts.next().unwrap_or(""))?;
        let oy = num(parts.next().unwrap_or(""))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != resolution * resolution * 4 {
            return Err(bad("payload size does not match resolution"));
        }
        let elevations = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let hf = Self::from_elevations(extent, resolution, Vec2::new(ox, oy), elevations)?;
        Ok((hf, seed))
    }

    /// 16-bit grayscale PGM, min elevation black, max white, north (+y) up.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let (lo, hi) = self.min_max();
        let span = if hi > lo { hi - lo } else { 1.0 };
        let mut w = BufWriter::new(File::create(path)?);
        write!(w, "P5\n{} {}\n65535\n", self.resolution, self.resolution)?;
        for iy in (0..self.resolution).rev() {
            for ix in 0..self.resolution {
                let v = ((self.at(ix, iy) - lo) / span * 65535.0).round() as u16;
                w.write_all(&v.to_be_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    const HEADER_PREFIX_CHECK: &[u8] = b"ROVERTRACK HEIGHTFIELD\nversion 1\nextent 4\nresolution 9\nseed 77\n";

    fn random_field(res: usize) -> HeightField {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let el = (0..res * res).map(|_| rng.random_range(-1.0..1.0)).collect();
        HeightField::from_elevations(4.0, res, Vec2::new(-2.0, -2.0), el).unwrap()
    }

    #[test]
    fn node_query_returns_stored_value() {
        let hf = random_field(9);
        for iy in 0..9 {
            for ix in 0..9 {
                let p = hf.node_position(ix, iy);
                let s = hf.sample_height(p.x, p.y);
                assert!(!s.clamped);
                assert!((s.value - hf.at(ix, iy)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn flat_field_has_zero_slope() {
        let hf = HeightField::flat(10.0, 11, Vec2::ZERO).unwrap();
        for k in 0..50 {
            let s = hf.sample_slope(0.2 * k as f64, 9.9 - 0.19 * k as f64);
            assert_eq!(s.value, Vec2::ZERO);
        }
    }

    #[test]
    fn bilinear_matches_direct_formula() {
        let hf = random_field(17);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x = rng.random_range(-2.0..2.0);
            let y = rng.random_range(-2.0..2.0);
            // oracle: locate the cell independently and apply the textbook formula
            let cs = 4.0 / 16.0;
            let i = (((x + 2.0) / cs) as usize).min(15);
            let j = (((y + 2.0) / cs) as usize).min(15);
            let tx = (x + 2.0) / cs - i as f64;
            let ty = (y + 2.0) / cs - j as f64;
            let q = |a: usize, b: usize| hf.elevations()[b * 17 + a];
            let expect = q(i, j) * (1.0 - tx) * (1.0 - ty)
                + q(i + 1, j) * tx * (1.0 - ty)
                + q(i, j + 1) * (1.0 - tx) * ty
                + q(i + 1, j + 1) * tx * ty;
            assert!((hf.sample_height(x, y).value - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn slope_matches_finite_difference_inside_cells() {
        let hf = random_field(9);
        let p = Vec2::new(0.13, -0.71);
        let h = 1e-6;
        let g = hf.sample_slope(p.x, p.y).value;
        let fx = (hf.sample_height(p.x + h, p.y).value - hf.sample_height(p.x - h, p.y).value)
            / (2.0 * h);
        let fy = (hf.sample_height(p.x, p.y + h).value - hf.sample_height(p.x, p.y - h).value)
            / (2.0 * h);
        assert!((g.x - fx).abs() < 1e-6 && (g.y - fy).abs() < 1e-6);
    }

    #[test]
    fn out_of_extent_is_clamped_and_flagged() {
        let hf = random_field(9);
        let s = hf.sample_height(5.0, 0.0);
        assert!(s.clamped);
        assert_eq!(s.value, hf.sample_height(2.0, 0.0).value);
        assert!(!hf.sample_height(2.0, -2.0).clamped);
    }

    #[test]
    fn dense_sampling_is_continuous() {
        let hf = random_field(9);
        let eps = 1e-7;
        let mut worst = 0.0f64;
        for k in 0..4000 {
            let x = -2.0 + 4.0 * k as f64 / 4000.0;
            let y = 0.3 * x;
            let d = (hf.sample_height(x, y).value - hf.sample_height(x + eps, y).value).abs();
            worst = worst.max(d);
        }
        assert!(worst < 1e-5, "{worst}");
    }

    #[test]
    fn binary_round_trip() {
        let hf = random_field(9);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.hf");
        hf.write_binary(&path, 77).unwrap();
        let (back, seed) = HeightField::read_binary(&path).unwrap();
        assert_eq!(seed, 77);
        assert_eq!(back.resolution(), 9);
        for (a, b) in hf.elevations().iter().zip(back.elevations()) {
            assert_eq!(*a as f32 as f64, *b);
        }
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(HEADER_PREFIX_CHECK));
    }
}
