//! Procedural lunar-analogue terrain.
//!
//! A terrain is built in layers, each a pure function of [`TerrainParams`]:
//! a low-frequency Perlin base, higher-frequency detail octaves, a crater layer whose
//! centres come from a jittered Voronoi lattice, and boulders placed by Poisson-disk
//! sampling and fused into the heightfield as radial bumps.

mod craters;
mod heightfield;
mod perlin;
mod poisson;

pub use craters::{
    crater_layer, crater_profile, place_craters, voronoi_feature, Crater, CraterSampling,
    CraterSet, OUTER_EXTENT as CRATER_OUTER_EXTENT,
};
pub use heightfield::{HeightField, Sampled};
pub use perlin::{fade, lattice_gradient, perlin2};
pub use poisson::{bridson, poisson_disk};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::rng::{derive_seed, seeded, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerrainParams {
    pub seed: u64,
    /// Side length of the square terrain (m).
    pub extent: f64,
    /// Grid nodes per side.
    pub resolution: usize,
    /// Amplitude of the base Perlin layer (m).
    pub base_amplitude: f64,
    /// Base layer frequency in cycles per extent.
    pub base_frequency: f64,
    pub detail_octaves: u32,
    /// Amplitude ratio between consecutive octaves.
    pub detail_gain: f64,
    pub crater_count_range: [u32; 2],
    pub crater_radius_range: [f64; 2],
    pub crater_depth_range: [f64; 2],
    pub rim_height_range: [f64; 2],
    pub boulder_min_spacing: f64,
    /// Boulders per m².
    pub boulder_density: f64,
    pub boulder_radius_range: [f64; 2],
    pub boulder_height_range: [f64; 2],
}

impl Default for TerrainParams {
    fn default() -> Self {
        Self {
            seed: 0,
            extent: 12.0,
            resolution: 257,
            base_amplitude: 0.15,
            base_frequency: 2.0,
            detail_octaves: 3,
            detail_gain: 0.5,
            crater_count_range: [2, 6],
            crater_radius_range: [0.5, 1.5],
            crater_depth_range: [0.05, 0.12],
            rim_height_range: [0.02, 0.05],
            boulder_min_spacing: 0.8,
            boulder_density: 0.05,
            boulder_radius_range: [0.15, 0.35],
            boulder_height_range: [0.03, 0.08],
        }
    }
}

impl TerrainParams {
    pub fn flat(extent: f64, resolution: usize) -> Self {
        Self {
            extent,
            resolution,
            base_amplitude: 0.0,
            detail_octaves: 0,
            crater_count_range: [0, 0],
            boulder_density: 0.0,
            ..Self::default()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    /// Lower-left corner; terrains are centred on the world origin.
    pub fn origin(&self) -> Vec2 {
        Vec2::new(-0.5 * self.extent, -0.5 * self.extent)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("terrain: {m}")));
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return bad(format!("extent must be > 0, got {}", self.extent));
        }
        if self.resolution < 2 {
            return bad(format!("resolution must be >= 2, got {}", self.resolution));
        }
        if !(self.boulder_min_spacing > 0.0) {
            return bad("boulder_min_spacing must be > 0".into());
        }
        if !(self.base_frequency > 0.0) || self.base_amplitude < 0.0 {
            return bad("base_frequency must be > 0 and base_amplitude >= 0".into());
        }
        if self.boulder_density < 0.0 {
            return bad("boulder_density must be >= 0".into());
        }
        if self.crater_count_range[0] > self.crater_count_range[1] {
            return bad("crater_count_range min > max".into());
        }
        for (name, r) in [
            ("crater_radius_range", self.crater_radius_range),
            ("crater_depth_range", self.crater_depth_range),
            ("rim_height_range", self.rim_height_range),
            ("boulder_radius_range", self.boulder_radius_range),
            ("boulder_height_range", self.boulder_height_range),
        ] {
            if !(r[0] <= r[1]) || r[0] < 0.0 {
                return bad(format!("{name} must satisfy 0 <= min <= max, got {r:?}"));
            }
        }
        if self.crater_count_range[1] > 0 && !(self.crater_radius_range[0] > 0.0) {
            return bad("crater radii must be > 0".into());
        }
        if self.boulder_density > 0.0 && !(self.boulder_radius_range[0] > 0.0) {
            return bad("boulder radii must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Boulder {
    pub center: Vec2,
    pub radius: f64,
    pub height: f64,
}

impl Boulder {
    /// Radial bump `h·(1 − (d/r)²)²`, zero outside the radius.
    pub fn displacement(&self, p: Vec2) -> f64 {
        let s2 = (p - self.center).norm_sq() / (self.radius * self.radius);
        if s2 >= 1.0 {
            0.0
        } else {
            let k = 1.0 - s2;
            self.height * k * k
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoulderSet {
    pub boulders: Vec<Boulder>,
}

impl BoulderSet {
    pub fn len(&self) -> usize {
        self.boulders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boulders.is_empty()
    }
}

/// A generated terrain: the heightfield plus the features fused into it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Terrain {
    pub params: TerrainParams,
    pub heightfield: HeightField,
    pub craters: CraterSet,
    pub boulders: BoulderSet,
}

impl Terrain {
    pub fn checksum(&self) -> u64 {
        self.heightfield.checksum()
    }
}

#[derive(Clone, Copy)]
enum Layer {
    Base,
    Detail(u32),
    Craters,
    Boulders,
}

fn layer_seed(seed: u64, layer: Layer) -> u64 {
    match layer {
        Layer::Base => derive_seed(&[seed, 1]),
        Layer::Detail(k) => derive_seed(&[seed, 2, k as u64]),
        Layer::Craters => derive_seed(&[seed, 3]),
        Layer::Boulders => derive_seed(&[seed, 4]),
    }
}

/// Sum of the base Perlin layer and its detail octaves at world point `p`.
pub fn noise_height(params: &TerrainParams, p: Vec2) -> f64 {
    let local = p - params.origin();
    let f0 = params.base_frequency / params.extent;
    let mut h = params.base_amplitude
        * perlin2(local.x, local.y, f0, layer_seed(params.seed, Layer::Base));
    let mut amp = params.base_amplitude;
    let mut freq = f0;
    for k in 1..=params.detail_octaves {
        amp *= params.detail_gain;
        freq *= 2.0;
        h += amp * perlin2(local.x, local.y, freq, layer_seed(params.seed, Layer::Detail(k)));
    }
    h
}

/// Builds the terrain described by `params`; bit-deterministic per seed.
pub fn generate_terrain(params: &TerrainParams) -> Result<Terrain> {
    params.validate()?;
    let origin = params.origin();
    let mut hf = HeightField::flat(params.extent, params.resolution, origin)?;
    let res = params.resolution;

    if params.base_amplitude > 0.0 {
        for iy in 0..res {
            for ix in 0..res {
                let p = hf.node_position(ix, iy);
                hf.elevations_mut()[iy * res + ix] = noise_height(params, p);
            }
        }
    }

    let mut rng = seeded(layer_seed(params.seed, Layer::Craters), Stream::Terrain);
    let [cmin, cmax] = params.crater_count_range;
    let count = rng.random_range(cmin..=cmax) as usize;
    let craters = place_craters(
        &CraterSampling {
            count,
            radius_range: params.crater_radius_range,
            depth_range: params.crater_depth_range,
            rim_height_range: params.rim_height_range,
        },
        origin,
        params.extent,
        layer_seed(params.seed, Layer::Craters),
        &mut rng,
    );
    if !craters.is_empty() {
        let layer = crater_layer(&craters, origin, hf.cell_size(), res);
        for (h, d) in hf.elevations_mut().iter_mut().zip(layer) {
            *h += d;
        }
    }

    let boulder_seed = layer_seed(params.seed, Layer::Boulders);
    let points = poisson_disk(
        params.extent,
        params.boulder_min_spacing,
        params.boulder_density,
        boulder_seed,
    );
    let mut rng = seeded(boulder_seed, Stream::Spawn);
    let draw = |rng: &mut rand_chacha::ChaCha8Rng, r: [f64; 2]| {
        if r[1] > r[0] {
            rng.random_range(r[0]..r[1])
        } else {
            r[0]
        }
    };
    let boulders = BoulderSet {
        boulders: points
            .into_iter()
            .map(|p| Boulder {
                center: origin + p,
                radius: draw(&mut rng, params.boulder_radius_range),
                height: draw(&mut rng, params.boulder_height_range),
            })
            .collect(),
    };
    let cs = hf.cell_size();
    for b in &boulders.boulders {
        let lo = |c: f64, o: f64| (((c - b.radius - o) / cs).floor().max(0.0)) as usize;
        let hi = |c: f64, o: f64| ((((c + b.radius - o) / cs).ceil()).max(0.0) as usize).min(res - 1);
        for iy in lo(b.center.y, origin.y)..=hi(b.center.y, origin.y) {
            for ix in lo(b.center.x, origin.x)..=hi(b.center.x, origin.x) {
                let p = hf.node_position(ix, iy);
                hf.elevations_mut()[iy * res + ix] += b.displacement(p);
            }
        }
    }

    if hf.elevations().iter().any(|v| !v.is_finite()) {
        return Err(Error::config("terrain parameters produced non-finite elevations"));
    }
    Ok(Terrain {
        params: params.clone(),
        heightfield: hf,
        craters,
        boulders,
    })
}
