//! Seeded synthetic bitemporal scenes with exact change masks.

use std::ops::RangeInclusive;

use ndarray::{Array2, Array3, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::BitemporalScene;
use crate::error::{CdError, Result};
use crate::pairs::DEFAULT_SIGMA;
use crate::seeding::rng_for;

/// Multi-octave value noise. Octave `o` interpolates a random lattice with
/// spacing `base_cell / 2^o` and amplitude `persistence^o`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextureSpec {
    pub octaves: u32,
    pub persistence: f64,
    pub base_cell: usize,
    /// Weight of the field shared by all bands; the rest is per band.
    pub band_correlation: f64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        TextureSpec {
            octaves: 4,
            persistence: 0.5,
            base_cell: 64,
            band_correlation: 0.6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlobShape {
    /// Pixels with (dx/rx)² + (dy/ry)² ≤ 1.
    Ellipse,
    /// Pixels with |dx| ≤ rx and |dy| ≤ ry.
    Rectangle,
}

/// A planted change region; `center` is (row, col), `radii` is (rx, ry).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub shape: BlobShape,
    pub center: (usize, usize),
    pub radii: (usize, usize),
    pub shift: Vec<f32>,
}

impl Blob {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        let dy = row as i64 - self.center.0 as i64;
        let dx = col as i64 - self.center.1 as i64;
        let (rx, ry) = (self.radii.0 as i64, self.radii.1 as i64);
        match self.shape {
            BlobShape::Rectangle => dx.abs() <= rx && dy.abs() <= ry,
            BlobShape::Ellipse => {
                rx > 0 && ry > 0 && dx * dx * ry * ry + dy * dy * rx * rx <= rx * rx * ry * ry
            }
        }
    }

    fn fits(&self, height: usize, width: usize) -> bool {
        let (r, c) = self.center;
        let (rx, ry) = self.radii;
        r >= ry && c >= rx && r + ry < height && c + rx < width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub texture: TextureSpec,
    pub blobs: Vec<Blob>,
    /// Per-band offset added to all of x₂; empty means none.
    pub radiometric_shift: Vec<f32>,
    pub sensor_noise: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.bands == 0 {
            return Err(CdError::InvalidConfig("scene dimensions must be positive".into()));
        }
        if self.texture.base_cell == 0 || !(0.0..=1.0).contains(&self.texture.band_correlation) {
            return Err(CdError::InvalidConfig("invalid texture parameters".into()));
        }
        if !(self.radiometric_shift.is_empty() || self.radiometric_shift.len() == self.bands) {
            return Err(CdError::InvalidConfig("radiometric shift needs one value per band".into()));
        }
        if !(self.sensor_noise >= 0.0 && self.sensor_noise.is_finite()) {
            return Err(CdError::InvalidConfig("sensor noise must be finite and non-negative".into()));
        }
        for (index, blob) in self.blobs.iter().enumerate() {
            if blob.shift.len() != self.bands {
                return Err(CdError::InvalidConfig(format!("blob {index} needs one shift per band")));
            }
            if !blob.fits(self.height, self.width) {
                return Err(CdError::BlobOutOfBounds { index });
            }
        }
        Ok(())
    }

    /// Union of the blob footprints.
    pub fn change_mask(&self) -> Array2<u8> {
        Array2::from_shape_fn((self.height, self.width), |(r, c)| {
            u8::from(self.blobs.iter().any(|b| b.contains(r, c)))
        })
    }
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn value_noise(height: usize, width: usize, texture: &TextureSpec, rng: &mut impl Rng) -> Array2<f64> {
    let mut field = Array2::<f64>::zeros((height, width));
    let mut amplitude = 1.0;
    for octave in 0..texture.octaves {
        let cell = (texture.base_cell >> octave).max(1);
        let (gh, gw) = (height / cell + 2, width / cell + 2);
        let lattice = Array2::from_shape_simple_fn((gh, gw), || rng.random_range(-1.0..=1.0));
        for ((r, c), v) in field.indexed_iter_mut() {
            let (fy, fx) = (r as f64 / cell as f64, c as f64 / cell as f64);
            let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
            let (ty, tx) = (smoothstep(fy - y0 as f64), smoothstep(fx - x0 as f64));
            let top = lattice[[y0, x0]] * (1.0 - tx) + lattice[[y0, x0 + 1]] * tx;
            let bottom = lattice[[y0 + 1, x0]] * (1.0 - tx) + lattice[[y0 + 1, x0 + 1]] * tx;
            *v += amplitude * (top * (1.0 - ty) + bottom * ty);
        }
        amplitude *= texture.persistence;
    }
    field
}

fn rescale_to_unit(field: &Array2<f64>) -> Array2<f32> {
    let (lo, hi) = field
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi <= lo {
        return Array2::zeros(field.dim());
    }
    field.mapv(|v| (2.0 * (v - lo) / (hi - lo) - 1.0) as f32)
}

/// Textured x₁ spanning exactly [−1, 1] per band.
pub fn texture(spec: &SynthSpec) -> Array3<f32> {
    let mut rng = rng_for(spec.seed, &[0]);
    let (h, w) = (spec.height, spec.width);
    let shared = value_noise(h, w, &spec.texture, &mut rng);
    let mut x1 = Array3::zeros((spec.bands, h, w));
    let rho = spec.texture.band_correlation;
    for mut band in x1.axis_iter_mut(Axis(0)) {
        let own = value_noise(h, w, &spec.texture, &mut rng);
        let mixed = &shared * rho + &own * (1.0 - rho);
        band.assign(&rescale_to_unit(&mixed));
    }
    x1
}

/// x₂ = x₁ + radiometric shift + blob shifts + sensor noise; the reference
/// mask is the union of blob footprints.
pub fn generate(spec: &SynthSpec) -> Result<BitemporalScene> {
    spec.validate()?;
    let x1 = texture(spec);
    let mut x2 = x1.clone();
    for (b, mut band) in x2.axis_iter_mut(Axis(0)).enumerate() {
        if let Some(&offset) = spec.radiometric_shift.get(b) {
            band += offset;
        }
        for blob in &spec.blobs {
            for ((r, c), v) in band.indexed_iter_mut() {
                if blob.contains(r, c) {
                    *v += blob.shift[b];
                }
            }
        }
    }
    if spec.sensor_noise > 0.0 {
        let mut rng = rng_for(spec.seed, &[1]);
        let sigma = spec.sensor_noise as f32;
        x2.mapv_inplace(|v| {
            let n: f32 = StandardNormal.sample(&mut rng);
            v + sigma * n
        });
    }
    BitemporalScene::new(x1, x2, Some(spec.change_mask()))
}

/// Version of the scenario set returned by [`standard_suite`].
pub const SUITE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: &'static str,
    pub spec: SynthSpec,
    /// Declared bounds on the fraction of changed pixels.
    pub change_fraction: RangeInclusive<f64>,
}

fn ellipse(center: (usize, usize), radii: (usize, usize), shift: [f32; 3]) -> Blob {
    Blob {
        shape: BlobShape::Ellipse,
        center,
        radii,
        shift: shift.to_vec(),
    }
}

fn rectangle(center: (usize, usize), radii: (usize, usize), shift: [f32; 3]) -> Blob {
    Blob {
        shape: BlobShape::Rectangle,
        center,
        radii,
        shift: shift.to_vec(),
    }
}

fn base_spec(seed: u64, blobs: Vec<Blob>, radiometric_shift: Vec<f32>) -> SynthSpec {
    SynthSpec {
        height: 256,
        width: 256,
        bands: 3,
        texture: TextureSpec::default(),
        blobs,
        radiometric_shift,
        sensor_noise: DEFAULT_SIGMA,
        seed,
    }
}

fn ten_percent_blobs() -> Vec<Blob> {
    vec![
        ellipse((60, 60), (25, 25), [0.5, -0.4, 0.45]),
        ellipse((70, 180), (20, 35), [-0.45, 0.5, 0.4]),
        rectangle((180, 70), (18, 18), [0.4, 0.45, -0.5]),
        rectangle((190, 190), (15, 20), [-0.5, -0.4, 0.45]),
    ]
}

/// The fixed 256×256 three-band scenario set.
pub fn standard_suite() -> Vec<Scenario> {
    let acquisition = vec![0.06, -0.05, 0.04];
    vec![
        Scenario {
            name: "null",
            spec: base_spec(11, vec![], vec![]),
            change_fraction: 0.0..=0.0,
        },
        Scenario {
            name: "blobs-2pct",
            spec: base_spec(12, vec![ellipse((120, 130), (20, 26), [0.5, -0.45, 0.4])], vec![]),
            change_fraction: 0.015..=0.035,
        },
        Scenario {
            name: "blobs-5pct",
            spec: base_spec(
                13,
                vec![
                    ellipse((70, 80), (24, 30), [-0.5, 0.4, 0.45]),
                    rectangle((180, 170), (20, 20), [0.45, 0.5, -0.4]),
                ],
                vec![],
            ),
            change_fraction: 0.04..=0.07,
        },
        Scenario {
            name: "blobs-10pct",
            spec: base_spec(14, ten_percent_blobs(), vec![]),
            change_fraction: 0.08..=0.12,
        },
        Scenario {
            name: "blobs-10pct-shift",
            spec: base_spec(15, ten_percent_blobs(), acquisition.clone()),
            change_fraction: 0.08..=0.12,
        },
        Scenario {
            name: "blobs-15pct-shift",
            spec: base_spec(
                16,
                vec![
                    ellipse((55, 60), (30, 35), [0.5, 0.45, -0.4]),
                    ellipse((60, 185), (28, 28), [-0.4, 0.5, 0.45]),
                    rectangle((175, 65), (25, 20), [0.45, -0.5, 0.4]),
                    rectangle((185, 190), (17, 17), [-0.5, -0.45, -0.4]),
                    ellipse((128, 128), (18, 22), [0.4, 0.4, 0.5]),
                ],
                acquisition,
            ),
            change_fraction: 0.13..=0.18,
        },
    ]
}

pub fn scenario(name: &str) -> Option<Scenario> {
    standard_suite().into_iter().find(|s| s.name == name)
}
