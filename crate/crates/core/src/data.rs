//! Bitemporal scenes: loading, normalization, tiling and train/test splits.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CdError, Result};
use crate::raster;

pub const DEFAULT_PATCH_SIZE: usize = 128;
pub const MIN_PATCH_SIZE: usize = 8;

/// Per-band affine normalization parameters derived from the t₁ image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStats {
    pub min: Vec<f32>,
    pub max: Vec<f32>,
}

impl BandStats {
    pub fn from_raster(x: ArrayView3<f32>) -> Self {
        let (min, max) = x
            .axis_iter(Axis(0))
            .map(|band| {
                band.iter()
                    .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
            })
            .unzip();
        BandStats { min, max }
    }

    pub fn bands(&self) -> usize {
        self.min.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (band, (&lo, &hi)) in self.min.iter().zip(&self.max).enumerate() {
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(CdError::InvalidConfig(format!("band {band} has non-finite values")));
            }
            if hi <= lo {
                return Err(CdError::DegenerateBand { band, value: lo });
            }
        }
        Ok(())
    }

    // Written as (v − mid) / half so that a band already spanning [−1, 1]
    // maps through unchanged.
    fn mid_half(&self, band: usize) -> (f32, f32) {
        let (lo, hi) = (self.min[band], self.max[band]);
        ((hi + lo) / 2.0, (hi - lo) / 2.0)
    }

    /// Maps each band affinely so that [min, max] lands on [−1, 1].
    pub fn normalize(&self, x: ArrayView3<f32>) -> Result<Array3<f32>> {
        self.check_bands(x.dim().0)?;
        let mut out = x.to_owned();
        for (b, mut band) in out.axis_iter_mut(Axis(0)).enumerate() {
            let (mid, half) = self.mid_half(b);
            band.mapv_inplace(|v| (v - mid) / half);
        }
        Ok(out)
    }

    pub fn denormalize(&self, x: ArrayView3<f32>) -> Result<Array3<f32>> {
        self.check_bands(x.dim().0)?;
        let mut out = x.to_owned();
        for (b, mut band) in out.axis_iter_mut(Axis(0)).enumerate() {
            let (mid, half) = self.mid_half(b);
            band.mapv_inplace(|v| v * half + mid);
        }
        Ok(out)
    }

    fn check_bands(&self, bands: usize) -> Result<()> {
        if bands != self.bands() {
            return Err(CdError::ShapeMismatch(format!(
                "raster has {bands} bands, statistics cover {}",
                self.bands()
            )));
        }
        Ok(())
    }
}

/// Two co-registered acquisitions of the same area, each (bands, H, W).
#[derive(Debug, Clone)]
pub struct BitemporalScene {
    x1: Array3<f32>,
    x2: Array3<f32>,
    reference_mask: Option<Array2<u8>>,
    band_stats: Option<BandStats>,
}

impl BitemporalScene {
    pub fn new(x1: Array3<f32>, x2: Array3<f32>, reference_mask: Option<Array2<u8>>) -> Result<Self> {
        if x1.dim() != x2.dim() {
            return Err(CdError::ShapeMismatch(format!(
                "x1 is {:?} (bands, height, width) but x2 is {:?}",
                x1.dim(),
                x2.dim()
            )));
        }
        let reference_mask = match reference_mask {
            Some(mask) => {
                let (_, h, w) = x1.dim();
                if mask.dim() != (h, w) {
                    return Err(CdError::BadMask(format!(
                        "mask is {:?}, scene is {h}x{w}",
                        mask.dim()
                    )));
                }
                Some(mask.mapv(|v| u8::from(v != 0)))
            }
            None => None,
        };
        Ok(BitemporalScene {
            x1,
            x2,
            reference_mask,
            band_stats: None,
        })
    }

    pub fn x1(&self) -> ArrayView3<'_, f32> {
        self.x1.view()
    }

    pub fn x2(&self) -> ArrayView3<'_, f32> {
        self.x2.view()
    }

    pub fn reference_mask(&self) -> Option<ArrayView2<'_, u8>> {
        self.reference_mask.as_ref().map(|m| m.view())
    }

    /// Statistics the scene was normalized with, if it has been.
    pub fn band_stats(&self) -> Option<&BandStats> {
        self.band_stats.as_ref()
    }

    pub fn bands(&self) -> usize {
        self.x1.dim().0
    }

    pub fn height(&self) -> usize {
        self.x1.dim().1
    }

    pub fn width(&self) -> usize {
        self.x1.dim().2
    }

    pub fn into_parts(self) -> (Array3<f32>, Array3<f32>, Option<Array2<u8>>) {
        (self.x1, self.x2, self.reference_mask)
    }
}

/// Loads a scene from portable rasters; the optional mask is binarized.
pub fn load_scene(path_x1: &Path, path_x2: &Path, path_mask: Option<&Path>) -> Result<BitemporalScene> {
    let x1 = raster::read_raster(path_x1)?;
    let x2 = raster::read_raster(path_x2)?;
    let mask = path_mask.map(raster::read_mask).transpose()?;
    BitemporalScene::new(x1, x2, mask)
}

/// Normalizes both dates with statistics taken from x₁.
pub fn normalize(scene: &BitemporalScene) -> Result<BitemporalScene> {
    let stats = BandStats::from_raster(scene.x1());
    normalize_with(scene, &stats)
}

/// Normalizes both dates with externally supplied statistics (e.g. the ones
/// stored in a checkpoint).
pub fn normalize_with(scene: &BitemporalScene, stats: &BandStats) -> Result<BitemporalScene> {
    stats.validate()?;
    Ok(BitemporalScene {
        x1: stats.normalize(scene.x1())?,
        x2: stats.normalize(scene.x2())?,
        reference_mask: scene.reference_mask.clone(),
        band_stats: Some(stats.clone()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartnerKind {
    RealT2,
    SyntheticUnchanged,
}

/// One P×P tile of x₁ with its t₂ partner, both (bands, P, P).
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub index: usize,
    pub origin: (usize, usize),
    pub x1_patch: Array3<f32>,
    pub partner: Array3<f32>,
    pub partner_kind: PartnerKind,
}

/// Random access to tiled patches.
///
/// Training code goes through this trait so a test double can prove that
/// the t₂ side is never touched.
pub trait PatchSource {
    fn len(&self) -> usize;
    fn index(&self, i: usize) -> usize;
    fn origin(&self, i: usize) -> (usize, usize);
    fn x1_patch(&self, i: usize) -> ArrayView3<'_, f32>;
    /// The real t₂ tile, if this source carries one.
    fn x2_patch(&self, i: usize) -> Option<ArrayView3<'_, f32>>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl PatchSource for [PatchPair] {
    fn len(&self) -> usize {
        <[PatchPair]>::len(self)
    }
    fn index(&self, i: usize) -> usize {
        self[i].index
    }
    fn origin(&self, i: usize) -> (usize, usize) {
        self[i].origin
    }
    fn x1_patch(&self, i: usize) -> ArrayView3<'_, f32> {
        self[i].x1_patch.view()
    }
    fn x2_patch(&self, i: usize) -> Option<ArrayView3<'_, f32>> {
        (self[i].partner_kind == PartnerKind::RealT2).then(|| self[i].partner.view())
    }
}

impl PatchSource for Vec<PatchPair> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }
    fn index(&self, i: usize) -> usize {
        self.as_slice().index(i)
    }
    fn origin(&self, i: usize) -> (usize, usize) {
        self.as_slice().origin(i)
    }
    fn x1_patch(&self, i: usize) -> ArrayView3<'_, f32> {
        self.as_slice().x1_patch(i)
    }
    fn x2_patch(&self, i: usize) -> Option<ArrayView3<'_, f32>> {
        self.as_slice().x2_patch(i)
    }
}

/// Tiles of a single acquisition; there is no t₂ side at all.
#[derive(Debug, Clone)]
pub struct SingleDateTiles {
    tiles: Vec<(usize, (usize, usize), Array3<f32>)>,
}

impl SingleDateTiles {
    pub fn new(image: ArrayView3<f32>, patch_size: usize) -> Result<Self> {
        let (_, h, w) = image.dim();
        let tiles = tile_origins(h, w, patch_size)?
            .into_iter()
            .enumerate()
            .map(|(i, (r, c))| (i, (r, c), cut(image, (r, c), patch_size)))
            .collect();
        Ok(SingleDateTiles { tiles })
    }
}

impl PatchSource for SingleDateTiles {
    fn len(&self) -> usize {
        self.tiles.len()
    }
    fn index(&self, i: usize) -> usize {
        self.tiles[i].0
    }
    fn origin(&self, i: usize) -> (usize, usize) {
        self.tiles[i].1
    }
    fn x1_patch(&self, i: usize) -> ArrayView3<'_, f32> {
        self.tiles[i].2.view()
    }
    fn x2_patch(&self, _i: usize) -> Option<ArrayView3<'_, f32>> {
        None
    }
}

/// Row-major origins of the non-overlapping P×P grid; partial tiles at the
/// bottom and right edges are dropped.
pub fn tile_origins(height: usize, width: usize, patch_size: usize) -> Result<Vec<(usize, usize)>> {
    if patch_size < MIN_PATCH_SIZE {
        return Err(CdError::InvalidConfig(format!(
            "patch size {patch_size} is below the minimum of {MIN_PATCH_SIZE}"
        )));
    }
    if height < patch_size || width < patch_size {
        return Err(CdError::SceneTooSmall {
            height,
            width,
            patch: patch_size,
        });
    }
    let (rows, cols) = (height / patch_size, width / patch_size);
    Ok((0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r * patch_size, c * patch_size)))
        .collect())
}

/// Extent covered by the tiling, i.e. the scene with trailing strips removed.
pub fn cropped_extent(height: usize, width: usize, patch_size: usize) -> (usize, usize) {
    ((height / patch_size) * patch_size, (width / patch_size) * patch_size)
}

fn cut(image: ArrayView3<f32>, (r, c): (usize, usize), p: usize) -> Array3<f32> {
    image.slice(s![.., r..r + p, c..c + p]).to_owned()
}

pub fn tile(scene: &BitemporalScene, patch_size: usize) -> Result<Vec<PatchPair>> {
    let origins = tile_origins(scene.height(), scene.width(), patch_size)?;
    Ok(origins
        .into_iter()
        .enumerate()
        .map(|(index, origin)| PatchPair {
            index,
            origin,
            x1_patch: cut(scene.x1(), origin, patch_size),
            partner: cut(scene.x2(), origin, patch_size),
            partner_kind: PartnerKind::RealT2,
        })
        .collect())
}

/// Places per-patch maps at their origins in a (height, width) canvas.
pub fn stitch<'a>(
    parts: impl IntoIterator<Item = ((usize, usize), ArrayView2<'a, f32>)>,
    height: usize,
    width: usize,
) -> Array2<f32> {
    let mut out = Array2::zeros((height, width));
    for ((r, c), part) in parts {
        let (ph, pw) = part.dim();
        out.slice_mut(s![r..r + ph, c..c + pw]).assign(&part);
    }
    out
}

/// Seeded partition of patch ids 0..n into train and test sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub train_fraction: f64,
    pub train_ids: BTreeSet<usize>,
    pub test_ids: BTreeSet<usize>,
}

pub fn split(n_patches: usize, train_fraction: f64, seed: u64) -> Result<SplitSpec> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CdError::InvalidConfig(format!(
            "train fraction {train_fraction} must lie strictly between 0 and 1"
        )));
    }
    let mut ids: Vec<usize> = (0..n_patches).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train_fraction * n_patches as f64).round() as usize;
    let (train, test) = ids.split_at(n_train);
    Ok(SplitSpec {
        seed,
        train_fraction,
        train_ids: train.iter().copied().collect(),
        test_ids: test.iter().copied().collect(),
    })
}
