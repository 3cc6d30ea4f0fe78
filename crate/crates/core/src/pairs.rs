//! Self-supervised "unchanged" pairs: the t₂ partner of a t₁ tile is the
//! tile itself plus zero-mean Gaussian noise.

use ndarray::{Array3, ArrayView3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{split, PartnerKind, PatchPair, PatchSource, SingleDateTiles, SplitSpec};
use crate::error::{CdError, Result};
use crate::seeding::{derive_seed, rng_for};

pub const DEFAULT_SIGMA: f64 = 0.02;

/// Noise level (normalized units) and seed of the synthetic partner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            sigma: DEFAULT_SIGMA,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(CdError::InvalidConfig(format!(
                "noise sigma must be finite and non-negative, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Same sigma, with the counter-derived seed for (patch, epoch).
    pub fn for_patch(&self, patch_index: usize, epoch: usize) -> NoiseSpec {
        NoiseSpec {
            sigma: self.sigma,
            seed: derive_seed(self.seed, &[patch_index as u64, epoch as u64]),
        }
    }
}

/// Returns `x1 + w`, w ~ N(0, σ²) i.i.d. per sample, clamped to [−1, 1].
pub fn synthesize_unchanged(x1_patch: ArrayView3<f32>, spec: &NoiseSpec) -> Array3<f32> {
    if spec.sigma == 0.0 {
        return x1_patch.to_owned();
    }
    let mut rng = rng_for(spec.seed, &[]);
    let sigma = spec.sigma;
    x1_patch.mapv(|v| {
        let w: f64 = rng.sample(StandardNormal);
        (v + (sigma * w) as f32).clamp(-1.0, 1.0)
    })
}

/// Builds one synthetic pair per training id. Only the t₁ side of `source`
/// is read.
pub fn build_training_set<S: PatchSource + ?Sized>(
    source: &S,
    split: &SplitSpec,
    spec: &NoiseSpec,
) -> Result<Vec<PatchPair>> {
    spec.validate()?;
    let mut pairs = Vec::with_capacity(split.train_ids.len());
    for i in 0..source.len() {
        let index = source.index(i);
        if !split.train_ids.contains(&index) {
            continue;
        }
        let x1 = source.x1_patch(i);
        pairs.push(PatchPair {
            index,
            origin: source.origin(i),
            partner: synthesize_unchanged(x1, &spec.for_patch(index, 0)),
            x1_patch: x1.to_owned(),
            partner_kind: PartnerKind::SyntheticUnchanged,
        });
    }
    if pairs.len() != split.train_ids.len() {
        return Err(CdError::InvalidConfig(format!(
            "split names {} training patches but only {} exist in the source",
            split.train_ids.len(),
            pairs.len()
        )));
    }
    Ok(pairs)
}

/// Synthetic pairs for both sides of a seeded split of a single-date
/// image: (training set, held-out set, split).
pub fn prepare_pairs(
    x1: ArrayView3<f32>,
    patch_size: usize,
    train_fraction: f64,
    spec: &NoiseSpec,
    split_seed: u64,
) -> Result<(Vec<PatchPair>, Vec<PatchPair>, SplitSpec)> {
    let tiles = SingleDateTiles::new(x1, patch_size)?;
    let ids = split(tiles.len(), train_fraction, split_seed)?;
    let mirrored = SplitSpec {
        train_ids: ids.test_ids.clone(),
        test_ids: ids.train_ids.clone(),
        ..ids.clone()
    };
    let training = build_training_set(&tiles, &ids, spec)?;
    let heldout = build_training_set(&tiles, &mirrored, spec)?;
    Ok((training, heldout, ids))
}
