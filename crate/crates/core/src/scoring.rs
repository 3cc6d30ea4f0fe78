//! The detection chain: reconstruction error, discriminator score maps,
//! their difference, fusion, and scene-level thresholding.

use ndarray::{Array2, ArrayView2, ArrayView3, Axis, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{cropped_extent, stitch, tile, BitemporalScene};
use crate::error::{CdError, Result};
use crate::networks::{GeneratorNoise, Networks};
use crate::raster::Provenance;
use crate::seeding::derive_seed;
use crate::threshold::{apply_threshold, threshold_surface, ThresholdPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    ReconstructionError,
    RealPairScore,
    GeneratedPairScore,
    Difference,
    Fused,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    HighMeansChange,
    LowMeansChange,
}

impl ScoreKind {
    pub fn polarity(self) -> Polarity {
        match self {
            ScoreKind::ReconstructionError | ScoreKind::Fused => Polarity::HighMeansChange,
            ScoreKind::RealPairScore | ScoreKind::GeneratedPairScore | ScoreKind::Difference => {
                Polarity::LowMeansChange
            }
        }
    }

    /// File stem used when intermediates are dumped.
    pub fn stem(self) -> &'static str {
        match self {
            ScoreKind::ReconstructionError => "e_r",
            ScoreKind::RealPairScore => "s_real",
            ScoreKind::GeneratedPairScore => "s_gen",
            ScoreKind::Difference => "s_dif",
            ScoreKind::Fused => "h",
        }
    }
}

/// A single-channel per-pixel map.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRaster {
    pub values: Array2<f32>,
    pub kind: ScoreKind,
    pub polarity: Polarity,
    /// Set when normalization met a constant input and the values were
    /// zeroed instead.
    pub degenerate: bool,
}

impl ScoreRaster {
    pub fn new(values: Array2<f32>, kind: ScoreKind) -> Self {
        ScoreRaster {
            values,
            kind,
            polarity: kind.polarity(),
            degenerate: false,
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.values
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// e_r ∘ S_dif as written; low values indicate change.
    Literal,
    /// norm(e_r) ∘ (1 − norm(S_dif)); high values indicate change.
    #[default]
    PolarityAligned,
}

/// Binary change raster, 1 = changed.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeMap {
    pub mask: Array2<u8>,
    pub policy: ThresholdPolicy,
    pub provenance: Option<Provenance>,
}

impl ChangeMap {
    pub fn change_fraction(&self) -> f64 {
        let changed = self.mask.iter().filter(|&&v| v == 1).count();
        changed as f64 / self.mask.len().max(1) as f64
    }
}

fn check_shape2(a: (usize, usize), b: (usize, usize), what: &str) -> Result<()> {
    if a != b {
        return Err(CdError::ShapeMismatch(format!("{what}: {a:?} vs {b:?}")));
    }
    Ok(())
}

/// Band-mean absolute difference between x₂ and its reconstruction.
pub fn reconstruction_error_map(x2_patch: ArrayView3<f32>, reconstruction: ArrayView3<f32>) -> Result<ScoreRaster> {
    if x2_patch.dim() != reconstruction.dim() {
        return Err(CdError::ShapeMismatch(format!(
            "x2 {:?} vs reconstruction {:?}",
            x2_patch.dim(),
            reconstruction.dim()
        )));
    }
    let diff = Zip::from(&x2_patch)
        .and(&reconstruction)
        .map_collect(|&a, &b| (a - b).abs());
    let values = diff.mean_axis(Axis(0)).expect("at least one band");
    Ok(ScoreRaster::new(values, ScoreKind::ReconstructionError))
}

/// Discriminator maps of the real pair (x₁, x₂) and the generated pair
/// (x₁, G(x₁)).
pub fn score_maps(
    nets: &Networks,
    x1_patch: ArrayView3<f32>,
    x2_patch: ArrayView3<f32>,
    reconstruction: ArrayView3<f32>,
) -> Result<(ScoreRaster, ScoreRaster)> {
    if x1_patch.dim() != x2_patch.dim() || x1_patch.dim() != reconstruction.dim() {
        return Err(CdError::ShapeMismatch(format!(
            "x1 {:?}, x2 {:?}, reconstruction {:?}",
            x1_patch.dim(),
            x2_patch.dim(),
            reconstruction.dim()
        )));
    }
    let d = &nets.discriminator;
    let real = d.score(x1_patch, x2_patch)?;
    let generated = d.score(x1_patch, reconstruction)?;
    Ok((
        ScoreRaster::new(real, ScoreKind::RealPairScore),
        ScoreRaster::new(generated, ScoreKind::GeneratedPairScore),
    ))
}

pub fn difference_map(s_real: &ScoreRaster, s_gen: &ScoreRaster) -> Result<ScoreRaster> {
    if s_real.kind != ScoreKind::RealPairScore || s_gen.kind != ScoreKind::GeneratedPairScore {
        return Err(CdError::InvalidConfig(format!(
            "difference needs real and generated pair scores, got {:?} and {:?}",
            s_real.kind, s_gen.kind
        )));
    }
    check_shape2(s_real.dim(), s_gen.dim(), "score maps")?;
    Ok(ScoreRaster::new(&s_real.values - &s_gen.values, ScoreKind::Difference))
}

pub fn hadamard(a: ArrayView2<f32>, b: ArrayView2<f32>) -> Result<Array2<f32>> {
    check_shape2(a.dim(), b.dim(), "hadamard")?;
    Ok(Zip::from(a).and(b).map_collect(|&x, &y| x * y))
}

/// Min-max rescaling to [0, 1]; `None` when the map is constant.
pub fn min_max_normalize(values: ArrayView2<f32>) -> Option<Array2<f32>> {
    let (lo, hi) = values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    (span > 0.0 && span.is_finite()).then(|| values.mapv(|v| (v - lo) / span))
}

pub fn fuse(e_r: &ScoreRaster, s_dif: &ScoreRaster, mode: FusionMode) -> Result<ScoreRaster> {
    check_shape2(e_r.dim(), s_dif.dim(), "fusion inputs")?;
    let (values, polarity, degenerate) = match mode {
        FusionMode::Literal => (
            hadamard(e_r.values.view(), s_dif.values.view())?,
            Polarity::LowMeansChange,
            false,
        ),
        FusionMode::PolarityAligned => {
            match (
                min_max_normalize(e_r.values.view()),
                min_max_normalize(s_dif.values.view()),
            ) {
                (Some(e), Some(s)) => {
                    let agreement = s.mapv(|v| 1.0 - v);
                    (hadamard(e.view(), agreement.view())?, Polarity::HighMeansChange, false)
                }
                _ => {
                    log::warn!("constant score map met during fusion; fused map set to zero");
                    (Array2::zeros(e_r.dim()), Polarity::HighMeansChange, true)
                }
            }
        }
    };
    Ok(ScoreRaster {
        values,
        kind: ScoreKind::Fused,
        polarity,
        degenerate,
    })
}

/// Thresholds a fused map. Low-means-change maps are negated first so the
/// rule "1 iff above τ" applies to both fusion modes.
pub fn threshold(h: &ScoreRaster, policy: &ThresholdPolicy) -> ChangeMap {
    let oriented = match h.polarity {
        Polarity::HighMeansChange => h.values.clone(),
        Polarity::LowMeansChange => h.values.mapv(|v| -v),
    };
    let tau = threshold_surface(oriented.view(), policy);
    ChangeMap {
        mask: apply_threshold(oriented.view(), tau.view()),
        policy: *policy,
        provenance: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectConfig {
    pub patch_size: usize,
    pub fusion: FusionMode,
    pub threshold: ThresholdPolicy,
    pub noise: GeneratorNoise,
    /// Base seed of the generator noise at inference.
    pub seed: u64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            patch_size: crate::data::DEFAULT_PATCH_SIZE,
            fusion: FusionMode::default(),
            threshold: ThresholdPolicy::default(),
            noise: GeneratorNoise::default(),
            seed: 0,
        }
    }
}

/// Scene-level rasters produced by [`detect_scene`], all with the cropped
/// scene's dimensions.
#[derive(Debug, Clone)]
pub struct Detection {
    pub change_map: ChangeMap,
    pub fused: ScoreRaster,
    pub e_r: ScoreRaster,
    pub s_real: ScoreRaster,
    pub s_gen: ScoreRaster,
    pub s_dif: ScoreRaster,
}

impl Detection {
    pub fn intermediates(&self) -> [&ScoreRaster; 5] {
        [&self.e_r, &self.s_real, &self.s_gen, &self.s_dif, &self.fused]
    }
}

struct PatchMaps {
    origin: (usize, usize),
    e_r: Array2<f32>,
    s_real: Array2<f32>,
    s_gen: Array2<f32>,
}

/// Runs the chain patch by patch over a normalized scene and thresholds
/// the stitched fused map once.
///
/// Each patch draws its generator noise from `derive(seed, patch index)`,
/// so results do not depend on scheduling.
pub fn detect_scene(scene: &BitemporalScene, nets: &Networks, cfg: &DetectConfig) -> Result<Detection> {
    if scene.band_stats().is_none() {
        return Err(CdError::InvalidConfig("scene must be normalized before detection".into()));
    }
    if scene.bands() != nets.bands() {
        return Err(CdError::CheckpointMismatch(format!(
            "scene has {} bands, networks expect {}",
            scene.bands(),
            nets.bands()
        )));
    }
    cfg.threshold.validate()?;
    cfg.noise.validate()?;
    let patches = tile(scene, cfg.patch_size)?;
    let maps: Vec<PatchMaps> = patches
        .par_iter()
        .map(|p| -> Result<PatchMaps> {
            let seed = derive_seed(cfg.seed, &[p.index as u64]);
            let recon = nets.generator.predict(p.x1_patch.view(), &cfg.noise, seed)?;
            let e_r = reconstruction_error_map(p.partner.view(), recon.view())?;
            let (s_real, s_gen) = score_maps(nets, p.x1_patch.view(), p.partner.view(), recon.view())?;
            Ok(PatchMaps {
                origin: p.origin,
                e_r: e_r.values,
                s_real: s_real.values,
                s_gen: s_gen.values,
            })
        })
        .collect::<Result<_>>()?;

    let (h, w) = cropped_extent(scene.height(), scene.width(), cfg.patch_size);
    let assemble = |pick: fn(&PatchMaps) -> &Array2<f32>| {
        stitch(maps.iter().map(|m| (m.origin, pick(m).view())), h, w)
    };
    let e_r = ScoreRaster::new(assemble(|m| &m.e_r), ScoreKind::ReconstructionError);
    let s_real = ScoreRaster::new(assemble(|m| &m.s_real), ScoreKind::RealPairScore);
    let s_gen = ScoreRaster::new(assemble(|m| &m.s_gen), ScoreKind::GeneratedPairScore);
    let s_dif = difference_map(&s_real, &s_gen)?;
    let fused = fuse(&e_r, &s_dif, cfg.fusion)?;
    let change_map = threshold(&fused, &cfg.threshold);
    Ok(Detection {
        change_map,
        fused,
        e_r,
        s_real,
        s_gen,
        s_dif,
    })
}
