//! Run configuration: one TOML document covering data, noise, networks,
//! training, thresholding and fusion, plus the hash stamped into every
//! artifact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::CheckpointInfo;
use crate::data::{BandStats, DEFAULT_PATCH_SIZE};
use crate::error::{CdError, Result};
use crate::networks::{DiscriminatorSpec, GeneratorNoise, GeneratorSpec};
use crate::pairs::NoiseSpec;
use crate::raster::Provenance;
use crate::scoring::{DetectConfig, FusionMode};
use crate::seeding::derive_seed;
use crate::threshold::ThresholdPolicy;
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    pub x1: Option<PathBuf>,
    pub x2: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub patch_size: usize,
    pub train_fraction: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            x1: None,
            x2: None,
            mask: None,
            patch_size: DEFAULT_PATCH_SIZE,
            train_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionSection {
    pub mode: FusionMode,
}

/// The merged configuration tree.
///
/// `seed` is the only seed a user sets: the seeds inside `[train]` and
/// `[noise]` are overwritten by [`RunConfig::resolved`] with values
/// derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub data: DataSection,
    pub noise: NoiseSpec,
    pub generator: GeneratorSpec,
    pub generator_noise: GeneratorNoise,
    pub discriminator: DiscriminatorSpec,
    pub train: TrainConfig,
    pub threshold: ThresholdPolicy,
    pub fusion: FusionSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output: None,
            data: DataSection::default(),
            noise: NoiseSpec::default(),
            generator: GeneratorSpec::default(),
            generator_noise: GeneratorNoise::default(),
            discriminator: DiscriminatorSpec::default(),
            train: TrainConfig::default(),
            threshold: ThresholdPolicy::default(),
            fusion: FusionSection::default(),
        }
    }
}

const STREAM_NOISE: u64 = 1;
const STREAM_SPLIT: u64 = 2;
const STREAM_DETECT: u64 = 3;

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CdError::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CdError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    /// Copy with the per-stage seeds derived from the top-level seed.
    pub fn resolved(&self) -> Self {
        let mut cfg = self.clone();
        cfg.train.seed = self.seed;
        cfg.noise.seed = derive_seed(self.seed, &[STREAM_NOISE]);
        cfg
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, &[STREAM_SPLIT])
    }

    pub fn detect_seed(&self) -> u64 {
        derive_seed(self.seed, &[STREAM_DETECT])
    }

    /// Checks value ranges, and that every referenced input path exists.
    pub fn validate(&self) -> Result<()> {
        if self.data.patch_size < crate::data::MIN_PATCH_SIZE {
            return Err(CdError::InvalidConfig(format!(
                "patch size {} is below {}",
                self.data.patch_size,
                crate::data::MIN_PATCH_SIZE
            )));
        }
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0) {
            return Err(CdError::InvalidConfig("train_fraction must lie in (0, 1)".into()));
        }
        if self.generator.bands != self.discriminator.bands {
            return Err(CdError::InvalidConfig(
                "generator and discriminator band counts differ".into(),
            ));
        }
        self.noise.validate()?;
        self.generator_noise.validate()?;
        self.train.validate()?;
        self.threshold.validate()?;
        for path in [&self.data.x1, &self.data.x2, &self.data.mask].into_iter().flatten() {
            let data = crate::raster::raster_paths(path).map_or_else(|_| path.clone(), |(d, _)| d);
            if !path.exists() && !data.exists() {
                return Err(CdError::InvalidConfig(format!("{} does not exist", path.display())));
            }
        }
        Ok(())
    }

    /// Hex prefix of the SHA-256 of the resolved configuration's JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&self.resolved()).expect("configuration serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    pub fn detect_config(&self) -> DetectConfig {
        DetectConfig {
            patch_size: self.data.patch_size,
            fusion: self.fusion.mode,
            threshold: self.threshold,
            noise: self.generator_noise,
            seed: self.detect_seed(),
        }
    }

    pub fn checkpoint_info(&self, band_stats: Option<BandStats>) -> CheckpointInfo {
        CheckpointInfo {
            config_hash: self.hash(),
            patch_size: self.data.patch_size,
            generator_noise: self.generator_noise,
            band_stats,
        }
    }

    pub fn provenance(&self, checkpoint_id: Option<String>) -> Provenance {
        Provenance {
            config_hash: self.hash(),
            seed: self.seed,
            checkpoint_id,
            threshold: None,
            fusion: None,
            note: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::threshold::ThresholdMode;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.train.epochs, 50);
        assert_eq!(cfg.data.patch_size, 128);
        cfg.validate().unwrap();
    }

    #[test]
    fn sections_override_fields() {
        let cfg = RunConfig::from_toml_str(
            "seed = 4\n[train]\nepochs = 3\nlearning_rate_d = 0.5\n\
             [threshold]\nmode = \"global_otsu\"\n[fusion]\nmode = \"literal\"\n\
             [data]\npatch_size = 16\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, 8);
        assert_eq!(cfg.threshold.mode, ThresholdMode::GlobalOtsu);
        assert_eq!(cfg.fusion.mode, FusionMode::Literal);
        assert_eq!(cfg.detect_config().patch_size, 16);
    }

    #[test]
    fn unknown_values_are_rejected() {
        assert!(RunConfig::from_toml_str("[fusion]\nmode = \"sideways\"\n").is_err());
        let bad = RunConfig::from_toml_str("[data]\ntrain_fraction = 1.5\n").unwrap();
        assert!(bad.validate().is_err());
        let missing = RunConfig::from_toml_str("[data]\nx1 = \"/nonexistent/x1.bin\"\n").unwrap();
        assert!(missing.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.seed = 9;
        cfg.data.x1 = Some(PathBuf::from("a/x1.bin"));
        let back = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn hash_tracks_content_not_section_seeds() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.train.seed = 77;
        assert_eq!(a.hash(), b.hash());
        b.train.epochs = 2;
        assert_ne!(a.hash(), b.hash());
        let mut c = a.clone();
        c.seed = 1;
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn seeds_are_derived_from_the_top_level_seed() {
        let mut cfg = RunConfig::default();
        cfg.seed = 3;
        let r = cfg.resolved();
        assert_eq!(r.train.seed, 3);
        assert_ne!(r.noise.seed, cfg.split_seed());
        assert_ne!(cfg.split_seed(), cfg.detect_seed());
    }
}
