//! Checkpoint container: a directory holding `manifest.json` and one raw
//! little-endian f32 blob per parameter tensor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::BandStats;
use crate::error::{CdError, Result};
use crate::networks::{Discriminator, DiscriminatorSpec, Generator, GeneratorNoise, GeneratorSpec, Networks};
use crate::nn::{Param, Parameterized};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
}

/// Everything needed to rebuild the networks and apply them to new scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub checkpoint_id: String,
    pub config_hash: String,
    pub epoch: usize,
    pub patch_size: usize,
    pub generator: GeneratorSpec,
    pub discriminator: DiscriminatorSpec,
    pub generator_noise: GeneratorNoise,
    pub band_stats: Option<BandStats>,
    pub heldout_l1: Option<f64>,
    pub tensors: Vec<TensorEntry>,
}

/// Run-level facts recorded alongside the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointInfo {
    pub config_hash: String,
    pub patch_size: usize,
    pub generator_noise: GeneratorNoise,
    pub band_stats: Option<BandStats>,
}

fn all_params(nets: &Networks) -> Vec<&Param<f32>> {
    let mut v = nets.generator.params();
    v.extend(nets.discriminator.params());
    v
}

/// Content hash of the parameter names, shapes and values.
pub fn checkpoint_id(nets: &Networks) -> String {
    let mut hasher = Sha256::new();
    for p in all_params(nets) {
        hasher.update(p.name.as_bytes());
        for &d in p.shape() {
            hasher.update((d as u64).to_le_bytes());
        }
        for v in p.value.iter() {
            hasher.update(v.to_le_bytes());
        }
    }
    hex::encode(&hasher.finalize()[..8])
}

pub fn save(dir: &Path, nets: &Networks, info: &CheckpointInfo, epoch: usize, heldout_l1: Option<f64>) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| CdError::io(dir, e))?;
    let mut tensors = Vec::new();
    for p in all_params(nets) {
        let file = format!("{}.bin", p.name);
        let bytes: Vec<u8> = p.value.iter().flat_map(|v| v.to_le_bytes()).collect();
        let path = dir.join(&file);
        fs::write(&path, bytes).map_err(|e| CdError::io(&path, e))?;
        tensors.push(TensorEntry {
            name: p.name.clone(),
            shape: p.shape().to_vec(),
            file,
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        checkpoint_id: checkpoint_id(nets),
        config_hash: info.config_hash.clone(),
        epoch,
        patch_size: info.patch_size,
        generator: *nets.generator.spec(),
        discriminator: *nets.discriminator.spec(),
        generator_noise: info.generator_noise,
        band_stats: info.band_stats.clone(),
        heldout_l1,
        tensors,
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text + "\n").map_err(|e| CdError::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| CdError::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(CdError::CheckpointMismatch(format!(
            "format version {} (this build reads {FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    Ok(manifest)
}

pub fn load(dir: &Path) -> Result<(Networks, Manifest)> {
    let manifest = read_manifest(dir)?;
    let mut nets = Networks {
        generator: Generator::zeros(manifest.generator),
        discriminator: Discriminator::zeros(manifest.discriminator),
    };
    {
        let mut params = nets.generator.params_mut();
        params.extend(nets.discriminator.params_mut());
        if params.len() != manifest.tensors.len() {
            return Err(CdError::CheckpointMismatch(format!(
                "manifest lists {} tensors, architecture has {}",
                manifest.tensors.len(),
                params.len()
            )));
        }
        for (p, entry) in params.into_iter().zip(&manifest.tensors) {
            if p.name != entry.name || p.shape() != entry.shape.as_slice() {
                return Err(CdError::CheckpointMismatch(format!(
                    "tensor {} {:?} does not match architecture slot {} {:?}",
                    entry.name,
                    entry.shape,
                    p.name,
                    p.shape()
                )));
            }
            let path = dir.join(&entry.file);
            let bytes = fs::read(&path).map_err(|e| CdError::io(&path, e))?;
            if bytes.len() != p.len() * 4 {
                return Err(CdError::CheckpointMismatch(format!(
                    "{}: {} bytes for {} values",
                    path.display(),
                    bytes.len(),
                    p.len()
                )));
            }
            for (v, c) in p.value.iter_mut().zip(bytes.chunks_exact(4)) {
                *v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            }
        }
    }
    Ok((nets, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let nets = Networks::init(
            GeneratorSpec {
                bands: 2,
                base_channels: 4,
                ..Default::default()
            },
            DiscriminatorSpec {
                bands: 2,
                ..Default::default()
            },
            42,
        )
        .unwrap();
        let info = CheckpointInfo {
            config_hash: "abc".into(),
            patch_size: 16,
            generator_noise: GeneratorNoise::default(),
            band_stats: Some(BandStats {
                min: vec![0.0, 1.0],
                max: vec![2.0, 3.0],
            }),
        };
        let saved = save(dir.path(), &nets, &info, 3, Some(0.1)).unwrap();
        let (back, manifest) = load(dir.path()).unwrap();
        assert_eq!(saved, manifest);
        assert_eq!(checkpoint_id(&back), checkpoint_id(&nets));
        for (a, b) in all_params(&nets).into_iter().zip(all_params(&back)) {
            assert_eq!(a.value, b.value);
        }
        assert_eq!(manifest.tensors[0].name, "g.down1.weight");
        assert_eq!(manifest.tensors[0].shape, vec![4, 2, 4, 4]);
    }

    #[test]
    fn truncated_blob_is_a_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let nets = Networks::init(
            GeneratorSpec {
                bands: 1,
                base_channels: 2,
                ..Default::default()
            },
            DiscriminatorSpec {
                bands: 1,
                hidden: 2,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        let info = CheckpointInfo {
            config_hash: String::new(),
            patch_size: 8,
            generator_noise: GeneratorNoise::NONE,
            band_stats: None,
        };
        save(dir.path(), &nets, &info, 1, None).unwrap();
        fs::write(dir.path().join("d.conv2.bias.bin"), [0u8; 3]).unwrap();
        assert!(matches!(load(dir.path()), Err(CdError::CheckpointMismatch(_))));
    }
}
