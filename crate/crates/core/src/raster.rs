//! Portable raster I/O: band-sequential raw binary plus a JSON sidecar.
//!
//! A raster named `scene` lives in `scene.bin` (little-endian samples, band
//! after band, rows top to bottom) and `scene.json`:
//!
//! ```json
//! {"width": 256, "height": 256, "bands": 3, "dtype": "f32", "order": "bsq"}
//! ```
//!
//! Masks use the same layout with `"dtype": "u8"` and a single band; any
//! nonzero byte means "changed". PNG masks are accepted as input as well.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use ndarray::{Array2, Array3, ArrayView2, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::error::{CdError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    U8,
}

impl DType {
    fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::U8 => 1,
        }
    }
}

/// Identifies the run that produced an artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub checkpoint_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<crate::threshold::ThresholdPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fusion: Option<crate::scoring::FusionMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub dtype: DType,
    pub order: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// Returns the (data, sidecar) path pair for a raster given either file.
pub fn raster_paths(path: &Path) -> Result<(PathBuf, PathBuf)> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") | Some("json") | None => {
            Ok((path.with_extension("bin"), path.with_extension("json")))
        }
        Some(other) => Err(CdError::UnsupportedFormat(format!(
            "{} (.{other}); expected a .bin/.json raster pair",
            path.display()
        ))),
    }
}

fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let text = fs::read_to_string(path).map_err(|e| CdError::io(path, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text)?;
    if sidecar.order != "bsq" {
        return Err(CdError::UnsupportedFormat(format!(
            "{}: order {:?}, only \"bsq\" is supported",
            path.display(),
            sidecar.order
        )));
    }
    Ok(sidecar)
}

fn read_payload(path: &Path, sidecar: &Sidecar) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| CdError::io(path, e))?;
    let expected = sidecar.width * sidecar.height * sidecar.bands * sidecar.dtype.size();
    if bytes.len() != expected {
        return Err(CdError::UnsupportedFormat(format!(
            "{}: {} bytes, sidecar implies {expected}",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes)
}

fn write_sidecar(path: &Path, sidecar: &Sidecar) -> Result<()> {
    let text = serde_json::to_string_pretty(sidecar)?;
    fs::write(path, text + "\n").map_err(|e| CdError::io(path, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CdError::io(parent, e))?;
    }
    Ok(())
}

/// Reads a (bands, height, width) float raster.
pub fn read_raster(path: &Path) -> Result<Array3<f32>> {
    let (data, side) = raster_paths(path)?;
    let sidecar = read_sidecar(&side)?;
    let bytes = read_payload(&data, &sidecar)?;
    let values: Vec<f32> = match sidecar.dtype {
        DType::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        DType::U8 => bytes.iter().map(|&b| b as f32).collect(),
    };
    Ok(Array3::from_shape_vec((sidecar.bands, sidecar.height, sidecar.width), values)
        .expect("payload length checked against sidecar"))
}

pub fn write_raster(path: &Path, raster: ArrayView3<f32>, provenance: Option<&Provenance>) -> Result<()> {
    let (data, side) = raster_paths(path)?;
    ensure_parent(&data)?;
    let (bands, height, width) = raster.dim();
    let bytes: Vec<u8> = raster.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(&data, bytes).map_err(|e| CdError::io(&data, e))?;
    write_sidecar(
        &side,
        &Sidecar {
            width,
            height,
            bands,
            dtype: DType::F32,
            order: "bsq".into(),
            provenance: provenance.cloned(),
        },
    )
}

/// Reads a single-band mask and binarizes it (nonzero → 1).
pub fn read_mask(path: &Path) -> Result<Array2<u8>> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if ext.eq_ignore_ascii_case("png") {
        let img = image::open(path)?.to_luma8();
        let (w, h) = img.dimensions();
        return Ok(Array2::from_shape_fn((h as usize, w as usize), |(r, c)| {
            u8::from(img.get_pixel(c as u32, r as u32)[0] != 0)
        }));
    }
    let (data, side) = raster_paths(path)?;
    let sidecar = read_sidecar(&side)?;
    if sidecar.bands != 1 {
        return Err(CdError::BadMask(format!(
            "{}: mask must have one band, found {}",
            side.display(),
            sidecar.bands
        )));
    }
    let bytes = read_payload(&data, &sidecar)?;
    let values: Vec<u8> = match sidecar.dtype {
        DType::U8 => bytes.iter().map(|&b| u8::from(b != 0)).collect(),
        DType::F32 => bytes
            .chunks_exact(4)
            .map(|c| u8::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) != 0.0))
            .collect(),
    };
    Ok(Array2::from_shape_vec((sidecar.height, sidecar.width), values).expect("checked length"))
}

/// Writes a binary mask as 0/255 bytes plus a PNG preview next to it.
pub fn write_mask(path: &Path, mask: ArrayView2<u8>, provenance: Option<&Provenance>) -> Result<()> {
    let (data, side) = raster_paths(path)?;
    ensure_parent(&data)?;
    let (height, width) = mask.dim();
    let bytes: Vec<u8> = mask.iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
    fs::write(&data, &bytes).map_err(|e| CdError::io(&data, e))?;
    write_sidecar(
        &side,
        &Sidecar {
            width,
            height,
            bands: 1,
            dtype: DType::U8,
            order: "bsq".into(),
            provenance: provenance.cloned(),
        },
    )?;
    let img = GrayImage::from_raw(width as u32, height as u32, bytes).expect("buffer size");
    let png = data.with_extension("png");
    img.save(&png)?;
    Ok(())
}

/// Saves a scalar map as an 8-bit grayscale PNG stretched over its own
/// min..max range.
pub fn write_png_stretched(path: &Path, values: ArrayView2<f32>) -> Result<()> {
    ensure_parent(path)?;
    let (height, width) = values.dim();
    let (lo, hi) = values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut img = GrayImage::new(width as u32, height as u32);
    for ((r, c), &v) in values.indexed_iter() {
        let g = (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8;
        img.put_pixel(c as u32, r as u32, Luma([g]));
    }
    img.save(path)?;
    Ok(())
}
