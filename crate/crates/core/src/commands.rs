//! The four pipeline stages behind the command-line tool: generate a
//! synthetic scene, train on a t₁ image, detect changes, evaluate a map.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{s, Axis};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::data::{load_scene, normalize_with, BandStats};
use crate::error::{CdError, Result};
use crate::metrics::{confusion, report, MetricsReport};
use crate::networks::Networks;
use crate::pairs::prepare_pairs;
use crate::raster::{read_mask, read_raster, write_mask, write_png_stretched, write_raster, Provenance};
use crate::scoring::{detect_scene, Detection};
use crate::synthbench::{self, SUITE_VERSION};
use crate::training::{train, CheckpointPlan, TrainConfig, TrainInputs, TrainLog};

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CdError::io(parent, e))?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| CdError::io(path, e))
}

#[derive(Debug, Clone)]
pub struct SynthArgs {
    pub scenario: String,
    pub out: PathBuf,
    /// Replaces the scenario's own seed.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub x1: PathBuf,
    pub x2: PathBuf,
    pub mask: PathBuf,
    pub change_fraction: f64,
}

/// Writes x1, x2 and the reference mask of a named scenario to `out`.
pub fn cmd_synth(args: &SynthArgs) -> Result<SynthOutput> {
    let mut scenario = synthbench::scenario(&args.scenario).ok_or_else(|| {
        let known: Vec<_> = synthbench::standard_suite().iter().map(|s| s.name).collect();
        CdError::InvalidConfig(format!(
            "unknown scenario {:?}; known: {}",
            args.scenario,
            known.join(", ")
        ))
    })?;
    if let Some(seed) = args.seed {
        scenario.spec.seed = seed;
    }
    let spec_json = serde_json::to_vec(&scenario.spec)?;
    let provenance = Provenance {
        config_hash: hex::encode(&Sha256::digest(&spec_json)[..8]),
        seed: scenario.spec.seed,
        checkpoint_id: None,
        threshold: None,
        fusion: None,
        note: Some(format!("synthetic scenario {} (suite v{SUITE_VERSION})", scenario.name)),
    };
    let scene = synthbench::generate(&scenario.spec)?;
    let out = SynthOutput {
        x1: args.out.join("x1.bin"),
        x2: args.out.join("x2.bin"),
        mask: args.out.join("mask.bin"),
        change_fraction: {
            let m = scene.reference_mask().expect("generated scenes carry a mask");
            m.iter().filter(|&&v| v == 1).count() as f64 / m.len() as f64
        },
    };
    write_raster(&out.x1, scene.x1(), Some(&provenance))?;
    write_raster(&out.x2, scene.x2(), Some(&provenance))?;
    write_mask(&out.mask, scene.reference_mask().expect("mask"), Some(&provenance))?;
    write_json(
        &args.out.join("scenario.json"),
        &json!({
            "name": scenario.name,
            "suite_version": SUITE_VERSION,
            "declared_change_fraction": [scenario.change_fraction.start(), scenario.change_fraction.end()],
            "change_fraction": out.change_fraction,
            "spec": scenario.spec,
        }),
    )?;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub config: RunConfig,
    pub x1: PathBuf,
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub log: TrainLog,
    pub latest: PathBuf,
    pub best: PathBuf,
    pub config_hash: String,
}

/// Trains on the t₁ image alone and writes checkpoints, the step log and
/// the resolved configuration under `out`.
///
/// Band counts of both networks follow the input image.
pub fn cmd_train(args: &TrainArgs) -> Result<TrainOutput> {
    let x1 = read_raster(&args.x1)?;
    let mut cfg = args.config.resolved();
    cfg.data.x1 = Some(args.x1.clone());
    cfg.generator.bands = x1.dim().0;
    cfg.discriminator.bands = x1.dim().0;
    cfg.validate()?;

    let stats = BandStats::from_raster(x1.view());
    stats.validate()?;
    let x1 = stats.normalize(x1.view())?;
    let (training_set, heldout, split) = prepare_pairs(
        x1.view(),
        cfg.data.patch_size,
        cfg.data.train_fraction,
        &cfg.noise,
        cfg.split_seed(),
    )?;
    log::info!(
        "{} training and {} held-out patches of {} px",
        training_set.len(),
        heldout.len(),
        cfg.data.patch_size
    );
    let nets = Networks::init(cfg.generator, cfg.discriminator, cfg.seed)?;
    let plan = CheckpointPlan {
        root: args.out.join("checkpoints"),
        info: cfg.checkpoint_info(Some(stats)),
    };
    fs::create_dir_all(&args.out).map_err(|e| CdError::io(&args.out, e))?;
    let config_path = args.out.join("config.toml");
    fs::write(&config_path, cfg.to_toml_string()).map_err(|e| CdError::io(&config_path, e))?;
    write_json(&args.out.join("split.json"), &serde_json::to_value(&split)?)?;

    let inputs = TrainInputs {
        training_set: &training_set,
        heldout: &heldout,
        noise: cfg.noise,
        generator_noise: cfg.generator_noise,
    };
    let (_, log) = train(nets, &inputs, &cfg.train, Some(&plan))?;
    log.write_csv(&args.out.join("train_log.csv"))?;
    Ok(TrainOutput {
        log,
        latest: plan.latest(),
        best: plan.best(),
        config_hash: cfg.hash(),
    })
}

#[derive(Debug, Clone)]
pub struct DetectArgs {
    pub config: RunConfig,
    pub x1: PathBuf,
    pub x2: PathBuf,
    pub checkpoint: PathBuf,
    pub out: PathBuf,
    pub dump_intermediates: bool,
}

#[derive(Debug, Clone)]
pub struct DetectOutput {
    pub detection: Detection,
    pub change_map: PathBuf,
}

/// Runs the detection chain with a stored checkpoint and writes the change
/// map (and optionally every intermediate score map) under `out`.
///
/// Patch size, generator noise and band statistics come from the
/// checkpoint; fusion, threshold policy and seed from the configuration.
pub fn cmd_detect(args: &DetectArgs) -> Result<DetectOutput> {
    let cfg = args.config.resolved();
    cfg.threshold.validate()?;
    let (nets, manifest) = checkpoint::load(&args.checkpoint)?;
    let scene = load_scene(&args.x1, &args.x2, None)?;
    if scene.bands() != nets.bands() {
        return Err(CdError::CheckpointMismatch(format!(
            "scene has {} bands, checkpoint {} was trained on {}",
            scene.bands(),
            manifest.checkpoint_id,
            nets.bands()
        )));
    }
    let stats = match &manifest.band_stats {
        Some(stats) => stats.clone(),
        None => {
            log::warn!("checkpoint has no band statistics; using the scene's own t1 statistics");
            BandStats::from_raster(scene.x1())
        }
    };
    let scene = normalize_with(&scene, &stats)?;
    let mut detect = cfg.detect_config();
    detect.patch_size = manifest.patch_size;
    detect.noise = manifest.generator_noise;
    let detection = detect_scene(&scene, &nets, &detect)?;

    let provenance = Provenance {
        threshold: Some(detect.threshold),
        fusion: Some(detect.fusion),
        ..cfg.provenance(Some(manifest.checkpoint_id.clone()))
    };
    let change_map = args.out.join("change_map.bin");
    write_mask(&change_map, detection.change_map.mask.view(), Some(&provenance))?;
    if args.dump_intermediates {
        for raster in detection.intermediates() {
            let stem = raster.kind.stem();
            let values = raster.values.view().insert_axis(Axis(0));
            write_raster(&args.out.join(format!("{stem}.bin")), values, Some(&provenance))?;
            write_png_stretched(&args.out.join(format!("{stem}.png")), raster.values.view())?;
        }
    }
    let (height, width) = detection.change_map.mask.dim();
    write_json(
        &args.out.join("detection.json"),
        &json!({
            "provenance": provenance,
            "height": height,
            "width": width,
            "change_fraction": detection.change_map.change_fraction(),
            "fused_degenerate": detection.fused.degenerate,
        }),
    )?;
    Ok(DetectOutput {
        detection,
        change_map,
    })
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub prediction: PathBuf,
    pub reference: PathBuf,
    /// Directory receiving `metrics.json`.
    pub out: Option<PathBuf>,
    /// Crop the reference to the prediction's extent, anchored top-left.
    /// Detection drops partial edge tiles, so its map can be smaller.
    pub crop_to_prediction: bool,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<MetricsReport> {
    let prediction = read_mask(&args.prediction)?;
    let mut reference = read_mask(&args.reference)?;
    let (ph, pw) = prediction.dim();
    let (rh, rw) = reference.dim();
    if args.crop_to_prediction && ph <= rh && pw <= rw {
        reference = reference.slice(s![..ph, ..pw]).to_owned();
    }
    let metrics = report(confusion(prediction.view(), reference.view())?)?;
    if let Some(out) = &args.out {
        write_json(&out.join("metrics.json"), &metrics.to_json())?;
    }
    Ok(metrics)
}

/// Training defaults used for the 256×256 synthetic scenes: 16-pixel
/// patches give the optimizer enough steps in 30 epochs.
pub fn synthetic_config(seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = seed;
    cfg.data.patch_size = 16;
    cfg.data.train_fraction = 0.8;
    cfg.train = TrainConfig {
        epochs: 30,
        learning_rate_g: 0.005,
        learning_rate_d: 0.5,
        ..TrainConfig::default()
    };
    cfg
}
