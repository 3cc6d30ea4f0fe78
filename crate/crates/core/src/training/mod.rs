//! Adversarial optimization of the generator and discriminator on
//! synthetic unchanged pairs.

pub mod losses;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{stack, Array4, ArrayD, ArrayView3, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, CheckpointInfo};
use crate::data::{PartnerKind, PatchPair};
use crate::error::{CdError, Result};
use crate::networks::{GeneratorNoise, Networks};
use crate::nn::{Parameterized, Scalar};
use crate::pairs::{synthesize_unchanged, NoiseSpec};
use crate::seeding::{derive_seed, rng_for};

pub use losses::{loss_cgan_d, loss_g, loss_l1};

// Stream tags for counter-based seeding.
const STREAM_SHUFFLE: u64 = 1;
const STREAM_DROPOUT: u64 = 2;
const STREAM_HELDOUT: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub learning_rate_g: f64,
    pub learning_rate_d: f64,
    pub lambda_l1: f64,
    pub seed: u64,
    /// Draw a fresh noise realization for every pair each epoch.
    pub resample_noise: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 8,
            momentum: 0.5,
            learning_rate_g: 0.01,
            learning_rate_d: 0.01,
            lambda_l1: 100.0,
            seed: 0,
            resample_noise: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CdError::InvalidConfig(msg));
        if self.epochs < 1 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} must lie in [0, 1)", self.momentum));
        }
        if !(self.lambda_l1 >= 0.0) {
            return bad(format!("lambda_l1 {} must be non-negative", self.lambda_l1));
        }
        if !(self.learning_rate_g >= 0.0 && self.learning_rate_d >= 0.0) {
            return bad("learning rates must be non-negative".into());
        }
        Ok(())
    }
}

/// SGD with classical momentum: v ← μv + g, θ ← θ − ηv.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<ArrayD<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(learning_rate: f64, momentum: f64) -> Self {
        Sgd {
            learning_rate,
            momentum,
            velocity: Vec::new(),
        }
    }

    pub fn step<M: Parameterized<T> + ?Sized>(&mut self, model: &mut M) {
        let mut params = model.params_mut();
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| ArrayD::zeros(p.value.raw_dim())).collect();
        }
        let (lr, mu) = (T::of(self.learning_rate), T::of(self.momentum));
        for (p, v) in params.iter_mut().zip(self.velocity.iter_mut()) {
            ndarray::Zip::from(&mut p.value)
                .and(v)
                .and(&p.grad)
                .for_each(|w, v, &g| {
                    *v = mu * *v + g;
                    *w -= lr * *v;
                });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub d_loss: f64,
    pub g_adv: f64,
    pub g_l1: f64,
    pub d_real: f64,
    pub d_fake: f64,
}

impl StepRecord {
    fn is_finite(&self) -> bool {
        [self.d_loss, self.g_adv, self.g_l1, self.d_real, self.d_fake]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    /// Mean generator L1 on held-out synthetic unchanged pairs.
    pub heldout_l1: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub config: TrainConfig,
    pub records: Vec<StepRecord>,
    pub epochs: Vec<EpochSummary>,
}

impl TrainLog {
    pub const CSV_HEADER: &'static str = "epoch,step,d_loss,g_adv,g_l1,d_real,d_fake";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.epoch, r.step, r.d_loss, r.g_adv, r.g_l1, r.d_real, r.d_fake
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| CdError::io(path, e))?;
        f.write_all(self.to_csv().as_bytes())
            .map_err(|e| CdError::io(path, e))
    }
}

/// Where and with what metadata to write per-epoch checkpoints. `latest`
/// is rewritten every epoch, `best` whenever held-out L1 improves.
#[derive(Debug, Clone)]
pub struct CheckpointPlan {
    pub root: PathBuf,
    pub info: CheckpointInfo,
}

impl CheckpointPlan {
    pub fn latest(&self) -> PathBuf {
        self.root.join("latest")
    }

    pub fn best(&self) -> PathBuf {
        self.root.join("best")
    }
}

/// Inputs of one training run besides the networks.
#[derive(Debug, Clone)]
pub struct TrainInputs<'a> {
    pub training_set: &'a [PatchPair],
    /// t₁ tiles used only to track reconstruction quality across epochs.
    pub heldout: &'a [PatchPair],
    pub noise: NoiseSpec,
    pub generator_noise: GeneratorNoise,
}

fn stack_tiles<'a>(tiles: impl Iterator<Item = ArrayView3<'a, f32>>) -> Array4<f32> {
    let views: Vec<_> = tiles.collect();
    stack(Axis(0), &views).expect("tiles share one shape")
}

fn mean(a: &Array4<f32>) -> f64 {
    a.iter().map(|&v| v as f64).sum::<f64>() / a.len().max(1) as f64
}

/// Runs one discriminator update then one generator update on a batch.
pub fn train_step(
    nets: &mut Networks,
    opt_g: &mut Sgd<f32>,
    opt_d: &mut Sgd<f32>,
    x1: &Array4<f32>,
    x2_synthetic: &Array4<f32>,
    cfg: &TrainConfig,
    generator_noise: &GeneratorNoise,
    dropout_seed: u64,
) -> Result<(f64, f64, f64, f64, f64)> {
    let (fake, g_tape) = nets.generator.forward(x1.view(), generator_noise, dropout_seed)?;

    // Discriminator: real = (x₁, x̃₂), fake = (x₁, G(x₁, z)) with G frozen.
    let d = &mut nets.discriminator;
    d.zero_grad();
    let (p_real, tape_real) = d.forward(x1.view(), x2_synthetic.view())?;
    let (p_fake, tape_fake) = d.forward(x1.view(), fake.view())?;
    let d_loss = losses::loss_cgan_d(p_real.view(), p_fake.view());
    let (g_real, g_fake) = losses::loss_cgan_d_grads(p_real.view(), p_fake.view());
    d.backward(tape_real, g_real.view());
    d.backward(tape_fake, g_fake.view());
    opt_d.step(d);

    // Generator: non-saturating adversarial term through the updated D plus
    // the weighted L1 term.
    let (p_fake, tape_fake) = d.forward(x1.view(), fake.view())?;
    let g_adv = losses::loss_g_adv(p_fake.view());
    let g_l1 = losses::loss_l1(x2_synthetic.view(), fake.view())?;
    let grad_p = losses::loss_g_adv_grad(p_fake.view());
    let mut grad_fake = d.backward(tape_fake, grad_p.view());
    d.zero_grad();
    let l1_grad = losses::loss_l1_grad(x2_synthetic.view(), fake.view())?;
    grad_fake.scaled_add(cfg.lambda_l1 as f32, &l1_grad);
    nets.generator.zero_grad();
    nets.generator.backward(g_tape, grad_fake.view());
    opt_g.step(&mut nets.generator);

    Ok((
        d_loss as f64,
        g_adv as f64,
        g_l1 as f64,
        mean(&p_real),
        mean(&p_fake),
    ))
}

/// Mean generator L1 between synthetic partners and reconstructions of the
/// given tiles, with seeded dropout so the number is reproducible.
pub fn heldout_l1(
    nets: &Networks,
    tiles: &[PatchPair],
    noise: &NoiseSpec,
    generator_noise: &GeneratorNoise,
    batch_size: usize,
    seed: u64,
) -> Result<Option<f64>> {
    if tiles.is_empty() {
        return Ok(None);
    }
    let mut total = 0.0;
    for (b, chunk) in tiles.chunks(batch_size.max(1)).enumerate() {
        let x1 = stack_tiles(chunk.iter().map(|p| p.x1_patch.view()));
        let target = stack_tiles(
            chunk
                .iter()
                .map(|p| synthesize_unchanged(p.x1_patch.view(), &noise.for_patch(p.index, usize::MAX)))
                .collect::<Vec<_>>()
                .iter()
                .map(|a| a.view()),
        );
        let (recon, _) = nets.generator.forward(
            x1.view(),
            generator_noise,
            derive_seed(seed, &[STREAM_HELDOUT, b as u64]),
        )?;
        total += losses::loss_l1(target.view(), recon.view())? as f64 * chunk.len() as f64;
    }
    Ok(Some(total / tiles.len() as f64))
}

/// Trains for `cfg.epochs` epochs, alternating one D and one G update per
/// batch. Returns the final networks and the per-step log.
///
/// Only synthetic unchanged pairs are accepted: a pair carrying a real t₂
/// partner is rejected up front.
pub fn train(
    mut nets: Networks,
    inputs: &TrainInputs<'_>,
    cfg: &TrainConfig,
    checkpoints: Option<&CheckpointPlan>,
) -> Result<(Networks, TrainLog)> {
    cfg.validate()?;
    inputs.noise.validate()?;
    inputs.generator_noise.validate()?;
    let set = inputs.training_set;
    if set.is_empty() {
        return Err(CdError::InvalidConfig("training set is empty".into()));
    }
    if let Some(bad) = set.iter().find(|p| p.partner_kind != PartnerKind::SyntheticUnchanged) {
        return Err(CdError::InvalidConfig(format!(
            "patch {} carries a real t2 partner; training only accepts synthetic unchanged pairs",
            bad.index
        )));
    }

    let mut opt_g = Sgd::new(cfg.learning_rate_g, cfg.momentum);
    let mut opt_d = Sgd::new(cfg.learning_rate_d, cfg.momentum);
    let mut log = TrainLog {
        config: cfg.clone(),
        ..Default::default()
    };
    let mut best_l1 = f64::INFINITY;
    let mut last_good: Option<PathBuf> = None;
    let mut order: Vec<usize> = (0..set.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng_for(cfg.seed, &[STREAM_SHUFFLE, epoch as u64]));
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let x1 = stack_tiles(batch.iter().map(|&i| set[i].x1_patch.view()));
            let partners: Vec<_> = batch
                .iter()
                .map(|&i| {
                    let p = &set[i];
                    if cfg.resample_noise {
                        synthesize_unchanged(p.x1_patch.view(), &inputs.noise.for_patch(p.index, epoch))
                    } else {
                        p.partner.clone()
                    }
                })
                .collect();
            let x2 = stack_tiles(partners.iter().map(|a| a.view()));
            let dropout_seed = derive_seed(cfg.seed, &[STREAM_DROPOUT, epoch as u64, step as u64]);
            let (d_loss, g_adv, g_l1, d_real, d_fake) = train_step(
                &mut nets,
                &mut opt_g,
                &mut opt_d,
                &x1,
                &x2,
                cfg,
                &inputs.generator_noise,
                dropout_seed,
            )?;
            let record = StepRecord {
                epoch,
                step,
                d_loss,
                g_adv,
                g_l1,
                d_real,
                d_fake,
            };
            if !record.is_finite() {
                return Err(CdError::Divergence {
                    epoch,
                    step,
                    last_good,
                });
            }
            log.records.push(record);
        }

        let heldout = heldout_l1(
            &nets,
            inputs.heldout,
            &inputs.noise,
            &inputs.generator_noise,
            cfg.batch_size,
            cfg.seed,
        )?;
        log::info!(
            "epoch {epoch}/{}: held-out L1 {:?}, last d_loss {:.4}",
            cfg.epochs,
            heldout,
            log.records.last().map_or(f64::NAN, |r| r.d_loss)
        );
        log.epochs.push(EpochSummary {
            epoch,
            heldout_l1: heldout,
        });

        if let Some(plan) = checkpoints {
            checkpoint::save(&plan.latest(), &nets, &plan.info, epoch, heldout)?;
            last_good = Some(plan.latest());
            let score = heldout.unwrap_or_else(|| {
                log.records
                    .iter()
                    .filter(|r| r.epoch == epoch)
                    .map(|r| r.g_l1)
                    .sum::<f64>()
            });
            if score < best_l1 {
                best_l1 = score;
                checkpoint::save(&plan.best(), &nets, &plan.info, epoch, heldout)?;
            }
        }
    }
    Ok((nets, log))
}
