use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cdgan_core::commands::{cmd_detect, cmd_eval, cmd_synth, cmd_train, DetectArgs, EvalArgs, SynthArgs, TrainArgs};
use cdgan_core::config::RunConfig;
use cdgan_core::scoring::FusionMode;
use cdgan_core::threshold::ThresholdMode;
use cdgan_core::CdError;

#[derive(Parser, Debug)]
#[command(name = "cdgan", version, about = "Self-supervised GAN change detection for bitemporal rasters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; overrides the configuration's.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the configuration's.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 1 guarantees bit-exact output.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic benchmark scene (x1, x2, reference mask).
    Synth {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train on the t1 image only.
    Train {
        #[arg(long)]
        x1: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        patch_size: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Produce a binary change map from a trained checkpoint.
    Detect {
        #[arg(long)]
        x1: PathBuf,
        #[arg(long)]
        x2: PathBuf,
        /// Checkpoint directory (e.g. <train-out>/checkpoints/best).
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long, value_enum)]
        threshold: Option<Threshold>,
        /// Also write e_r, s_real, s_gen, s_dif and h rasters with PNG previews.
        #[arg(long)]
        dump_intermediates: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Compare a change map with a reference mask.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Directory receiving metrics.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Crop the reference to the prediction's extent (detection drops
        /// partial edge tiles).
        #[arg(long)]
        crop_to_prediction: bool,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Mode {
    Literal,
    Aligned,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Threshold {
    Otsu,
    Local,
}

fn load_config(common: &Common) -> Result<RunConfig, CdError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output = Some(out.clone());
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output.clone().unwrap_or_else(|| PathBuf::from("cdgan-out"))
}

fn with_threads<T>(threads: Option<usize>, f: impl FnOnce() -> Result<T, CdError> + Send) -> Result<T, CdError>
where
    T: Send,
{
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| CdError::InvalidConfig(format!("thread pool: {e}")))?
            .install(f),
    }
}

fn run(cli: Cli) -> Result<(), CdError> {
    match cli.command {
        Command::Synth { scenario, out, seed } => {
            let written = cmd_synth(&SynthArgs { scenario, out, seed })?;
            println!("x1: {}", written.x1.display());
            println!("x2: {}", written.x2.display());
            println!("mask: {}", written.mask.display());
            println!("change fraction: {:.4}", written.change_fraction);
        }
        Command::Train { x1, epochs, patch_size, common } => {
            let mut config = load_config(&common)?;
            if let Some(epochs) = epochs {
                config.train.epochs = epochs;
            }
            if let Some(p) = patch_size {
                config.data.patch_size = p;
            }
            let out = out_dir(&config);
            let result = with_threads(common.threads, || cmd_train(&TrainArgs { config, x1, out }))?;
            if let Some(last) = result.log.epochs.last() {
                println!("epoch {}: held-out L1 {:?}", last.epoch, last.heldout_l1);
            }
            println!("config hash: {}", result.config_hash);
            println!("best checkpoint: {}", result.best.display());
            println!("latest checkpoint: {}", result.latest.display());
        }
        Command::Detect { x1, x2, checkpoint, mode, threshold, dump_intermediates, common } => {
            let mut config = load_config(&common)?;
            match mode {
                Some(Mode::Literal) => config.fusion.mode = FusionMode::Literal,
                Some(Mode::Aligned) => config.fusion.mode = FusionMode::PolarityAligned,
                None => {}
            }
            match threshold {
                Some(Threshold::Otsu) => config.threshold.mode = ThresholdMode::GlobalOtsu,
                Some(Threshold::Local) => config.threshold.mode = ThresholdMode::LocalAdaptive,
                None => {}
            }
            let out = out_dir(&config);
            let args = DetectArgs { config, x1, x2, checkpoint, out, dump_intermediates };
            let result = with_threads(common.threads, || cmd_detect(&args))?;
            println!("change map: {}", result.change_map.display());
            println!("change fraction: {:.4}", result.detection.change_map.change_fraction());
        }
        Command::Eval { pred, reference, out, crop_to_prediction } => {
            let metrics = cmd_eval(&EvalArgs { prediction: pred, reference, out: out.clone(), crop_to_prediction })?;
            println!("{metrics}");
            if let Some(dir) = out {
                println!("metrics: {}", Path::new(&dir).join("metrics.json").display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
