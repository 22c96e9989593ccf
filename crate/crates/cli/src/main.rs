use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracing::Level;

use lulc_cli::commands::{cmd_change, cmd_classify, cmd_composite, cmd_sweep, cmd_synth, cmd_train};
use lulc_cli::config::PipelineConfig;
use lulc_cli::{exit_code, EXIT_CONFIG, EXIT_INTERNAL};
use lulc_core::{LulcError, Result};

#[derive(Parser)]
#[command(
    name = "lulc",
    version,
    about = "Land use / land cover classification and change pipeline"
)]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log level: error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    log: Level,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline config file (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// QA bits to mask, e.g. `1,3,4`.
    #[arg(long, value_delimiter = ',')]
    qa_bits: Option<Vec<u8>>,
    /// Composite window length in months.
    #[arg(long)]
    composite_window: Option<u32>,
    /// Index bands appended as features, e.g. `ndvi,mndwi,ndbi`.
    #[arg(long, value_delimiter = ',')]
    indices: Option<Vec<String>>,
}

#[derive(Subcommand)]
enum Command {
    /// Cloud-mask and median-composite the configured scenes.
    Composite(Common),
    /// Build the labelled dataset and train the requested models.
    Train {
        #[command(flatten)]
        common: Common,
        /// cnn, rf, ann, kmeans or all (comma separated).
        #[arg(long, value_delimiter = ',')]
        model: Option<Vec<String>>,
        /// Cross-validation folds; 0 disables cross-validation.
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Classify every composite with a trained model.
    Classify {
        #[command(flatten)]
        common: Common,
        /// Model file (default: the first configured model's output).
        #[arg(long)]
        model_file: Option<PathBuf>,
    },
    /// Urban expansion map, class proportions and transitions.
    Change {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        urban_class: Option<usize>,
    },
    /// Accuracy as a function of training sample size.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        model: Option<String>,
    },
    /// Write synthetic scenes, labels, ground truth and a ready config.
    Synth {
        /// Config with a `[synth]` section; alternative to --out/--seed.
        #[arg(long, short, conflicts_with_all = ["out", "seed"])]
        config: Option<PathBuf>,
        #[arg(long, requires = "seed")]
        out: Option<PathBuf>,
        #[arg(long, requires = "out")]
        seed: Option<u64>,
    },
}

fn load(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&common.config)?;
    if let Some(b) = &common.qa_bits {
        cfg.composite.qa_bits = b.clone();
    }
    if let Some(w) = common.composite_window {
        cfg.composite.window_months = w;
    }
    if let Some(i) = &common.indices {
        cfg.indices.names = i.clone();
    }
    cfg.validate_common()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Composite(common) => cmd_composite(&load(&common)?).map(drop),
        Command::Train { common, model, folds } => {
            let mut cfg = load(&common)?;
            if let Some(m) = model {
                cfg.train.models = m;
            }
            if let Some(f) = folds {
                cfg.train.folds = f;
            }
            cmd_train(&cfg).map(drop)
        }
        Command::Classify { common, model_file } => cmd_classify(&load(&common)?, model_file.as_deref()).map(drop),
        Command::Change { common, urban_class } => {
            let mut cfg = load(&common)?;
            if let Some(u) = urban_class {
                cfg.classes.urban_class = u;
            }
            cfg.validate_common()?;
            cmd_change(&cfg).map(drop)
        }
        Command::Sweep { common, sizes, model } => {
            let mut cfg = load(&common)?;
            if let Some(s) = sizes {
                cfg.sweep.sizes = s;
            }
            if let Some(m) = model {
                cfg.sweep.model = m;
            }
            cmd_sweep(&cfg).map(drop)
        }
        Command::Synth { config, out, seed } => {
            let cfg = match (config, out, seed) {
                (Some(path), _, _) => PipelineConfig::load(path)?,
                (None, Some(out), Some(seed)) => {
                    let mut cfg = PipelineConfig::parse(&format!("version = 1\nseed = {seed}\n"))?;
                    cfg.output_dir = out;
                    cfg
                }
                _ => return Err(LulcError::Config("synth: pass --config, or --out with --seed".into())),
            };
            cmd_synth(&cfg).map(drop)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_max_level(cli.log)
        .with_writer(std::io::stderr)
        .init();

    if let Some(n) = cli.threads {
        if n == 0 || rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("error: --threads must be a positive integer");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    }
    let stage = match &cli.command {
        Command::Composite(_) => "composite",
        Command::Train { .. } => "train",
        Command::Classify { .. } => "classify",
        Command::Change { .. } => "change",
        Command::Sweep { .. } => "sweep",
        Command::Synth { .. } => "synth",
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            tracing::error!(stage, "{e}");
            ExitCode::from(exit_code(&e) as u8)
        }
        Err(_) => {
            tracing::error!(stage, "internal error");
            ExitCode::from(EXIT_INTERNAL as u8)
        }
    }
}
