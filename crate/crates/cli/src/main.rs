use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gmfn_cli::ablate::cmd_ablate;
use gmfn_cli::commands::{cmd_eval, cmd_info, cmd_train, resolve_config};
use gmfn_cli::features::{cmd_dump_features, default_taps, Tap};
use gmfn_cli::{Checkpoint, CliError, DataSource, Result, RunConfig};

#[derive(Parser)]
#[command(name = "gmfn", version, about = "Gated multiple feedback network for image super-resolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Flat `key = value` configuration file, applied on top of the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// final, study, sm-baseline, tiny or ablate-tiny.
    #[arg(long)]
    preset: Option<String>,
    /// Directory of HR PNGs, or synthetic:<count>:<size>:<seed>.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    scale: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Bicubic,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoints plus a CSV loss log.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Score a checkpoint (or bicubic) on a dataset and save SR images.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
    },
    /// Train and score every point of a one-axis sweep.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// n, m, m_bar, t or gate (default: the sweep_axis key).
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated axis values (default: the sweep_values key).
        #[arg(long)]
        values: Option<String>,
    },
    /// Save channel-averaged feature maps as grayscale PNGs.
    DumpFeatures {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Image fed to the network as its LR input.
        #[arg(long)]
        image: PathBuf,
        /// Comma-separated taps such as F_L0_t1,F_H1_t2,refined_1_t2.
        #[arg(long)]
        taps: Option<String>,
        #[arg(long, default_value = "features")]
        out: PathBuf,
    },
    /// Print the configuration and parameter counts of a checkpoint.
    Info {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn run_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = resolve_config(c.preset.as_deref(), c.config.as_deref())?;
    if let Some(s) = &c.dataset {
        cfg.set("train_dataset", s)?;
    }
    if let Some(s) = c.scale {
        cfg.model.scale = s;
    }
    if let Some(s) = c.seed {
        cfg.train.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common } => {
            let cfg = run_config(&common)?;
            let s = cmd_train(&cfg, |line| println!("{line}"))?;
            println!("trained iterations={} final_loss={} out={}", s.iterations, s.final_loss, s.output_dir.display());
        }
        Command::Eval { common, checkpoint, baseline } => {
            if common.preset.is_some() || common.config.is_some() || common.seed.is_some() {
                return Err(CliError::Usage("eval takes --checkpoint or --baseline, not --preset/--config/--seed".into()));
            }
            let ck = checkpoint.as_deref().map(Checkpoint::load).transpose()?;
            let dataset = common
                .dataset
                .as_deref()
                .map(|s| s.parse::<DataSource>().map_err(|e| CliError::invalid("dataset", e)))
                .transpose()?;
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("eval"));
            let report = cmd_eval(ck.as_ref(), baseline.is_some(), dataset.as_ref(), common.scale, &out)?;
            for s in &report.images {
                println!("{} psnr={:.4} ssim={:.4}", s.name, s.psnr, s.ssim);
            }
            println!("{}", report.summary());
        }
        Command::Ablate { common, axis, values } => {
            let mut cfg = run_config(&common)?;
            if common.dataset.is_some() {
                return Err(CliError::Usage("set train_dataset/val_dataset in the config for ablate".into()));
            }
            if let Some(v) = &values {
                cfg.set("sweep_values", v)?;
            }
            let axis = axis.unwrap_or_else(|| cfg.sweep_axis.clone());
            let res = cmd_ablate(&cfg, &axis, &cfg.sweep_values, |line| println!("{line}"))?;
            println!("csv={} plot={}", res.csv_path.display(), res.plot_path.display());
        }
        Command::DumpFeatures { checkpoint, image, taps, out } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let taps = match taps {
                Some(list) => list.split(',').map(|t| t.trim().parse::<Tap>()).collect::<Result<Vec<_>>>()?,
                None => default_taps(&ck)?,
            };
            for p in cmd_dump_features(&ck, &image, &taps, &out)? {
                println!("{}", p.display());
            }
        }
        Command::Info { checkpoint } => {
            print!("{}", cmd_info(&Checkpoint::load(&checkpoint)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            eprintln!("{}", CliError::Usage(first).report_line());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report_line());
            ExitCode::FAILURE
        }
    }
}
