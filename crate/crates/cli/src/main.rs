use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use spatial_probe::error::ErrorKind;
use spatial_probe::experiment::{
    cmd_gen, cmd_plot, cmd_probe, cmd_report, cmd_train, plot::Artifact, ExperimentConfig, Preset, Workspace,
    WORKSPACE_ENV,
};
use spatial_probe::scene::DatasetKind;
use std::path::PathBuf;
use std::process::ExitCode;

/// Scene simulation, mask-network training and feature clustering probes.
#[derive(Parser, Debug)]
#[command(name = "spatial-probe", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON experiment configuration; defaults to the chosen preset.
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Global seed; model, training, probe and dataset seeds derive from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Workspace directory holding datasets, runs, reports and plots.
    #[arg(long, global = true, env = WORKSPACE_ENV)]
    workspace: Option<PathBuf>,
    /// Built-in configuration: paper or desk.
    #[arg(long, global = true)]
    preset: Option<Preset>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render datasets into the workspace.
    Gen {
        /// Dataset kind (repeatable); defaults to the training set and every test set.
        #[arg(long = "kind")]
        kinds: Vec<DatasetKind>,
        /// Number of sequences per dataset, overriding the configuration.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train the network on the configured training dataset.
    Train {
        /// Continue from the run's last checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Cluster the tapped features of the test datasets and write reports.
    Probe {
        /// Dataset kind (repeatable); defaults to every configured test set.
        #[arg(long = "kind")]
        kinds: Vec<DatasetKind>,
    },
    /// Draw SVG figures for one test sequence.
    Plot {
        /// phase-mask, features, clusters or target (repeatable); defaults to all.
        #[arg(long = "artifact")]
        artifacts: Vec<Artifact>,
        #[arg(long, default_value = "DST-clean")]
        kind: DatasetKind,
        #[arg(long, default_value_t = 0)]
        sequence: usize,
    },
    /// Collect the probe reports into one table.
    Report,
    /// Print the resolved configuration as JSON.
    Config,
}

fn resolve_config(c: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::preset(c.preset.unwrap_or(Preset::Desk)),
    };
    if let Some(seed) = c.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(ws) = &c.workspace {
        cfg.workspace = ws.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = resolve_config(&cli.common)?;
    if let Command::Config = cli.command {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    let _lock = Workspace::new(&cfg.workspace).lock()?;
    match cli.command {
        Command::Gen { kinds, count } => {
            let kinds = if kinds.is_empty() {
                std::iter::once(cfg.data.train_kind)
                    .chain(cfg.data.test_kinds.iter().copied())
                    .collect()
            } else {
                kinds
            };
            for m in cmd_gen(&cfg, &kinds, count)? {
                println!("{}: {} sequences", m.kind, m.entries.len());
            }
        }
        Command::Train { resume } => {
            let report = cmd_train(&cfg, resume).context("training failed")?;
            if let Some(last) = report.epochs.last() {
                println!(
                    "step {} epoch {} train loss {:.6}{}",
                    last.step,
                    last.epoch,
                    last.train_loss,
                    last.val_loss.map(|v| format!(" val loss {v:.6}")).unwrap_or_default()
                );
            }
            println!("model checksum {}", report.checkpoint.model.params.checksum());
        }
        Command::Probe { kinds } => {
            let kinds = if kinds.is_empty() { cfg.data.test_kinds.clone() } else { kinds };
            cmd_probe(&cfg, &kinds)?;
            print!("{}", cmd_report(&cfg)?);
        }
        Command::Plot {
            artifacts,
            kind,
            sequence,
        } => {
            let artifacts = if artifacts.is_empty() { Artifact::ALL.to_vec() } else { artifacts };
            for path in cmd_plot(&cfg, &artifacts, kind, sequence)? {
                println!("{}", path.display());
            }
        }
        Command::Report => print!("{}", cmd_report(&cfg)?),
        Command::Config => unreachable!(),
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let kind = err
        .chain()
        .find_map(|e| e.downcast_ref::<spatial_probe::Error>())
        .map(spatial_probe::Error::kind);
    match kind {
        Some(ErrorKind::Config) => 2,
        Some(ErrorKind::Numeric) => 4,
        // Unclassified failures are I/O or serialization problems.
        Some(ErrorKind::Data) | None => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
