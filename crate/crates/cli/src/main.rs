//! `updatenet`: generate synthetic sequences, train UpdateNet, track, and
//! report. Every command reads one experiment config and writes a manifest.

mod commands;
mod config;
mod manifest;
mod reports;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::{Protocol, TrackArgs, UsageError};
use config::ExperimentConfig;
use reports::AnalysisKind;

#[derive(Parser)]
#[command(name = "updatenet", version, about = "Learned template updates for a Siamese tracker")]
struct Cli {
    /// Experiment config (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the configured scenes to sequence directories.
    Gen {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Multi-stage UpdateNet training on generated sequences.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        stages: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also fit the three-weight fusion baseline.
        #[arg(long)]
        fusion: bool,
    },
    /// Run one update strategy over every sequence.
    Track {
        #[arg(long)]
        data: Option<PathBuf>,
        /// none | linear:<gamma> | fusion:<a>,<b>,<c> | updatenet:<path>
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "ope")]
        protocol: Protocol,
        /// Write per-frame templates and top-channel filmstrips.
        #[arg(long)]
        dump_templates: bool,
        /// Extract templates at ground-truth boxes instead of predictions.
        #[arg(long)]
        gt_locations: bool,
    },
    /// Summarize trajectories into JSON and CSV reports.
    Eval {
        #[arg(long, value_enum)]
        protocol: Protocol,
        /// Track directories, or directories containing them.
        #[arg(long = "in", num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Ground-truth sequences, if not where the tracks were made from.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Change-rate, channel-dynamics and update-rate sweep curves.
    Analyze {
        #[arg(long, value_enum)]
        kind: AnalysisKind,
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    let cfg = ExperimentConfig::load(cli.config.as_deref(), cli.seed)?;
    let ws = cfg.workspace();
    let or_ws = |p: Option<PathBuf>, rel: &str| p.unwrap_or_else(|| ws.join(rel));
    match cli.command {
        Command::Gen { out } => commands::gen(&cfg, &or_ws(out, "data")),
        Command::Train { data, stages, out, fusion } => {
            commands::train(&cfg, &or_ws(data, "data"), stages, &or_ws(out, "model"), fusion)
        }
        Command::Track { data, strategy, out, protocol, dump_templates, gt_locations } => {
            let strategy = match (strategy, cfg.strategies.as_slice()) {
                (Some(s), _) => s,
                (None, [only]) => only.clone(),
                (None, _) => return commands::usage("pass --strategy, or list exactly one strategy in the config"),
            };
            let data = or_ws(data, "data");
            let out = or_ws(out, &format!("tracks/{}", commands::slug(&strategy)));
            let args = TrackArgs {
                data: &data,
                data_label: data.to_string_lossy().into_owned(),
                strategy: &strategy,
                out: &out,
                protocol,
                dump_templates,
                gt_locations,
            };
            commands::track(&cfg, &args)
        }
        Command::Eval { protocol, inputs, out, data } => {
            let inputs = if inputs.is_empty() { vec![ws.join("tracks")] } else { inputs };
            let out = or_ws(out, "report.json");
            let report = reports::eval(&cfg, protocol, &inputs, data.as_deref(), &out)?;
            for r in &report.rows {
                println!("{}", serde_json::to_string(r)?);
            }
            Ok(())
        }
        Command::Analyze { kind, inputs, out } => reports::analyze(&cfg, kind, &inputs, Path::new(&out)),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("usage error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
