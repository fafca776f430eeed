use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use navigan_cli::commands::{cmd_evaluate, cmd_ingest, cmd_train, EvalOptions, EvalPolicy};
use navigan_cli::config::ExperimentConfig;
use navigan_cli::plot::cmd_plot;
use navigan_core::training::EpochLog;

#[derive(Parser)]
#[command(name = "navigan", version, about = "Socially aware navigation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; every key is optional.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set epochs=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::load(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse datasets and write windowed sample shards plus a summary.
    Ingest(Common),
    /// Train the configured variant; writes model.bin and train_log.csv.
    Train(Common),
    /// Roll out playback episodes and report metrics.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Model bundle to evaluate (default: <out_dir>/model.bin).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Replay the recorded trajectories instead of a model.
        #[arg(long, conflicts_with_all = ["model", "stationary", "intention_only"])]
        human_playback: bool,
        /// A policy that never moves.
        #[arg(long, conflicts_with_all = ["model", "intention_only"])]
        stationary: bool,
        /// Plan with the intention branch only, dropping social forces.
        #[arg(long)]
        intention_only: bool,
        /// Store per-step positions of everyone for plotting.
        #[arg(long)]
        dump_paths: bool,
    },
    /// Render one episode from an evaluate dump as SVG.
    Plot {
        /// Episode dump written by `evaluate --dump-paths`.
        dump: PathBuf,
        /// Episode position in the dump, from 0.
        #[arg(long)]
        episode: usize,
        /// Second dump (intention-only run) drawn side by side.
        #[arg(long)]
        dagger: Option<PathBuf>,
        /// Step to draw; default is the last.
        #[arg(long)]
        step: Option<usize>,
        #[arg(long, short, default_value = "episode.svg")]
        out: PathBuf,
    },
}

/// Runs one command and returns what it prints.
fn run(cli: Cli) -> Result<String> {
    let mut out = String::new();
    match cli.command {
        Command::Ingest(common) => {
            let cfg = common.load()?;
            for set in cmd_ingest(&cfg)? {
                writeln!(
                    out,
                    "{}: {} scenes, {} agents, {} samples, {} episodes",
                    set.name,
                    set.scenes.len(),
                    set.agents,
                    set.samples,
                    set.episodes
                )?;
            }
            writeln!(out, "wrote {}", cfg.out_dir.join("ingest_summary.json").display())?;
        }
        Command::Train(common) => {
            let cfg = common.load()?;
            let trained = cmd_train(&cfg)?;
            if let Some(last) = trained.epochs.last() {
                writeln!(out, "{}", EpochLog::csv_header(cfg.variant))?;
                writeln!(out, "{}", last.csv_row())?;
            }
            writeln!(out, "wrote {} and {}", trained.model.display(), trained.log.display())?;
        }
        Command::Evaluate {
            common,
            model,
            human_playback,
            stationary,
            intention_only,
            dump_paths,
        } => {
            let cfg = common.load()?;
            let policy = if human_playback {
                EvalPolicy::Human
            } else if stationary {
                EvalPolicy::Stationary
            } else {
                EvalPolicy::Model {
                    checkpoint: model.unwrap_or_else(|| cfg.out_dir.join("model.bin")),
                    intention_only,
                }
            };
            let done = cmd_evaluate(&cfg, &EvalOptions { policy, dump_paths })?;
            let r = &done.report;
            writeln!(
                out,
                "{}: episodes {} social {:.3} comfort {:.3} arrival {:.3} ade {:.3} fde {:.3}",
                done.label, r.n_episodes, r.social_score, r.comfort_rate, r.arrival_rate, r.ade, r.fde
            )?;
            writeln!(out, "wrote {}", done.dump.display())?;
        }
        Command::Plot {
            dump,
            episode,
            dagger,
            step,
            out: svg,
        } => {
            cmd_plot(&dump, episode, dagger.as_deref(), step, &svg)?;
            writeln!(out, "wrote {}", svg.display())?;
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(text) => {
            // A closed pipe (e.g. `| head -1`) is not a failure.
            match std::io::stdout().write_all(text.as_bytes()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    eprintln!("error: writing output: {e}");
                    ExitCode::FAILURE
                }
                _ => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
