use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use navigan_core::metrics::{append_ledger, report, LedgerEntry, MetricsReport};
use navigan_core::playback::{build_episode_set, rollout_all, write_episode_dump, PolicyKind};
use navigan_core::scene::extract_windows;
use navigan_core::shard::write_shard;
use navigan_core::training::{EpochLog, Trainer};
use navigan_core::{ModelBundle, TrainingSample};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub scene: String,
    pub agents: usize,
    pub samples: usize,
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetSummary {
    pub name: String,
    pub agents: usize,
    pub samples: usize,
    pub episodes: usize,
    pub scenes: Vec<SceneSummary>,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Train sets followed by eval sets, without repeats.
fn all_sets(cfg: &ExperimentConfig) -> Vec<String> {
    let mut sets: Vec<String> = Vec::new();
    for s in cfg.train_sets.iter().chain(&cfg.eval_sets) {
        if !sets.contains(s) {
            sets.push(s.clone());
        }
    }
    sets
}

/// Parses every configured split, writes one sample shard per recording
/// under `out_dir/shards/<set>/`, and a summary to `out_dir/ingest_summary.json`.
pub fn cmd_ingest(cfg: &ExperimentConfig) -> Result<Vec<SetSummary>> {
    let frame = cfg.frame()?;
    let params = cfg.episode_params();
    let mut summary = Vec::new();
    for set in all_sets(cfg) {
        let dir = cfg.out_dir.join("shards").join(&set);
        create_dir(&dir)?;
        let mut scenes = Vec::new();
        for scene in cfg.load_set(&set)? {
            let samples = extract_windows(&scene, frame, cfg.stride);
            let scene = Arc::new(scene);
            let episodes = build_episode_set(&scene, frame, &params).len();
            let path = dir.join(format!("{}.jsonl", scene.name));
            write_shard(&path, &scene.name, frame, cfg.stride, &samples)?;
            scenes.push(SceneSummary {
                scene: scene.name.clone(),
                agents: scene.num_agents(),
                samples: samples.len(),
                episodes,
            });
        }
        summary.push(SetSummary {
            name: set,
            agents: scenes.iter().map(|s| s.agents).sum(),
            samples: scenes.iter().map(|s| s.samples).sum(),
            episodes: scenes.iter().map(|s| s.episodes).sum(),
            scenes,
        });
    }
    let path = cfg.out_dir.join("ingest_summary.json");
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(summary)
}

pub fn load_samples(cfg: &ExperimentConfig, sets: &[String]) -> Result<Vec<TrainingSample>> {
    let frame = cfg.frame()?;
    let mut samples = Vec::new();
    for set in sets {
        for scene in cfg.load_set(set)? {
            samples.extend(extract_windows(&scene, frame, cfg.stride));
        }
    }
    if samples.is_empty() {
        bail!("no training windows of {} steps in {}", frame.t_end(), sets.join(", "));
    }
    Ok(samples)
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: PathBuf,
    pub log: PathBuf,
    pub epochs: Vec<EpochLog>,
}

/// Trains on the train sets. Writes `model.bin`, the CSV loss log
/// `train_log.csv`, the resolved `config.toml`, and optional checkpoints.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    let samples = load_samples(cfg, &cfg.train_sets)?;
    create_dir(&cfg.out_dir)?;
    let resolved = cfg.out_dir.join("config.toml");
    fs::write(&resolved, toml::to_string(cfg)?).with_context(|| format!("writing {}", resolved.display()))?;

    let mut trainer = Trainer::new(&samples, cfg.train_config(), cfg.loss_weights())?;
    let log_path = cfg.out_dir.join("train_log.csv");
    let mut log = format!("{}\n", EpochLog::csv_header(cfg.variant));
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for e in 0..cfg.epochs {
        let entry = trainer.run_epoch()?;
        log.push_str(&entry.csv_row());
        log.push('\n');
        // Rewritten each epoch so a crash leaves the curve so far.
        fs::write(&log_path, &log).with_context(|| format!("writing {}", log_path.display()))?;
        epochs.push(entry);
        if cfg.checkpoint_every > 0 && (e + 1) % cfg.checkpoint_every == 0 {
            let dir = cfg.out_dir.join("checkpoints");
            create_dir(&dir)?;
            trainer.bundle().save(dir.join(format!("epoch_{:04}.bin", e + 1)))?;
        }
    }
    if cfg.epochs == 0 {
        fs::write(&log_path, &log).with_context(|| format!("writing {}", log_path.display()))?;
    }
    let model = cfg.out_dir.join("model.bin");
    trainer.bundle().save(&model)?;
    Ok(TrainOutcome {
        model,
        log: log_path,
        epochs,
    })
}

#[derive(Debug, Clone)]
pub enum EvalPolicy {
    Model { checkpoint: PathBuf, intention_only: bool },
    Human,
    Stationary,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub policy: EvalPolicy,
    pub dump_paths: bool,
}

#[derive(Debug)]
pub struct EvalOutcome {
    pub label: String,
    pub report: MetricsReport,
    pub dump: PathBuf,
}

/// Rolls out every episode of the eval sets, writes the episode dump and
/// metrics, and appends a line to `out_dir/ledger.jsonl`.
pub fn cmd_evaluate(cfg: &ExperimentConfig, opts: &EvalOptions) -> Result<EvalOutcome> {
    let frame = cfg.frame()?;
    let params = cfg.episode_params();
    let mut specs = Vec::new();
    for set in &cfg.eval_sets {
        for scene in cfg.load_set(set)? {
            specs.extend(build_episode_set(&Arc::new(scene), frame, &params));
        }
    }
    if specs.is_empty() {
        bail!("no episodes in {}", cfg.eval_sets.join(", "));
    }
    let bundle = match &opts.policy {
        EvalPolicy::Model { checkpoint, .. } => {
            let b = ModelBundle::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
            if b.frame != frame {
                bail!(
                    "model bundle dimension mismatch: {} was trained with ({}, {}) steps, config asks for ({}, {})",
                    checkpoint.display(),
                    b.frame.t_obs,
                    b.frame.t_pred,
                    frame.t_obs,
                    frame.t_pred
                );
            }
            Some(b)
        }
        _ => None,
    };
    let (kind, label) = match (&opts.policy, &bundle) {
        (EvalPolicy::Model { intention_only, .. }, Some(b)) => (
            PolicyKind::Model {
                bundle: b,
                intention_only: *intention_only,
                seed: cfg.seed,
            },
            if *intention_only {
                format!("{}_INTENTION_ONLY", b.variant)
            } else {
                b.variant.to_string()
            },
        ),
        (EvalPolicy::Stationary, _) => (PolicyKind::Stationary, "STATIONARY".to_string()),
        _ => (PolicyKind::Human, "HUMAN".to_string()),
    };
    let episodes = rollout_all(kind, &specs, opts.dump_paths)?;
    let report = report(&episodes, cfg.comfort_distance)?;

    create_dir(&cfg.out_dir)?;
    let stem = label.to_ascii_lowercase();
    let dump = cfg.out_dir.join(format!("episodes_{stem}.jsonl"));
    write_episode_dump(&dump, &episodes)?;
    let metrics = cfg.out_dir.join(format!("metrics_{stem}.json"));
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(&metrics, text).with_context(|| format!("writing {}", metrics.display()))?;
    append_ledger(
        cfg.out_dir.join("ledger.jsonl"),
        &LedgerEntry {
            variant: label.clone(),
            split: cfg.eval_sets.join("+"),
            seed: cfg.seed,
            report,
        },
    )?;
    Ok(EvalOutcome { label, report, dump })
}
