//! Experiment configuration: one flat TOML file plus `key=value` overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use navigan_core::generators::ModelDims;
use navigan_core::playback::EpisodeParams;
use navigan_core::scene::{parse_trajectory_file, DEFAULT_FRAME_RATE};
use navigan_core::training::{LossWeights, TrainConfig};
use navigan_core::{FrameConfig, Scene, Variant};

/// Every key is optional; unset keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Directory holding one entry per dataset split: either `<name>.txt`
    /// or a directory `<name>/` of `.txt` recordings.
    pub data_root: PathBuf,
    pub train_sets: Vec<String>,
    pub eval_sets: Vec<String>,
    pub frame_rate: f64,
    pub t_obs: usize,
    pub t_pred: usize,
    /// Window start spacing for training samples, in steps.
    pub stride: usize,

    pub variant: Variant,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub grad_clip: f64,
    pub discriminator_updates: bool,
    /// Save a checkpoint every this many epochs; 0 keeps only the final model.
    pub checkpoint_every: usize,

    pub w_l2: f64,
    pub w_fde: f64,
    pub w_resist: f64,
    pub w_adv: f64,
    pub d_safe: f64,

    pub goal_horizons: usize,
    pub cutoff_horizons: usize,
    pub arrival_tolerance: f64,
    pub comfort_distance: f64,
    pub episode_stride: usize,

    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let weights = LossWeights::default();
        let episodes = EpisodeParams::default();
        let frame = FrameConfig::default();
        ExperimentConfig {
            data_root: PathBuf::from("data/toy_crossing"),
            train_sets: vec!["train".into()],
            eval_sets: vec!["test".into()],
            frame_rate: DEFAULT_FRAME_RATE,
            t_obs: frame.t_obs,
            t_pred: frame.t_pred,
            stride: 1,
            variant: train.variant,
            batch_size: train.batch_size,
            epochs: train.epochs,
            learning_rate: train.learning_rate,
            grad_clip: train.grad_clip,
            discriminator_updates: train.discriminator_updates,
            checkpoint_every: 0,
            w_l2: weights.w_l2,
            w_fde: weights.w_fde,
            w_resist: weights.w_resist,
            w_adv: weights.w_adv,
            d_safe: weights.d_safe,
            goal_horizons: episodes.goal_horizons,
            cutoff_horizons: episodes.cutoff_horizons,
            arrival_tolerance: episodes.arrival_tolerance,
            comfort_distance: episodes.comfort_distance,
            episode_stride: episodes.start_stride,
            out_dir: PathBuf::from("runs/default"),
            seed: train.seed,
        }
    }
}

impl ExperimentConfig {
    /// Reads `path` (if any) and applies `overrides` of the form `key=value`,
    /// where `value` is a TOML literal; bare words are taken as strings.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str::<toml::Table>(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            let Some((key, raw)) = item.split_once('=') else {
                bail!("override {item:?} is not key=value");
            };
            let key = key.trim();
            let value = parse_value(raw.trim());
            table.insert(key.to_string(), value);
        }
        let cfg: ExperimentConfig = table.try_into().context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.frame()?;
        if self.stride == 0 {
            bail!("stride must be positive");
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            bail!("frame_rate must be positive");
        }
        self.episode_params().validate()?;
        Ok(())
    }

    pub fn frame(&self) -> Result<FrameConfig> {
        Ok(FrameConfig::new(self.t_obs, self.t_pred)?)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            variant: self.variant,
            batch_size: self.batch_size,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            grad_clip: self.grad_clip,
            seed: self.seed,
            discriminator_updates: self.discriminator_updates,
            dims: ModelDims::default(),
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            w_l2: self.w_l2,
            w_fde: self.w_fde,
            w_resist: self.w_resist,
            w_adv: self.w_adv,
            d_safe: self.d_safe,
        }
    }

    pub fn episode_params(&self) -> EpisodeParams {
        EpisodeParams {
            goal_horizons: self.goal_horizons,
            cutoff_horizons: self.cutoff_horizons,
            arrival_tolerance: self.arrival_tolerance,
            comfort_distance: self.comfort_distance,
            start_stride: self.episode_stride,
        }
    }

    /// Recording files of one split, sorted by path.
    pub fn set_files(&self, set: &str) -> Result<Vec<PathBuf>> {
        let dir = self.data_root.join(set);
        if dir.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
                .with_context(|| format!("listing {}", dir.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()
                .with_context(|| format!("listing {}", dir.display()))?;
            files.retain(|p| p.extension().is_some_and(|e| e == "txt"));
            files.sort();
            if files.is_empty() {
                bail!("dataset {set}: no .txt recordings in {}", dir.display());
            }
            return Ok(files);
        }
        let file = self.data_root.join(format!("{set}.txt"));
        if file.is_file() {
            return Ok(vec![file]);
        }
        bail!(
            "dataset {set}: neither {} nor {} exists",
            dir.display(),
            file.display()
        )
    }

    pub fn load_set(&self, set: &str) -> Result<Vec<Scene>> {
        self.set_files(set)?
            .iter()
            .map(|f| parse_trajectory_file(f, self.frame_rate).with_context(|| format!("dataset {set}")))
            .collect()
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
