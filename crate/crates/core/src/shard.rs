//! Line-delimited sample shards.
//!
//! The first line is a JSON header
//! `{"format":"navigan-samples","version":1,"scene":..,"t_obs":..,"t_pred":..,"stride":..,"count":..}`;
//! each following line is one [`TrainingSample`] as JSON.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{FrameConfig, TrainingSample};

pub const SHARD_FORMAT: &str = "navigan-samples";
pub const SHARD_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardHeader {
    pub format: String,
    pub version: u32,
    pub scene: String,
    pub t_obs: usize,
    pub t_pred: usize,
    pub stride: usize,
    pub count: usize,
}

pub fn encode_shard(scene: &str, cfg: FrameConfig, stride: usize, samples: &[TrainingSample]) -> Result<Vec<u8>> {
    let header = ShardHeader {
        format: SHARD_FORMAT.into(),
        version: SHARD_VERSION,
        scene: scene.into(),
        t_obs: cfg.t_obs,
        t_pred: cfg.t_pred,
        stride,
        count: samples.len(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    for s in samples {
        serde_json::to_writer(&mut out, s)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn write_shard(
    path: impl AsRef<Path>,
    scene: &str,
    cfg: FrameConfig,
    stride: usize,
    samples: &[TrainingSample],
) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_shard(scene, cfg, stride, samples)?;
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| Error::io(path, e))
}

pub fn decode_shard(text: &str, origin: &Path) -> Result<(ShardHeader, Vec<TrainingSample>)> {
    let malformed = |line: usize, reason: String| Error::MalformedLine {
        path: origin.to_path_buf(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| malformed(1, "missing header".into()))?;
    let header: ShardHeader = serde_json::from_str(first).map_err(|e| malformed(1, e.to_string()))?;
    if header.format != SHARD_FORMAT || header.version != SHARD_VERSION {
        return Err(Error::Format(format!(
            "{}: expected {SHARD_FORMAT} v{SHARD_VERSION}, found {} v{}",
            origin.display(),
            header.format,
            header.version
        )));
    }
    let mut samples = Vec::with_capacity(header.count);
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let s: TrainingSample = serde_json::from_str(line).map_err(|e| malformed(i + 1, e.to_string()))?;
        if s.t_obs() != header.t_obs || s.t_pred() != header.t_pred {
            return Err(malformed(i + 1, "window length differs from header".into()));
        }
        samples.push(s);
    }
    if samples.len() != header.count {
        return Err(Error::Format(format!(
            "{}: header promises {} samples, found {}",
            origin.display(),
            header.count,
            samples.len()
        )));
    }
    Ok((header, samples))
}

pub fn read_shard(path: impl AsRef<Path>) -> Result<(ShardHeader, Vec<TrainingSample>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_shard(&text, path)
}
