//! Recorded crowds, windowed training samples and the target-centric frame.
//!
//! Trajectory files hold one observation per line: `frame agent x y`,
//! whitespace separated. Frame numbers need not be consecutive integers;
//! the scene timeline advances by the greatest common divisor of the gaps
//! between distinct frames (10 for most ETH/UCY files, 6 for BIWI ETH).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

pub type AgentId = i64;

/// Annotation rate of the ETH/UCY recordings.
pub const DEFAULT_FRAME_RATE: f64 = 2.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub name: String,
    pub frame_rate: f64,
    tracks: BTreeMap<AgentId, Vec<(i64, Point)>>,
    first_frame: i64,
    last_frame: i64,
    frame_step: i64,
}

impl Scene {
    /// Builds a scene from per-agent tracks. Each track must have strictly
    /// increasing frames and finite coordinates.
    pub fn new(
        name: impl Into<String>,
        frame_rate: f64,
        tracks: BTreeMap<AgentId, Vec<(i64, Point)>>,
    ) -> Result<Self> {
        let name = name.into();
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "frame rate must be positive, got {frame_rate}"
            )));
        }
        let tracks: BTreeMap<_, _> = tracks.into_iter().filter(|(_, t)| !t.is_empty()).collect();
        if tracks.is_empty() {
            return Err(Error::EmptyScene(PathBuf::from(&name)));
        }
        let mut frames = Vec::new();
        for (&id, track) in &tracks {
            for w in track.windows(2) {
                if w[1].0 <= w[0].0 {
                    return Err(Error::InvalidConfig(format!(
                        "agent {id}: frames must be strictly increasing ({} then {})",
                        w[0].0, w[1].0
                    )));
                }
            }
            if let Some((f, p)) = track.iter().find(|(_, p)| !p.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "agent {id}: non-finite position {p:?} at frame {f}"
                )));
            }
            frames.extend(track.iter().map(|(f, _)| *f));
        }
        frames.sort_unstable();
        frames.dedup();
        let frame_step = frames
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0, gcd)
            .max(1);
        Ok(Scene {
            name,
            frame_rate,
            first_frame: frames[0],
            last_frame: *frames.last().unwrap(),
            frame_step,
            tracks,
        })
    }

    pub fn tracks(&self) -> &BTreeMap<AgentId, Vec<(i64, Point)>> {
        &self.tracks
    }

    pub fn agent_ids(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.tracks.keys().copied()
    }

    pub fn num_agents(&self) -> usize {
        self.tracks.len()
    }

    pub fn frame_step(&self) -> i64 {
        self.frame_step
    }

    pub fn first_frame(&self) -> i64 {
        self.first_frame
    }

    pub fn last_frame(&self) -> i64 {
        self.last_frame
    }

    /// Number of timeline steps from the first to the last frame inclusive.
    pub fn timeline_len(&self) -> usize {
        ((self.last_frame - self.first_frame) / self.frame_step) as usize + 1
    }

    /// Frame number at timeline index `k`. May lie past the recording.
    pub fn frame_at(&self, k: i64) -> i64 {
        self.first_frame + k * self.frame_step
    }

    pub fn position(&self, agent: AgentId, frame: i64) -> Option<Point> {
        let track = self.tracks.get(&agent)?;
        track
            .binary_search_by_key(&frame, |(f, _)| *f)
            .ok()
            .map(|i| track[i].1)
    }

    /// True when `agent` is observed at every frame of `[frame, frame + len * step)`.
    pub fn present_throughout(&self, agent: AgentId, frame: i64, len: usize) -> bool {
        let Some(track) = self.tracks.get(&agent) else {
            return false;
        };
        let Ok(i) = track.binary_search_by_key(&frame, |(f, _)| *f) else {
            return false;
        };
        // Frames lie on the step grid and strictly increase, so the count
        // of entries between two grid frames pins contiguity.
        let last = frame + (len as i64 - 1) * self.frame_step;
        track.get(i + len - 1).is_some_and(|(f, _)| *f == last)
    }

    /// The same recording with every position moved by `offset`.
    pub fn translated(&self, offset: Point) -> Scene {
        let mut out = self.clone();
        for track in out.tracks.values_mut() {
            for (_, p) in track.iter_mut() {
                *p += offset;
            }
        }
        out
    }

    /// Positions of `agent` at `len` consecutive timeline frames starting at `frame`.
    pub fn window(&self, agent: AgentId, frame: i64, len: usize) -> Vec<Option<Point>> {
        (0..len as i64)
            .map(|k| self.position(agent, frame + k * self.frame_step))
            .collect()
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Reads a four-column trajectory file. The scene is named after the file stem.
pub fn parse_trajectory_file(path: impl AsRef<Path>, frame_rate: f64) -> Result<Scene> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    parse_trajectory_str(&text, &name, frame_rate, path)
}

pub fn parse_trajectory_str(
    text: &str,
    name: &str,
    frame_rate: f64,
    origin: &Path,
) -> Result<Scene> {
    let mut rows: BTreeMap<AgentId, Vec<(i64, Point, usize)>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let malformed = |reason: String| Error::MalformedLine {
            path: origin.to_path_buf(),
            line: lineno,
            reason,
        };
        if fields.len() != 4 {
            return Err(malformed(format!("expected 4 fields, found {}", fields.len())));
        }
        let mut values = [0.0; 4];
        for (v, f) in values.iter_mut().zip(&fields) {
            *v = f
                .parse::<f64>()
                .map_err(|_| malformed(format!("non-numeric field {f:?}")))?;
            if !v.is_finite() {
                return Err(malformed(format!("non-finite field {f:?}")));
            }
        }
        let as_int = |v: f64, what: &str| {
            if v.fract() == 0.0 && v.abs() < 9.0e15 {
                Ok(v as i64)
            } else {
                Err(malformed(format!("{what} must be an integer, got {v}")))
            }
        };
        let frame = as_int(values[0], "frame")?;
        let agent = as_int(values[1], "agent id")?;
        rows.entry(agent)
            .or_default()
            .push((frame, Point::new(values[2], values[3]), lineno));
    }
    if rows.is_empty() {
        return Err(Error::EmptyScene(origin.to_path_buf()));
    }
    let mut tracks = BTreeMap::new();
    for (agent, mut obs) in rows {
        obs.sort_by_key(|(f, _, line)| (*f, *line));
        if let Some(w) = obs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateObservation {
                path: origin.to_path_buf(),
                line: w[1].2,
                agent,
                frame: w[1].0,
            });
        }
        tracks.insert(agent, obs.into_iter().map(|(f, p, _)| (f, p)).collect());
    }
    Scene::new(name, frame_rate, tracks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub t_obs: usize,
    pub t_pred: usize,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig { t_obs: 8, t_pred: 12 }
    }
}

impl FrameConfig {
    pub fn new(t_obs: usize, t_pred: usize) -> Result<Self> {
        let cfg = FrameConfig { t_obs, t_pred };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_obs < 2 || self.t_pred < 1 {
            return Err(Error::InvalidConfig(format!(
                "need t_obs >= 2 and t_pred >= 1, got ({}, {})",
                self.t_obs, self.t_pred
            )));
        }
        Ok(())
    }

    pub fn t_end(&self) -> usize {
        self.t_obs + self.t_pred
    }
}

/// Positions of one non-target agent over a window; `None` where the agent
/// was not recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentWindow {
    pub id: AgentId,
    pub positions: Vec<Option<Point>>,
}

impl AgentWindow {
    pub fn at(&self, t: usize) -> Option<Point> {
        self.positions.get(t).copied().flatten()
    }
}

/// What a generator sees: the target's observed history, its goal, and the
/// observed part of every other agent's window. All target-centric.
pub trait SceneContext {
    fn target_observed(&self) -> &[Point];
    fn goal(&self) -> Point;
    /// Windows of the other agents. Only the first `target_observed().len()`
    /// entries of each are read.
    fn others(&self) -> &[AgentWindow];
}

/// One supervised window around a target agent, in the target-centric frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub target_id: AgentId,
    /// World position of the target's first observed point.
    pub origin: Point,
    pub observed: Vec<Point>,
    pub future_truth: Vec<Point>,
    pub goal: Point,
    /// Every other agent recorded at some step of the window, `t_obs + t_pred` slots each.
    pub others: Vec<AgentWindow>,
}

impl TrainingSample {
    pub fn t_obs(&self) -> usize {
        self.observed.len()
    }

    pub fn t_pred(&self) -> usize {
        self.future_truth.len()
    }

    /// Observed history followed by the recorded future.
    pub fn full_target(&self) -> Vec<Point> {
        self.observed.iter().chain(&self.future_truth).copied().collect()
    }
}

impl SceneContext for TrainingSample {
    fn target_observed(&self) -> &[Point] {
        &self.observed
    }
    fn goal(&self) -> Point {
        self.goal
    }
    fn others(&self) -> &[AgentWindow] {
        &self.others
    }
}

/// A query for a single planning step, used during playback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub origin: Point,
    pub observed: Vec<Point>,
    pub goal: Point,
    pub others: Vec<AgentWindow>,
}

impl SceneContext for Observation {
    fn target_observed(&self) -> &[Point] {
        &self.observed
    }
    fn goal(&self) -> Point {
        self.goal
    }
    fn others(&self) -> &[AgentWindow] {
        &self.others
    }
}

pub fn to_target_frame(points: &[Point], origin: Point) -> Vec<Point> {
    points.iter().map(|&p| p - origin).collect()
}

pub fn from_target_frame(points: &[Point], origin: Point) -> Vec<Point> {
    points.iter().map(|&p| p + origin).collect()
}

/// Cuts a scene into training samples: one per (window start, agent) where
/// the agent is recorded at every one of the `t_end` frames. Window starts
/// advance by `stride` timeline steps. Samples are ordered by start, then id.
pub fn extract_windows(scene: &Scene, cfg: FrameConfig, stride: usize) -> Vec<TrainingSample> {
    assert!(stride >= 1, "stride must be at least 1");
    let t_end = cfg.t_end();
    let n = scene.timeline_len();
    if n < t_end {
        return Vec::new();
    }
    let step = scene.frame_step();
    let mut samples = Vec::new();
    for k in (0..=n - t_end).step_by(stride) {
        let start = scene.frame_at(k as i64);
        let end = start + (t_end as i64 - 1) * step;
        let targets: Vec<AgentId> = scene
            .agent_ids()
            .filter(|&id| scene.present_throughout(id, start, t_end))
            .collect();
        if targets.is_empty() {
            continue;
        }
        let in_window: Vec<AgentId> = scene
            .tracks()
            .iter()
            .filter(|(_, t)| t[0].0 <= end && t[t.len() - 1].0 >= start)
            .map(|(&id, _)| id)
            .collect();
        for &target in &targets {
            let world: Vec<Point> = scene
                .window(target, start, t_end)
                .into_iter()
                .map(|p| p.expect("target present throughout"))
                .collect();
            let origin = world[0];
            let local = to_target_frame(&world, origin);
            let others = in_window
                .iter()
                .filter(|&&id| id != target)
                .filter_map(|&id| {
                    let positions: Vec<Option<Point>> = scene
                        .window(id, start, t_end)
                        .into_iter()
                        .map(|p| p.map(|p| p - origin))
                        .collect();
                    positions
                        .iter()
                        .any(Option::is_some)
                        .then_some(AgentWindow { id, positions })
                })
                .collect();
            samples.push(TrainingSample {
                target_id: target,
                origin,
                observed: local[..cfg.t_obs].to_vec(),
                future_truth: local[cfg.t_obs..].to_vec(),
                goal: local[t_end - 1],
                others,
            });
        }
    }
    samples
}
