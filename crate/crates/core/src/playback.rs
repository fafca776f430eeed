//! Long-horizon playback: a policy steers one recorded agent toward a
//! distant goal while every other agent replays its recording.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::ModelBundle;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::scene::{to_target_frame, AgentId, AgentWindow, FrameConfig, Observation, Scene};

pub const DEFAULT_ARRIVAL_TOLERANCE: f64 = 0.5;
pub const DEFAULT_COMFORT_DISTANCE: f64 = 0.2;

/// How episodes are laid out relative to the prediction horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeParams {
    /// The goal is the recorded position this many prediction horizons ahead.
    pub goal_horizons: usize,
    /// Episodes stop after this many prediction horizons of steps.
    pub cutoff_horizons: usize,
    pub arrival_tolerance: f64,
    pub comfort_distance: f64,
    /// Spacing between consecutive episode starts of one agent, in steps.
    pub start_stride: usize,
}

impl Default for EpisodeParams {
    fn default() -> Self {
        EpisodeParams {
            goal_horizons: 3,
            cutoff_horizons: 5,
            arrival_tolerance: DEFAULT_ARRIVAL_TOLERANCE,
            comfort_distance: DEFAULT_COMFORT_DISTANCE,
            start_stride: 1,
        }
    }
}

impl EpisodeParams {
    pub fn validate(&self) -> Result<()> {
        if self.goal_horizons == 0 || self.cutoff_horizons == 0 || self.start_stride == 0 {
            return Err(Error::InvalidConfig(
                "episode multipliers and start stride must be positive".into(),
            ));
        }
        if !(self.arrival_tolerance >= 0.0 && self.comfort_distance >= 0.0) {
            return Err(Error::InvalidConfig("episode tolerances must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSpec {
    pub scene: Arc<Scene>,
    pub target_id: AgentId,
    /// Frame of the last observed position; the policy takes over from here.
    pub start_frame: i64,
    pub goal: Point,
    pub cutoff: usize,
    pub arrival_tolerance: f64,
    pub comfort_distance: f64,
    pub frame: FrameConfig,
}

impl EpisodeSpec {
    fn step_frame(&self, step: usize) -> i64 {
        self.start_frame + step as i64 * self.scene.frame_step()
    }

    /// Recorded positions of the target over the `t_obs` frames ending at the start.
    pub fn history(&self) -> Result<Vec<Point>> {
        let first = self.step_frame(0) - (self.frame.t_obs as i64 - 1) * self.scene.frame_step();
        self.scene
            .window(self.target_id, first, self.frame.t_obs)
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::InsufficientHistory {
                agent: self.target_id,
                frame: self.start_frame,
                detail: format!("needs {} consecutive recorded frames", self.frame.t_obs),
            })
    }
}

/// One spec per (agent, start) where the agent has `t_obs` frames of
/// history and is recorded for the next `goal_horizons * t_pred` steps.
/// Ordered by agent id, then start frame.
pub fn build_episode_set(scene: &Arc<Scene>, cfg: FrameConfig, params: &EpisodeParams) -> Vec<EpisodeSpec> {
    let ahead = params.goal_horizons * cfg.t_pred;
    let span = cfg.t_obs + ahead;
    let step = scene.frame_step();
    let mut specs = Vec::new();
    for (&id, track) in scene.tracks() {
        let mut last_start: Option<i64> = None;
        for &(f, _) in track {
            let first = f - (cfg.t_obs as i64 - 1) * step;
            if !scene.present_throughout(id, first, span) {
                continue;
            }
            if last_start.is_some_and(|s| f - s < params.start_stride as i64 * step) {
                continue;
            }
            last_start = Some(f);
            let goal = scene
                .position(id, f + ahead as i64 * step)
                .expect("recorded through the goal frame");
            specs.push(EpisodeSpec {
                scene: Arc::clone(scene),
                target_id: id,
                start_frame: f,
                goal,
                cutoff: params.cutoff_horizons * cfg.t_pred,
                arrival_tolerance: params.arrival_tolerance,
                comfort_distance: params.comfort_distance,
                frame: cfg,
            });
        }
    }
    specs
}

/// Positions per frame, for fast neighbour lookup.
#[derive(Debug, Clone, Default)]
pub struct FrameIndex {
    frames: HashMap<i64, Vec<(AgentId, Point)>>,
}

impl FrameIndex {
    pub fn new(scene: &Scene) -> Self {
        let mut frames: HashMap<i64, Vec<(AgentId, Point)>> = HashMap::new();
        for (&id, track) in scene.tracks() {
            for &(f, p) in track {
                frames.entry(f).or_default().push((id, p));
            }
        }
        FrameIndex { frames }
    }

    pub fn at(&self, frame: i64) -> &[(AgentId, Point)] {
        self.frames.get(&frame).map_or(&[], Vec::as_slice)
    }
}

/// What a policy is asked at one step of an episode.
#[derive(Debug, Clone)]
pub struct PlanQuery<'a> {
    pub spec: &'a EpisodeSpec,
    pub step: usize,
    /// Frame of the current position.
    pub frame: i64,
    /// Target-centric model input.
    pub observation: Observation,
}

pub trait Policy {
    /// World-frame waypoints from the current position; only the first is executed.
    fn plan(&mut self, query: &PlanQuery<'_>) -> Result<Vec<Point>>;
}

/// Drives the target with a trained generator, drawing fresh noise per replan.
pub struct ModelPolicy<'m> {
    pub bundle: &'m ModelBundle,
    pub intention_only: bool,
    rng: ChaCha8Rng,
}

impl<'m> ModelPolicy<'m> {
    pub fn new(bundle: &'m ModelBundle, intention_only: bool, seed: u64) -> Self {
        ModelPolicy {
            bundle,
            intention_only,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for ModelPolicy<'_> {
    fn plan(&mut self, query: &PlanQuery<'_>) -> Result<Vec<Point>> {
        let obs = &query.observation;
        let local = self.bundle.plan(obs, &mut self.rng, self.intention_only)?;
        Ok(local.into_iter().map(|p| p + obs.origin).collect())
    }
}

/// Replays the target's own recording.
#[derive(Debug, Clone, Copy, Default)]
pub struct HumanPolicy;

impl Policy for HumanPolicy {
    fn plan(&mut self, query: &PlanQuery<'_>) -> Result<Vec<Point>> {
        let spec = query.spec;
        let step = spec.scene.frame_step();
        let mut out = Vec::with_capacity(spec.frame.t_pred);
        let mut last = None;
        for k in 1..=spec.frame.t_pred as i64 {
            let p = spec.scene.position(spec.target_id, query.frame + k * step).or(last);
            match p {
                Some(p) => out.push(p),
                None => break,
            }
            last = p;
        }
        if out.is_empty() {
            return Err(Error::InsufficientHistory {
                agent: spec.target_id,
                frame: query.frame,
                detail: "recording ends before the next step".into(),
            });
        }
        Ok(out)
    }
}

/// Never moves.
#[derive(Debug, Clone, Copy, Default)]
pub struct StationaryPolicy;

impl Policy for StationaryPolicy {
    fn plan(&mut self, query: &PlanQuery<'_>) -> Result<Vec<Point>> {
        let obs = &query.observation;
        let here = *obs.observed.last().expect("non-empty history") + obs.origin;
        Ok(vec![here; query.spec.frame.t_pred])
    }
}

/// Positions of the target and the replayed crowd at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSnapshot {
    pub frame: i64,
    pub target: Point,
    pub others: Vec<(AgentId, Point)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub scene: String,
    pub target_id: AgentId,
    pub start_frame: i64,
    pub start: Point,
    pub goal: Point,
    pub executed: Vec<Point>,
    /// Distance to the nearest replayed agent after each step; `None` when
    /// nobody else is recorded at that frame.
    pub min_separations: Vec<Option<f64>>,
    pub success: bool,
    pub steps_used: usize,
    /// World-frame plan made at the first step, if any.
    pub first_plan: Vec<Point>,
    /// Recorded future of the target matching `first_plan`.
    pub recorded_future: Vec<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<StepSnapshot>>,
}

/// Builds the model input at `frame` from the target's own history and the
/// recorded positions of everyone else.
fn observe(index: &FrameIndex, spec: &EpisodeSpec, frame: i64, history: &[Point]) -> Observation {
    let t_obs = spec.frame.t_obs;
    let step = spec.scene.frame_step();
    let observed_world = &history[history.len() - t_obs..];
    let origin = observed_world[0];
    let first = frame - (t_obs as i64 - 1) * step;
    let mut others: BTreeMap<AgentId, Vec<Option<Point>>> = BTreeMap::new();
    for k in 0..t_obs {
        for &(id, p) in index.at(first + k as i64 * step) {
            if id != spec.target_id {
                others.entry(id).or_insert_with(|| vec![None; t_obs])[k] = Some(p - origin);
            }
        }
    }
    Observation {
        origin,
        observed: to_target_frame(observed_world, origin),
        goal: spec.goal - origin,
        others: others
            .into_iter()
            .map(|(id, positions)| AgentWindow { id, positions })
            .collect(),
    }
}

fn nearest(index: &FrameIndex, spec: &EpisodeSpec, frame: i64, p: Point) -> Option<f64> {
    index
        .at(frame)
        .iter()
        .filter(|(id, _)| *id != spec.target_id)
        .map(|(_, q)| p.distance(*q))
        .min_by(f64::total_cmp)
}

/// Rolls out one episode: replan every step, execute the first waypoint,
/// stop on arrival or at the cutoff.
pub fn rollout_episode(
    policy: &mut dyn Policy,
    spec: &EpisodeSpec,
    index: &FrameIndex,
    dump_paths: bool,
) -> Result<EpisodeResult> {
    let mut history = spec.history()?;
    let start = *history.last().unwrap();
    let mut pos = start;
    let mut executed = Vec::new();
    let mut seps = Vec::new();
    let mut first_plan = Vec::new();
    let snapshot = |frame: i64, target: Point| StepSnapshot {
        frame,
        target,
        others: index
            .at(frame)
            .iter()
            .filter(|(id, _)| *id != spec.target_id)
            .copied()
            .collect(),
    };
    let mut path = dump_paths.then(|| vec![snapshot(spec.start_frame, start)]);
    let mut success = pos.distance(spec.goal) <= spec.arrival_tolerance;
    let mut step = 0;
    while !success && step < spec.cutoff {
        let frame = spec.step_frame(step);
        let query = PlanQuery {
            spec,
            step,
            frame,
            observation: observe(index, spec, frame, &history),
        };
        let plan = policy.plan(&query)?;
        let next = *plan.first().ok_or_else(|| Error::EmptySequence("policy plan".into()))?;
        if !next.is_finite() {
            return Err(Error::Format(format!(
                "policy produced a non-finite waypoint for agent {} at frame {frame}",
                spec.target_id
            )));
        }
        if step == 0 {
            first_plan = plan;
        }
        let next_frame = spec.step_frame(step + 1);
        seps.push(nearest(index, spec, next_frame, next));
        executed.push(next);
        history.push(next);
        pos = next;
        if let Some(path) = path.as_mut() {
            path.push(snapshot(next_frame, next));
        }
        step += 1;
        success = pos.distance(spec.goal) <= spec.arrival_tolerance;
    }
    let recorded_future = (1..=first_plan.len())
        .map_while(|k| spec.scene.position(spec.target_id, spec.step_frame(k)))
        .collect();
    Ok(EpisodeResult {
        scene: spec.scene.name.clone(),
        target_id: spec.target_id,
        start_frame: spec.start_frame,
        start,
        goal: spec.goal,
        executed,
        min_separations: seps,
        success,
        steps_used: step,
        first_plan,
        recorded_future,
        path,
    })
}

/// Which policy drives the target during evaluation.
#[derive(Debug, Clone, Copy)]
pub enum PolicyKind<'m> {
    Model { bundle: &'m ModelBundle, intention_only: bool, seed: u64 },
    Human,
    Stationary,
}

/// Rolls out every spec. Model policies get a noise stream per episode,
/// derived from the seed and the episode's position in `specs`.
pub fn rollout_all(kind: PolicyKind<'_>, specs: &[EpisodeSpec], dump_paths: bool) -> Result<Vec<EpisodeResult>> {
    let mut indices: HashMap<*const Scene, FrameIndex> = HashMap::new();
    let mut out = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let index = indices
            .entry(Arc::as_ptr(&spec.scene))
            .or_insert_with(|| FrameIndex::new(&spec.scene));
        let mut policy: Box<dyn Policy + '_> = match kind {
            PolicyKind::Model {
                bundle,
                intention_only,
                seed,
            } => Box::new(ModelPolicy::new(bundle, intention_only, episode_seed(seed, i))),
            PolicyKind::Human => Box::new(HumanPolicy),
            PolicyKind::Stationary => Box::new(StationaryPolicy),
        };
        out.push(rollout_episode(policy.as_mut(), spec, index, dump_paths)?);
    }
    Ok(out)
}

pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    // splitmix64 of the pair keeps neighbouring episodes uncorrelated
    let mut z = seed ^ (episode as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One JSON record per line.
pub fn write_episode_dump(path: impl AsRef<Path>, episodes: &[EpisodeResult]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for ep in episodes {
        serde_json::to_writer(&mut buf, ep)?;
        buf.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| Error::io(path, e))
}

pub fn read_episode_dump(path: impl AsRef<Path>) -> Result<Vec<EpisodeResult>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::MalformedLine {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}
