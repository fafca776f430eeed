//! Synthetic crowd: two pedestrian streams crossing at right angles,
//! simulated with a simple social-force model and recorded at a fixed rate.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::Point;
use crate::scene::{AgentId, Scene, DEFAULT_FRAME_RATE};

/// Frame numbers advance by this much per recorded step.
pub const TOY_FRAME_STRIDE: i64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingConfig {
    /// Simulated time, seconds.
    pub duration: f64,
    /// Mean arrivals per second in each stream.
    pub spawn_rate: f64,
    /// Each stream walks from `-half_length` to `+half_length` along its axis.
    pub half_length: f64,
    /// Lateral spread of entry points around the stream's axis.
    pub half_width: f64,
    pub speed_mean: f64,
    pub speed_sd: f64,
    /// Chance that a walker ends its trip inside the area instead of crossing it.
    pub stop_probability: f64,
    /// How long a stopped walker stays before leaving the recording, seconds.
    pub dwell_seconds: (f64, f64),
    pub frame_rate: f64,
    /// Integration steps per recorded frame.
    pub substeps: usize,
    pub seed: u64,
}

impl Default for CrossingConfig {
    fn default() -> Self {
        CrossingConfig {
            duration: 120.0,
            spawn_rate: 0.3,
            half_length: 14.0,
            half_width: 1.5,
            speed_mean: 1.2,
            speed_sd: 0.2,
            stop_probability: 0.5,
            dwell_seconds: (2.0, 8.0),
            frame_rate: DEFAULT_FRAME_RATE,
            substeps: 4,
            seed: 0,
        }
    }
}

// Social-force constants.
const RELAX_TIME: f64 = 0.5;
const REPULSE_A: f64 = 2.1;
const REPULSE_B: f64 = 0.35;
const BODY_RADIUS: f64 = 0.3;
const MIN_SPAWN_GAP: f64 = 0.8;
const SLOWDOWN_DISTANCE: f64 = 0.8;
const MIN_APPROACH: f64 = 0.3;
const STOP_RADIUS: f64 = 0.15;

#[derive(Debug, Clone)]
struct Walker {
    id: AgentId,
    pos: Point,
    vel: Point,
    goal: Point,
    speed: f64,
    /// Direction of travel; the walker leaves once past its goal along it.
    heading: Point,
    /// Seconds left to stand once at the goal; `None` for walkers that cross.
    dwell: Option<f64>,
}

impl Walker {
    fn done(&self) -> bool {
        match self.dwell {
            Some(left) => left <= 0.0,
            None => (self.pos - self.goal).x * self.heading.x + (self.pos - self.goal).y * self.heading.y >= 0.0,
        }
    }
}

/// Runs the crossing simulation and returns the recorded scene.
pub fn simulate_crossing(name: &str, cfg: &CrossingConfig) -> Result<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dt = 1.0 / (cfg.frame_rate * cfg.substeps as f64);
    let frames = (cfg.duration * cfg.frame_rate).round() as i64;
    let gap = Exp::new(cfg.spawn_rate).expect("positive spawn rate");
    let speed = Normal::new(cfg.speed_mean, cfg.speed_sd).expect("finite speed");

    // Stream 0 walks east along y = 0, stream 1 walks north along x = 0.
    let headings = [Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
    let mut next_spawn = [gap.sample(&mut rng), gap.sample(&mut rng)];
    let mut walkers: Vec<Walker> = Vec::new();
    let mut tracks: BTreeMap<AgentId, Vec<(i64, Point)>> = BTreeMap::new();
    let mut next_id: AgentId = 1;

    for frame in 0..frames {
        let t = frame as f64 / cfg.frame_rate;
        for (s, heading) in headings.iter().enumerate() {
            while next_spawn[s] <= t {
                let lateral = rng.random_range(-cfg.half_width..=cfg.half_width);
                let side = Point::new(-heading.y, heading.x);
                let pos = *heading * -cfg.half_length + side * lateral;
                let drift = rng.random_range(-0.5..=0.5);
                let goal = *heading * cfg.half_length + side * (lateral + drift);
                let clear = walkers.iter().all(|w| w.pos.distance(pos) >= MIN_SPAWN_GAP);
                if clear {
                    let v0 = speed.sample(&mut rng).clamp(0.6, 1.8);
                    let stops = rng.random_bool(cfg.stop_probability);
                    let (goal, dwell) = if stops {
                        let along = rng.random_range(0.3..0.8);
                        let (lo, hi) = cfg.dwell_seconds;
                        (pos + (goal - pos) * along, Some(rng.random_range(lo..=hi)))
                    } else {
                        (goal, None)
                    };
                    walkers.push(Walker {
                        id: next_id,
                        pos,
                        vel: *heading * v0,
                        goal,
                        speed: v0,
                        heading: *heading,
                        dwell,
                    });
                    next_id += 1;
                    next_spawn[s] += gap.sample(&mut rng);
                } else {
                    // Entry blocked: retry on the next frame.
                    next_spawn[s] = t + 1.0 / cfg.frame_rate;
                    break;
                }
            }
        }
        for w in &walkers {
            tracks
                .entry(w.id)
                .or_default()
                .push((frame * TOY_FRAME_STRIDE, round_mm(w.pos)));
        }
        for _ in 0..cfg.substeps {
            step(&mut walkers, dt);
        }
        walkers.retain(|w| !w.done());
    }
    Scene::new(name, cfg.frame_rate, tracks)
}

fn step(walkers: &mut [Walker], dt: f64) {
    let forces: Vec<Point> = walkers
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let to_goal = w.goal - w.pos;
            let dist = to_goal.norm();
            let dir = to_goal * (1.0 / dist.max(1e-9));
            // Slow down when approaching a stop.
            let desired = match w.dwell {
                Some(_) if dist < STOP_RADIUS => 0.0,
                Some(_) => w.speed * (dist / SLOWDOWN_DISTANCE).clamp(MIN_APPROACH, 1.0),
                None => w.speed,
            };
            let mut f = (dir * desired - w.vel) * (1.0 / RELAX_TIME);
            for (j, o) in walkers.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d = w.pos - o.pos;
                let dist = d.norm().max(1e-6);
                if dist > 4.0 {
                    continue;
                }
                let n = d * (1.0 / dist);
                let mag = REPULSE_A * ((2.0 * BODY_RADIUS - dist) / REPULSE_B).exp();
                // Agents ahead weigh more than those behind.
                let ahead = -(n.x * dir.x + n.y * dir.y);
                let aniso = 0.35 + 0.65 * (1.0 + ahead) / 2.0;
                f += n * (mag * aniso);
            }
            f
        })
        .collect();
    for (w, f) in walkers.iter_mut().zip(forces) {
        if let Some(left) = &mut w.dwell {
            if w.pos.distance(w.goal) < STOP_RADIUS {
                *left -= dt;
            }
        }
        w.vel += f * dt;
        let cap = 1.3 * w.speed;
        let s = w.vel.norm();
        if s > cap {
            w.vel = w.vel * (cap / s);
        }
        w.pos += w.vel * dt;
    }
}

fn round_mm(p: Point) -> Point {
    Point::new((p.x * 1000.0).round() / 1000.0, (p.y * 1000.0).round() / 1000.0)
}

/// Four-column text (`frame id x y`), rows ordered by frame then id.
pub fn format_trajectory(scene: &Scene) -> String {
    let mut rows: Vec<(i64, AgentId, Point)> = scene
        .tracks()
        .iter()
        .flat_map(|(&id, t)| t.iter().map(move |&(f, p)| (f, id, p)))
        .collect();
    rows.sort_by_key(|&(f, id, _)| (f, id));
    let mut out = String::new();
    for (f, id, p) in rows {
        writeln!(out, "{f}\t{id}\t{:.3}\t{:.3}", p.x, p.y).unwrap();
    }
    out
}

/// Seeds used for the bundled train and test recordings.
pub const TOY_TRAIN_SEED: u64 = 11;
pub const TOY_TEST_SEED: u64 = 23;

/// The bundled train and test configurations.
pub fn bundled_configs() -> [(&'static str, CrossingConfig); 2] {
    [
        (
            "train",
            CrossingConfig {
                seed: TOY_TRAIN_SEED,
                ..Default::default()
            },
        ),
        (
            "test",
            CrossingConfig {
                duration: 60.0,
                seed: TOY_TEST_SEED,
                ..Default::default()
            },
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::parse_trajectory_str;

    fn small() -> CrossingConfig {
        CrossingConfig {
            duration: 30.0,
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let a = simulate_crossing("a", &small()).unwrap();
        let b = simulate_crossing("a", &small()).unwrap();
        assert_eq!(a, b);
        let other = simulate_crossing("a", &CrossingConfig { seed: 6, ..small() }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn tracks_are_contiguous_and_text_round_trips() {
        let scene = simulate_crossing("toy", &small()).unwrap();
        assert_eq!(scene.frame_step(), TOY_FRAME_STRIDE);
        for track in scene.tracks().values() {
            for w in track.windows(2) {
                assert_eq!(w[1].0 - w[0].0, TOY_FRAME_STRIDE);
                assert!(w[0].1.distance(w[1].1) < 1.0);
            }
        }
        let text = format_trajectory(&scene);
        let back = parse_trajectory_str(&text, "toy", scene.frame_rate, std::path::Path::new("toy")).unwrap();
        assert_eq!(back.tracks(), scene.tracks());
    }

    #[test]
    fn walkers_keep_apart() {
        let scene = simulate_crossing("toy", &small()).unwrap();
        let mut by_frame: BTreeMap<i64, Vec<Point>> = BTreeMap::new();
        for t in scene.tracks().values() {
            for &(f, p) in t {
                by_frame.entry(f).or_default().push(p);
            }
        }
        let min = by_frame
            .values()
            .flat_map(|ps| {
                ps.iter()
                    .enumerate()
                    .flat_map(move |(i, a)| ps[i + 1..].iter().map(move |b| a.distance(*b)))
            })
            .fold(f64::INFINITY, f64::min);
        assert!(min > 0.2, "closest pair {min}");
    }
}
