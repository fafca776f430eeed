#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use navigan_core::scene::{parse_trajectory_file, AgentId, DEFAULT_FRAME_RATE};
use navigan_core::{Point, Scene};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn toy_path(split: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/toy_crossing").join(split).join("crossing.txt")
}

pub fn toy_scene(split: &str) -> Scene {
    parse_trajectory_file(toy_path(split), DEFAULT_FRAME_RATE).unwrap()
}

/// Rows of a recording as `(frame, id)` pairs plus the smallest frame spacing,
/// read without going through the library parser.
pub struct RawRecording {
    pub present: HashSet<(i64, i64)>,
    pub ids: Vec<i64>,
    pub first: i64,
    pub last: i64,
    pub step: i64,
}

pub fn raw_recording(text: &str) -> RawRecording {
    let mut present = HashSet::new();
    let mut frames = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let cols: Vec<f64> = line.split_whitespace().map(|c| c.parse().unwrap()).collect();
        let (f, id) = (cols[0] as i64, cols[1] as i64);
        present.insert((f, id));
        frames.push(f);
    }
    frames.sort();
    frames.dedup();
    let step = frames.windows(2).map(|w| w[1] - w[0]).min().unwrap_or(1);
    for f in &frames {
        assert_eq!((f - frames[0]) % step, 0, "oracle assumes a uniform grid");
    }
    let mut ids: Vec<i64> = present.iter().map(|&(_, id)| id).collect();
    ids.sort();
    ids.dedup();
    RawRecording {
        present,
        ids,
        first: frames[0],
        last: *frames.last().unwrap(),
        step,
    }
}

impl RawRecording {
    fn covers(&self, id: i64, from: i64, len: i64) -> bool {
        (0..len).all(|k| self.present.contains(&(from + k * self.step, id)))
    }

    /// Windows of `t_end` consecutive frames, starts every `stride` grid steps.
    pub fn window_count(&self, t_end: usize, stride: usize) -> usize {
        let mut n = 0;
        let mut start = self.first;
        while start + (t_end as i64 - 1) * self.step <= self.last {
            n += self.ids.iter().filter(|&&id| self.covers(id, start, t_end as i64)).count();
            start += stride as i64 * self.step;
        }
        n
    }

    /// Episode starts: `t_obs` frames of history ending at the start and
    /// `ahead` more recorded frames after it.
    pub fn episode_count(&self, t_obs: usize, ahead: usize) -> usize {
        let mut n = 0;
        for &id in &self.ids {
            let mut f = self.first;
            while f <= self.last {
                let from = f - (t_obs as i64 - 1) * self.step;
                if self.covers(id, from, (t_obs + ahead) as i64) {
                    n += 1;
                }
                f += self.step;
            }
        }
        n
    }
}

/// A recording with gaps: each agent appears in one or two stretches.
pub fn random_text(seed: u64, agents: i64, frames: i64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for id in 1..=agents {
        let mut k = rng.random_range(0..frames);
        let stretches = rng.random_range(1..=2);
        for _ in 0..stretches {
            let len = rng.random_range(1..40);
            let mut p = Point::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            for _ in 0..len {
                if k >= frames {
                    break;
                }
                rows.push((k * 10, id, p));
                p += Point::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
                k += 1;
            }
            k += rng.random_range(1..6);
        }
    }
    rows.sort_by_key(|r| (r.0, r.1));
    rows.iter()
        .map(|(f, id, p)| format!("{f} {id} {:.3} {:.3}\n", p.x, p.y))
        .collect()
}

/// Scene from explicit tracks on a frame grid of 10.
pub fn scene_from(tracks: &[(AgentId, i64, &[Point])]) -> Scene {
    let map: BTreeMap<AgentId, Vec<(i64, Point)>> = tracks
        .iter()
        .map(|&(id, k0, pts)| (id, pts.iter().enumerate().map(|(k, &p)| ((k0 + k as i64) * 10, p)).collect()))
        .collect();
    Scene::new("built", DEFAULT_FRAME_RATE, map).unwrap()
}

pub fn line(from: Point, velocity: Point, n: usize) -> Vec<Point> {
    (0..n).map(|k| from + velocity * k as f64).collect()
}
