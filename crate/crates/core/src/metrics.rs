//! Episode-level evaluation: per-step reward, social score, comfort and
//! arrival rates, and displacement errors.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::playback::EpisodeResult;

/// Separation below which a step is penalized by the reward.
pub const REWARD_NEAR_DISTANCE: f64 = 0.2;

/// Reward of one step given the separation `d_t` to the nearest agent.
/// The cases are checked in order.
pub fn step_reward(d_t: f64, reached_goal: bool) -> f64 {
    if d_t <= 0.0 {
        -0.25
    } else if d_t < REWARD_NEAR_DISTANCE {
        -0.1 + d_t / 2.0
    } else if reached_goal {
        1.0
    } else {
        0.0
    }
}

/// Undiscounted reward sum of one episode. The arrival reward is granted at
/// the terminating step; arrival before any move scores exactly that reward.
pub fn episode_return(ep: &EpisodeResult) -> f64 {
    if ep.steps_used == 0 {
        return step_reward(f64::INFINITY, ep.success);
    }
    ep.min_separations
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let last = i + 1 == ep.steps_used;
            step_reward(d.unwrap_or(f64::INFINITY), ep.success && last)
        })
        .sum()
}

fn nonempty(eps: &[EpisodeResult]) -> Result<()> {
    if eps.is_empty() {
        Err(Error::EmptySet)
    } else {
        Ok(())
    }
}

/// Mean per-episode return.
pub fn social_score(eps: &[EpisodeResult]) -> Result<f64> {
    nonempty(eps)?;
    Ok(eps.iter().map(episode_return).sum::<f64>() / eps.len() as f64)
}

pub fn violates_comfort(ep: &EpisodeResult, comfort_distance: f64) -> bool {
    ep.min_separations.iter().flatten().any(|&d| d < comfort_distance)
}

/// Fraction of episodes in which the agent never came closer than
/// `comfort_distance` to anyone.
pub fn comfort_rate(eps: &[EpisodeResult], comfort_distance: f64) -> Result<f64> {
    nonempty(eps)?;
    let clean = eps.iter().filter(|e| !violates_comfort(e, comfort_distance)).count();
    Ok(clean as f64 / eps.len() as f64)
}

pub fn arrival_rate(eps: &[EpisodeResult]) -> Result<f64> {
    nonempty(eps)?;
    Ok(eps.iter().filter(|e| e.success).count() as f64 / eps.len() as f64)
}

/// Mean and final Euclidean displacement between two equal-length paths.
pub fn ade_fde(truth: &[Point], pred: &[Point]) -> Result<(f64, f64)> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::EmptySequence("displacement error input".into()));
    }
    let d: Vec<f64> = truth.iter().zip(pred).map(|(a, b)| a.distance(*b)).collect();
    Ok((d.iter().sum::<f64>() / d.len() as f64, d[d.len() - 1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub social_score: f64,
    pub comfort_rate: f64,
    pub arrival_rate: f64,
    /// Displacement errors of each episode's first plan against the
    /// recording, averaged over episodes that planned at least once.
    pub ade: f64,
    pub fde: f64,
    pub n_episodes: usize,
}

pub fn report(eps: &[EpisodeResult], comfort_distance: f64) -> Result<MetricsReport> {
    let mut ade = 0.0;
    let mut fde = 0.0;
    let mut n = 0usize;
    for ep in eps {
        let k = ep.recorded_future.len().min(ep.first_plan.len());
        if k == 0 {
            continue;
        }
        let (a, f) = ade_fde(&ep.recorded_future[..k], &ep.first_plan[..k])?;
        ade += a;
        fde += f;
        n += 1;
    }
    let n_disp = n.max(1) as f64;
    Ok(MetricsReport {
        social_score: social_score(eps)?,
        comfort_rate: comfort_rate(eps, comfort_distance)?,
        arrival_rate: arrival_rate(eps)?,
        ade: ade / n_disp,
        fde: fde / n_disp,
        n_episodes: eps.len(),
    })
}

/// One line of the results ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub variant: String,
    pub split: String,
    pub seed: u64,
    #[serde(flatten)]
    pub report: MetricsReport,
}

/// Appends `entry` as one JSON line.
pub fn append_ledger(path: impl AsRef<Path>, entry: &LedgerEntry) -> Result<()> {
    let path = path.as_ref();
    let mut line = serde_json::to_vec(entry)?;
    line.push(b'\n');
    std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .and_then(|mut f| f.write_all(&line))
        .map_err(|e| Error::io(path, e))
}

pub fn read_ledger(path: impl AsRef<Path>) -> Result<Vec<LedgerEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn episode(seps: &[Option<f64>], success: bool) -> EpisodeResult {
        EpisodeResult {
            scene: "s".into(),
            target_id: 1,
            start_frame: 0,
            start: Point::ZERO,
            goal: Point::ZERO,
            executed: vec![Point::ZERO; seps.len()],
            min_separations: seps.to_vec(),
            success,
            steps_used: seps.len(),
            first_plan: Vec::new(),
            recorded_future: Vec::new(),
            path: None,
        }
    }

    #[test]
    fn returns_follow_the_step_rewards() {
        assert_eq!(episode_return(&episode(&[], true)), 1.0);
        assert_eq!(episode_return(&episode(&[Some(1.0), None, Some(0.3)], false)), 0.0);
        let e = episode(&[Some(0.1), Some(1.0), Some(0.5)], true);
        assert!((episode_return(&e) - (-0.05 + 1.0)).abs() < 1e-15);
        // a close pass on the arrival step overrides the arrival reward
        assert_eq!(episode_return(&episode(&[Some(0.0)], true)), -0.25);
    }

    #[test]
    fn rates_count_episodes() {
        let eps = vec![
            episode(&[Some(0.5)], true),
            episode(&[Some(0.19)], true),
            episode(&[None], false),
            episode(&[Some(0.2)], true),
        ];
        assert_eq!(comfort_rate(&eps, 0.2).unwrap(), 0.75);
        assert_eq!(arrival_rate(&eps).unwrap(), 0.75);
        assert!(matches!(social_score(&[]), Err(Error::EmptySet)));
        assert!(matches!(comfort_rate(&[], 0.2), Err(Error::EmptySet)));
        assert!(matches!(arrival_rate(&[]), Err(Error::EmptySet)));
    }

    #[test]
    fn displacement_errors() {
        let a = vec![Point::new(0.0, 0.0), Point::new(1.0, 1.0)];
        assert_eq!(ade_fde(&a, &a).unwrap(), (0.0, 0.0));
        let shifted: Vec<Point> = a.iter().map(|&p| p + Point::new(0.0, 1.0)).collect();
        assert_eq!(ade_fde(&a, &shifted).unwrap(), (1.0, 1.0));
        assert!(matches!(ade_fde(&a, &a[..1]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn ledger_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.jsonl");
        let entry = LedgerEntry {
            variant: "NAVIGAN_R".into(),
            split: "toy".into(),
            seed: 3,
            report: MetricsReport {
                social_score: 0.5,
                comfort_rate: 0.9,
                arrival_rate: 1.0,
                ade: 0.1,
                fde: 0.2,
                n_episodes: 4,
            },
        };
        append_ledger(&path, &entry).unwrap();
        append_ledger(&path, &entry).unwrap();
        assert_eq!(read_ledger(&path).unwrap(), vec![entry.clone(), entry]);
    }
}
