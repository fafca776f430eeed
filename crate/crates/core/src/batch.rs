//! Packing samples into row-stacked matrices for batched forward passes.

use crate::geometry::Point;
use crate::nn::points_matrix;
use crate::scene::{SceneContext, TrainingSample};
use crate::tape::Matrix;

/// Generator inputs for `size` targets. Neighbours are the other agents
/// recorded at the last observed step; agents absent at that step take no
/// part in social pooling.
#[derive(Debug, Clone)]
pub struct ContextBatch {
    pub size: usize,
    pub t_obs: usize,
    /// Per observed step, `size x 2` target positions.
    pub target_obs: Vec<Matrix>,
    pub goal: Matrix,
    /// Per observed step, targets stacked over neighbours: `(size + n) x 2`.
    pub social_obs: Vec<Matrix>,
    pub social_mask: Vec<Vec<bool>>,
    /// Neighbour-minus-target displacement at the last observed step, `n x 2`.
    pub displacement: Matrix,
    /// Neighbour indices (0-based within the neighbour block) per target.
    pub groups: Vec<Vec<usize>>,
}

impl ContextBatch {
    pub fn new<C: SceneContext>(samples: &[&C]) -> Self {
        assert!(!samples.is_empty(), "empty batch");
        let t_obs = samples[0].target_observed().len();
        assert!(t_obs >= 1);
        let b = samples.len();
        let mut neighbours: Vec<(usize, Vec<Option<Point>>)> = Vec::new();
        let mut groups = vec![Vec::new(); b];
        for (k, s) in samples.iter().enumerate() {
            assert_eq!(s.target_observed().len(), t_obs, "ragged observation lengths");
            for w in s.others() {
                if w.at(t_obs - 1).is_some() {
                    groups[k].push(neighbours.len());
                    neighbours.push((k, w.positions[..t_obs].to_vec()));
                }
            }
        }
        let n = neighbours.len();
        let mut target_obs = Vec::with_capacity(t_obs);
        let mut social_obs = Vec::with_capacity(t_obs);
        let mut social_mask = Vec::with_capacity(t_obs);
        for t in 0..t_obs {
            let targets: Vec<Point> = samples.iter().map(|s| s.target_observed()[t]).collect();
            let mut all = points_matrix(&targets);
            let mut mask = vec![true; b + n];
            all.data.reserve(2 * n);
            for (j, (_, pos)) in neighbours.iter().enumerate() {
                let p = pos[t].unwrap_or(Point::ZERO);
                all.data.extend_from_slice(&[p.x, p.y]);
                mask[b + j] = pos[t].is_some();
            }
            all.rows = b + n;
            target_obs.push(points_matrix(&targets));
            social_obs.push(all);
            social_mask.push(mask);
        }
        let mut displacement = Matrix::zeros(n, 2);
        for (j, (owner, pos)) in neighbours.iter().enumerate() {
            let d = pos[t_obs - 1].expect("neighbour present at last step")
                - samples[*owner].target_observed()[t_obs - 1];
            displacement.set(j, 0, d.x);
            displacement.set(j, 1, d.y);
        }
        let goals: Vec<Point> = samples.iter().map(|s| s.goal()).collect();
        ContextBatch {
            size: b,
            t_obs,
            target_obs,
            goal: points_matrix(&goals),
            social_obs,
            social_mask,
            displacement,
            groups,
        }
    }

    pub fn neighbours(&self) -> usize {
        self.displacement.rows
    }

    pub fn last_obs(&self) -> &Matrix {
        &self.target_obs[self.t_obs - 1]
    }
}

/// Agents other than the target recorded at one step of a discriminator or
/// resistance-loss window.
#[derive(Debug, Clone)]
pub struct StepNeighbours {
    pub positions: Matrix,
    /// Index of the target (batch row) each position belongs to.
    pub owner: Vec<usize>,
    pub groups: Vec<Vec<usize>>,
}

/// Other-agent positions over a full window for a batch of targets.
#[derive(Debug, Clone)]
pub struct WindowNeighbours {
    pub size: usize,
    pub steps: Vec<StepNeighbours>,
}

impl WindowNeighbours {
    /// `windows[k]` holds the other agents of target `k`, each with one slot per step.
    pub fn new(windows: &[&[crate::scene::AgentWindow]], len: usize) -> Self {
        let b = windows.len();
        let steps = (0..len)
            .map(|t| {
                let mut pts = Vec::new();
                let mut owner = Vec::new();
                let mut groups = vec![Vec::new(); b];
                for (k, others) in windows.iter().enumerate() {
                    for w in others.iter() {
                        assert_eq!(w.positions.len(), len, "agent window length");
                        if let Some(p) = w.positions[t] {
                            groups[k].push(pts.len());
                            pts.push(p);
                            owner.push(k);
                        }
                    }
                }
                StepNeighbours {
                    positions: points_matrix(&pts),
                    owner,
                    groups,
                }
            })
            .collect();
        WindowNeighbours { size: b, steps }
    }

    pub fn from_samples(samples: &[&TrainingSample]) -> Self {
        let t_end = samples[0].t_obs() + samples[0].t_pred();
        let windows: Vec<&[crate::scene::AgentWindow]> =
            samples.iter().map(|s| s.others.as_slice()).collect();
        Self::new(&windows, t_end)
    }

    /// Only the steps from `start` on.
    pub fn tail(&self, start: usize) -> WindowNeighbours {
        WindowNeighbours {
            size: self.size,
            steps: self.steps[start..].to_vec(),
        }
    }
}
