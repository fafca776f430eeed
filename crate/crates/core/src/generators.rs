//! Force generators and the goal-conditioned social LSTM baseline.
//!
//! The intention branch encodes the target's history, appends the goal to the
//! encoder's final hidden state and decodes a goal-directed path by feeding
//! back its own predictions. The social branch encodes every agent, pools
//! the neighbours at the last observed step and decodes a per-step social
//! force from `[h_target ; V ; noise]`. Waypoints are the sum of the two.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::batch::ContextBatch;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::nn::{points_matrix, LstmCell, LstmState, Mlp, ParamStore};
use crate::poolnet::PoolNet;
use crate::scene::SceneContext;
use crate::tape::{Graph, Matrix, Var};

pub const GENERATOR_TAG: u32 = 1;
pub const DISCRIMINATOR_TAG: u32 = 2;

/// Layer widths shared by every model variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Hidden size of every encoder LSTM and of the discriminator LSTM.
    pub hidden: usize,
    /// Width of the pooled neighbourhood vector.
    pub pool_dim: usize,
    pub noise_dim: usize,
    pub mlp_hidden: usize,
    /// Width of the discriminator's per-agent state embedding.
    pub state_embed: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            hidden: 32,
            pool_dim: 32,
            noise_dim: 8,
            mlp_hidden: 64,
            state_embed: 32,
        }
    }
}

/// Hidden and cell state of one encoded sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentCellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

/// Encodes a batch of sequences from a zero state. Rows where `masks[t]` is
/// false skip step `t`.
pub fn encode_batch(
    g: &mut Graph,
    store: &ParamStore,
    cell: &LstmCell,
    inputs: &[Matrix],
    masks: Option<&[Vec<bool>]>,
) -> LstmState {
    let rows = inputs[0].rows;
    let mut state = cell.zero_state(g, rows);
    for (t, x) in inputs.iter().enumerate() {
        let x = g.constant(x.clone());
        state = match masks {
            Some(m) => cell.masked_step(g, store, x, state, &m[t]),
            None => cell.step(g, store, x, state),
        };
    }
    state
}

/// Runs `cell` over `seq` from zero hidden and cell states.
pub fn encode_sequence(cell: &LstmCell, store: &ParamStore, seq: &[Point]) -> Result<RecurrentCellState> {
    if seq.is_empty() {
        return Err(Error::EmptySequence("encoder input".into()));
    }
    let inputs: Vec<Matrix> = seq.iter().map(|p| points_matrix(&[*p])).collect();
    let mut g = Graph::new();
    g.freeze(store.tag());
    let s = encode_batch(&mut g, store, cell, &inputs, None);
    Ok(RecurrentCellState {
        h: g.value(s.h).data.clone(),
        c: g.value(s.c).data.clone(),
    })
}

/// Autoregressive decoder: each step feeds the previous output back in.
fn decode(
    g: &mut Graph,
    store: &ParamStore,
    cell: &LstmCell,
    head: &Mlp,
    init: LstmState,
    first_input: Var,
    steps: usize,
) -> Vec<Var> {
    let mut state = init;
    let mut prev = first_input;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        state = cell.step(g, store, prev, state);
        prev = head.forward(g, store, state.h);
        out.push(prev);
    }
    out
}

/// Per-step graph nodes of a batched rollout, each `batch x 2`.
#[derive(Debug, Clone)]
pub struct RolloutVars {
    pub intention: Vec<Var>,
    pub forces: Vec<Var>,
    pub waypoints: Vec<Var>,
}

/// Parameters of the intention-force and social-force generators.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub store: ParamStore,
    pub dims: ModelDims,
    pub e_i: LstmCell,
    pub i_lstm: LstmCell,
    pub nn_spatial: Mlp,
    pub e_s: LstmCell,
    pub pool: PoolNet,
    pub sf_lstm: LstmCell,
    pub nn_social: Mlp,
}

impl GeneratorParams {
    pub fn new(dims: ModelDims, rng: &mut impl Rng) -> Self {
        let mut store = ParamStore::new(GENERATOR_TAG);
        let h = dims.hidden;
        let e_i = LstmCell::new(&mut store, "e_i", 2, h, rng);
        let i_lstm = LstmCell::new(&mut store, "i_lstm", 2, h + 2, rng);
        let nn_spatial = Mlp::new(&mut store, "nn_spatial", &[h + 2, dims.mlp_hidden, 2], rng);
        let e_s = LstmCell::new(&mut store, "e_s", 2, h, rng);
        let pool = PoolNet::new(&mut store, "pool", h, dims.pool_dim, rng);
        let sf_hidden = h + dims.pool_dim + dims.noise_dim;
        let sf_lstm = LstmCell::new(&mut store, "sf_lstm", 2, sf_hidden, rng);
        let nn_social = Mlp::new(&mut store, "nn_social", &[sf_hidden, dims.mlp_hidden, 2], rng);
        GeneratorParams {
            store,
            dims,
            e_i,
            i_lstm,
            nn_spatial,
            e_s,
            pool,
            sf_lstm,
            nn_social,
        }
    }

    /// Intention branch: encode the target history, decode toward the goal.
    pub fn intention_vars(&self, g: &mut Graph, batch: &ContextBatch, t_pred: usize) -> Vec<Var> {
        let enc = encode_batch(g, &self.store, &self.e_i, &batch.target_obs, None);
        let goal = g.constant(batch.goal.clone());
        let last = g.constant(batch.last_obs().clone());
        self.intention_from_state(g, enc.h, goal, last, t_pred)
    }

    fn intention_from_state(&self, g: &mut Graph, h: Var, goal: Var, last: Var, t_pred: usize) -> Vec<Var> {
        let rows = g.value(h).rows;
        let init = LstmState {
            h: g.concat_cols(&[h, goal]),
            c: g.constant(Matrix::zeros(rows, self.i_lstm.hidden)),
        };
        decode(g, &self.store, &self.i_lstm, &self.nn_spatial, init, last, t_pred)
    }

    /// Social branch: pooled neighbourhood plus fluctuation noise, decoded
    /// into per-step forces. `noise` is `batch x noise_dim`.
    pub fn social_vars(&self, g: &mut Graph, batch: &ContextBatch, noise: &Matrix, t_pred: usize) -> Vec<Var> {
        let b = batch.size;
        let n = batch.neighbours();
        let enc = encode_batch(g, &self.store, &self.e_s, &batch.social_obs, Some(&batch.social_mask));
        let target_rows: Vec<usize> = (0..b).collect();
        let h_target = g.gather_rows(enc.h, &target_rows);
        let neighbour_rows: Vec<usize> = (b..b + n).collect();
        let contexts = g.gather_rows(enc.h, &neighbour_rows);
        let disp = g.constant(batch.displacement.clone());
        let pooled = self.pool.forward(g, &self.store, contexts, disp, &batch.groups);
        let noise = g.constant(noise.clone());
        let init = LstmState {
            h: g.concat_cols(&[h_target, pooled, noise]),
            c: g.constant(Matrix::zeros(b, self.sf_lstm.hidden)),
        };
        let zero = g.constant(Matrix::zeros(b, 2));
        decode(g, &self.store, &self.sf_lstm, &self.nn_social, init, zero, t_pred)
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        batch: &ContextBatch,
        noise: &Matrix,
        t_pred: usize,
        intention_only: bool,
    ) -> RolloutVars {
        let intention = self.intention_vars(g, batch, t_pred);
        if intention_only {
            return RolloutVars {
                waypoints: intention.clone(),
                intention,
                forces: Vec::new(),
            };
        }
        let forces = self.social_vars(g, batch, noise, t_pred);
        let waypoints = intention
            .iter()
            .zip(&forces)
            .map(|(&i, &f)| g.add(i, f))
            .collect();
        RolloutVars {
            intention,
            forces,
            waypoints,
        }
    }

    fn check_noise(&self, noise: &[f64]) -> Result<()> {
        if noise.len() != self.dims.noise_dim {
            return Err(Error::DimensionMismatch {
                what: "fluctuation noise".into(),
                expected: self.dims.noise_dim,
                got: noise.len(),
            });
        }
        Ok(())
    }
}

/// The three sequences produced for one target.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorOutput {
    pub intention_path: Vec<Point>,
    pub social_forces: Vec<Point>,
    pub waypoints: Vec<Point>,
}

fn frozen_graph(store: &ParamStore) -> Graph {
    let mut g = Graph::new();
    g.freeze(store.tag());
    g
}

fn column_points(g: &Graph, vars: &[Var], row: usize) -> Vec<Point> {
    vars.iter()
        .map(|&v| {
            let m = g.value(v);
            Point::new(m.get(row, 0), m.get(row, 1))
        })
        .collect()
}

/// Decodes the intention path from an encoded target history.
pub fn intention_rollout(
    params: &GeneratorParams,
    h_target: &RecurrentCellState,
    goal: Point,
    last_obs: Point,
    t_pred: usize,
) -> Result<Vec<Point>> {
    if h_target.h.len() != params.dims.hidden {
        return Err(Error::DimensionMismatch {
            what: "intention encoder state".into(),
            expected: params.dims.hidden,
            got: h_target.h.len(),
        });
    }
    let mut g = frozen_graph(&params.store);
    let h = g.constant(Matrix::from_vec(1, h_target.h.len(), h_target.h.clone()));
    let goal = g.constant(points_matrix(&[goal]));
    let last = g.constant(points_matrix(&[last_obs]));
    let out = params.intention_from_state(&mut g, h, goal, last, t_pred);
    Ok(column_points(&g, &out, 0))
}

pub fn social_rollout<C: SceneContext>(
    params: &GeneratorParams,
    ctx: &C,
    noise: &[f64],
    t_pred: usize,
) -> Result<Vec<Point>> {
    params.check_noise(noise)?;
    let batch = ContextBatch::new(&[ctx]);
    let mut g = frozen_graph(&params.store);
    let noise = Matrix::from_vec(1, noise.len(), noise.to_vec());
    let out = params.social_vars(&mut g, &batch, &noise, t_pred);
    Ok(column_points(&g, &out, 0))
}

pub fn generate<C: SceneContext>(
    params: &GeneratorParams,
    ctx: &C,
    noise: &[f64],
    t_pred: usize,
) -> Result<GeneratorOutput> {
    params.check_noise(noise)?;
    let batch = ContextBatch::new(&[ctx]);
    let mut g = frozen_graph(&params.store);
    let noise = Matrix::from_vec(1, noise.len(), noise.to_vec());
    let r = params.forward(&mut g, &batch, &noise, t_pred, false);
    Ok(GeneratorOutput {
        intention_path: column_points(&g, &r.intention, 0),
        social_forces: column_points(&g, &r.forces, 0),
        waypoints: column_points(&g, &r.waypoints, 0),
    })
}

/// Intention branch alone (the ablation that ignores other agents).
pub fn generate_intention_only<C: SceneContext>(
    params: &GeneratorParams,
    ctx: &C,
    t_pred: usize,
) -> Vec<Point> {
    let batch = ContextBatch::new(&[ctx]);
    let mut g = frozen_graph(&params.store);
    let out = params.intention_vars(&mut g, &batch, t_pred);
    column_points(&g, &out, 0)
}

/// Baseline with a single encoder-pool-decoder path; the goal is appended to
/// the decoder's initial hidden state after pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalSocialParams {
    pub store: ParamStore,
    pub dims: ModelDims,
    pub encoder: LstmCell,
    pub pool: PoolNet,
    pub decoder: LstmCell,
    pub nn_spatial: Mlp,
}

impl GoalSocialParams {
    pub fn new(dims: ModelDims, rng: &mut impl Rng) -> Self {
        let mut store = ParamStore::new(GENERATOR_TAG);
        let h = dims.hidden;
        let encoder = LstmCell::new(&mut store, "encoder", 2, h, rng);
        let pool = PoolNet::new(&mut store, "pool", h, dims.pool_dim, rng);
        let dec_hidden = h + dims.pool_dim + 2;
        let decoder = LstmCell::new(&mut store, "decoder", 2, dec_hidden, rng);
        let nn_spatial = Mlp::new(&mut store, "nn_spatial", &[dec_hidden, dims.mlp_hidden, 2], rng);
        GoalSocialParams {
            store,
            dims,
            encoder,
            pool,
            decoder,
            nn_spatial,
        }
    }

    pub fn forward(&self, g: &mut Graph, batch: &ContextBatch, t_pred: usize) -> Vec<Var> {
        let b = batch.size;
        let n = batch.neighbours();
        let enc = encode_batch(g, &self.store, &self.encoder, &batch.social_obs, Some(&batch.social_mask));
        let h_target = g.gather_rows(enc.h, &(0..b).collect::<Vec<_>>());
        let contexts = g.gather_rows(enc.h, &(b..b + n).collect::<Vec<_>>());
        let disp = g.constant(batch.displacement.clone());
        let pooled = self.pool.forward(g, &self.store, contexts, disp, &batch.groups);
        let goal = g.constant(batch.goal.clone());
        let init = LstmState {
            h: g.concat_cols(&[h_target, pooled, goal]),
            c: g.constant(Matrix::zeros(b, self.decoder.hidden)),
        };
        let last = g.constant(batch.last_obs().clone());
        decode(g, &self.store, &self.decoder, &self.nn_spatial, init, last, t_pred)
    }
}

/// Predicted path of the baseline, with `goal` in place of the context's own goal.
pub fn goal_social_lstm_forward<C: SceneContext>(
    params: &GoalSocialParams,
    ctx: &C,
    goal: Point,
    t_pred: usize,
) -> Vec<Point> {
    let mut batch = ContextBatch::new(&[ctx]);
    batch.goal = points_matrix(&[goal]);
    let mut g = frozen_graph(&params.store);
    let out = params.forward(&mut g, &batch, t_pred);
    column_points(&g, &out, 0)
}

/// Either generator family, as stored in a model bundle.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    Forces(GeneratorParams),
    GoalSocial(GoalSocialParams),
}

impl Generator {
    pub fn store(&self) -> &ParamStore {
        match self {
            Generator::Forces(p) => &p.store,
            Generator::GoalSocial(p) => &p.store,
        }
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        match self {
            Generator::Forces(p) => &mut p.store,
            Generator::GoalSocial(p) => &mut p.store,
        }
    }

    pub fn dims(&self) -> ModelDims {
        match self {
            Generator::Forces(p) => p.dims,
            Generator::GoalSocial(p) => p.dims,
        }
    }

    /// Batched rollout. The baseline has no force decomposition: its
    /// prediction is reported as both the intention path and the waypoints.
    pub fn forward(
        &self,
        g: &mut Graph,
        batch: &ContextBatch,
        noise: &Matrix,
        t_pred: usize,
        intention_only: bool,
    ) -> RolloutVars {
        match self {
            Generator::Forces(p) => p.forward(g, batch, noise, t_pred, intention_only),
            Generator::GoalSocial(p) => {
                let path = p.forward(g, batch, t_pred);
                RolloutVars {
                    intention: path.clone(),
                    forces: Vec::new(),
                    waypoints: path,
                }
            }
        }
    }

    /// Waypoints for one planning query.
    pub fn plan<C: SceneContext>(
        &self,
        ctx: &C,
        noise: &[f64],
        t_pred: usize,
        intention_only: bool,
    ) -> Result<Vec<Point>> {
        if let Generator::Forces(p) = self {
            p.check_noise(noise)?;
        }
        let batch = ContextBatch::new(&[ctx]);
        let mut g = frozen_graph(self.store());
        let noise = Matrix::from_vec(1, noise.len(), noise.to_vec());
        let r = self.forward(&mut g, &batch, &noise, t_pred, intention_only);
        Ok(column_points(&g, &r.waypoints, 0))
    }
}

/// Copies the rows of per-step `batch x 2` nodes into per-sample paths.
pub fn batch_paths(g: &Graph, vars: &[Var], batch: usize) -> Vec<Vec<Point>> {
    (0..batch).map(|r| column_points(g, vars, r)).collect()
}
