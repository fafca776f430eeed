//! Sequence discriminator scoring a target trajectory in its crowd.
//!
//! At every step the target and each recorded neighbour are embedded from
//! their raw states; neighbours are pooled against the target with a
//! dedicated pooling net. The target embedding concatenated with the pooled
//! vector feeds an LSTM whose final hidden state is mapped to one logit.

use rand::Rng;

use crate::batch::WindowNeighbours;
use crate::error::{Error, Result};
use crate::generators::{ModelDims, DISCRIMINATOR_TAG};
use crate::geometry::Point;
use crate::nn::{points_matrix, Linear, LstmCell, Mlp, ParamStore};
use crate::poolnet::PoolNet;
use crate::scene::AgentWindow;
use crate::tape::{Graph, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorParams {
    pub store: ParamStore,
    pub dims: ModelDims,
    pub state_embed: Linear,
    pub pool: PoolNet,
    pub d_lstm: LstmCell,
    pub score_head: Mlp,
}

impl DiscriminatorParams {
    pub fn new(dims: ModelDims, rng: &mut impl Rng) -> Self {
        let mut store = ParamStore::new(DISCRIMINATOR_TAG);
        let state_embed = Linear::new(&mut store, "state_embed", 2, dims.state_embed, rng);
        let pool = PoolNet::new(&mut store, "pool", dims.state_embed, dims.pool_dim, rng);
        let d_lstm = LstmCell::new(
            &mut store,
            "d_lstm",
            dims.state_embed + dims.pool_dim,
            dims.hidden,
            rng,
        );
        let score_head = Mlp::new(&mut store, "score_head", &[dims.hidden, dims.mlp_hidden, 1], rng);
        DiscriminatorParams {
            store,
            dims,
            state_embed,
            pool,
            d_lstm,
            score_head,
        }
    }

    fn embed(&self, g: &mut Graph, x: Var) -> Var {
        let e = self.state_embed.forward(g, &self.store, x);
        g.relu(e)
    }

    /// Batched logits, `batch x 1`. `target[t]` is the `batch x 2` target
    /// position at step `t`; it may depend on generator parameters.
    pub fn forward(&self, g: &mut Graph, target: &[Var], neighbours: &WindowNeighbours) -> Var {
        assert_eq!(target.len(), neighbours.steps.len(), "window length");
        let b = neighbours.size;
        let mut state = self.d_lstm.zero_state(g, b);
        for (t, step) in neighbours.steps.iter().enumerate() {
            let own = self.embed(g, target[t]);
            let pos = g.constant(step.positions.clone());
            let ctx = self.embed(g, pos);
            let anchor = g.gather_rows(target[t], &step.owner);
            let disp = g.sub(pos, anchor);
            let pooled = self.pool.forward(g, &self.store, ctx, disp, &step.groups);
            let x = g.concat_cols(&[own, pooled]);
            state = self.d_lstm.step(g, &self.store, x, state);
        }
        self.score_head.forward(g, &self.store, state.h)
    }
}

/// A full window to be scored: target states plus masked neighbour states.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorInput {
    pub target_seq: Vec<Point>,
    pub others_seq: Vec<AgentWindow>,
}

/// Logit that `input` is a recorded (expert) trajectory.
pub fn discriminate(params: &DiscriminatorParams, input: &DiscriminatorInput) -> Result<f64> {
    let len = input.target_seq.len();
    if len == 0 {
        return Err(Error::EmptySequence("discriminator target sequence".into()));
    }
    if let Some(w) = input.others_seq.iter().find(|w| w.positions.len() != len) {
        return Err(Error::DimensionMismatch {
            what: format!("window of agent {}", w.id),
            expected: len,
            got: w.positions.len(),
        });
    }
    let neighbours = WindowNeighbours::new(&[input.others_seq.as_slice()], len);
    let mut g = Graph::new();
    g.freeze(params.store.tag());
    let target: Vec<Var> = input
        .target_seq
        .iter()
        .map(|p| g.constant(points_matrix(&[*p])))
        .collect();
    let logit = params.forward(&mut g, &target, &neighbours);
    Ok(g.value(logit).scalar())
}
