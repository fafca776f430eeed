//! Displacement-sensitive max pooling of the other agents around a target.
//!
//! Each neighbour `j` contributes `e_ij = NN_embed([context_j ; NN_pos(d_ij)])`
//! where `d_ij` points from the target to `j`; the pooled vector is the
//! element-wise maximum of the `e_ij`. A target with no neighbours pools to
//! the zero vector.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::nn::{Mlp, ParamStore};
use crate::tape::{Graph, Matrix, Var};

pub const POS_EMBED_DIM: usize = 16;
pub const POOL_HIDDEN: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct PoolNet {
    pub nn_pos: Mlp,
    pub nn_embed: Mlp,
}

impl PoolNet {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        context_dim: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let nn_pos = Mlp::new(
            store,
            &format!("{name}.nn_pos"),
            &[2, POOL_HIDDEN, POS_EMBED_DIM],
            rng,
        );
        let nn_embed = Mlp::new(
            store,
            &format!("{name}.nn_embed"),
            &[context_dim + POS_EMBED_DIM, POOL_HIDDEN, out_dim],
            rng,
        );
        PoolNet { nn_pos, nn_embed }
    }

    pub fn context_dim(&self) -> usize {
        self.nn_embed.input() - POS_EMBED_DIM
    }

    pub fn out_dim(&self) -> usize {
        self.nn_embed.output()
    }

    /// Per-neighbour embeddings `e_ij`, one row per row of `contexts`.
    pub fn embed(&self, g: &mut Graph, store: &ParamStore, contexts: Var, displacements: Var) -> Var {
        let pos = self.nn_pos.forward(g, store, displacements);
        let joined = g.concat_cols(&[contexts, pos]);
        self.nn_embed.forward(g, store, joined)
    }

    /// Pools neighbour rows into one row per group. `groups[k]` lists the
    /// rows of `contexts`/`displacements` that neighbour target `k`.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        contexts: Var,
        displacements: Var,
        groups: &[Vec<usize>],
    ) -> Var {
        let e = self.embed(g, store, contexts, displacements);
        g.group_max(e, groups)
    }
}

/// Neighbourhood of one target for a standalone pooling query.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PoolInputs {
    pub target_position: Point,
    pub others: Vec<(Point, Vec<f64>)>,
}

/// Pools a single neighbourhood without recording gradients.
pub fn pool(net: &PoolNet, store: &ParamStore, inputs: &PoolInputs) -> Result<Vec<f64>> {
    let h = net.context_dim();
    for (_, ctx) in &inputs.others {
        if ctx.len() != h {
            return Err(Error::DimensionMismatch {
                what: "pooling context".into(),
                expected: h,
                got: ctx.len(),
            });
        }
    }
    let n = inputs.others.len();
    let mut contexts = Matrix::zeros(n, h);
    let mut disp = Matrix::zeros(n, 2);
    for (r, (p, ctx)) in inputs.others.iter().enumerate() {
        contexts.row_mut(r).copy_from_slice(ctx);
        let d = *p - inputs.target_position;
        disp.set(r, 0, d.x);
        disp.set(r, 1, d.y);
    }
    let mut g = Graph::new();
    g.freeze(store.tag());
    let c = g.constant(contexts);
    let d = g.constant(disp);
    let v = net.forward(&mut g, store, c, d, &[(0..n).collect()]);
    Ok(g.value(v).data.clone())
}

/// The max stage alone: element-wise maximum of equal-length embeddings,
/// zero for an empty set.
pub fn max_pool(embeddings: &[Vec<f64>], dim: usize) -> Vec<f64> {
    if embeddings.is_empty() {
        return vec![0.0; dim];
    }
    let mut g = Graph::new();
    let e = g.constant(Matrix::from_rows(embeddings));
    let v = g.group_max(e, &[(0..embeddings.len()).collect()]);
    g.value(v).data.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(h: usize, e: usize) -> (PoolNet, ParamStore) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParamStore::new(1);
        let net = PoolNet::new(&mut store, "pool", h, e, &mut rng);
        (net, store)
    }

    fn inputs(n: usize, h: usize, seed: u64) -> PoolInputs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PoolInputs {
            target_position: Point::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
            others: (0..n)
                .map(|_| {
                    (
                        Point::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
                        (0..h).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn empty_neighbourhood_pools_to_zero() {
        let (net, store) = net(8, 6);
        let v = pool(&net, &store, &PoolInputs::default()).unwrap();
        assert_eq!(v, vec![0.0; 6]);
    }

    #[test]
    fn singleton_equals_its_embedding() {
        let (net, store) = net(8, 6);
        let inp = inputs(1, 8, 4);
        let v = pool(&net, &store, &inp).unwrap();
        let mut g = Graph::new();
        let (p, ctx) = &inp.others[0];
        let c = g.constant(Matrix::from_vec(1, 8, ctx.clone()));
        let d = *p - inp.target_position;
        let d = g.constant(Matrix::from_vec(1, 2, vec![d.x, d.y]));
        let e = net.embed(&mut g, &store, c, d);
        assert_eq!(v, g.value(e).data);
    }

    #[test]
    fn elementwise_max_of_stub_embeddings() {
        assert_eq!(max_pool(&[vec![1.0, 3.0], vec![2.0, 0.0]], 2), vec![2.0, 3.0]);
        assert_eq!(max_pool(&[], 3), vec![0.0; 3]);
    }

    #[test]
    fn wrong_context_width_is_rejected() {
        let (net, store) = net(8, 6);
        let mut inp = inputs(2, 8, 5);
        inp.others[1].1.pop();
        assert!(matches!(
            pool(&net, &store, &inp),
            Err(Error::DimensionMismatch { expected: 8, got: 7, .. })
        ));
    }

    #[test]
    fn permutations_are_bit_exact() {
        let (net, store) = net(8, 6);
        let inp = inputs(5, 8, 9);
        let base = pool(&net, &store, &inp).unwrap();
        let mut rev = inp.clone();
        rev.others.reverse();
        assert_eq!(pool(&net, &store, &rev).unwrap(), base);
        let mut rot = inp.clone();
        rot.others.rotate_left(2);
        assert_eq!(pool(&net, &store, &rot).unwrap(), base);
    }
}
