//! Parameter storage and the layers built from it: affine maps, small
//! perceptrons and LSTM cells.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tape::{Graph, Matrix, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named parameter matrices. The tag identifies the store inside a [`Graph`]
/// so that gradients for several models can be told apart.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    tag: u32,
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamStore {
    pub fn new(tag: u32) -> Self {
        ParamStore {
            tag,
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn tag(&self) -> u32 {
        self.tag
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Matrix)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|m| m.data.len()).sum()
    }

    /// Flat view of every scalar: `(param, element index)` in storage order.
    pub fn coordinates(&self) -> impl Iterator<Item = (ParamId, usize)> + '_ {
        self.values
            .iter()
            .enumerate()
            .flat_map(|(i, m)| (0..m.data.len()).map(move |e| (ParamId(i), e)))
    }

    /// Overwrites every value with the same-named, same-shaped matrix from `other`.
    pub fn load_from(&mut self, other: &[(String, Matrix)]) -> Result<(), String> {
        if other.len() != self.values.len() {
            return Err(format!(
                "expected {} parameter arrays, found {}",
                self.values.len(),
                other.len()
            ));
        }
        for (name, m) in other {
            let id = self
                .find(name)
                .ok_or_else(|| format!("unknown parameter {name}"))?;
            let cur = &mut self.values[id.0];
            if cur.shape() != m.shape() {
                return Err(format!(
                    "parameter {name}: expected shape {:?}, found {:?}",
                    cur.shape(),
                    m.shape()
                ));
            }
            *cur = m.clone();
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, rows: usize, cols: usize, bound: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

/// `y = x W + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let weight = store.add(format!("{name}.weight"), uniform(rng, input, output, bound));
        let bias = store.add(format!("{name}.bias"), uniform(rng, 1, output, bound));
        Linear {
            weight,
            bias,
            input,
            output,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let xw = g.matmul(x, w);
        g.add_row(xw, b)
    }
}

/// Affine layers with ReLU between them; the last layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, sizes: &[usize], rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Mlp { layers }
    }

    pub fn input(&self) -> usize {
        self.layers[0].input
    }

    pub fn output(&self) -> usize {
        self.layers[self.layers.len() - 1].output
    }

    pub fn last(&self) -> &Linear {
        &self.layers[self.layers.len() - 1]
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, mut x: Var) -> Var {
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(g, store, x);
            if i + 1 < self.layers.len() {
                x = g.relu(x);
            }
        }
        x
    }
}

/// Hidden and cell state of an LSTM, one row per sequence in a batch.
#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

/// LSTM cell with fused gate weights over `[x; h]`, gate order input,
/// forget, candidate, output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmCell {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let weight = store.add(
            format!("{name}.weight"),
            uniform(rng, input + hidden, 4 * hidden, bound),
        );
        let bias = store.add(format!("{name}.bias"), uniform(rng, 1, 4 * hidden, bound));
        LstmCell {
            weight,
            bias,
            input,
            hidden,
        }
    }

    pub fn zero_state(&self, g: &mut Graph, batch: usize) -> LstmState {
        let h = g.constant(Matrix::zeros(batch, self.hidden));
        let c = g.constant(Matrix::zeros(batch, self.hidden));
        LstmState { h, c }
    }

    pub fn step(&self, g: &mut Graph, store: &ParamStore, x: Var, state: LstmState) -> LstmState {
        let hd = self.hidden;
        let xh = g.concat_cols(&[x, state.h]);
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let z = g.matmul(xh, w);
        let z = g.add_row(z, b);
        let i = g.slice_cols(z, 0, hd);
        let f = g.slice_cols(z, hd, hd);
        let cand = g.slice_cols(z, 2 * hd, hd);
        let o = g.slice_cols(z, 3 * hd, hd);
        let i = g.sigmoid(i);
        let f = g.sigmoid(f);
        let cand = g.tanh(cand);
        let o = g.sigmoid(o);
        let keep = g.mul(f, state.c);
        let write = g.mul(i, cand);
        let c = g.add(keep, write);
        let tc = g.tanh(c);
        let h = g.mul(o, tc);
        LstmState { h, c }
    }

    /// Like [`step`](Self::step), but rows where `mask` is false keep their
    /// previous state unchanged.
    pub fn masked_step(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        state: LstmState,
        mask: &[bool],
    ) -> LstmState {
        let next = self.step(g, store, x, state);
        if mask.iter().all(|&m| m) {
            return next;
        }
        LstmState {
            h: g.select_rows(mask, next.h, state.h),
            c: g.select_rows(mask, next.c, state.c),
        }
    }
}

/// Turns a slice of 2D points into an `n x 2` matrix.
pub fn points_matrix(points: &[crate::geometry::Point]) -> Matrix {
    let mut m = Matrix::zeros(points.len(), 2);
    for (r, p) in points.iter().enumerate() {
        m.set(r, 0, p.x);
        m.set(r, 1, p.y);
    }
    m
}

pub fn matrix_points(m: &Matrix) -> Vec<crate::geometry::Point> {
    assert_eq!(m.cols, 2);
    (0..m.rows)
        .map(|r| crate::geometry::Point::new(m.get(r, 0), m.get(r, 1)))
        .collect()
}
