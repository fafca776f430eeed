//! Reverse-mode automatic differentiation over dense row-major `f64` matrices.
//!
//! A [`Graph`] records every operation of one forward pass. Rows are
//! independent through every op except the explicit row-mixing ones
//! (`gather_rows`, `group_max`, `group_sum`, `concat_rows`, `mean`), so a
//! batch of samples stacked as rows produces bit-identical results to
//! evaluating each sample alone.

use std::collections::HashMap;

use crate::nn::{ParamId, ParamStore};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn scalar(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "not a scalar");
        self.data[0]
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(u32, ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softplus(Var),
    Sqrt(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    /// Source row of each output element, `usize::MAX` for empty groups.
    GroupMax(Var, Vec<usize>),
    GroupSum(Var, Vec<Vec<usize>>),
    SumCols(Var),
    Mean(Var),
    Select(Vec<bool>, Var, Var),
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Gradients of a loss with respect to the trainable parameters it touched,
/// keyed by store tag.
#[derive(Debug, Default)]
pub struct Gradients {
    by_store: HashMap<u32, Vec<Option<Matrix>>>,
}

impl Gradients {
    /// Gradient for every parameter of `store`, `None` where the loss does
    /// not depend on it.
    pub fn for_store(&self, store: &ParamStore) -> Vec<Option<Matrix>> {
        self.by_store
            .get(&store.tag())
            .cloned()
            .unwrap_or_else(|| vec![None; store.len()])
    }

    pub fn take_store(&mut self, store: &ParamStore) -> Vec<Option<Matrix>> {
        self.by_store
            .remove(&store.tag())
            .unwrap_or_else(|| vec![None; store.len()])
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<(u32, ParamId), Var>,
    frozen: Vec<u32>,
    store_sizes: HashMap<u32, usize>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    /// Parameters of stores with this tag enter the graph as constants:
    /// gradients still flow through them to their inputs but are not collected.
    pub fn freeze(&mut self, tag: u32) {
        self.frozen.push(tag);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let key = (store.tag(), id);
        if let Some(&v) = self.params.get(&key) {
            return v;
        }
        let value = store.get(id).clone();
        let v = if self.frozen.contains(&store.tag()) {
            self.push(value, Op::Leaf, false)
        } else {
            self.store_sizes.insert(store.tag(), store.len());
            self.push(value, Op::Param(store.tag(), id), true)
        };
        self.params.insert(key, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.cols, bv.rows, "matmul shape {:?} x {:?}", av.shape(), bv.shape());
        let (n, k, m) = (av.rows, av.cols, bv.cols);
        // row-major A (n x k) times row-major B (k x m)
        let out = gemm(n, k, m, &av.data, (k, 1), &bv.data, (m, 1));
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::MatMul(a, b), rg)
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "elementwise shape mismatch");
        let out = Matrix {
            rows: av.rows,
            cols: av.cols,
            data: av.data.iter().zip(&bv.data).map(|(&x, &y)| f(x, y)).collect(),
        };
        let rg = self.rg(a) || self.rg(b);
        self.push(out, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Adds a `1 x cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (av, rv) = (self.value(a), self.value(row));
        assert_eq!(rv.rows, 1);
        assert_eq!(av.cols, rv.cols, "bias width");
        let mut out = av.clone();
        for r in 0..out.rows {
            for (o, b) in out.row_mut(r).iter_mut().zip(&rv.data) {
                *o += b;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        self.push(out, Op::AddRow(a, row), rg)
    }

    /// `scale * a + shift`, elementwise.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let out = self.value(a).map(|v| scale * v + shift);
        let rg = self.rg(a);
        self.push(out, Op::Affine(a, scale), rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.affine(a, s, 0.0)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let out = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(out, op, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |v| if v > 0.0 { v } else { 0.0 })
    }

    /// `ln(1 + e^x)` in a form that neither overflows nor loses precision.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, Op::Softplus(a), softplus)
    }

    /// Square root with a zero subgradient at 0.
    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sqrt(a), f64::sqrt)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let pv = self.value(p);
                assert_eq!(pv.rows, rows, "concat_cols row mismatch");
                data.extend_from_slice(pv.row(r));
            }
        }
        let out = Matrix::from_vec(rows, cols, data);
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(out, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.cols, cols, "concat_rows column mismatch");
            data.extend_from_slice(&pv.data);
            rows += pv.rows;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(Matrix::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()), rg)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let av = self.value(a);
        assert!(start + len <= av.cols, "slice out of range");
        let mut out = Matrix::zeros(av.rows, len);
        for r in 0..av.rows {
            out.row_mut(r)
                .copy_from_slice(&av.row(r)[start..start + len]);
        }
        let rg = self.rg(a);
        self.push(out, Op::SliceCols(a, start), rg)
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let av = self.value(a);
        let mut out = Matrix::zeros(idx.len(), av.cols);
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(av.row(i));
        }
        let rg = self.rg(a);
        self.push(out, Op::GatherRows(a, idx.to_vec()), rg)
    }

    /// Column-wise maximum over the rows of each group; an empty group yields
    /// a zero row. The subgradient goes to the first maximal row.
    pub fn group_max(&mut self, a: Var, groups: &[Vec<usize>]) -> Var {
        let av = self.value(a);
        let c = av.cols;
        let mut out = Matrix::zeros(groups.len(), c);
        let mut arg = vec![usize::MAX; groups.len() * c];
        for (g, members) in groups.iter().enumerate() {
            let Some((&first, rest)) = members.split_first() else {
                continue;
            };
            let orow = &mut out.data[g * c..(g + 1) * c];
            let arow = &mut arg[g * c..(g + 1) * c];
            orow.copy_from_slice(av.row(first));
            arow.fill(first);
            for &m in rest {
                for (j, &v) in av.row(m).iter().enumerate() {
                    if v.total_cmp(&orow[j]).is_gt() {
                        orow[j] = v;
                        arow[j] = m;
                    }
                }
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::GroupMax(a, arg), rg)
    }

    /// Row sums within each group; empty groups give zero rows.
    pub fn group_sum(&mut self, a: Var, groups: &[Vec<usize>]) -> Var {
        let av = self.value(a);
        let mut out = Matrix::zeros(groups.len(), av.cols);
        for (g, members) in groups.iter().enumerate() {
            for &m in members {
                for (o, v) in out.row_mut(g).iter_mut().zip(av.row(m)) {
                    *o += v;
                }
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::GroupSum(a, groups.to_vec()), rg)
    }

    /// Sum of each row, giving a column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let data = (0..av.rows).map(|r| av.row(r).iter().sum()).collect();
        let out = Matrix::from_vec(av.rows, 1, data);
        let rg = self.rg(a);
        self.push(out, Op::SumCols(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let m = av.data.iter().sum::<f64>() / av.data.len() as f64;
        let rg = self.rg(a);
        self.push(Matrix::from_vec(1, 1, vec![m]), Op::Mean(a), rg)
    }

    /// Row-wise choice: row `r` comes from `a` where `mask[r]`, else from `b`.
    pub fn select_rows(&mut self, mask: &[bool], a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape());
        assert_eq!(mask.len(), av.rows);
        let mut out = bv.clone();
        for (r, &m) in mask.iter().enumerate() {
            if m {
                out.row_mut(r).copy_from_slice(av.row(r));
            }
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Select(mask.to_vec(), a, b), rg)
    }

    /// Euclidean norm of each row, as a column.
    pub fn row_norms(&mut self, a: Var) -> Var {
        let sq = self.mul(a, a);
        let s = self.sum_cols(sq);
        self.sqrt(s)
    }

    /// Back-propagates from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).data.len(), 1, "loss must be a scalar");
        let mut grads: Vec<Option<Matrix>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));
        let mut out = Gradients::default();
        for (&tag, &n) in &self.store_sizes {
            out.by_store.insert(tag, vec![None; n]);
        }

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(grad) = grads[idx].take() else {
                continue;
            };
            let y = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::Param(tag, id) => {
                    let slot = &mut out.by_store.get_mut(tag).expect("store registered")[id.0];
                    match slot {
                        Some(g) => g.add_assign(&grad),
                        None => *slot = Some(grad),
                    }
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (n, k, m) = (av.rows, av.cols, bv.cols);
                    if self.rg(*a) {
                        // dA = G * B^T
                        let da = gemm(n, m, k, &grad.data, (m, 1), &bv.data, (1, m));
                        accum(&mut grads, *a, da);
                    }
                    if self.rg(*b) {
                        // dB = A^T * G
                        let db = gemm(k, n, m, &av.data, (1, k), &grad.data, (m, 1));
                        accum(&mut grads, *b, db);
                    }
                }
                Op::Add(a, b) => {
                    if self.rg(*b) {
                        accum(&mut grads, *b, grad.clone());
                    }
                    if self.rg(*a) {
                        accum(&mut grads, *a, grad);
                    }
                }
                Op::Sub(a, b) => {
                    if self.rg(*b) {
                        accum(&mut grads, *b, grad.map(|g| -g));
                    }
                    if self.rg(*a) {
                        accum(&mut grads, *a, grad);
                    }
                }
                Op::Mul(a, b) => {
                    if self.rg(*a) {
                        let bv = self.value(*b);
                        accum(&mut grads, *a, zip(&grad, bv, |g, x| g * x));
                    }
                    if self.rg(*b) {
                        let av = self.value(*a);
                        accum(&mut grads, *b, zip(&grad, av, |g, x| g * x));
                    }
                }
                Op::AddRow(a, row) => {
                    if self.rg(*row) {
                        let mut dr = Matrix::zeros(1, grad.cols);
                        for r in 0..grad.rows {
                            for (d, g) in dr.data.iter_mut().zip(grad.row(r)) {
                                *d += g;
                            }
                        }
                        accum(&mut grads, *row, dr);
                    }
                    if self.rg(*a) {
                        accum(&mut grads, *a, grad);
                    }
                }
                Op::Affine(a, s) => {
                    let s = *s;
                    accum(&mut grads, *a, grad.map(|g| g * s));
                }
                Op::Sigmoid(a) => {
                    accum(&mut grads, *a, zip(&grad, y, |g, s| g * s * (1.0 - s)));
                }
                Op::Tanh(a) => {
                    accum(&mut grads, *a, zip(&grad, y, |g, t| g * (1.0 - t * t)));
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    accum(&mut grads, *a, zip(&grad, x, |g, v| if v > 0.0 { g } else { 0.0 }));
                }
                Op::Softplus(a) => {
                    let x = self.value(*a);
                    accum(&mut grads, *a, zip(&grad, x, |g, v| g * sigmoid(v)));
                }
                Op::Sqrt(a) => {
                    accum(
                        &mut grads,
                        *a,
                        zip(&grad, y, |g, s| if s > 0.0 { g * 0.5 / s } else { 0.0 }),
                    );
                }
                Op::ConcatCols(parts) => {
                    let mut c0 = 0;
                    for &p in parts {
                        let pc = self.value(p).cols;
                        if self.rg(p) {
                            let mut data = Vec::with_capacity(grad.rows * pc);
                            for r in 0..grad.rows {
                                data.extend_from_slice(&grad.row(r)[c0..c0 + pc]);
                            }
                            accum(&mut grads, p, Matrix::from_vec(grad.rows, pc, data));
                        }
                        c0 += pc;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut r0 = 0;
                    for &p in parts {
                        let pr = self.value(p).rows;
                        if self.rg(p) {
                            let c = grad.cols;
                            let dp = Matrix::from_vec(
                                pr,
                                c,
                                grad.data[r0 * c..(r0 + pr) * c].to_vec(),
                            );
                            accum(&mut grads, p, dp);
                        }
                        r0 += pr;
                    }
                }
                Op::SliceCols(a, start) => {
                    let av = self.value(*a);
                    let da = accum_into(&mut grads, *a, av.rows, av.cols);
                    for r in 0..grad.rows {
                        let row = &mut da.row_mut(r)[*start..*start + grad.cols];
                        for (d, g) in row.iter_mut().zip(grad.row(r)) {
                            *d += g;
                        }
                    }
                }
                Op::GatherRows(a, idx) => {
                    let av = self.value(*a);
                    let da = accum_into(&mut grads, *a, av.rows, av.cols);
                    for (r, &i) in idx.iter().enumerate() {
                        for (d, g) in da.row_mut(i).iter_mut().zip(grad.row(r)) {
                            *d += g;
                        }
                    }
                }
                Op::GroupMax(a, arg) => {
                    let av = self.value(*a);
                    let c = av.cols;
                    let mut da = Matrix::zeros(av.rows, c);
                    for (e, &src) in arg.iter().enumerate() {
                        if src != usize::MAX {
                            da.data[src * c + e % c] += grad.data[e];
                        }
                    }
                    accum(&mut grads, *a, da);
                }
                Op::GroupSum(a, groups) => {
                    let av = self.value(*a);
                    let mut da = Matrix::zeros(av.rows, av.cols);
                    for (g, members) in groups.iter().enumerate() {
                        for &m in members {
                            for (d, v) in da.row_mut(m).iter_mut().zip(grad.row(g)) {
                                *d += v;
                            }
                        }
                    }
                    accum(&mut grads, *a, da);
                }
                Op::SumCols(a) => {
                    let av = self.value(*a);
                    let mut da = Matrix::zeros(av.rows, av.cols);
                    for r in 0..av.rows {
                        da.row_mut(r).fill(grad.data[r]);
                    }
                    accum(&mut grads, *a, da);
                }
                Op::Mean(a) => {
                    let av = self.value(*a);
                    let g = grad.data[0] / av.data.len() as f64;
                    accum(&mut grads, *a, Matrix::filled(av.rows, av.cols, g));
                }
                Op::Select(mask, a, b) => {
                    let mut ga = grad.clone();
                    let mut gb = grad;
                    for (r, &m) in mask.iter().enumerate() {
                        if m {
                            gb.row_mut(r).fill(0.0);
                        } else {
                            ga.row_mut(r).fill(0.0);
                        }
                    }
                    if self.rg(*a) {
                        accum(&mut grads, *a, ga);
                    }
                    if self.rg(*b) {
                        accum(&mut grads, *b, gb);
                    }
                }
            }
        }
        out
    }
}

fn accum(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot => *slot = Some(g),
    }
}

/// The gradient slot of `v`, zero-filled on first use, for in-place accumulation.
fn accum_into(grads: &mut [Option<Matrix>], v: Var, rows: usize, cols: usize) -> &mut Matrix {
    grads[v.0].get_or_insert_with(|| Matrix::zeros(rows, cols))
}

fn zip(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    Matrix {
        rows: a.rows,
        cols: a.cols,
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    }
}

/// Product of an `n x k` and a `k x m` operand given by their (row, column)
/// strides, returned row-major.
fn gemm(n: usize, k: usize, m: usize, a: &[f64], sa: (usize, usize), b: &[f64], sb: (usize, usize)) -> Matrix {
    if n == 0 || m == 0 || k == 0 {
        return Matrix::zeros(n, m);
    }
    assert!(a.len() >= n * k && b.len() >= k * m);
    let mut data: Vec<f64> = Vec::with_capacity(n * m);
    // SAFETY: every index reachable through the dimensions and strides lies
    // inside `a` and `b`; with beta = 0 dgemm writes all n * m outputs
    // without reading them, so the buffer is fully initialized afterwards.
    unsafe {
        matrixmultiply::dgemm(
            n,
            k,
            m,
            1.0,
            a.as_ptr(),
            sa.0 as isize,
            sa.1 as isize,
            b.as_ptr(),
            sb.0 as isize,
            sb.1 as isize,
            0.0,
            data.as_mut_ptr(),
            m as isize,
            1,
        );
        data.set_len(n * m);
    }
    Matrix::from_vec(n, m, data)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
