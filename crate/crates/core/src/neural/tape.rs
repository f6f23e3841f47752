//! Reverse-mode differentiation over dense row-major matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters are
//! borrowed from their [`ParameterStore`]s, so recording a pass copies no
//! weights. [`Tape::backward`] walks the records in reverse and returns the
//! gradient of a scalar root with respect to every parameter it touched.

use std::borrow::Cow;

use indexmap::IndexMap;
use ndarray::{Array2, Axis, Zip};

use super::{Graph, ParameterStore};
use crate::error::NeuralError;

/// Slope of the LeakyReLU applied to attention logits.
pub const GAT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<'a> {
    Input,
    Param(&'a str),
    MatMul(usize, usize),
    AddRow(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MulConst(usize, Array2<f64>),
    Scale(usize, f64),
    Relu(usize),
    LogSoftmax(usize),
    Exp(usize),
    Square(usize),
    Gather(usize, Vec<usize>),
    RowSum(usize),
    Sum(usize),
    GcnMean(usize, &'a Graph),
    Gat {
        z: usize,
        attn: usize,
        graph: &'a Graph,
        alpha: Vec<f64>,
        positive: Vec<bool>,
    },
}

struct Node<'a> {
    value: Cow<'a, Array2<f64>>,
    op: Op<'a>,
}

/// Gradients keyed by parameter name.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    by_name: IndexMap<String, Array2<f64>>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.by_name.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.by_name.iter().map(|(k, v)| (k.as_str(), v))
    }
}

#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    consumed: bool,
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op<'a>) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant input; receives no gradient.
    pub fn input(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Input)
    }

    pub fn input_ref(&mut self, value: &'a Array2<f64>) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(value),
            op: Op::Input,
        });
        Var(self.nodes.len() - 1)
    }

    /// Binds a named parameter of `store`.
    pub fn param(&mut self, store: &'a ParameterStore, name: &str) -> Result<Var, NeuralError> {
        let (key, value) = store
            .entry(name)
            .ok_or_else(|| NeuralError::UnknownParameter(name.to_string()))?;
        self.nodes.push(Node {
            value: Cow::Borrowed(value),
            op: Op::Param(key),
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a.0, b.0))
    }

    /// `x + b` with the 1×F row `b` broadcast over every row of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Var {
        let bv = self.value(b);
        assert_eq!(bv.nrows(), 1, "bias must be a row vector");
        let v = self.value(x) + bv;
        self.push(v, Op::AddRow(x.0, b.0))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "add shape mismatch");
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "sub shape mismatch");
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "mul shape mismatch");
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a.0, b.0))
    }

    /// Elementwise product with a constant matrix of the same shape.
    pub fn mul_const(&mut self, a: Var, c: Array2<f64>) -> Var {
        assert_eq!(self.value(a).dim(), c.dim(), "mul_const shape mismatch");
        let v = self.value(a) * &c;
        self.push(v, Op::MulConst(a.0, c))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        self.push(v, Op::Scale(a.0, k))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a.0))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            row.mapv_inplace(|x| x - lse);
        }
        self.push(v, Op::LogSoftmax(a.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::exp);
        self.push(v, Op::Exp(a.0))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * x);
        self.push(v, Op::Square(a.0))
    }

    /// Picks `a[i, idx[i]]` from every row, giving an N×1 column.
    pub fn gather(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let av = self.value(a);
        assert_eq!(av.nrows(), idx.len(), "gather index length");
        let v = Array2::from_shape_fn((idx.len(), 1), |(i, _)| av[[i, idx[i]]]);
        self.push(v, Op::Gather(a.0, idx))
    }

    /// Row sums as an N×1 column.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(v, Op::RowSum(a.0))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(v, Op::Sum(a.0))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Row `i` becomes the mean of the rows of its neighbors; isolated
    /// nodes get the zero row.
    pub fn gcn_mean(&mut self, x: Var, graph: &'a Graph) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.nrows(), graph.node_count(), "graph/feature size mismatch");
        let mut out = Array2::zeros(xv.raw_dim());
        for i in 0..graph.node_count() {
            let nbrs = graph.neighbors(i);
            if nbrs.is_empty() {
                continue;
            }
            let mut row = out.row_mut(i);
            for &j in nbrs {
                row += &xv.row(j);
            }
            row /= nbrs.len() as f64;
        }
        self.push(out, Op::GcnMean(x.0, graph))
    }

    /// Single-head graph attention over projected features `z` (N×F) with
    /// attention vector `attn` (1×2F).
    pub fn gat_aggregate(&mut self, z: Var, attn: Var, graph: &'a Graph) -> Var {
        let zv = self.value(z);
        let av = self.value(attn);
        let (n, f) = zv.dim();
        assert_eq!(n, graph.node_count(), "graph/feature size mismatch");
        assert_eq!(av.dim(), (1, 2 * f), "attention vector must be 1x2F");
        let a_src = av.slice(ndarray::s![0, ..f]);
        let a_dst = av.slice(ndarray::s![0, f..]);
        let src: ndarray::Array1<f64> = zv.dot(&a_src);
        let dst: ndarray::Array1<f64> = zv.dot(&a_dst);

        let mut alpha = vec![0.0; graph.edge_count()];
        let mut positive = vec![false; graph.edge_count()];
        let mut out = Array2::zeros((n, f));
        for i in 0..n {
            let range = graph.row_range(i);
            if range.is_empty() {
                continue;
            }
            let mut max = f64::NEG_INFINITY;
            for (e, &j) in range.clone().zip(graph.neighbors(i)) {
                let pre = src[i] + dst[j];
                positive[e] = pre > 0.0;
                let logit = if positive[e] { pre } else { GAT_LEAKY_SLOPE * pre };
                alpha[e] = logit;
                max = max.max(logit);
            }
            let mut total = 0.0;
            for e in range.clone() {
                alpha[e] = (alpha[e] - max).exp();
                total += alpha[e];
            }
            let mut row = out.row_mut(i);
            for (e, &j) in range.zip(graph.neighbors(i)) {
                alpha[e] /= total;
                row.scaled_add(alpha[e], &zv.row(j));
            }
        }
        self.push(
            out,
            Op::Gat {
                z: z.0,
                attn: attn.0,
                graph,
                alpha,
                positive,
            },
        )
    }

    /// Attention coefficients recorded by a `gat_aggregate` node, in
    /// neighbor-list order.
    pub fn attention(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::Gat { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    /// Gradients of the scalar `root` with respect to every bound parameter.
    /// A tape can be differentiated once.
    pub fn backward(&mut self, root: Var) -> Result<Gradients, NeuralError> {
        if self.consumed {
            return Err(NeuralError::TapeConsumed);
        }
        let (r, c) = self.value(root).dim();
        if (r, c) != (1, 1) {
            return Err(NeuralError::NonScalarRoot(r, c));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Array2::ones((1, 1)));
        let mut out = Gradients::default();

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let val = |k: usize| -> &Array2<f64> { &self.nodes[k].value };
            match &node.op {
                Op::Input => {}
                Op::Param(name) => match out.by_name.get_mut(*name) {
                    Some(acc) => *acc += &g,
                    None => {
                        out.by_name.insert(name.to_string(), g);
                    }
                },
                Op::MatMul(a, b) => {
                    let ga = g.dot(&val(*b).t());
                    let gb = val(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddRow(x, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *b, gb);
                    acc(&mut grads, *x, g);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, -&g);
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * val(*b);
                    let gb = &g * val(*a);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::MulConst(a, c) => acc(&mut grads, *a, &g * c),
                Op::Scale(a, k) => acc(&mut grads, *a, g * *k),
                Op::Relu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(val(*a))
                        .for_each(|gi, &x| {
                            if x <= 0.0 {
                                *gi = 0.0
                            }
                        });
                    acc(&mut grads, *a, ga);
                }
                Op::LogSoftmax(a) => {
                    // d/dx = g - softmax * rowsum(g)
                    let y = &node.value;
                    let mut ga = g.clone();
                    for (mut grow, yrow) in ga.rows_mut().into_iter().zip(y.rows()) {
                        let total: f64 = grow.sum();
                        Zip::from(&mut grow).and(&yrow).for_each(|gi, &yi| *gi -= yi.exp() * total);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Exp(a) => acc(&mut grads, *a, g * &**node.value),
                Op::Square(a) => acc(&mut grads, *a, g * val(*a) * 2.0),
                Op::Gather(a, idx) => {
                    let mut ga = Array2::zeros(val(*a).raw_dim());
                    for (row, &k) in idx.iter().enumerate() {
                        ga[[row, k]] = g[[row, 0]];
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::RowSum(a) => {
                    let shape = val(*a).raw_dim();
                    let ga = Array2::from_shape_fn(shape, |(r, _)| g[[r, 0]]);
                    acc(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let ga = Array2::from_elem(val(*a).raw_dim(), g[[0, 0]]);
                    acc(&mut grads, *a, ga);
                }
                Op::GcnMean(x, graph) => {
                    let mut gx = Array2::zeros(val(*x).raw_dim());
                    for r in 0..graph.node_count() {
                        let nbrs = graph.neighbors(r);
                        if nbrs.is_empty() {
                            continue;
                        }
                        let w = 1.0 / nbrs.len() as f64;
                        for &j in nbrs {
                            gx.row_mut(j).scaled_add(w, &g.row(r));
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Gat {
                    z,
                    attn,
                    graph,
                    alpha,
                    positive,
                } => {
                    let (gz, gattn) = gat_backward(val(*z), val(*attn), graph, alpha, positive, &g);
                    acc(&mut grads, *z, gz);
                    acc(&mut grads, *attn, gattn);
                }
            }
        }
        Ok(out)
    }
}

fn acc(grads: &mut [Option<Array2<f64>>], k: usize, g: Array2<f64>) {
    match &mut grads[k] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

fn gat_backward(
    z: &Array2<f64>,
    attn: &Array2<f64>,
    graph: &Graph,
    alpha: &[f64],
    positive: &[bool],
    g: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let (n, f) = z.dim();
    let a_src = attn.slice(ndarray::s![0, ..f]);
    let a_dst = attn.slice(ndarray::s![0, f..]);
    let mut gz = Array2::zeros((n, f));
    let mut g_src = vec![0.0; n];
    let mut g_dst = vec![0.0; n];
    let mut g_alpha = Vec::new();
    for i in 0..n {
        let range = graph.row_range(i);
        if range.is_empty() {
            continue;
        }
        let gi = g.row(i);
        g_alpha.clear();
        let mut weighted = 0.0;
        for (e, &j) in range.clone().zip(graph.neighbors(i)) {
            // out_i = sum_j alpha_ij z_j
            gz.row_mut(j).scaled_add(alpha[e], &gi);
            let ga = gi.dot(&z.row(j));
            weighted += alpha[e] * ga;
            g_alpha.push(ga);
        }
        for ((e, &j), ga) in range.zip(graph.neighbors(i)).zip(&g_alpha) {
            let g_logit = alpha[e] * (ga - weighted);
            let g_pre = if positive[e] {
                g_logit
            } else {
                GAT_LEAKY_SLOPE * g_logit
            };
            g_src[i] += g_pre;
            g_dst[j] += g_pre;
        }
    }
    let mut gattn = Array2::zeros((1, 2 * f));
    for r in 0..n {
        let zr = z.row(r);
        if g_src[r] != 0.0 {
            gz.row_mut(r).scaled_add(g_src[r], &a_src);
            gattn.slice_mut(ndarray::s![0, ..f]).scaled_add(g_src[r], &zr);
        }
        if g_dst[r] != 0.0 {
            gz.row_mut(r).scaled_add(g_dst[r], &a_dst);
            gattn.slice_mut(ndarray::s![0, f..]).scaled_add(g_dst[r], &zr);
        }
    }
    (gz, gattn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn linear_sum_gradients_by_hand() {
        let mut store = ParameterStore::new();
        store.insert("w", array![[1.0, -1.0], [2.0, 0.5]]);
        store.insert("b", array![[0.1, 0.2]]);
        let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let mut t = Tape::new();
        let xv = t.input(x.clone());
        let w = t.param(&store, "w").unwrap();
        let b = t.param(&store, "b").unwrap();
        let xw = t.matmul(xv, w);
        let y = t.add_row(xw, b);
        let loss = t.sum(y);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get("b").unwrap(), &array![[3.0, 3.0]]);
        let ones = Array2::<f64>::ones((3, 2));
        assert_eq!(g.get("w").unwrap(), &x.t().dot(&ones));
    }

    #[test]
    fn unused_parameter_gets_no_gradient_and_store_stays_zero() {
        let mut store = ParameterStore::new();
        store.insert("used", array![[2.0]]);
        store.insert("unused", array![[5.0]]);
        let mut t = Tape::new();
        let u = t.param(&store, "used").unwrap();
        let sq = t.square(u);
        let loss = t.sum(sq);
        let g = t.backward(loss).unwrap();
        assert!(g.get("unused").is_none());
        let mut store = store.clone();
        store.accumulate(&g);
        assert_eq!(store.param("unused").unwrap().grad, array![[0.0]]);
        assert_eq!(store.param("used").unwrap().grad, array![[4.0]]);
    }

    #[test]
    fn second_backward_is_an_error() {
        let mut t = Tape::new();
        let x = t.input(array![[1.0]]);
        let s = t.sum(x);
        t.backward(s).unwrap();
        assert_eq!(t.backward(s).unwrap_err(), NeuralError::TapeConsumed);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut t = Tape::new();
        let x = t.input(array![[1.0, 2.0]]);
        assert_eq!(t.backward(x).unwrap_err(), NeuralError::NonScalarRoot(1, 2));
    }

    #[test]
    fn unknown_parameter_rejected() {
        let store = ParameterStore::new();
        let mut t = Tape::new();
        assert!(matches!(
            t.param(&store, "nope"),
            Err(NeuralError::UnknownParameter(_))
        ));
    }

    #[test]
    fn log_softmax_rows_normalize() {
        let mut t = Tape::new();
        let x = t.input(array![[1.0, 2.0, 3.0], [1000.0, 0.0, -1000.0]]);
        let y = t.log_softmax_rows(x);
        for row in t.value(y).rows() {
            let s: f64 = row.iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|v| v.is_finite()));
        }
    }
}
