//! Dense f64 tensors, a reverse-mode tape, graph layers and Adam.

pub mod checkpoint;
pub mod gradcheck;
mod graph;
mod optim;
mod params;
mod tape;

use ndarray::Array2;

pub use graph::Graph;
pub use optim::{clip_grad_norm, Adam};
pub use params::{init_parameters, Init, ParamSpec, Parameter, ParameterStore};
pub use tape::{Gradients, Tape, Var, GAT_LEAKY_SLOPE};

use crate::error::NeuralError;

/// `x·W + b` on the tape, with `W` and `b` looked up by name.
pub fn linear<'a>(
    t: &mut Tape<'a>,
    x: Var,
    store: &'a ParameterStore,
    w: &str,
    b: &str,
) -> Result<Var, NeuralError> {
    let w = t.param(store, w)?;
    let b = t.param(store, b)?;
    let xw = t.matmul(x, w);
    Ok(t.add_row(xw, b))
}

/// Mean-aggregation graph convolution: `mean_{j in N(i)}(x_j)·W + b`.
pub fn gcn<'a>(
    t: &mut Tape<'a>,
    x: Var,
    graph: &'a Graph,
    store: &'a ParameterStore,
    w: &str,
    b: &str,
) -> Result<Var, NeuralError> {
    let w = t.param(store, w)?;
    let b = t.param(store, b)?;
    let xw = t.matmul(x, w);
    let agg = t.gcn_mean(xw, graph);
    Ok(t.add_row(agg, b))
}

/// Single-head graph attention layer without bias.
pub fn gat<'a>(
    t: &mut Tape<'a>,
    x: Var,
    graph: &'a Graph,
    store: &'a ParameterStore,
    w: &str,
    attn: &str,
) -> Result<Var, NeuralError> {
    let w = t.param(store, w)?;
    let attn = t.param(store, attn)?;
    let z = t.matmul(x, w);
    Ok(t.gat_aggregate(z, attn, graph))
}

fn single_layer_store(pairs: [(&str, &Array2<f64>); 2]) -> ParameterStore {
    let mut s = ParameterStore::new();
    for (name, v) in pairs {
        s.insert(name, v.clone());
    }
    s
}

/// `X·W + b` (b is a 1×F row).
pub fn linear_forward(x: &Array2<f64>, w: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let store = single_layer_store([("w", w), ("b", b)]);
    let mut t = Tape::new();
    let xv = t.input_ref(x);
    let y = linear(&mut t, xv, &store, "w", "b").expect("bound above");
    t.value(y).clone()
}

/// GCN layer on a dense binary adjacency matrix.
pub fn gcn_forward(
    x: &Array2<f64>,
    a: &Array2<f64>,
    w: &Array2<f64>,
    b: &Array2<f64>,
) -> Array2<f64> {
    let graph = Graph::from_dense(a.view());
    let store = single_layer_store([("w", w), ("b", b)]);
    let mut t = Tape::new();
    let xv = t.input_ref(x);
    let y = gcn(&mut t, xv, &graph, &store, "w", "b").expect("bound above");
    t.value(y).clone()
}

/// GAT layer on a dense binary adjacency matrix; `attn` is 1×2F.
pub fn gat_forward(
    x: &Array2<f64>,
    a: &Array2<f64>,
    w: &Array2<f64>,
    attn: &Array2<f64>,
) -> Array2<f64> {
    let graph = Graph::from_dense(a.view());
    let store = single_layer_store([("w", w), ("attn", attn)]);
    let mut t = Tape::new();
    let xv = t.input_ref(x);
    let y = gat(&mut t, xv, &graph, &store, "w", "attn").expect("bound above");
    t.value(y).clone()
}

#[cfg(test)]
mod layer_tests;
