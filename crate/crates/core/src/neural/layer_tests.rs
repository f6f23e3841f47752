use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{check_gradients, GradCheckOptions};
use super::*;

fn random(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.random_range(-1.0..1.0))
}

fn random_adjacency(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Array2<f64> {
    let mut a = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                a[[i, j]] = 1.0;
                a[[j, i]] = 1.0;
            }
        }
    }
    a
}

/// Dense brute force: explicit neighbor averaging, then projection.
fn gcn_oracle(x: &Array2<f64>, a: &Array2<f64>, w: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut agg = Array2::<f64>::zeros(x.raw_dim());
    for i in 0..n {
        let deg: f64 = (0..n).map(|j| a[[i, j]]).sum();
        if deg == 0.0 {
            continue;
        }
        for j in 0..n {
            for d in 0..x.ncols() {
                agg[[i, d]] += a[[i, j]] * x[[j, d]] / deg;
            }
        }
    }
    let mut out = Array2::zeros((n, w.ncols()));
    for i in 0..n {
        for f in 0..w.ncols() {
            let mut acc = b[[0, f]];
            for d in 0..x.ncols() {
                acc += agg[[i, d]] * w[[d, f]];
            }
            out[[i, f]] = acc;
        }
    }
    out
}

/// Edge-wise brute force of single-head attention.
fn gat_oracle(x: &Array2<f64>, a: &Array2<f64>, w: &Array2<f64>, attn: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let f = w.ncols();
    let mut z = Array2::<f64>::zeros((n, f));
    for i in 0..n {
        for k in 0..f {
            z[[i, k]] = (0..x.ncols()).map(|d| x[[i, d]] * w[[d, k]]).sum();
        }
    }
    let mut out = Array2::zeros((n, f));
    for i in 0..n {
        let nbrs: Vec<usize> = (0..n).filter(|&j| a[[i, j]] != 0.0).collect();
        if nbrs.is_empty() {
            continue;
        }
        let logits: Vec<f64> = nbrs
            .iter()
            .map(|&j| {
                let mut e = 0.0;
                for k in 0..f {
                    e += attn[[0, k]] * z[[i, k]] + attn[[0, f + k]] * z[[j, k]];
                }
                if e > 0.0 {
                    e
                } else {
                    0.2 * e
                }
            })
            .collect();
        let denom: f64 = logits.iter().map(|e| e.exp()).sum();
        for (&j, e) in nbrs.iter().zip(&logits) {
            let alpha = e.exp() / denom;
            for k in 0..f {
                out[[i, k]] += alpha * z[[j, k]];
            }
        }
    }
    out
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

fn permute_rows(x: &Array2<f64>, p: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn(x.raw_dim(), |(i, j)| x[[p[i], j]])
}

fn permute_sym(a: &Array2<f64>, p: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn(a.raw_dim(), |(i, j)| a[[p[i], p[j]]])
}

#[test]
fn linear_examples() {
    let i2 = Array2::<f64>::eye(2);
    assert_eq!(linear_forward(&i2, &i2, &Array2::zeros((1, 2))), i2);
    assert_eq!(
        linear_forward(&array![[1.0, 2.0]], &array![[1.0], [1.0]], &array![[1.0]]),
        array![[4.0]]
    );
    let b = array![[0.5, -2.0, 3.0]];
    let y = linear_forward(&Array2::zeros((4, 2)), &Array2::ones((2, 3)), &b);
    for row in y.rows() {
        assert_eq!(row, b.row(0));
    }
}

#[test]
fn gcn_isolated_nodes_output_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&mut rng, (4, 3));
    let w = random(&mut rng, (3, 5));
    let b = random(&mut rng, (1, 5));
    let y = gcn_forward(&x, &Array2::zeros((4, 4)), &w, &b);
    for row in y.rows() {
        assert_eq!(row, b.row(0));
    }
}

#[test]
fn gcn_identical_connected_pair() {
    let x = array![[1.0, -2.0], [1.0, -2.0]];
    let a = array![[0.0, 1.0], [1.0, 0.0]];
    let w = array![[0.5, 1.0, 0.0], [2.0, -1.0, 1.0]];
    let b = array![[0.1, 0.2, 0.3]];
    let y = gcn_forward(&x, &a, &w, &b);
    let expected = linear_forward(&array![[1.0, -2.0]], &w, &b);
    assert_eq!(y.row(0), expected.row(0));
    assert_eq!(y.row(1), expected.row(0));
}

#[test]
fn gcn_path_graph_matches_neighbor_means() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&mut rng, (3, 4));
    let a = array![[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]];
    let w = random(&mut rng, (4, 2));
    let b = random(&mut rng, (1, 2));
    let y = gcn_forward(&x, &a, &w, &b);
    assert!(max_abs_diff(&y, &gcn_oracle(&x, &a, &w, &b)) < 1e-12);
    // node 1 averages nodes 0 and 2
    let mean = (&x.row(0) + &x.row(2)) / 2.0;
    let row1 = mean.dot(&w) + &b.row(0);
    assert!((&y.row(1) - &row1).iter().all(|d| d.abs() < 1e-12));
}

#[test]
fn gat_single_neighbor_takes_full_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&mut rng, (2, 3));
    let w = random(&mut rng, (3, 4));
    let attn = random(&mut rng, (1, 8));
    let a = array![[0.0, 1.0], [1.0, 0.0]];
    let y = gat_forward(&x, &a, &w, &attn);
    let z = x.dot(&w);
    assert!((&y.row(0) - &z.row(1)).iter().all(|d| d.abs() < 1e-12));
    assert!((&y.row(1) - &z.row(0)).iter().all(|d| d.abs() < 1e-12));
}

#[test]
fn gat_identical_neighbors_split_evenly() {
    let graph = Graph::from_dense(array![[0.0, 1.0, 1.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]].view());
    let mut store = ParameterStore::new();
    store.insert("w", array![[1.0, 0.5], [-0.5, 2.0]]);
    store.insert("attn", array![[0.3, -0.7, 1.1, 0.4]]);
    let mut t = Tape::new();
    let x = t.input(array![[0.2, 0.9], [1.0, -1.0], [1.0, -1.0]]);
    let y = gat(&mut t, x, &graph, &store, "w", "attn").unwrap();
    let alpha = t.attention(y).unwrap();
    assert!((alpha[0] - 0.5).abs() < 1e-12 && (alpha[1] - 0.5).abs() < 1e-12);
}

#[test]
fn gat_random_graphs_match_edgewise_oracle_and_normalize() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..50 {
        let n = rng.random_range(1..9);
        let a = if trial == 0 {
            // 3-node star centred on node 0
            array![[0.0, 1.0, 1.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]
        } else {
            random_adjacency(&mut rng, n, 0.5)
        };
        let n = a.nrows();
        let x = random(&mut rng, (n, 3));
        let w = random(&mut rng, (3, 4));
        let attn = random(&mut rng, (1, 8));
        let y = gat_forward(&x, &a, &w, &attn);
        assert!(max_abs_diff(&y, &gat_oracle(&x, &a, &w, &attn)) < 1e-12);

        let graph = Graph::from_dense(a.view());
        let mut store = ParameterStore::new();
        store.insert("w", w);
        store.insert("attn", attn);
        let mut t = Tape::new();
        let xv = t.input(x);
        let out = gat(&mut t, xv, &graph, &store, "w", "attn").unwrap();
        let alpha = t.attention(out).unwrap();
        let mut e = 0;
        for i in 0..n {
            let d = graph.degree(i);
            if d > 0 {
                let s: f64 = alpha[e..e + d].iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
            e += d;
        }
    }
}

#[test]
fn graph_layers_are_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let n = rng.random_range(2..12);
        let x = random(&mut rng, (n, 4));
        let a = random_adjacency(&mut rng, n, 0.4);
        let w = random(&mut rng, (4, 3));
        let b = random(&mut rng, (1, 3));
        let attn = random(&mut rng, (1, 6));
        let p = permutation(&mut rng, n);
        let (px, pa) = (permute_rows(&x, &p), permute_sym(&a, &p));

        let g = gcn_forward(&x, &a, &w, &b);
        let pg = gcn_forward(&px, &pa, &w, &b);
        assert!(max_abs_diff(&pg, &permute_rows(&g, &p)) < 1e-12);

        let h = gat_forward(&x, &a, &w, &attn);
        let ph = gat_forward(&px, &pa, &w, &attn);
        assert!(max_abs_diff(&ph, &permute_rows(&h, &p)) < 1e-12);
    }
}

#[derive(Clone, Copy, Debug)]
enum Layer {
    Linear,
    Gcn,
    Gat,
}

/// Scalar loss through one layer followed by ReLU and a row softmax, so
/// every tape op used by the policy appears in the chain.
fn layer_loss<'a>(
    t: &mut Tape<'a>,
    layer: Layer,
    x: &'a Array2<f64>,
    graph: &'a Graph,
    store: &'a ParameterStore,
    targets: &[usize],
) -> Var {
    let xv = t.input_ref(x);
    let h = match layer {
        Layer::Linear => linear(t, xv, store, "w", "b").unwrap(),
        Layer::Gcn => gcn(t, xv, graph, store, "w", "b").unwrap(),
        Layer::Gat => gat(t, xv, graph, store, "w", "attn").unwrap(),
    };
    let r = t.relu(h);
    let skip = t.add(r, h);
    let lp = t.log_softmax_rows(skip);
    let picked = t.gather(lp, targets.to_vec());
    let p = t.exp(lp);
    let ent = t.mul(p, lp);
    let ent = t.row_sum(ent);
    let sq = t.square(picked);
    let s = t.sub(sq, ent);
    t.mean(s)
}

#[test]
fn layer_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut total = gradcheck::GradCheckReport::default();
    for trial in 0..120 {
        let layer = [Layer::Linear, Layer::Gcn, Layer::Gat][trial % 3];
        let n = rng.random_range(1..6);
        let (d, f) = (rng.random_range(1..5), rng.random_range(2..5));
        let x = random(&mut rng, (n, d));
        let graph = Graph::from_dense(random_adjacency(&mut rng, n, 0.6).view());
        let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..f)).collect();
        let mut store = ParameterStore::new();
        store.insert("w", random(&mut rng, (d, f)));
        match layer {
            Layer::Gat => store.insert("attn", random(&mut rng, (1, 2 * f))),
            _ => store.insert("b", random(&mut rng, (1, f))),
        }
        let grads = {
            let mut t = Tape::new();
            let loss = layer_loss(&mut t, layer, &x, &graph, &store, &targets);
            t.backward(loss).unwrap()
        };
        let report = check_gradients(
            &mut [&mut store],
            &grads,
            |s| {
                let mut t = Tape::new();
                let loss = layer_loss(&mut t, layer, &x, &graph, s[0], &targets);
                t.value(loss)[[0, 0]]
            },
            GradCheckOptions::default(),
        );
        assert!(report.failures == 0, "{layer:?} trial {trial}: {report:?}");
        total.merge(&report);
    }
    assert!(total.checked > 1000);
    assert!(total.skipped_kinks * 100 < total.checked, "{total:?}");
}
