//! Proximity graphs and normalized features for the policy networks.

use ndarray::Array2;

use crate::neural::Graph;
use crate::sim::{classify_pair, AircraftId, AircraftState, SimConfig};

pub const FEATURE_DIM: usize = 8;
pub const ALTITUDE_SCALE_M: f64 = 10_000.0;
pub const SPEED_SCALE_MPS: f64 = 250.0;

/// N×8 rows of `(x, y, z, h, s, z_diff, s_diff, h_diff)`, normalized.
pub type FeatureMatrix = Array2<f64>;

/// The three binary adjacency matrices over one aircraft ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencySet {
    pub a_global: Array2<f64>,
    pub a_detect: Array2<f64>,
    pub a_penalty: Array2<f64>,
    pub id_order: Vec<AircraftId>,
}

/// Neighbor-list form of an [`AdjacencySet`], in the same order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GraphSet {
    pub global: Graph,
    pub detect: Graph,
    pub penalty: Graph,
}

impl GraphSet {
    pub fn node_count(&self) -> usize {
        self.global.node_count()
    }

    pub fn block_diagonal<'g>(sets: impl IntoIterator<Item = &'g GraphSet> + Clone) -> GraphSet {
        GraphSet {
            global: Graph::block_diagonal(sets.clone().into_iter().map(|s| &s.global)),
            detect: Graph::block_diagonal(sets.clone().into_iter().map(|s| &s.detect)),
            penalty: Graph::block_diagonal(sets.into_iter().map(|s| &s.penalty)),
        }
    }
}

impl AdjacencySet {
    pub fn len(&self) -> usize {
        self.id_order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_order.is_empty()
    }

    pub fn graphs(&self) -> GraphSet {
        GraphSet {
            global: Graph::from_dense(self.a_global.view()),
            detect: Graph::from_dense(self.a_detect.view()),
            penalty: Graph::from_dense(self.a_penalty.view()),
        }
    }
}

pub fn build_adjacency(states: &[AircraftState], cfg: &SimConfig) -> AdjacencySet {
    let n = states.len();
    let mut a_global = Array2::ones((n, n));
    let mut a_detect = Array2::zeros((n, n));
    let mut a_penalty = Array2::zeros((n, n));
    for i in 0..n {
        a_global[[i, i]] = 0.0;
        for j in i + 1..n {
            let class = classify_pair(&states[i], &states[j], cfg);
            if class.within_detection() {
                a_detect[[i, j]] = 1.0;
                a_detect[[j, i]] = 1.0;
            }
            if class.within_penalty() {
                a_penalty[[i, j]] = 1.0;
                a_penalty[[j, i]] = 1.0;
            }
        }
    }
    AdjacencySet {
        a_global,
        a_detect,
        a_penalty,
        id_order: states.iter().map(|s| s.id).collect(),
    }
}

/// Graph form directly, skipping the dense matrices.
pub fn build_graphs(states: &[AircraftState], cfg: &SimConfig) -> GraphSet {
    build_adjacency(states, cfg).graphs()
}

pub fn feature_row(s: &AircraftState, cfg: &SimConfig) -> [f64; FEATURE_DIM] {
    let r = cfg.airspace_radius_m;
    [
        s.x / r,
        s.y / r,
        s.z / ALTITUDE_SCALE_M,
        (s.h - 180.0) / 180.0,
        s.s / SPEED_SCALE_MPS,
        s.z_diff() / ALTITUDE_SCALE_M,
        s.s_diff() / SPEED_SCALE_MPS,
        s.h_diff() / 180.0,
    ]
}

pub fn build_features(states: &[AircraftState], cfg: &SimConfig) -> FeatureMatrix {
    let mut x = Array2::zeros((states.len(), FEATURE_DIM));
    for (mut row, s) in x.rows_mut().into_iter().zip(states) {
        for (dst, v) in row.iter_mut().zip(feature_row(s, cfg)) {
            *dst = v;
        }
    }
    x
}
