//! Actor and critic networks over the three proximity graphs.
//!
//! Both networks share one shape and no weights:
//!
//! ```text
//! E = relu(L2(relu(L1(X))))
//! S = relu(E + G_global(E) + G_detect(E) + G_penalty(E))
//! H = relu(L3(S))
//! actor: softmax(L_head(H))     critic: L_head(H)
//! ```
//!
//! A graph-layer row with no neighbors contributes zero to `S`.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adjacency::{AdjacencySet, FeatureMatrix, GraphSet, FEATURE_DIM};
use crate::error::{CheckpointError, NeuralError};
use crate::neural::checkpoint::{read_archive, write_archive, Archive};
use crate::neural::{self, init_parameters, Graph, Init, ParamSpec, ParameterStore, Tape, Var};
use crate::sim::Action;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphLayerKind {
    Gcn,
    #[default]
    Gat,
}

impl fmt::Display for GraphLayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphLayerKind::Gcn => "gcn",
            GraphLayerKind::Gat => "gat",
        })
    }
}

impl FromStr for GraphLayerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(GraphLayerKind::Gcn),
            "gat" => Ok(GraphLayerKind::Gat),
            other => Err(format!("unknown graph layer kind `{other}` (expected gcn or gat)")),
        }
    }
}

/// Layer widths. [`ArchitectureSpec::new`] gives the production sizes; the
/// narrower constructors exist for finite-difference tests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub kind: GraphLayerKind,
    pub input_dim: usize,
    pub embed_dims: [usize; 2],
    pub hidden_dim: usize,
    pub action_count: usize,
}

impl ArchitectureSpec {
    pub fn new(kind: GraphLayerKind) -> Self {
        Self {
            kind,
            input_dim: FEATURE_DIM,
            embed_dims: [64, 128],
            hidden_dim: 64,
            action_count: Action::COUNT,
        }
    }

    pub fn tiny(kind: GraphLayerKind) -> Self {
        Self {
            kind,
            input_dim: FEATURE_DIM,
            embed_dims: [5, 4],
            hidden_dim: 3,
            action_count: Action::COUNT,
        }
    }

    pub fn graph_dim(&self) -> usize {
        self.embed_dims[1]
    }

    pub fn layout(&self, role: Role) -> Vec<ParamSpec> {
        let p = role.prefix();
        let [e0, e1] = self.embed_dims;
        let mut specs = Vec::new();
        push_dense(&mut specs, &format!("{p}.embed0"), self.input_dim, e0);
        push_dense(&mut specs, &format!("{p}.embed1"), e0, e1);
        for layer in GRAPH_LAYERS {
            match self.kind {
                GraphLayerKind::Gcn => push_dense(&mut specs, &format!("{p}.{layer}"), e1, e1),
                GraphLayerKind::Gat => {
                    specs.push(ParamSpec {
                        name: format!("{p}.{layer}.w"),
                        shape: (e1, e1),
                        init: Init::FanIn(e1),
                    });
                    specs.push(ParamSpec {
                        name: format!("{p}.{layer}.attn"),
                        shape: (1, 2 * e1),
                        init: Init::FanIn(2 * e1),
                    });
                }
            }
        }
        push_dense(&mut specs, &format!("{p}.hidden"), e1, self.hidden_dim);
        push_dense(&mut specs, &format!("{p}.head"), self.hidden_dim, role.head_dim(self));
        specs
    }
}

fn push_dense(specs: &mut Vec<ParamSpec>, prefix: &str, fan_in: usize, out: usize) {
    specs.push(ParamSpec {
        name: format!("{prefix}.w"),
        shape: (fan_in, out),
        init: Init::FanIn(fan_in),
    });
    specs.push(ParamSpec {
        name: format!("{prefix}.b"),
        shape: (1, out),
        init: Init::Zeros,
    });
}

impl Default for ArchitectureSpec {
    fn default() -> Self {
        Self::new(GraphLayerKind::default())
    }
}

const GRAPH_LAYERS: [&str; 3] = ["global", "detect", "penalty"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Actor,
    Critic,
}

impl Role {
    pub fn prefix(self) -> &'static str {
        match self {
            Role::Actor => "actor",
            Role::Critic => "critic",
        }
    }

    fn head_dim(self, spec: &ArchitectureSpec) -> usize {
        match self {
            Role::Actor => spec.action_count,
            Role::Critic => 1,
        }
    }
}

/// Records one network on `t`. Returns N×A logits for the actor and N×1
/// values for the critic.
pub fn network<'a>(
    t: &mut Tape<'a>,
    x: Var,
    graphs: &'a GraphSet,
    store: &'a ParameterStore,
    spec: &ArchitectureSpec,
    role: Role,
) -> Result<Var, NeuralError> {
    let p = role.prefix();
    let name = |layer: &str, part: &str| format!("{p}.{layer}.{part}");

    let h = neural::linear(t, x, store, &name("embed0", "w"), &name("embed0", "b"))?;
    let h = t.relu(h);
    let h = neural::linear(t, h, store, &name("embed1", "w"), &name("embed1", "b"))?;
    let e = t.relu(h);

    let mut sum = e;
    for (layer, graph) in GRAPH_LAYERS.iter().zip([&graphs.global, &graphs.detect, &graphs.penalty]) {
        let g = match spec.kind {
            GraphLayerKind::Gcn => {
                let g = neural::gcn(t, e, graph, store, &name(layer, "w"), &name(layer, "b"))?;
                match isolated_mask(graph, spec.graph_dim()) {
                    Some(mask) => t.mul_const(g, mask),
                    None => g,
                }
            }
            GraphLayerKind::Gat => neural::gat(t, e, graph, store, &name(layer, "w"), &name(layer, "attn"))?,
        };
        sum = t.add(sum, g);
    }
    let s = t.relu(sum);
    let h = neural::linear(t, s, store, &name("hidden", "w"), &name("hidden", "b"))?;
    let h = t.relu(h);
    neural::linear(t, h, store, &name("head", "w"), &name("head", "b"))
}

/// Zero rows for nodes without neighbors, or `None` when every node has one.
fn isolated_mask(graph: &Graph, width: usize) -> Option<Array2<f64>> {
    let n = graph.node_count();
    if (0..n).all(|i| graph.degree(i) > 0) {
        return None;
    }
    let mut mask = Array2::ones((n, width));
    for i in (0..n).filter(|&i| graph.degree(i) == 0) {
        mask.row_mut(i).fill(0.0);
    }
    Some(mask)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub probs: Array2<f64>,
    pub values: Array1<f64>,
}

impl PolicyOutput {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub spec: ArchitectureSpec,
    pub actor: ParameterStore,
    pub critic: ParameterStore,
}

impl Policy {
    pub fn new<R: Rng + ?Sized>(spec: ArchitectureSpec, rng: &mut R) -> Self {
        let actor = init_parameters(rng, &spec.layout(Role::Actor));
        let critic = init_parameters(rng, &spec.layout(Role::Critic));
        Self { spec, actor, critic }
    }

    pub fn store(&self, role: Role) -> &ParameterStore {
        match role {
            Role::Actor => &self.actor,
            Role::Critic => &self.critic,
        }
    }

    pub fn forward(&self, x: &FeatureMatrix, graphs: &GraphSet) -> PolicyOutput {
        let n = x.nrows();
        assert_eq!(n, graphs.node_count(), "feature rows and graph size differ");
        if n == 0 {
            return PolicyOutput {
                probs: Array2::zeros((0, self.spec.action_count)),
                values: Array1::zeros(0),
            };
        }
        let mut t = Tape::new();
        let xv = t.input_ref(x);
        let logits = network(&mut t, xv, graphs, &self.actor, &self.spec, Role::Actor).expect("own layout");
        let logp = t.log_softmax_rows(logits);
        let probs = t.value(logp).mapv(f64::exp);
        let v = network(&mut t, xv, graphs, &self.critic, &self.spec, Role::Critic).expect("own layout");
        let values = t.value(v).column(0).to_owned();
        PolicyOutput { probs, values }
    }

    pub fn forward_adjacency(&self, x: &FeatureMatrix, adj: &AdjacencySet) -> PolicyOutput {
        self.forward(x, &adj.graphs())
    }

    pub fn to_archive(&self) -> Archive {
        let meta = serde_json::to_string(&self.spec).expect("spec serializes");
        let tensors = self
            .actor
            .iter()
            .chain(self.critic.iter())
            .map(|(name, p)| (name.to_string(), p.value.clone()))
            .collect();
        Archive { meta, tensors }
    }

    /// Rebuilds a policy, refusing archives whose architecture differs from
    /// `expected` or whose tensors do not match the declared layout.
    pub fn from_archive(archive: Archive, expected: Option<&ArchitectureSpec>) -> Result<Self, CheckpointError> {
        let spec: ArchitectureSpec = serde_json::from_str(&archive.meta)
            .map_err(|e| CheckpointError::Malformed(format!("architecture header: {e}")))?;
        if let Some(want) = expected {
            if *want != spec {
                return Err(CheckpointError::Mismatch(format!(
                    "checkpoint is {}, expected {}",
                    describe(&spec),
                    describe(want)
                )));
            }
        }
        let layout: Vec<ParamSpec> = spec
            .layout(Role::Actor)
            .into_iter()
            .chain(spec.layout(Role::Critic))
            .collect();
        if layout.len() != archive.tensors.len() {
            return Err(CheckpointError::Mismatch(format!(
                "expected {} tensors, found {}",
                layout.len(),
                archive.tensors.len()
            )));
        }
        let mut actor = ParameterStore::new();
        let mut critic = ParameterStore::new();
        for (want, (name, value)) in layout.iter().zip(archive.tensors) {
            if want.name != name || want.shape != value.dim() {
                return Err(CheckpointError::Mismatch(format!(
                    "tensor `{name}` {:?} where `{}` {:?} was expected",
                    value.dim(),
                    want.name,
                    want.shape
                )));
            }
            if name.starts_with("actor.") {
                actor.insert(name, value);
            } else {
                critic.insert(name, value);
            }
        }
        Ok(Self { spec, actor, critic })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        write_archive(BufWriter::new(File::create(path)?), &self.to_archive())
    }

    pub fn load(path: &Path, expected: Option<&ArchitectureSpec>) -> Result<Self, CheckpointError> {
        let archive = read_archive(BufReader::new(File::open(path)?))?;
        Self::from_archive(archive, expected)
    }
}

pub fn describe(spec: &ArchitectureSpec) -> String {
    format!(
        "{} {}->{}->{} hidden {} actions {}",
        spec.kind, spec.input_dim, spec.embed_dims[0], spec.embed_dims[1], spec.hidden_dim, spec.action_count
    )
}

pub fn sample_actions<R: Rng + ?Sized>(output: &PolicyOutput, rng: &mut R) -> (Vec<Action>, Vec<f64>) {
    output
        .probs
        .rows()
        .into_iter()
        .map(|row| {
            let dist = WeightedIndex::new(row.iter().copied()).expect("probability row");
            let k = dist.sample(rng);
            (Action::from_index(k).expect("action index"), row[k].ln())
        })
        .unzip()
}

pub fn greedy_actions(output: &PolicyOutput) -> Vec<Action> {
    output
        .probs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = k;
                }
            }
            Action::from_index(best).expect("action index")
        })
        .collect()
}
