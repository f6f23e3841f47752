//! Episode collection with the stochastic actor.

use std::collections::BTreeMap;

use ndarray::{concatenate, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adjacency::{build_features, build_graphs, FeatureMatrix, GraphSet, FEATURE_DIM};
use crate::error::SpawnError;
use crate::policy::{sample_actions, Policy};
use crate::sim::{
    AircraftId, AircraftState, CappedSpawner, EventKind, JointAction, RemovalCause, SimConfig, World,
};

use super::reward::{base_reward, potential, shaped_reward, PotentialParams};
use super::TrainConfig;

/// One control step as the networks saw it.
#[derive(Debug, Clone)]
pub struct StepSnapshot {
    pub features: FeatureMatrix,
    pub graphs: GraphSet,
}

/// One aircraft at one control step. Transitions are stored step-major, so
/// the index of a transition equals its row in [`EpisodeBuffer::stacked`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub step: usize,
    pub aircraft_id: AircraftId,
    pub action: usize,
    pub log_prob: f64,
    pub value: f64,
    pub base_reward: f64,
    pub shaped_reward: f64,
    pub phi_prev: f64,
    pub phi_next: f64,
    /// Removed by exit or crash after this step.
    pub terminal: bool,
    /// Last step of the trajectory, terminal or cut off by the episode end.
    pub done: bool,
    pub controllable: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeCounters {
    pub steps: usize,
    pub aircraft_created: usize,
    pub max_population: usize,
    pub conflicts: usize,
    pub crashes: usize,
    pub exits: usize,
    pub correct_exits: usize,
}

#[derive(Debug, Clone, Default)]
pub struct EpisodeBuffer {
    pub snapshots: Vec<StepSnapshot>,
    pub transitions: Vec<Transition>,
    /// Critic value of the final state for trajectories cut off by the
    /// episode end.
    pub bootstrap: BTreeMap<AircraftId, f64>,
    pub counters: EpisodeCounters,
}

impl EpisodeBuffer {
    pub fn controllable_count(&self) -> usize {
        self.transitions.iter().filter(|t| t.controllable).count()
    }

    /// All snapshots as one disjoint graph with stacked feature rows.
    pub fn stacked(&self) -> (Array2<f64>, GraphSet) {
        let x = if self.snapshots.is_empty() {
            Array2::zeros((0, FEATURE_DIM))
        } else {
            let views: Vec<_> = self.snapshots.iter().map(|s| s.features.view()).collect();
            concatenate(Axis(0), &views).expect("feature widths agree")
        };
        let graphs = GraphSet::block_diagonal(self.snapshots.iter().map(|s| &s.graphs));
        (x, graphs)
    }

    /// Transition indices grouped per aircraft, each in time order.
    pub fn trajectories(&self) -> BTreeMap<AircraftId, Vec<usize>> {
        let mut out: BTreeMap<AircraftId, Vec<usize>> = BTreeMap::new();
        for (i, t) in self.transitions.iter().enumerate() {
            out.entry(t.aircraft_id).or_default().push(i);
        }
        out
    }

    pub fn total_base_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.base_reward).sum()
    }

    pub fn total_shaped_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.shaped_reward).sum()
    }
}

/// Runs one training episode: pairs are spawned while the population stays
/// within `max_aircraft` until `aircraft_per_episode` have been created; the
/// episode ends once the airspace is empty or after `max_steps_per_episode`.
pub fn collect_episode<R: Rng + ?Sized>(
    policy: &Policy,
    sim: &SimConfig,
    cfg: &TrainConfig,
    world_seed: u64,
    rng: &mut R,
) -> Result<EpisodeBuffer, SpawnError> {
    let params = PotentialParams::new(cfg, sim);
    let mut world = World::new(sim.clone(), world_seed);
    let mut spawner = CappedSpawner::new(cfg.max_aircraft, cfg.aircraft_per_episode);
    let mut buf = EpisodeBuffer::default();
    world.run_spawns(&mut spawner)?;
    let mut phi: BTreeMap<AircraftId, f64> = BTreeMap::new();

    for step in 0..cfg.max_steps_per_episode {
        let states = world.aircraft().to_vec();
        if states.is_empty() && spawner.exhausted() {
            break;
        }
        buf.counters.max_population = buf.counters.max_population.max(states.len());
        let features = build_features(&states, sim);
        let graphs = build_graphs(&states, sim);
        let out = policy.forward(&features, &graphs);
        let (actions, log_probs) = sample_actions(&out, rng);
        let joint: JointAction = states
            .iter()
            .zip(&actions)
            .filter(|(s, _)| s.controllable)
            .map(|(s, a)| (s.id, *a))
            .collect();
        let phi_prev: Vec<f64> = states
            .iter()
            .map(|s| *phi.entry(s.id).or_insert_with(|| potential(s, &states, sim, &params)))
            .collect();

        let outcome = world.advance(&joint, &mut spawner)?;
        buf.counters.steps += 1;
        for e in &outcome.events {
            match e.kind {
                EventKind::Conflict => buf.counters.conflicts += 1,
                EventKind::Crash => buf.counters.crashes += 1,
                EventKind::Exited => buf.counters.exits += 1,
                EventKind::CorrectExit => {
                    buf.counters.exits += 1;
                    buf.counters.correct_exits += 1;
                }
                _ => {}
            }
        }
        let airborne: Vec<AircraftState> = outcome
            .reports
            .iter()
            .filter(|r| r.removed.is_none())
            .map(|r| r.state.clone())
            .collect();
        for (i, report) in outcome.reports.iter().enumerate() {
            debug_assert_eq!(report.state.id, states[i].id);
            let terminal = report.removed.is_some();
            let crashed = report.removed == Some(RemovalCause::Crash);
            let base = base_reward(&report.state, report.in_penalty, crashed, states[i].controllable);
            let phi_next = if terminal {
                0.0
            } else {
                potential(&report.state, &airborne, sim, &params)
            };
            if terminal {
                phi.remove(&report.state.id);
            } else {
                phi.insert(report.state.id, phi_next);
            }
            buf.transitions.push(Transition {
                step,
                aircraft_id: report.state.id,
                action: actions[i].index(),
                log_prob: log_probs[i],
                value: out.values[i],
                base_reward: base,
                shaped_reward: shaped_reward(base, phi_prev[i], phi_next, cfg.gamma),
                phi_prev: phi_prev[i],
                phi_next,
                terminal,
                done: terminal,
                controllable: states[i].controllable,
            });
        }
        buf.snapshots.push(StepSnapshot { features, graphs });
    }
    buf.counters.aircraft_created = spawner.created;

    let remaining = world.aircraft().to_vec();
    if !remaining.is_empty() {
        let out = policy.forward(&build_features(&remaining, sim), &build_graphs(&remaining, sim));
        for (s, v) in remaining.iter().zip(out.values.iter()) {
            buf.bootstrap.insert(s.id, *v);
        }
        let last: BTreeMap<AircraftId, usize> = buf
            .transitions
            .iter()
            .enumerate()
            .map(|(i, t)| (t.aircraft_id, i))
            .collect();
        for s in &remaining {
            if let Some(&i) = last.get(&s.id) {
                buf.transitions[i].done = true;
            }
        }
    }
    Ok(buf)
}
