//! Property checks that run outside the test harness, shared by the unit
//! tests, the acceptance suite and `atc selftest`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adjacency::{build_adjacency, build_features, build_graphs};
use crate::error::SpawnError;
use crate::eval::MetricSummary;
use crate::neural::gradcheck::{check_gradients, GradCheckOptions, GradCheckReport};
use crate::neural::{ParameterStore, Tape};
use crate::policy::{ArchitectureSpec, GraphLayerKind, Policy};
use crate::sim::{
    classify_pair, Action, AircraftId, AircraftState, EventKind, JointAction, ProximityClass, SimConfig, SpawnPolicy,
    World,
};
use crate::trainer::{
    base_reward, build_batch, compute_gae, gae_double_sum, loss_gradients, record_loss, EpisodeBuffer, RewardCase,
    StepSnapshot, TrainConfig, Transition, CRASH_REWARD, GOAL_REWARD, PENALTY_REWARD,
};

/// One named check with a human-readable measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// `n` aircraft scattered within 30 km of the centre, close enough for the
/// detection and penalty graphs to be non-trivial.
pub fn random_world<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<AircraftState> {
    (0..n)
        .map(|i| AircraftState {
            id: i as AircraftId,
            pair_id: i as u32 / 2,
            x: rng.random_range(-30_000.0..30_000.0),
            y: rng.random_range(-30_000.0..30_000.0),
            z: rng.random_range(7_500.0..8_500.0),
            h: rng.random_range(0.0..360.0),
            s: rng.random_range(215.0..250.0),
            z_des: rng.random_range(6_000.0..10_000.0),
            s_des: rng.random_range(215.0..250.0),
            h_des: rng.random_range(0.0..360.0),
            controllable: true,
            spawn_time: 0.0,
            action_count: 0,
        })
        .collect()
}

/// Largest elementwise deviation between permuted outputs and outputs of the
/// permuted world, for a full-size freshly initialized policy.
pub fn equivariance_error(kind: GraphLayerKind, seed: u64) -> f64 {
    let cfg = SimConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let policy = Policy::new(ArchitectureSpec::new(kind), &mut rng);
    let n = rng.random_range(2..=20);
    let world = random_world(&mut rng, n);
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng);
    let permuted: Vec<_> = p.iter().map(|&i| world[i].clone()).collect();

    let out = policy.forward_adjacency(&build_features(&world, &cfg), &build_adjacency(&world, &cfg));
    let pout = policy.forward_adjacency(&build_features(&permuted, &cfg), &build_adjacency(&permuted, &cfg));
    let mut worst = 0.0f64;
    for (i, &src) in p.iter().enumerate() {
        for k in 0..Action::COUNT {
            worst = worst.max((pout.probs[[i, k]] - out.probs[[src, k]]).abs());
        }
        worst = worst.max((pout.values[i] - out.values[src]).abs());
    }
    worst
}

/// A one-step buffer over `states` with the given actions, control flags and
/// rewards. Every row is terminal.
pub fn single_step_buffer(
    states: &[AircraftState],
    actions: &[usize],
    controllable: &[bool],
    rewards: &[f64],
) -> EpisodeBuffer {
    let sim = SimConfig::default();
    let transitions = states
        .iter()
        .enumerate()
        .map(|(i, s)| Transition {
            step: 0,
            aircraft_id: s.id,
            action: actions[i],
            log_prob: 0.0,
            value: 0.0,
            base_reward: rewards[i],
            shaped_reward: rewards[i],
            phi_prev: 0.0,
            phi_next: 0.0,
            terminal: true,
            done: true,
            controllable: controllable[i],
        })
        .collect();
    EpisodeBuffer {
        snapshots: vec![StepSnapshot {
            features: build_features(states, &sim),
            graphs: build_graphs(states, &sim),
        }],
        transitions,
        ..EpisodeBuffer::default()
    }
}

/// Central differences of the full actor-critic loss against the tape on a
/// random tiny instance of 2 to 6 aircraft.
pub fn composite_gradcheck(kind: GraphLayerKind, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=6);
    let mut states = random_world(&mut rng, n);
    // Pull everyone inward so all three graphs get edges.
    for s in &mut states {
        s.x *= 0.4;
        s.y *= 0.4;
        s.z = 7_800.0 + (s.z - 7_500.0) * 0.4;
    }
    let actions: Vec<usize> = (0..n).map(|_| rng.random_range(0..Action::COUNT)).collect();
    let ctrl: Vec<bool> = (0..n).map(|i| i == 0 || rng.random_bool(0.7)).collect();
    let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let buf = single_step_buffer(&states, &actions, &ctrl, &rewards);
    let mut policy = Policy::new(ArchitectureSpec::tiny(kind), &mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
    let cfg = TrainConfig::default();
    let batch = build_batch(&policy, &buf, &cfg);
    let (grads, _) = loss_gradients(&policy, &batch, &cfg);
    let spec = policy.spec.clone();
    let loss = |stores: &[&ParameterStore]| {
        let p = Policy {
            spec: spec.clone(),
            actor: stores[0].clone(),
            critic: stores[1].clone(),
        };
        let mut t = Tape::new();
        let v = record_loss(&mut t, &batch, &p, &cfg).expect("non-empty batch");
        t.value(v.total)[[0, 0]]
    };
    let Policy { actor, critic, .. } = &mut policy;
    check_gradients(&mut [actor, critic], &grads, loss, GradCheckOptions::default())
}

/// Largest gap between backward-recursion GAE and the explicit double sum
/// over `trajectories` random trajectories of length 1 to 10.
pub fn gae_max_error(trajectories: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trajectories {
        let t = rng.random_range(1..=10);
        let rewards: Vec<f64> = (0..t).map(|_| rng.random_range(-100.0..2.0)).collect();
        let values: Vec<f64> = (0..t).map(|_| rng.random_range(-10.0..10.0)).collect();
        let terminal = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(-10.0..10.0) };
        let gamma = rng.random_range(0.0..=1.0);
        let lambda = rng.random_range(0.0..=1.0);
        let a = compute_gae(&rewards, &values, terminal, gamma, lambda);
        let b = gae_double_sum(&rewards, &values, terminal, gamma, lambda);
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}

/// For every aircraft in a logged episode, the gap between its discounted
/// shaped return and `Σ γ^t r_t + γ^T Φ(s_T) − Φ(s_0)`. Also checks that
/// consecutive transitions hand over the same potential.
pub fn telescoping_max_error(transitions: &[Transition], gamma: f64) -> f64 {
    let mut by_aircraft: BTreeMap<AircraftId, Vec<&Transition>> = BTreeMap::new();
    for t in transitions {
        by_aircraft.entry(t.aircraft_id).or_default().push(t);
    }
    let mut worst = 0.0f64;
    for traj in by_aircraft.values_mut() {
        traj.sort_by_key(|t| t.step);
        let mut shaped = 0.0;
        let mut base = 0.0;
        let mut discount = 1.0;
        for (k, t) in traj.iter().enumerate() {
            shaped += discount * t.shaped_reward;
            base += discount * t.base_reward;
            discount *= gamma;
            if k + 1 < traj.len() {
                worst = worst.max((t.phi_next - traj[k + 1].phi_prev).abs());
            }
        }
        let phi_end = traj.last().expect("non-empty").phi_next;
        let phi_start = traj[0].phi_prev;
        worst = worst.max((shaped - (base + discount * phi_end - phi_start)).abs());
    }
    worst
}

/// Spawns exactly one pair on its first call.
struct SinglePair(bool);

impl SpawnPolicy for SinglePair {
    fn pairs_due(&mut self, _time: f64, _population: usize) -> usize {
        usize::from(!std::mem::replace(&mut self.0, true))
    }
}

/// Spawns `pairs` pairs, each in its own world, flies them without any
/// command and returns how many ended in a crash event.
pub fn crash_guarantee(pairs: u64, seed: u64, cfg: &SimConfig) -> Result<u64, SpawnError> {
    let mut crashed = 0;
    let idle = JointAction::new();
    for i in 0..pairs {
        let mut world = World::new(cfg.clone(), seed.wrapping_add(i));
        let mut spawner = SinglePair(false);
        world.run_spawns(&mut spawner)?;
        let mut hit = false;
        while !hit && !world.aircraft().is_empty() {
            let out = world.advance(&idle, &mut spawner)?;
            hit = out.events.iter().any(|e| e.kind == EventKind::Crash);
        }
        crashed += u64::from(hit);
    }
    Ok(crashed)
}

fn aircraft_at(id: AircraftId, x: f64, z: f64) -> AircraftState {
    AircraftState {
        id,
        pair_id: id / 2,
        x,
        y: 0.0,
        z,
        h: 90.0,
        s: 230.0,
        z_des: z,
        s_des: 230.0,
        h_des: 90.0,
        controllable: true,
        spawn_time: 0.0,
        action_count: 0,
    }
}

/// One constructed row of the reward table.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardRow {
    pub label: &'static str,
    pub expected: f64,
    pub got: f64,
}

/// Builds states for every reward case and for each precedence tie and
/// evaluates them through proximity classification.
pub fn reward_table(cfg: &SimConfig) -> Vec<RewardRow> {
    let me = aircraft_at(0, 0.0, 8_000.0);
    let mut off_goal = me.clone();
    off_goal.z_des = 9_000.0;
    let far = aircraft_at(1, 60_000.0, 8_000.0);
    let penalty = aircraft_at(1, 0.5 * cfg.penalty_radius_m, 8_000.0);
    let crash = aircraft_at(1, 0.5 * cfg.crash_radius_m, 8_000.0);

    let eval = |s: &AircraftState, other: &AircraftState, controllable: bool| {
        let class = classify_pair(s, other, cfg);
        base_reward(s, class.within_penalty(), class == ProximityClass::Crash, controllable)
    };
    vec![
        RewardRow { label: "goal reached, clear", expected: GOAL_REWARD, got: eval(&me, &far, true) },
        RewardRow { label: "off goal, clear", expected: 0.0, got: eval(&off_goal, &far, true) },
        RewardRow { label: "in penalty area", expected: PENALTY_REWARD, got: eval(&off_goal, &penalty, true) },
        RewardRow { label: "penalty beats goal", expected: PENALTY_REWARD, got: eval(&me, &penalty, true) },
        RewardRow { label: "crash", expected: CRASH_REWARD, got: eval(&off_goal, &crash, true) },
        RewardRow { label: "crash while uncontrollable", expected: CRASH_REWARD, got: eval(&me, &crash, false) },
        RewardRow { label: "uncontrollable in penalty", expected: 0.0, got: eval(&me, &penalty, false) },
        RewardRow { label: "uncontrollable at goal", expected: 0.0, got: eval(&me, &far, false) },
        RewardRow {
            label: "case values",
            expected: GOAL_REWARD + PENALTY_REWARD + CRASH_REWARD,
            got: [RewardCase::Goal, RewardCase::Penalty, RewardCase::Crash, RewardCase::Uncontrollable]
                .iter()
                .map(|c| c.value())
                .sum(),
        },
    ]
}

/// A 5 x 5 matrix whose per-column quantiles are known by hand.
pub fn aggregation_fixture() -> (Vec<[f64; 5]>, [MetricSummary; 5]) {
    let rows = vec![
        [3.0, 10.0, 0.0, 89.0, -2.0],
        [1.0, 40.0, 0.0, 91.0, 7.5],
        [5.0, 20.0, 1.0, 85.0, 0.5],
        [2.0, 50.0, 0.0, 95.0, 3.0],
        [4.0, 30.0, 2.0, 80.0, 1.0],
    ];
    let s = |min, q1, median, q3, max| MetricSummary {
        median,
        iqr: q3 - q1,
        q1,
        q3,
        min,
        max,
    };
    let expected = [
        s(1.0, 2.0, 3.0, 4.0, 5.0),
        s(10.0, 20.0, 30.0, 40.0, 50.0),
        s(0.0, 0.0, 0.0, 1.0, 2.0),
        s(80.0, 85.0, 89.0, 91.0, 95.0),
        s(-2.0, 0.5, 1.0, 3.0, 7.5),
    ];
    (rows, expected)
}

/// The fast subset of oracles. `scale` multiplies the instance counts.
pub fn run_all(scale: usize) -> Vec<CheckOutcome> {
    let scale = scale.max(1);
    let mut out = Vec::new();

    let mut worst = 0.0f64;
    for seed in 0..(10 * scale) as u64 {
        for kind in [GraphLayerKind::Gcn, GraphLayerKind::Gat] {
            worst = worst.max(equivariance_error(kind, seed));
        }
    }
    out.push(CheckOutcome {
        name: "permutation equivariance",
        passed: worst <= 1e-9,
        detail: format!("max deviation {worst:.3e} over {} worlds per kind", 10 * scale),
    });

    let mut report = GradCheckReport::default();
    for seed in 0..(5 * scale) as u64 {
        for kind in [GraphLayerKind::Gcn, GraphLayerKind::Gat] {
            report.merge(&composite_gradcheck(kind, seed));
        }
    }
    out.push(CheckOutcome {
        name: "loss gradients",
        passed: report.passed(),
        detail: format!(
            "{} entries, max relative error {:.3e}, {} kinks skipped",
            report.checked, report.max_rel_error, report.skipped_kinks
        ),
    });

    let gae = gae_max_error(100 * scale, 0);
    out.push(CheckOutcome {
        name: "advantage recursion",
        passed: gae <= 1e-12,
        detail: format!("max gap {gae:.3e}"),
    });

    let rows = reward_table(&SimConfig::default());
    let bad: Vec<_> = rows.iter().filter(|r| r.got != r.expected).map(|r| r.label).collect();
    out.push(CheckOutcome {
        name: "reward table",
        passed: bad.is_empty(),
        detail: if bad.is_empty() {
            format!("{} cases exact", rows.len())
        } else {
            format!("wrong: {}", bad.join(", "))
        },
    });

    let (rows, expected) = aggregation_fixture();
    let agg_ok = (0..5).all(|c| {
        let column: Vec<f64> = rows.iter().map(|r| r[c]).collect();
        MetricSummary::of(&column) == expected[c]
    });
    out.push(CheckOutcome {
        name: "median and IQR",
        passed: agg_ok,
        detail: "5 x 5 fixture".into(),
    });

    let pairs = 20 * scale as u64;
    let crash = crash_guarantee(pairs, 0, &SimConfig::default());
    out.push(match crash {
        Ok(n) => CheckOutcome {
            name: "idle pairs crash",
            passed: n == pairs,
            detail: format!("{n}/{pairs}"),
        },
        Err(e) => CheckOutcome {
            name: "idle pairs crash",
            passed: false,
            detail: e.to_string(),
        },
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_checks_pass() {
        for c in run_all(1) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn telescoping_detects_a_broken_chain() {
        let t = |step, phi_prev, phi_next| Transition {
            step,
            aircraft_id: 0,
            action: 0,
            log_prob: 0.0,
            value: 0.0,
            base_reward: 1.0,
            shaped_reward: 1.0 + 0.5 * phi_next - phi_prev,
            phi_prev,
            phi_next,
            terminal: false,
            done: false,
            controllable: true,
        };
        assert!(telescoping_max_error(&[t(0, -1.0, -2.0), t(1, -2.0, 0.0)], 0.5) < 1e-15);
        assert!(telescoping_max_error(&[t(0, -1.0, -2.0), t(1, -3.0, 0.0)], 0.5) > 0.5);
    }
}
