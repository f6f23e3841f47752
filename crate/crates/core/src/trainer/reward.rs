//! Base rewards, shaping potentials and the shaped reward.

use crate::sim::{classify_pair, separation, AircraftState, SimConfig};

use super::TrainConfig;

pub const CRASH_REWARD: f64 = -100.0;
pub const PENALTY_REWARD: f64 = -1.0;
pub const GOAL_REWARD: f64 = 1.0;

/// Which reward case fired. Cases are checked in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardCase {
    Crash,
    Uncontrollable,
    Penalty,
    Goal,
    Neutral,
}

impl RewardCase {
    pub fn value(self) -> f64 {
        match self {
            RewardCase::Crash => CRASH_REWARD,
            RewardCase::Uncontrollable | RewardCase::Neutral => 0.0,
            RewardCase::Penalty => PENALTY_REWARD,
            RewardCase::Goal => GOAL_REWARD,
        }
    }
}

/// `controllable` is the flag at decision time: an aircraft that acted and
/// then lost control by entering a penalty area still receives the penalty.
pub fn reward_case(state_after: &AircraftState, in_penalty: bool, crashed: bool, controllable: bool) -> RewardCase {
    if crashed {
        RewardCase::Crash
    } else if !controllable {
        RewardCase::Uncontrollable
    } else if in_penalty {
        RewardCase::Penalty
    } else if state_after.at_goal() {
        RewardCase::Goal
    } else {
        RewardCase::Neutral
    }
}

pub fn base_reward(state_after: &AircraftState, in_penalty: bool, crashed: bool, controllable: bool) -> f64 {
    reward_case(state_after, in_penalty, crashed, controllable).value()
}

/// Resolved constants of the shaping potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialParams {
    pub b: f64,
    pub c1: f64,
    pub c2: f64,
    pub w_altitude: f64,
    pub w_speed: f64,
    pub w_heading: f64,
}

impl PotentialParams {
    pub fn new(cfg: &TrainConfig, sim: &SimConfig) -> Self {
        Self {
            b: cfg.potential_b,
            c1: cfg.potential_c1.unwrap_or(1.0 / sim.penalty_radius_m),
            c2: cfg.potential_c2.unwrap_or(1.0 / sim.penalty_halfheight_m),
            w_altitude: cfg.goal_weight_altitude,
            w_speed: cfg.goal_weight_speed,
            w_heading: cfg.goal_weight_heading,
        }
    }

    /// Inverted rectangular pyramid over horizontal distance `x` and
    /// vertical distance `y`.
    pub fn pyramid(&self, x: f64, y: f64) -> f64 {
        -self.b + (self.c1 * x + self.c2 * y).abs() + (self.c2 * y - self.c1 * x).abs()
    }

    pub fn goal(&self, s: &AircraftState) -> f64 {
        -(s.z_diff().abs() * self.w_altitude + s.s_diff().abs() * self.w_speed + s.h_diff().abs() * self.w_heading)
    }
}

/// Potential of `state` given the other airborne aircraft. Entries of
/// `others` with the same id as `state` are ignored.
///
/// With several neighbors inside the penalty area the one with the lowest
/// pyramid value is used, i.e. the closest in the scaled cylinder metric.
pub fn potential(state: &AircraftState, others: &[AircraftState], sim: &SimConfig, p: &PotentialParams) -> f64 {
    if !state.controllable {
        return 0.0;
    }
    let mut in_detection = false;
    let mut worst: Option<f64> = None;
    for o in others.iter().filter(|o| o.id != state.id) {
        let class = classify_pair(state, o, sim);
        if class.within_penalty() {
            let (x, y) = separation(state, o);
            let v = p.pyramid(x, y);
            worst = Some(worst.map_or(v, |w| w.min(v)));
        } else if class.within_detection() {
            in_detection = true;
        }
    }
    match worst {
        Some(v) => v,
        None if in_detection => 0.0,
        None => p.goal(state),
    }
}

/// `base + γ Φ(s') − Φ(s)`; callers pass `phi_next = 0` on terminal steps.
pub fn shaped_reward(base: f64, phi_prev: f64, phi_next: f64, gamma: f64) -> f64 {
    base + gamma * phi_next - phi_prev
}
