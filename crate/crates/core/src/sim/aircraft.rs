use serde::{Deserialize, Serialize};

use super::SimConfig;

pub type AircraftId = u32;

/// One of the seven discrete control commands, in index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    NoAction,
    Climb100m,
    Descend100m,
    SpeedUp,
    SlowDown,
    TurnLeft5,
    TurnRight5,
}

impl Action {
    pub const COUNT: usize = 7;

    pub const ALL: [Action; Action::COUNT] = [
        Action::NoAction,
        Action::Climb100m,
        Action::Descend100m,
        Action::SpeedUp,
        Action::SlowDown,
        Action::TurnLeft5,
        Action::TurnRight5,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    /// (altitude steps, speed steps, heading steps) applied by this command.
    fn deltas(self) -> (f64, f64, f64) {
        match self {
            Action::NoAction => (0.0, 0.0, 0.0),
            Action::Climb100m => (1.0, 0.0, 0.0),
            Action::Descend100m => (-1.0, 0.0, 0.0),
            Action::SpeedUp => (0.0, 1.0, 0.0),
            Action::SlowDown => (0.0, -1.0, 0.0),
            Action::TurnLeft5 => (0.0, 0.0, -1.0),
            Action::TurnRight5 => (0.0, 0.0, 1.0),
        }
    }
}

/// Normalizes a heading into `[0, 360)`.
pub fn normalize_heading(h: f64) -> f64 {
    let r = h.rem_euclid(360.0);
    // rem_euclid can return 360.0 for tiny negative inputs
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Wraps a heading difference into `(-180, 180]`.
pub fn wrap_heading_diff(d: f64) -> f64 {
    let r = d.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// Kinematic state of one aircraft plus its goal values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AircraftState {
    pub id: AircraftId,
    /// Spawn pair this aircraft belongs to (one potential conflict).
    pub pair_id: u32,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub h: f64,
    pub s: f64,
    pub z_des: f64,
    pub s_des: f64,
    pub h_des: f64,
    pub controllable: bool,
    pub spawn_time: f64,
    pub action_count: u32,
}

impl AircraftState {
    pub fn z_diff(&self) -> f64 {
        self.z_des - self.z
    }

    pub fn s_diff(&self) -> f64 {
        self.s_des - self.s
    }

    pub fn h_diff(&self) -> f64 {
        wrap_heading_diff(self.h_des - self.h)
    }

    pub fn at_goal(&self) -> bool {
        self.z_diff() == 0.0 && self.s_diff() == 0.0 && self.h_diff() == 0.0
    }

    pub fn radius(&self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Horizontal velocity (east, north) in m/s.
    pub fn velocity(&self) -> (f64, f64) {
        let r = self.h.to_radians();
        (self.s * r.sin(), self.s * r.cos())
    }

    /// The canonical state 8-tuple (x, y, z, h, s, z_diff, s_diff, h_diff).
    pub fn tuple(&self) -> [f64; 8] {
        [
            self.x,
            self.y,
            self.z,
            self.h,
            self.s,
            self.z_diff(),
            self.s_diff(),
            self.h_diff(),
        ]
    }

    /// Minimal number of maneuvers that reaches the goal from here.
    pub fn remaining_maneuvers(&self, cfg: &SimConfig) -> f64 {
        self.z_diff().abs() / cfg.altitude_step_m
            + self.s_diff().abs() / cfg.speed_step_mps
            + self.h_diff().abs() / cfg.heading_step_deg
    }
}

/// Applies `action` instantaneously, then flies straight for `dt` seconds.
pub fn step_aircraft(
    state: &AircraftState,
    action: Action,
    dt: f64,
    cfg: &SimConfig,
) -> AircraftState {
    let mut next = state.clone();
    let (dz, ds, dh) = action.deltas();
    next.z = (next.z + dz * cfg.altitude_step_m).clamp(cfg.altitude_floor_m, cfg.altitude_ceiling_m);
    next.s = (next.s + ds * cfg.speed_step_mps).clamp(cfg.speed_floor_mps, cfg.speed_ceiling_mps);
    next.h = normalize_heading(next.h + dh * cfg.heading_step_deg);
    if action != Action::NoAction {
        next.action_count += 1;
    }
    let (vx, vy) = next.velocity();
    next.x += vx * dt;
    next.y += vy * dt;
    next
}

#[cfg(test)]
pub(crate) fn test_aircraft(id: AircraftId, x: f64, y: f64, z: f64) -> AircraftState {
    AircraftState {
        id,
        pair_id: id / 2,
        x,
        y,
        z,
        h: 0.0,
        s: 250.0,
        z_des: z,
        s_des: 250.0,
        h_des: 0.0,
        controllable: true,
        spawn_time: 0.0,
        action_count: 0,
    }
}
