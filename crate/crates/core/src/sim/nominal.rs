use super::{step_aircraft, Action, AircraftState, SimConfig};

/// Scripted solo controller: each step, work on the goal component with the
/// most remaining steps (altitude, then speed, then heading on ties).
pub fn greedy_goal_action(a: &AircraftState, cfg: &SimConfig) -> Action {
    let nz = a.z_diff().abs() / cfg.altitude_step_m;
    let ns = a.s_diff().abs() / cfg.speed_step_mps;
    let nh = a.h_diff().abs() / cfg.heading_step_deg;
    if nz == 0.0 && ns == 0.0 && nh == 0.0 {
        Action::NoAction
    } else if nz >= ns && nz >= nh {
        if a.z_diff() > 0.0 {
            Action::Climb100m
        } else {
            Action::Descend100m
        }
    } else if ns >= nh {
        if a.s_diff() > 0.0 {
            Action::SpeedUp
        } else {
            Action::SlowDown
        }
    } else if a.h_diff() > 0.0 {
        Action::TurnRight5
    } else {
        Action::TurnLeft5
    }
}

/// Baseline crossing of a freshly spawned aircraft flying alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NominalProfile {
    pub time_s: f64,
    pub maneuvers: u32,
}

const MAX_SOLO_STEPS: u32 = 100_000;

pub fn nominal_profile(a: &AircraftState, cfg: &SimConfig) -> NominalProfile {
    let maneuvers = a.remaining_maneuvers(cfg).round() as u32;
    let mut solo = a.clone();
    let mut steps = 0;
    while steps < MAX_SOLO_STEPS {
        solo = step_aircraft(&solo, greedy_goal_action(&solo, cfg), cfg.dt_s, cfg);
        steps += 1;
        if solo.radius() >= cfg.airspace_radius_m {
            break;
        }
    }
    NominalProfile {
        time_s: steps as f64 * cfg.dt_s,
        maneuvers,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::aircraft::test_aircraft;

    #[test]
    fn diff_free_aircraft_needs_no_maneuvers_and_flies_the_chord() {
        let cfg = SimConfig::default();
        let r = cfg.airspace_radius_m;
        // Spawned at the south pole heading 30 degrees off the diameter.
        let mut a = test_aircraft(0, 0.0, -r, 8000.0);
        a.h = 30.0;
        a.h_des = 30.0;
        a.s = 235.0;
        a.s_des = 235.0;
        let p = nominal_profile(&a, &cfg);
        assert_eq!(p.maneuvers, 0);
        let chord = 2.0 * r * 30.0f64.to_radians().cos();
        let expected = (chord / (a.s * cfg.dt_s)).ceil() * cfg.dt_s;
        assert_eq!(p.time_s, expected);
    }

    #[test]
    fn maneuver_count_is_minimal_action_count() {
        let cfg = SimConfig::default();
        let mut a = test_aircraft(0, 0.0, -cfg.airspace_radius_m, 8000.0);
        a.z_des = 8300.0;
        a.s_des = 260.0;
        a.h_des = 345.0;
        assert_eq!(nominal_profile(&a, &cfg).maneuvers, 3 + 2 + 3);
    }

    #[test]
    fn greedy_script_reaches_goal_in_minimal_steps() {
        let cfg = SimConfig::default();
        let mut a = test_aircraft(0, 0.0, -cfg.airspace_radius_m, 8000.0);
        a.z_des = 7600.0;
        a.s_des = 235.0;
        a.h_des = 20.0;
        let need = a.remaining_maneuvers(&cfg) as u32;
        for _ in 0..need {
            a = step_aircraft(&a, greedy_goal_action(&a, &cfg), cfg.dt_s, &cfg);
        }
        assert!(a.at_goal());
        assert_eq!(a.action_count, need);
        assert_eq!(greedy_goal_action(&a, &cfg), Action::NoAction);
    }
}
