//! Conflict-guaranteed pair generation.
//!
//! Both aircraft of a pair start on the border circle at the same altitude
//! and reach the same point after exactly `k` control steps if nobody acts.
//! For headings and speeds drawn from the grids, the meeting point `M`
//! satisfies `|M - v_a t| = |M - v_b t| = R` with `t = k * dt`, so it lies on
//! the perpendicular bisector of `v_a t` and `v_b t`. Every candidate is
//! confirmed by a no-action rollout before it is returned.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::{classify_pair, step_aircraft, Action, AircraftId, AircraftState, ProximityClass, SimConfig};
use crate::error::SpawnError;
use crate::sim::aircraft::normalize_heading;

/// Identity and timing data stamped onto a freshly generated pair.
#[derive(Debug, Clone, Copy)]
pub struct PairTag {
    pub first_id: AircraftId,
    pub pair_id: u32,
    pub time: f64,
}

pub fn spawn_conflict_pair<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &SimConfig,
    tag: PairTag,
) -> Result<(AircraftState, AircraftState), SpawnError> {
    let headings = cfg.heading_grid();
    let speeds = cfg.speed_grid();
    let altitudes = cfg.altitude_grid();
    let offsets = cfg.heading_offset_grid();
    let r = cfg.airspace_radius_m;

    for _ in 0..cfg.spawn_retries {
        let h_a = *headings.choose(rng).expect("heading grid");
        let h_b = *headings.choose(rng).expect("heading grid");
        let s_a = *speeds.choose(rng).expect("speed grid");
        let s_b = *speeds.choose(rng).expect("speed grid");
        let steps = rng.random_range(cfg.min_meeting_steps..=cfg.max_meeting_steps);
        let t = steps as f64 * cfg.dt_s;

        let (ax, ay) = heading_vector(h_a, s_a * t);
        let (bx, by) = heading_vector(h_b, s_b * t);
        let (dx, dy) = (ax - bx, ay - by);
        let gap = dx.hypot(dy);
        if gap < 1.0 || gap / 2.0 >= r {
            continue;
        }
        let offset = (r * r - gap * gap / 4.0).sqrt();
        let (mx, my) = ((ax + bx) / 2.0, (ay + by) / 2.0);
        let (nx, ny) = (-dy / gap, dx / gap);
        let candidates: Vec<(f64, f64)> = [1.0, -1.0]
            .iter()
            .map(|sign| (mx + sign * offset * nx, my + sign * offset * ny))
            .filter(|(px, py)| px.hypot(*py) < r * (1.0 - 1e-9))
            .collect();
        let Some(&(meet_x, meet_y)) = candidates.choose(rng) else {
            continue;
        };

        let z = *altitudes.choose(rng).expect("altitude grid");
        let mut make = |id: AircraftId, h: f64, s: f64, vx: f64, vy: f64| {
            let (px, py) = (meet_x - vx, meet_y - vy);
            let norm = px.hypot(py);
            AircraftState {
                id,
                pair_id: tag.pair_id,
                x: px / norm * r,
                y: py / norm * r,
                z,
                h,
                s,
                z_des: *altitudes.choose(rng).expect("altitude grid"),
                s_des: *speeds.choose(rng).expect("speed grid"),
                h_des: normalize_heading(h + *offsets.choose(rng).expect("offset grid")),
                controllable: true,
                spawn_time: tag.time,
                action_count: 0,
            }
        };
        let a = make(tag.first_id, h_a, s_a, ax, ay);
        let b = make(tag.first_id + 1, h_b, s_b, bx, by);

        if crashes_without_action(&a, &b, steps, cfg) {
            return Ok((a, b));
        }
    }
    Err(SpawnError::Exhausted {
        retries: cfg.spawn_retries,
    })
}

fn heading_vector(h_deg: f64, len: f64) -> (f64, f64) {
    let r = h_deg.to_radians();
    (len * r.sin(), len * r.cos())
}

/// No-action rollout: both aircraft stay inside the airspace and are in
/// crash proximity after `steps` control steps.
pub fn crashes_without_action(a: &AircraftState, b: &AircraftState, steps: u32, cfg: &SimConfig) -> bool {
    let (mut a, mut b) = (a.clone(), b.clone());
    for k in 1..=steps {
        a = step_aircraft(&a, Action::NoAction, cfg.dt_s, cfg);
        b = step_aircraft(&b, Action::NoAction, cfg.dt_s, cfg);
        if classify_pair(&a, &b, cfg) == ProximityClass::Crash {
            return true;
        }
        if k < steps && (a.radius() >= cfg.airspace_radius_m || b.radius() >= cfg.airspace_radius_m) {
            return false;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tag(i: u32) -> PairTag {
        PairTag {
            first_id: 2 * i,
            pair_id: i,
            time: 0.0,
        }
    }

    #[test]
    fn pairs_start_on_border_with_grid_values() {
        let cfg = SimConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..200 {
            let (a, b) = spawn_conflict_pair(&mut rng, &cfg, tag(i)).unwrap();
            for ac in [&a, &b] {
                assert!((ac.radius() - cfg.airspace_radius_m).abs() < 1e-6);
                assert_eq!(ac.h % 5.0, 0.0);
                assert!((215.0..=250.0).contains(&ac.s) && ac.s % 5.0 == 0.0);
                assert!((6000.0..=10000.0).contains(&ac.z) && ac.z % 100.0 == 0.0);
                assert!((215.0..=250.0).contains(&ac.s_des) && ac.s_des % 5.0 == 0.0);
                assert!((6000.0..=10000.0).contains(&ac.z_des) && ac.z_des % 100.0 == 0.0);
                let off = ac.h_diff();
                assert!((-30.0..=30.0).contains(&off) && off % 5.0 == 0.0, "{off}");
                assert!(ac.controllable && ac.action_count == 0);
            }
            assert_eq!(a.z, b.z);
            assert_eq!(b.id, a.id + 1);
            assert_eq!(a.pair_id, b.pair_id);
        }
    }

    #[test]
    fn no_action_rollout_always_crashes() {
        let cfg = SimConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..1000 {
            let (a, b) = spawn_conflict_pair(&mut rng, &cfg, tag(i)).unwrap();
            assert!(crashes_without_action(&a, &b, 400, &cfg), "pair {i}");
        }
    }

    #[test]
    fn impossible_geometry_exhausts_retries() {
        let cfg = SimConfig {
            airspace_radius_m: 1_000.0,
            min_meeting_steps: 100,
            max_meeting_steps: 100,
            spawn_retries: 50,
            ..SimConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            spawn_conflict_pair(&mut rng, &cfg, tag(0)),
            Err(SpawnError::Exhausted { retries: 50 })
        ));
    }
}
