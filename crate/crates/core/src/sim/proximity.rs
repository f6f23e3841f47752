use serde::{Deserialize, Serialize};

use super::{AircraftState, SimConfig};

/// Innermost cylinder a pair of aircraft shares, ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProximityClass {
    Clear,
    Detection,
    Penalty,
    Crash,
}

impl ProximityClass {
    pub fn within_detection(self) -> bool {
        self >= ProximityClass::Detection
    }

    pub fn within_penalty(self) -> bool {
        self >= ProximityClass::Penalty
    }
}

/// Horizontal and vertical separation of two aircraft.
pub fn separation(a: &AircraftState, b: &AircraftState) -> (f64, f64) {
    ((a.x - b.x).hypot(a.y - b.y), (a.z - b.z).abs())
}

fn inside(d_h: f64, d_v: f64, radius: f64, halfheight: f64) -> bool {
    d_h < radius && d_v < halfheight
}

pub fn classify_separation(d_h: f64, d_v: f64, cfg: &SimConfig) -> ProximityClass {
    if inside(d_h, d_v, cfg.crash_radius_m, cfg.crash_halfheight_m) {
        ProximityClass::Crash
    } else if inside(d_h, d_v, cfg.penalty_radius_m, cfg.penalty_halfheight_m) {
        ProximityClass::Penalty
    } else if inside(d_h, d_v, cfg.detection_radius_m, cfg.detection_halfheight_m) {
        ProximityClass::Detection
    } else {
        ProximityClass::Clear
    }
}

pub fn classify_pair(a: &AircraftState, b: &AircraftState, cfg: &SimConfig) -> ProximityClass {
    debug_assert_ne!(a.id, b.id);
    let (d_h, d_v) = separation(a, b);
    classify_separation(d_h, d_v, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::aircraft::test_aircraft;
    use proptest::prelude::*;

    #[test]
    fn far_apart_is_clear() {
        let cfg = SimConfig::default();
        let a = test_aircraft(0, 0.0, 0.0, 8000.0);
        let b = test_aircraft(1, 2.0 * cfg.detection_radius_m, 0.0, 8000.0);
        assert_eq!(classify_pair(&a, &b, &cfg), ProximityClass::Clear);
    }

    #[test]
    fn coincident_is_crash() {
        let cfg = SimConfig::default();
        let a = test_aircraft(0, 10.0, 20.0, 8000.0);
        let b = test_aircraft(1, 10.0, 20.0, 8000.0);
        assert_eq!(classify_pair(&a, &b, &cfg), ProximityClass::Crash);
    }

    #[test]
    fn vertical_separation_downgrades_to_detection() {
        let cfg = SimConfig::default();
        let a = test_aircraft(0, 0.0, 0.0, 8000.0);
        let b = test_aircraft(1, cfg.penalty_radius_m - 1.0, 0.0, 8000.0 + 450.0);
        assert_eq!(classify_pair(&a, &b, &cfg), ProximityClass::Detection);
    }

    #[test]
    fn cylinder_boundaries_are_exclusive() {
        let cfg = SimConfig::default();
        assert_eq!(
            classify_separation(cfg.penalty_radius_m, 0.0, &cfg),
            ProximityClass::Detection
        );
        assert_eq!(
            classify_separation(0.0, cfg.penalty_halfheight_m, &cfg),
            ProximityClass::Detection
        );
        assert_eq!(
            classify_separation(0.0, cfg.crash_halfheight_m, &cfg),
            ProximityClass::Penalty
        );
    }

    proptest! {
        #[test]
        fn symmetric_and_nested(
            x in -30_000.0..30_000.0f64,
            y in -30_000.0..30_000.0f64,
            dz in -1_000.0..1_000.0f64,
        ) {
            let cfg = SimConfig::default();
            let a = test_aircraft(0, 0.0, 0.0, 8000.0);
            let b = test_aircraft(1, x, y, 8000.0 + dz);
            let ab = classify_pair(&a, &b, &cfg);
            prop_assert_eq!(ab, classify_pair(&b, &a, &cfg));
            let (d_h, d_v) = separation(&a, &b);
            if ab == ProximityClass::Crash {
                prop_assert!(d_h < cfg.penalty_radius_m && d_v < cfg.penalty_halfheight_m);
            }
            if ab.within_penalty() {
                prop_assert!(d_h < cfg.detection_radius_m && d_v < cfg.detection_halfheight_m);
            }
        }
    }
}
