use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Geometry, kinematic limits and spawn grids of the simulated airspace.
///
/// All lengths are meters, speeds m/s, headings degrees, times seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub airspace_radius_m: f64,
    pub dt_s: f64,

    pub detection_radius_m: f64,
    pub detection_halfheight_m: f64,
    pub penalty_radius_m: f64,
    pub penalty_halfheight_m: f64,
    pub crash_radius_m: f64,
    pub crash_halfheight_m: f64,

    pub spawn_altitude_min_m: f64,
    pub spawn_altitude_max_m: f64,
    pub altitude_step_m: f64,
    pub spawn_speed_min_mps: f64,
    pub spawn_speed_max_mps: f64,
    pub speed_step_mps: f64,
    pub heading_step_deg: f64,
    pub desired_heading_offset_max_deg: f64,

    /// Hard clamps applied by climb/descend and speed actions.
    pub altitude_floor_m: f64,
    pub altitude_ceiling_m: f64,
    pub speed_floor_mps: f64,
    pub speed_ceiling_mps: f64,

    /// Meeting time window (in control steps) for conflict-guaranteed pairs.
    pub min_meeting_steps: u32,
    pub max_meeting_steps: u32,
    pub spawn_retries: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            airspace_radius_m: 150_000.0,
            dt_s: 5.0,
            detection_radius_m: 18_520.0,
            detection_halfheight_m: 600.0,
            penalty_radius_m: 9_260.0,
            penalty_halfheight_m: 300.0,
            crash_radius_m: 926.0,
            crash_halfheight_m: 100.0,
            spawn_altitude_min_m: 6_000.0,
            spawn_altitude_max_m: 10_000.0,
            altitude_step_m: 100.0,
            spawn_speed_min_mps: 215.0,
            spawn_speed_max_mps: 250.0,
            speed_step_mps: 5.0,
            heading_step_deg: 5.0,
            desired_heading_offset_max_deg: 30.0,
            altitude_floor_m: 1_000.0,
            altitude_ceiling_m: 15_000.0,
            speed_floor_mps: 100.0,
            speed_ceiling_mps: 350.0,
            min_meeting_steps: 24,
            max_meeting_steps: 200,
            spawn_retries: 10_000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: &str| Err(ConfigError::Invalid(msg.to_string()));
        if !(self.dt_s > 0.0) {
            return bad("dt_s must be positive");
        }
        if !(self.airspace_radius_m > 0.0) {
            return bad("airspace_radius_m must be positive");
        }
        if !(self.crash_radius_m < self.penalty_radius_m
            && self.penalty_radius_m < self.detection_radius_m)
        {
            return bad("cylinder radii must satisfy crash < penalty < detection");
        }
        if !(self.crash_halfheight_m < self.penalty_halfheight_m
            && self.penalty_halfheight_m < self.detection_halfheight_m)
        {
            return bad("cylinder half-heights must satisfy crash < penalty < detection");
        }
        if !(self.crash_radius_m > 0.0 && self.crash_halfheight_m > 0.0) {
            return bad("crash cylinder must have positive size");
        }
        if self.spawn_altitude_min_m > self.spawn_altitude_max_m
            || self.spawn_speed_min_mps > self.spawn_speed_max_mps
        {
            return bad("spawn grid bounds are inverted");
        }
        if !(self.altitude_step_m > 0.0 && self.speed_step_mps > 0.0 && self.heading_step_deg > 0.0)
        {
            return bad("grid steps must be positive");
        }
        if !(self.speed_floor_mps > 0.0) || self.speed_floor_mps > self.spawn_speed_min_mps {
            return bad("speed floor must be positive and below the spawn speed grid");
        }
        if self.speed_ceiling_mps < self.spawn_speed_max_mps {
            return bad("speed ceiling must be above the spawn speed grid");
        }
        if self.altitude_floor_m > self.spawn_altitude_min_m
            || self.altitude_ceiling_m < self.spawn_altitude_max_m
        {
            return bad("altitude clamps must enclose the spawn band");
        }
        if self.min_meeting_steps == 0 || self.min_meeting_steps > self.max_meeting_steps {
            return bad("meeting step window is empty");
        }
        Ok(())
    }

    pub fn altitude_grid(&self) -> Vec<f64> {
        grid(self.spawn_altitude_min_m, self.spawn_altitude_max_m, self.altitude_step_m)
    }

    pub fn speed_grid(&self) -> Vec<f64> {
        grid(self.spawn_speed_min_mps, self.spawn_speed_max_mps, self.speed_step_mps)
    }

    pub fn heading_grid(&self) -> Vec<f64> {
        let n = (360.0 / self.heading_step_deg).round() as usize;
        (0..n).map(|i| i as f64 * self.heading_step_deg).collect()
    }

    pub fn heading_offset_grid(&self) -> Vec<f64> {
        let max = self.desired_heading_offset_max_deg;
        grid(-max, max, self.heading_step_deg)
    }
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}
