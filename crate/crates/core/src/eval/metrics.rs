//! Per-run accounting of the five performance metrics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::sim::{nominal_profile, AircraftId, EventKind, NominalProfile, RemovalCause, StepOutcome, World, WorldEvent};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub crashes: u64,
    pub pairs_spawned: u64,
    /// Spawned pairs minus those still airborne at the cutoff without a
    /// conflict, whose outcome is undecided.
    pub potential_conflicts: u64,
    /// Pairs with at least one member involved in a conflict.
    pub conflicts: u64,
    pub conflict_events: u64,
    pub conflicts_solved_pct: f64,
    pub avg_delay_s: f64,
    pub avg_extra_maneuvers: f64,
    pub correct_exit_pct: f64,
    pub aircraft_spawned: u64,
    pub aircraft_exited: u64,
    pub aircraft_crashed: u64,
    pub aircraft_airborne_at_cutoff: u64,
    pub max_concurrent_aircraft: u64,
    pub mean_concurrent_aircraft: f64,
    pub sim_time_s: f64,
    /// Percentages whose denominator was zero and were set to 100 by
    /// convention.
    pub degenerate: Vec<String>,
    pub event_log: Option<String>,
}

impl MetricsReport {
    /// Fields summarized by aggregation, in report order.
    pub fn numeric_fields(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("crashes", self.crashes as f64),
            ("pairs_spawned", self.pairs_spawned as f64),
            ("potential_conflicts", self.potential_conflicts as f64),
            ("conflicts", self.conflicts as f64),
            ("conflicts_solved_pct", self.conflicts_solved_pct),
            ("avg_delay_s", self.avg_delay_s),
            ("avg_extra_maneuvers", self.avg_extra_maneuvers),
            ("correct_exit_pct", self.correct_exit_pct),
            ("aircraft_spawned", self.aircraft_spawned as f64),
            ("aircraft_exited", self.aircraft_exited as f64),
            ("max_concurrent_aircraft", self.max_concurrent_aircraft as f64),
            ("mean_concurrent_aircraft", self.mean_concurrent_aircraft),
        ]
    }
}

/// Folds world events and exits into a [`MetricsReport`].
#[derive(Debug, Default)]
pub struct MetricsAccumulator {
    nominal: BTreeMap<AircraftId, NominalProfile>,
    spawn_time: BTreeMap<AircraftId, f64>,
    conflicted_pairs: BTreeSet<u32>,
    pairs: u64,
    crashes: u64,
    conflicts: u64,
    spawned: u64,
    crashed: u64,
    exited: u64,
    correct: u64,
    delay_sum: f64,
    extra_sum: f64,
    steps: u64,
    population_sum: u64,
    max_population: u64,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records aircraft that just appeared in `world`. Call after every spawn.
    pub fn note_spawns(&mut self, world: &World, events: &[WorldEvent]) {
        let cfg = world.config();
        for e in events.iter().filter(|e| e.kind == EventKind::Spawned) {
            self.pairs += 1;
            for id in &e.aircraft {
                let state = world
                    .aircraft()
                    .iter()
                    .find(|a| a.id == *id)
                    .expect("spawned aircraft is airborne");
                self.spawned += 1;
                self.spawn_time.insert(*id, state.spawn_time);
                self.nominal.insert(*id, nominal_profile(state, cfg));
            }
        }
    }

    pub fn note_step(&mut self, world: &World, outcome: &StepOutcome) {
        for e in &outcome.events {
            match e.kind {
                EventKind::Conflict => {
                    self.conflicts += 1;
                    self.conflicted_pairs.extend(e.aircraft.iter().map(|id| id / 2));
                }
                EventKind::Crash => {
                    self.crashes += 1;
                    self.crashed += e.aircraft.len() as u64;
                }
                _ => {}
            }
        }
        for r in &outcome.reports {
            if let Some(RemovalCause::Exit { correct }) = r.removed {
                let id = r.state.id;
                let nominal = self.nominal[&id];
                self.exited += 1;
                self.correct += correct as u64;
                self.delay_sum += world.time() - self.spawn_time[&id] - nominal.time_s;
                self.extra_sum += r.state.action_count as f64 - nominal.maneuvers as f64;
            }
        }
        self.note_spawns(world, &outcome.events);
        self.observe_population(world);
    }

    pub fn observe_population(&mut self, world: &World) {
        let n = world.aircraft().len() as u64;
        self.steps += 1;
        self.population_sum += n;
        self.max_population = self.max_population.max(n);
    }

    pub fn finish(&self, world: &World) -> MetricsReport {
        let mut degenerate = Vec::new();
        let mut pct = |num: u64, den: u64, name: &str| {
            if den == 0 {
                degenerate.push(name.to_string());
                100.0
            } else {
                100.0 * num as f64 / den as f64
            }
        };
        let unsolved = self.conflicted_pairs.len() as u64;
        let undecided: BTreeSet<u32> = world
            .aircraft()
            .iter()
            .map(|a| a.pair_id)
            .filter(|p| !self.conflicted_pairs.contains(p))
            .collect();
        let potential = self.pairs - undecided.len() as u64;
        let solved_pct = pct(potential - unsolved, potential, "conflicts_solved_pct");
        let correct_pct = pct(self.correct, self.exited, "correct_exit_pct");
        let per_exit = |x: f64| if self.exited == 0 { 0.0 } else { x / self.exited as f64 };
        MetricsReport {
            crashes: self.crashes,
            pairs_spawned: self.pairs,
            potential_conflicts: potential,
            conflicts: unsolved,
            conflict_events: self.conflicts,
            conflicts_solved_pct: solved_pct,
            avg_delay_s: per_exit(self.delay_sum),
            avg_extra_maneuvers: per_exit(self.extra_sum),
            correct_exit_pct: correct_pct,
            aircraft_spawned: self.spawned,
            aircraft_exited: self.exited,
            aircraft_crashed: self.crashed,
            aircraft_airborne_at_cutoff: world.aircraft().len() as u64,
            max_concurrent_aircraft: self.max_population,
            mean_concurrent_aircraft: if self.steps == 0 {
                0.0
            } else {
                self.population_sum as f64 / self.steps as f64
            },
            sim_time_s: world.time(),
            degenerate,
            event_log: None,
        }
    }
}
