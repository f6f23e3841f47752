use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::spawn::{spawn_conflict_pair, PairTag};
use super::{classify_pair, step_aircraft, Action, AircraftId, AircraftState, ProximityClass, SimConfig};
use crate::error::SpawnError;

/// Commands for one control step, keyed by aircraft id. Missing entries and
/// uncontrollable aircraft fly `NoAction`.
pub type JointAction = BTreeMap<AircraftId, Action>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Spawned,
    /// Left the airspace off-goal. Exactly one of `Exited`/`CorrectExit`
    /// is emitted per exiting aircraft.
    Exited,
    CorrectExit,
    Conflict,
    Crash,
    ControlRevoked,
    ControlRestored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldEvent {
    pub kind: EventKind,
    pub time: f64,
    pub aircraft: Vec<AircraftId>,
}

/// Decides how many conflict pairs enter the airspace at a given time.
pub trait SpawnPolicy {
    fn pairs_due(&mut self, time: f64, population: usize) -> usize;
}

/// Never spawns.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoSpawn;

impl SpawnPolicy for NoSpawn {
    fn pairs_due(&mut self, _time: f64, _population: usize) -> usize {
        0
    }
}

/// Training spawner: keeps the population at or below `max_aircraft` and
/// stops once `max_created` aircraft have been generated.
#[derive(Debug, Clone)]
pub struct CappedSpawner {
    pub max_aircraft: usize,
    pub max_created: usize,
    pub created: usize,
}

impl CappedSpawner {
    pub fn new(max_aircraft: usize, max_created: usize) -> Self {
        Self {
            max_aircraft,
            max_created,
            created: 0,
        }
    }

    pub fn exhausted(&self) -> bool {
        self.created + 2 > self.max_created
    }
}

impl SpawnPolicy for CappedSpawner {
    fn pairs_due(&mut self, _time: f64, population: usize) -> usize {
        let mut n = 0;
        while population + 2 * (n + 1) <= self.max_aircraft && self.created + 2 <= self.max_created {
            self.created += 2;
            n += 1;
        }
        n
    }
}

/// Evaluation spawner: pair arrivals form a Poisson process with the given
/// mean inter-arrival time, truncated at `until`.
#[derive(Debug, Clone)]
pub struct PoissonSpawner {
    rng: ChaCha8Rng,
    exp: Option<Exp<f64>>,
    next_arrival: f64,
    until: f64,
}

impl PoissonSpawner {
    pub fn new(mean_interval_s: f64, until: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let exp = (mean_interval_s.is_finite() && mean_interval_s > 0.0)
            .then(|| Exp::new(1.0 / mean_interval_s).expect("positive rate"));
        let next_arrival = match &exp {
            Some(e) => e.sample(&mut rng),
            None => f64::INFINITY,
        };
        Self {
            rng,
            exp,
            next_arrival,
            until,
        }
    }
}

impl SpawnPolicy for PoissonSpawner {
    fn pairs_due(&mut self, time: f64, _population: usize) -> usize {
        let Some(exp) = self.exp else { return 0 };
        let mut n = 0;
        while self.next_arrival <= time && self.next_arrival < self.until {
            n += 1;
            self.next_arrival += exp.sample(&mut self.rng);
        }
        n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemovalCause {
    Crash,
    Exit { correct: bool },
}

/// Post-step view of one aircraft that was airborne when the step began.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub state: AircraftState,
    /// Another aircraft was within this one's penalty cylinder after moving.
    pub in_penalty: bool,
    pub removed: Option<RemovalCause>,
}

#[derive(Debug, Clone, Default)]
pub struct StepOutcome {
    pub events: Vec<WorldEvent>,
    pub reports: Vec<StepReport>,
}

#[derive(Debug, Clone, Copy, Default)]
struct ActiveConflict {
    revoked: Option<AircraftId>,
}

/// The airspace: all airborne aircraft plus conflict-protocol bookkeeping.
#[derive(Debug, Clone)]
pub struct World {
    cfg: SimConfig,
    time: f64,
    aircraft: Vec<AircraftState>,
    next_pair: u32,
    rng: ChaCha8Rng,
    conflicts: BTreeMap<(AircraftId, AircraftId), ActiveConflict>,
}

impl World {
    pub fn new(cfg: SimConfig, seed: u64) -> Self {
        Self {
            cfg,
            time: 0.0,
            aircraft: Vec::new(),
            next_pair: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            conflicts: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Airborne aircraft in ascending id order.
    pub fn aircraft(&self) -> &[AircraftState] {
        &self.aircraft
    }

    pub fn pairs_spawned(&self) -> u32 {
        self.next_pair
    }

    /// Inserts an aircraft directly (scenario construction and tests).
    pub fn insert(&mut self, state: AircraftState) {
        let pos = self.aircraft.partition_point(|a| a.id < state.id);
        self.next_pair = self.next_pair.max(state.id / 2 + 1);
        self.aircraft.insert(pos, state);
    }

    /// Pairs currently inside each other's penalty cylinder at least once
    /// and not yet separated beyond detection.
    pub fn active_conflicts(&self) -> impl Iterator<Item = (AircraftId, AircraftId)> + '_ {
        self.conflicts.keys().copied()
    }

    /// Spawns whatever `spawner` asks for at the current time.
    pub fn run_spawns(&mut self, spawner: &mut dyn SpawnPolicy) -> Result<Vec<WorldEvent>, SpawnError> {
        let due = spawner.pairs_due(self.time, self.aircraft.len());
        let mut events = Vec::with_capacity(due);
        for _ in 0..due {
            let pair_id = self.next_pair;
            let tag = PairTag {
                first_id: 2 * pair_id,
                pair_id,
                time: self.time,
            };
            let (a, b) = spawn_conflict_pair(&mut self.rng, &self.cfg, tag)?;
            self.next_pair += 1;
            events.push(WorldEvent {
                kind: EventKind::Spawned,
                time: self.time,
                aircraft: vec![a.id, b.id],
            });
            self.aircraft.push(a);
            self.aircraft.push(b);
        }
        Ok(events)
    }

    /// One control interval: move, classify, resolve crashes and conflicts,
    /// remove exits, then spawn.
    pub fn advance(
        &mut self,
        actions: &JointAction,
        spawner: &mut dyn SpawnPolicy,
    ) -> Result<StepOutcome, SpawnError> {
        let cfg = &self.cfg;
        let dt = cfg.dt_s;
        for ac in &mut self.aircraft {
            let action = if ac.controllable {
                actions.get(&ac.id).copied().unwrap_or(Action::NoAction)
            } else {
                Action::NoAction
            };
            *ac = step_aircraft(ac, action, dt, cfg);
        }
        self.time += dt;
        let time = self.time;

        let n = self.aircraft.len();
        let mut events = Vec::new();
        let mut in_penalty = vec![false; n];
        let mut crashed = vec![false; n];
        let mut classes = BTreeMap::new();
        let mut newly_conflicting = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (&self.aircraft[i], &self.aircraft[j]);
                let class = classify_pair(a, b, cfg);
                classes.insert((a.id, b.id), class);
                if class.within_penalty() {
                    in_penalty[i] = true;
                    in_penalty[j] = true;
                    if !self.conflicts.contains_key(&(a.id, b.id)) {
                        events.push(WorldEvent {
                            kind: EventKind::Conflict,
                            time,
                            aircraft: vec![a.id, b.id],
                        });
                        self.conflicts.insert((a.id, b.id), ActiveConflict::default());
                        newly_conflicting.push((i, j));
                    }
                }
                if class == ProximityClass::Crash {
                    crashed[i] = true;
                    crashed[j] = true;
                    events.push(WorldEvent {
                        kind: EventKind::Crash,
                        time,
                        aircraft: vec![a.id, b.id],
                    });
                }
            }
        }

        // Uncontrollable protocol: the lower id hands evasion to its partner.
        for (i, j) in newly_conflicting {
            if crashed[i] || crashed[j] {
                continue;
            }
            if self.aircraft[i].controllable && self.aircraft[j].controllable {
                let id = self.aircraft[i].id;
                self.aircraft[i].controllable = false;
                let key = (id, self.aircraft[j].id);
                self.conflicts.get_mut(&key).expect("just inserted").revoked = Some(id);
                events.push(WorldEvent {
                    kind: EventKind::ControlRevoked,
                    time,
                    aircraft: vec![id],
                });
            }
        }
        let separated: Vec<_> = self
            .conflicts
            .keys()
            .filter(|k| classes.get(k) == Some(&ProximityClass::Clear))
            .copied()
            .collect();
        for key in separated {
            self.end_conflict(key, &mut events);
        }

        let r = self.cfg.airspace_radius_m;
        let mut reports = Vec::with_capacity(n);
        let mut gone = BTreeSet::new();
        for (i, ac) in self.aircraft.iter().enumerate() {
            let removed = if crashed[i] {
                Some(RemovalCause::Crash)
            } else if ac.radius() >= r {
                let correct = ac.at_goal();
                events.push(WorldEvent {
                    kind: if correct {
                        EventKind::CorrectExit
                    } else {
                        EventKind::Exited
                    },
                    time,
                    aircraft: vec![ac.id],
                });
                Some(RemovalCause::Exit { correct })
            } else {
                None
            };
            if removed.is_some() {
                gone.insert(ac.id);
            }
            reports.push(StepReport {
                state: ac.clone(),
                in_penalty: in_penalty[i],
                removed,
            });
        }
        if !gone.is_empty() {
            self.aircraft.retain(|a| !gone.contains(&a.id));
            let orphaned: Vec<_> = self
                .conflicts
                .keys()
                .filter(|(a, b)| gone.contains(a) || gone.contains(b))
                .copied()
                .collect();
            for key in orphaned {
                self.end_conflict(key, &mut events);
            }
        }

        events.extend(self.run_spawns(spawner)?);
        Ok(StepOutcome { events, reports })
    }

    fn end_conflict(&mut self, key: (AircraftId, AircraftId), events: &mut Vec<WorldEvent>) {
        let Some(c) = self.conflicts.remove(&key) else { return };
        let Some(id) = c.revoked else { return };
        if let Some(ac) = self.aircraft.iter_mut().find(|a| a.id == id) {
            ac.controllable = true;
            events.push(WorldEvent {
                kind: EventKind::ControlRestored,
                time: self.time,
                aircraft: vec![id],
            });
        }
    }
}
