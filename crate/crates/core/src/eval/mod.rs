//! Density-controlled traffic experiments, metrics and aggregation.

mod aggregate;
mod metrics;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjacency::{build_features, build_graphs};
use crate::error::{ConfigError, EvalError};
use crate::policy::{greedy_actions, sample_actions, Policy};
use crate::sim::{greedy_goal_action, Action, AircraftState, JointAction, PoissonSpawner, SimConfig, World};

pub use aggregate::{aggregate, quantile_sorted, AggregateReport, MetricSummary};
pub use metrics::{MetricsAccumulator, MetricsReport};

pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionMode {
    #[default]
    Greedy,
    Sample,
}

impl FromStr for ActionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "greedy" => Ok(ActionMode::Greedy),
            "sample" => Ok(ActionMode::Sample),
            other => Err(format!("unknown action mode `{other}` (expected greedy or sample)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub duration_s: f64,
    /// Traffic multiplier on `overflights_per_day`.
    pub density: f64,
    /// Aircraft per day at density 1; pairs arrive at half this rate.
    pub overflights_per_day: f64,
    /// Stop spawning after this time; defaults to `duration_s`.
    pub spawn_until_s: Option<f64>,
    pub runs_per_model: usize,
    pub action_mode: ActionMode,
    pub models: Vec<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            duration_s: SECONDS_PER_DAY,
            density: 1.0,
            overflights_per_day: 1300.0,
            spawn_until_s: None,
            runs_per_model: 5,
            action_mode: ActionMode::Greedy,
            models: Vec::new(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return Err(ConfigError::Invalid("duration_s must be finite and non-negative".into()));
        }
        if !(self.density >= 0.0 && self.density.is_finite()) || !(self.overflights_per_day >= 0.0) {
            return Err(ConfigError::Invalid("density and overflights_per_day must be non-negative".into()));
        }
        if self.runs_per_model == 0 {
            return Err(ConfigError::Invalid("runs_per_model must be at least 1".into()));
        }
        Ok(())
    }

    /// Mean seconds between pair arrivals; infinite for zero traffic.
    pub fn mean_pair_interval_s(&self) -> f64 {
        let pairs_per_day = self.density * self.overflights_per_day / 2.0;
        if pairs_per_day > 0.0 {
            SECONDS_PER_DAY / pairs_per_day
        } else {
            f64::INFINITY
        }
    }
}

/// Who issues commands during an experiment.
#[derive(Debug, Clone)]
pub enum Controller {
    NoOp,
    UniformRandom,
    /// Solo goal seeking with no conflict awareness.
    Scripted,
    Learned { policy: Box<Policy>, mode: ActionMode },
}

impl Controller {
    pub fn learned(policy: Policy, mode: ActionMode) -> Self {
        Controller::Learned {
            policy: Box::new(policy),
            mode,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Controller::NoOp => "noop".into(),
            Controller::UniformRandom => "random".into(),
            Controller::Scripted => "scripted".into(),
            Controller::Learned { policy, .. } => format!("learned-{}", policy.spec.kind),
        }
    }

    /// One action per aircraft, aligned with `states`.
    pub fn act<R: Rng + ?Sized>(&self, states: &[AircraftState], sim: &SimConfig, rng: &mut R) -> Vec<Action> {
        match self {
            Controller::NoOp => vec![Action::NoAction; states.len()],
            Controller::UniformRandom => states
                .iter()
                .map(|_| Action::ALL[rng.random_range(0..Action::COUNT)])
                .collect(),
            Controller::Scripted => states.iter().map(|s| greedy_goal_action(s, sim)).collect(),
            Controller::Learned { policy, mode } => {
                if states.is_empty() {
                    return Vec::new();
                }
                let out = policy.forward(&build_features(states, sim), &build_graphs(states, sim));
                match mode {
                    ActionMode::Greedy => greedy_actions(&out),
                    ActionMode::Sample => sample_actions(&out, rng).0,
                }
            }
        }
    }
}

/// One simulated traffic period. Events are streamed to `events` as JSON
/// lines when given.
pub fn run_experiment(
    controller: &Controller,
    sim: &SimConfig,
    cfg: &EvalConfig,
    seed: u64,
    mut events: Option<&mut dyn Write>,
) -> Result<MetricsReport, EvalError> {
    sim.validate()?;
    cfg.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut world = World::new(sim.clone(), master.random());
    let spawn_until = cfg.spawn_until_s.unwrap_or(cfg.duration_s);
    let mut spawner = PoissonSpawner::new(cfg.mean_pair_interval_s(), spawn_until, master.random());
    let mut rng = ChaCha8Rng::seed_from_u64(master.random());
    let mut acc = MetricsAccumulator::new();

    let initial = world.run_spawns(&mut spawner)?;
    acc.note_spawns(&world, &initial);
    write_events(&mut events, &initial)?;

    while world.time() + 1e-9 < cfg.duration_s {
        let states = world.aircraft().to_vec();
        let actions = controller.act(&states, sim, &mut rng);
        let joint: JointAction = states
            .iter()
            .zip(actions)
            .filter(|(s, _)| s.controllable)
            .map(|(s, a)| (s.id, a))
            .collect();
        let outcome = world.advance(&joint, &mut spawner)?;
        acc.note_step(&world, &outcome);
        write_events(&mut events, &outcome.events)?;
    }
    if let Some(w) = events.as_mut() {
        w.flush()?;
    }
    Ok(acc.finish(&world))
}

fn write_events(sink: &mut Option<&mut dyn Write>, events: &[crate::sim::WorldEvent]) -> std::io::Result<()> {
    if let Some(w) = sink.as_mut() {
        for e in events {
            serde_json::to_writer(&mut **w, e)?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// One cell of an evaluation matrix.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub controller: usize,
    pub seed: u64,
    pub event_log: Option<PathBuf>,
}

/// Runs every spec on up to `jobs` threads. Results keep the order of
/// `specs` regardless of scheduling.
pub fn run_batch(
    controllers: &[Controller],
    specs: &[RunSpec],
    sim: &SimConfig,
    cfg: &EvalConfig,
    jobs: usize,
) -> Vec<Result<MetricsReport, EvalError>> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<MetricsReport, EvalError>>>> =
        Mutex::new((0..specs.len()).map(|_| None).collect());
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(spec) = specs.get(i) else { break };
        let r = run_one(&controllers[spec.controller], spec, sim, cfg);
        results.lock().expect("no poisoned worker")[i] = Some(r);
    };
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, specs.len().max(1)) {
            s.spawn(work);
        }
    });
    results
        .into_inner()
        .expect("no poisoned worker")
        .into_iter()
        .map(|r| r.expect("every spec ran"))
        .collect()
}

fn run_one(controller: &Controller, spec: &RunSpec, sim: &SimConfig, cfg: &EvalConfig) -> Result<MetricsReport, EvalError> {
    match &spec.event_log {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            let mut report = run_experiment(controller, sim, cfg, spec.seed, Some(&mut w))?;
            report.event_log = Some(path.display().to_string());
            Ok(report)
        }
        None => run_experiment(controller, sim, cfg, spec.seed, None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::log::read_jsonl;
    use crate::sim::{EventKind, SpawnPolicy, WorldEvent};

    fn hours(h: f64) -> EvalConfig {
        EvalConfig {
            duration_s: h * 3600.0,
            ..EvalConfig::default()
        }
    }

    #[test]
    fn zero_duration_gives_degenerate_report() {
        let r = run_experiment(&Controller::NoOp, &SimConfig::default(), &hours(0.0), 1, None).unwrap();
        assert_eq!(r.potential_conflicts, 0);
        assert_eq!(r.crashes, 0);
        assert_eq!((r.conflicts_solved_pct, r.correct_exit_pct), (100.0, 100.0));
        assert_eq!(r.degenerate, vec!["conflicts_solved_pct", "correct_exit_pct"]);
        assert_eq!((r.avg_delay_s, r.avg_extra_maneuvers), (0.0, 0.0));
    }

    #[test]
    fn noop_oracle_crashes_every_pair() {
        let cfg = EvalConfig {
            density: 0.3,
            duration_s: 4.0 * 3600.0,
            spawn_until_s: Some(3.0 * 3600.0),
            ..EvalConfig::default()
        };
        let r = run_experiment(&Controller::NoOp, &SimConfig::default(), &cfg, 3, None).unwrap();
        assert!(r.potential_conflicts > 10);
        assert_eq!(r.conflicts_solved_pct, 0.0);
        assert_eq!(r.crashes, r.potential_conflicts);
        assert_eq!(r.aircraft_airborne_at_cutoff, 0);
    }

    #[test]
    fn spawn_count_matches_daily_rate() {
        let cfg = EvalConfig::default();
        let mut total = Vec::new();
        for seed in 0..5u64 {
            let mut sp = PoissonSpawner::new(cfg.mean_pair_interval_s(), SECONDS_PER_DAY, seed);
            let mut pairs = 0;
            let mut t = 0.0;
            while t <= SECONDS_PER_DAY {
                pairs += sp.pairs_due(t, 0);
                t += 5.0;
            }
            total.push(2 * pairs);
        }
        let band = 3.0 * (650.0f64).sqrt() * 2.0;
        for n in total {
            assert!((n as f64 - 1300.0).abs() <= band, "{n}");
        }
    }

    #[test]
    fn full_day_closure_and_rate() {
        let sim = SimConfig::default();
        let mut log = Vec::new();
        let r = run_experiment(&Controller::Scripted, &sim, &EvalConfig::default(), 11, Some(&mut log)).unwrap();
        let band = 3.0 * (650.0f64).sqrt() * 2.0;
        assert!((r.aircraft_spawned as f64 - 1300.0).abs() <= band, "{}", r.aircraft_spawned);
        assert_eq!(r.aircraft_spawned, r.aircraft_exited + r.aircraft_crashed + r.aircraft_airborne_at_cutoff);

        let events: Vec<WorldEvent> = read_jsonl(log.as_slice()).unwrap();
        let count = |k: EventKind| events.iter().filter(|e| e.kind == k).map(|e| e.aircraft.len() as u64).sum::<u64>();
        assert_eq!(count(EventKind::Spawned), r.aircraft_spawned);
        assert_eq!(count(EventKind::Exited) + count(EventKind::CorrectExit), r.aircraft_exited);
        assert_eq!(count(EventKind::Crash), r.aircraft_crashed);
        let conflicted: std::collections::BTreeSet<u32> = events
            .iter()
            .filter(|e| e.kind == EventKind::Conflict)
            .flat_map(|e| e.aircraft.iter().map(|id| id / 2))
            .collect();
        let expected = 100.0 * (r.potential_conflicts - conflicted.len() as u64) as f64 / r.potential_conflicts as f64;
        assert_eq!(r.conflicts_solved_pct, expected);
        assert!((0.0..=100.0).contains(&r.correct_exit_pct));
        assert!(r.crashes <= r.potential_conflicts);
    }

    #[test]
    fn report_json_round_trips() {
        let r = run_experiment(&Controller::UniformRandom, &SimConfig::default(), &hours(0.5), 4, None).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<MetricsReport>(&s).unwrap(), r);
        let agg = aggregate(&[r.clone(), r]).unwrap();
        let s = serde_json::to_string(&agg).unwrap();
        assert_eq!(serde_json::from_str::<AggregateReport>(&s).unwrap(), agg);
    }

    #[test]
    fn batch_is_order_stable_and_matches_serial_runs() {
        let sim = SimConfig::default();
        let cfg = hours(0.5);
        let controllers = [Controller::NoOp, Controller::UniformRandom];
        let specs: Vec<RunSpec> = (0..4)
            .map(|i| RunSpec {
                controller: i % 2,
                seed: i as u64,
                event_log: None,
            })
            .collect();
        let par: Vec<_> = run_batch(&controllers, &specs, &sim, &cfg, 3).into_iter().map(Result::unwrap).collect();
        for (spec, r) in specs.iter().zip(&par) {
            assert_eq!(&run_experiment(&controllers[spec.controller], &sim, &cfg, spec.seed, None).unwrap(), r);
        }
    }
}
