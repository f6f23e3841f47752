use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use atc_core::config::ExperimentConfig;
use atc_core::eval::{aggregate, run_batch, ActionMode, AggregateReport, Controller, MetricsReport, RunSpec};
use atc_core::policy::{describe, Policy, Role};
use atc_core::sim::{EventKind, WorldEvent};
use atc_core::trainer::{run_training, TRAIN_LOG_FILE};

#[derive(Parser)]
#[command(name = "atc", version, about = "Graph-neural air traffic control: train, evaluate, replay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an actor-critic from scratch.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Override the number of training episodes.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Run the density-controlled traffic experiment on trained models.
    Eval {
        #[arg(long = "model", num_args = 1.., required_unless_present_any = ["baseline", "config"])]
        models: Vec<PathBuf>,
        /// Also evaluate a reference controller.
        #[arg(long, value_enum)]
        baseline: Vec<Baseline>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        density: Option<f64>,
        #[arg(long)]
        hours: Option<f64>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        mode: Option<ActionMode>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
        /// Write one event log per run into this directory.
        #[arg(long)]
        events_dir: Option<PathBuf>,
    },
    /// Print an event log as a timeline.
    Replay {
        #[arg(long)]
        events: PathBuf,
        /// Simulated seconds per wall-clock second; 0 prints without pausing.
        #[arg(long, default_value_t = 0.0)]
        speed: f64,
    },
    /// Show a checkpoint's architecture and parameter statistics.
    Inspect {
        #[arg(long)]
        model: PathBuf,
    },
    /// Run the fast property oracles.
    Selftest {
        /// Multiplies the number of randomized instances.
        #[arg(long, default_value_t = 1)]
        scale: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Baseline {
    Noop,
    Random,
    Scripted,
}

impl Baseline {
    fn controller(self) -> Controller {
        match self {
            Baseline::Noop => Controller::NoOp,
            Baseline::Random => Controller::UniformRandom,
            Baseline::Scripted => Controller::Scripted,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train {
            config,
            seed,
            out,
            episodes,
        } => train(config.as_deref(), seed, &out, episodes),
        Command::Eval {
            models,
            baseline,
            config,
            density,
            hours,
            runs,
            seed,
            mode,
            jobs,
            out,
            events_dir,
        } => {
            let args = EvalArgs {
                models,
                baselines: baseline,
                density,
                hours,
                runs,
                seed,
                mode,
                jobs,
                events_dir,
            };
            eval(config.as_deref(), args, &out)
        }
        Command::Replay { events, speed } => replay(&events, speed),
        Command::Inspect { model } => inspect(&model),
        Command::Selftest { scale } => selftest(scale),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("config {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn train(config: Option<&Path>, seed: u64, out: &Path, episodes: Option<usize>) -> Result<ExitCode> {
    let mut cfg = load_config(config)?;
    if let Some(n) = episodes {
        cfg.train.episodes = n;
    }
    cfg.validate()?;
    fs::create_dir_all(out).with_context(|| format!("output directory {}", out.display()))?;
    fs::write(out.join("config.toml"), cfg.to_toml_string())?;
    let every = (cfg.train.episodes / 20).max(1);
    let outcome = run_training(&cfg.sim, &cfg.train, seed, Some(out), |s| {
        if (s.episode + 1) % every == 0 {
            eprintln!(
                "episode {:>6}  return {:>9.3}  conflicts {:>3}  crashes {:>3}  correct exits {:>3}/{:<3}",
                s.episode + 1,
                s.mean_return,
                s.counters.conflicts,
                s.counters.crashes,
                s.counters.correct_exits,
                s.counters.exits
            );
        }
    })?;
    println!("log: {}", out.join(TRAIN_LOG_FILE).display());
    for c in &outcome.checkpoints {
        println!("checkpoint: {}", c.display());
    }
    Ok(ExitCode::SUCCESS)
}

struct EvalArgs {
    models: Vec<PathBuf>,
    baselines: Vec<Baseline>,
    density: Option<f64>,
    hours: Option<f64>,
    runs: Option<usize>,
    seed: u64,
    mode: Option<ActionMode>,
    jobs: usize,
    events_dir: Option<PathBuf>,
}

#[derive(serde::Serialize)]
struct ControllerResult {
    name: String,
    model: Option<String>,
    runs: Vec<MetricsReport>,
    aggregate: AggregateReport,
}

fn eval(config: Option<&Path>, args: EvalArgs, out: &Path) -> Result<ExitCode> {
    let mut cfg = load_config(config)?;
    let ev = &mut cfg.eval;
    if !args.models.is_empty() {
        ev.models = args.models;
    }
    if let Some(d) = args.density {
        ev.density = d;
    }
    if let Some(h) = args.hours {
        ev.duration_s = h * 3600.0;
    }
    if let Some(r) = args.runs {
        ev.runs_per_model = r;
    }
    if let Some(m) = args.mode {
        ev.action_mode = m;
    }
    cfg.validate()?;
    if cfg.eval.models.is_empty() && args.baselines.is_empty() {
        bail!("nothing to evaluate; pass --model or --baseline");
    }

    let expected = cfg.train.architecture();
    let mut controllers = Vec::new();
    let mut labels = Vec::new();
    for path in &cfg.eval.models {
        let policy = Policy::load(path, Some(&expected)).with_context(|| format!("model {}", path.display()))?;
        controllers.push(Controller::learned(policy, cfg.eval.action_mode));
        labels.push(Some(path.display().to_string()));
    }
    for b in &args.baselines {
        controllers.push(b.controller());
        labels.push(None);
    }
    if let Some(dir) = &args.events_dir {
        fs::create_dir_all(dir)?;
    }

    // Every controller sees the same traffic seeds.
    let mut specs = Vec::new();
    for (c, controller) in controllers.iter().enumerate() {
        for r in 0..cfg.eval.runs_per_model {
            let seed = args.seed.wrapping_add(r as u64);
            let event_log = args
                .events_dir
                .as_ref()
                .map(|d| d.join(format!("events_{c:02}_{}_{r:02}.jsonl", controller.name())));
            specs.push(RunSpec {
                controller: c,
                seed,
                event_log,
            });
        }
    }
    let mut reports = run_batch(&controllers, &specs, &cfg.sim, &cfg.eval, args.jobs).into_iter();

    let mut results = Vec::new();
    let mut learned = Vec::new();
    for (c, label) in controllers.iter().zip(labels) {
        let runs: Vec<MetricsReport> = reports
            .by_ref()
            .take(cfg.eval.runs_per_model)
            .collect::<Result<_, _>>()?;
        if label.is_some() {
            learned.extend(runs.iter().cloned());
        }
        let agg = aggregate(&runs).context("no runs requested")?;
        print_summary(&c.name(), &agg);
        results.push(ControllerResult {
            name: c.name(),
            model: label,
            runs,
            aggregate: agg,
        });
    }

    let report = serde_json::json!({
        "seed": args.seed,
        "eval": cfg.eval,
        "controllers": results,
        "learned_aggregate": aggregate(&learned),
    });
    let mut w = BufWriter::new(File::create(out).with_context(|| format!("report {}", out.display()))?);
    serde_json::to_writer_pretty(&mut w, &report)?;
    w.write_all(b"\n")?;
    w.flush()?;
    println!("report: {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn print_summary(name: &str, agg: &AggregateReport) {
    let m = |k: &str| agg.metrics[k];
    println!(
        "{name:<14} runs {:>2}  crashes {:>6.1} ({:.1})  solved {:>6.1}% ({:.1})  delay {:>7.1}s ({:.1})  extra {:>6.2} ({:.2})  correct {:>6.1}% ({:.1})",
        agg.runs,
        m("crashes").median,
        m("crashes").iqr,
        m("conflicts_solved_pct").median,
        m("conflicts_solved_pct").iqr,
        m("avg_delay_s").median,
        m("avg_delay_s").iqr,
        m("avg_extra_maneuvers").median,
        m("avg_extra_maneuvers").iqr,
        m("correct_exit_pct").median,
        m("correct_exit_pct").iqr,
    );
}

fn replay(path: &Path, speed: f64) -> Result<ExitCode> {
    if !(speed >= 0.0 && speed.is_finite()) {
        bail!("--speed must be a non-negative number");
    }
    let file = File::open(path).with_context(|| format!("event log {}", path.display()))?;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut last_time = 0.0;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: WorldEvent =
            serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), n + 1))?;
        if speed > 0.0 && e.time > last_time {
            out.flush()?;
            std::thread::sleep(Duration::from_secs_f64((e.time - last_time) / speed));
        }
        last_time = e.time;
        let ids: Vec<String> = e.aircraft.iter().map(|id| format!("AC{id}")).collect();
        writeln!(out, "{}  {:<16} {}", clock(e.time), kind_label(e.kind), ids.join(" "))?;
        *counts.entry(kind_label(e.kind).to_string()).or_default() += 1;
    }
    writeln!(out, "-- {} simulated", clock(last_time))?;
    for (k, n) in counts {
        writeln!(out, "   {k:<16} {n}")?;
    }
    Ok(ExitCode::SUCCESS)
}

fn clock(t: f64) -> String {
    let s = t.round() as u64;
    format!("{:02}:{:02}:{:02}", s / 3600, s / 60 % 60, s % 60)
}

fn kind_label(k: EventKind) -> &'static str {
    match k {
        EventKind::Spawned => "spawned",
        EventKind::Exited => "exited",
        EventKind::CorrectExit => "correct-exit",
        EventKind::Conflict => "conflict",
        EventKind::Crash => "crash",
        EventKind::ControlRevoked => "control-revoked",
        EventKind::ControlRestored => "control-restored",
    }
}

fn inspect(path: &Path) -> Result<ExitCode> {
    let policy = Policy::load(path, None).with_context(|| format!("model {}", path.display()))?;
    println!("architecture: {}", describe(&policy.spec));
    for role in [Role::Actor, Role::Critic] {
        let store = policy.store(role);
        println!(
            "{}: {} tensors, {} scalars, {} optimizer steps",
            role.prefix(),
            store.len(),
            store.scalar_count(),
            store.steps()
        );
        for (name, p) in store.iter() {
            let v = &p.value;
            let n = v.len() as f64;
            let mean = v.sum() / n;
            let std = (v.mapv(|x| (x - mean).powi(2)).sum() / n).sqrt();
            let min = v.iter().copied().fold(f64::INFINITY, f64::min);
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            println!(
                "  {name:<24} {:>4}x{:<4} mean {mean:>10.4e} std {std:>10.4e} min {min:>10.4e} max {max:>10.4e}",
                v.nrows(),
                v.ncols()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn selftest(scale: usize) -> Result<ExitCode> {
    let results = atc_core::selftest::run_all(scale);
    let mut ok = true;
    for r in &results {
        println!("{} {:<26} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        ok &= r.passed;
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
