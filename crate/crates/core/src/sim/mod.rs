//! Deterministic 3D kinematic airspace simulation.

mod aircraft;
mod config;
pub mod log;
mod nominal;
mod proximity;
mod spawn;
mod world;

pub use aircraft::{
    normalize_heading, step_aircraft, wrap_heading_diff, Action, AircraftId, AircraftState,
};
#[cfg(test)]
pub(crate) use aircraft::test_aircraft;
pub use config::SimConfig;
pub use nominal::{greedy_goal_action, nominal_profile, NominalProfile};
pub use proximity::{classify_pair, classify_separation, separation, ProximityClass};
pub use spawn::{crashes_without_action, spawn_conflict_pair, PairTag};
pub use world::{
    CappedSpawner, EventKind, JointAction, NoSpawn, PoissonSpawner, RemovalCause, SpawnPolicy,
    StepOutcome, StepReport, World, WorldEvent,
};
