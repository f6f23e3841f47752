//! Graph-neural actor-critic controller for free-airspace en-route traffic.
//!
//! The crate is organised bottom-up:
//!
//! - [`sim`]: kinematic airspace, conflict-guaranteed spawning, proximity
//!   cylinders and the uncontrollable protocol.
//! - [`adjacency`]: the global/detection/penalty graphs and normalized
//!   per-aircraft features.
//! - [`neural`]: dense tensors with a reverse-mode tape, GCN and GAT layers,
//!   Adam and checkpoints.
//! - [`policy`]: the actor and critic networks.
//! - [`trainer`]: rewards, shaping potentials, GAE and the episode loop.
//! - [`eval`]: the density-controlled traffic experiment and its metrics.
//! - [`config`]: the TOML file tying the sim, train and eval settings together.
//! - [`selftest`]: the fast property oracles behind `atc selftest`.

pub mod config;
pub mod error;
pub mod sim;
pub mod neural;
pub mod adjacency;
pub mod policy;
pub mod trainer;
pub mod eval;
pub mod selftest;
