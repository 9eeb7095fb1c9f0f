//! Desk-scale testbed for adversarial reinforcement learning in dynamic
//! channel access and power control.
//!
//! Victim transmitter-receiver pairs learn joint channel and power selection
//! with a recurrent dueling Q-network over a Gauss-Markov fading
//! interference channel. A Q-learning jammer with an attack/listen strategy
//! tries to crush their sum rate, and an ensemble-policy defense -- cycling
//! through retraining snapshots chosen for minimum transition correlation --
//! recovers it. The crate provides the channel physics, the from-scratch
//! networks and training, both agents, the defense machinery, scenario
//! drivers, and deterministic file I/O; the `specjam` binary wires them into
//! subcommands.

pub mod agents;
pub mod channel;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod qnet;
pub mod replay;
pub mod report;
pub mod rng;
pub mod snapshot;
pub mod verify;

pub use config::{AttackerType, ScenarioConfig};
pub use error::{Error, Result};
pub use experiment::{
    empirical_pdf_cdf, moving_average, scenario_attack, scenario_baseline, scenario_ensemble,
    scenario_retrain_collapse, MetricsTrace, RunOutcome, ScenarioKind, World,
};
