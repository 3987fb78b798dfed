//! Decentralized penalty-based optimization over agent networks.
//!
//! A set of agents, each holding a slice of data, minimizes the average of
//! their objectives while communicating only along graph edges. The crate
//! simulates that setting in a single process: it builds random connected
//! networks with symmetric mixing matrices, generates synthetic smooth and
//! hinge problems with certified centralized references, and runs two
//! penalty methods (a multi-consensus variant for smooth objectives and a
//! subgradient-sliding variant for nonsmooth ones) alongside EXTRA and an
//! accelerated gossip baseline, with exact accounting of communications
//! and (sub)gradient evaluations.

pub mod agents;
pub mod apm;
pub mod apm_c;
pub mod baselines;
pub mod consensus;
pub mod error;
pub mod experiment;
pub mod io;
pub mod network;
pub mod problems;
pub mod trace;

pub use agents::AgentMatrix;
pub use apm::{ApmConfig, ApmMode};
pub use apm_c::{ApmcConfig, ApmcSchedule, InnerRule};
pub use baselines::{BaselineAlg, BaselineConfig};
pub use error::{Error, Result};
pub use experiment::{AlgorithmConfig, ExperimentConfig, GraphConfig};
pub use network::{Network, WeightMatrix};
pub use problems::{ProblemInstance, ProblemKind, Reference};
pub use trace::{Counters, RunTrace, TraceMeta, TraceRow};
