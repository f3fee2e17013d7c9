//! Deterministic simulator for group-based split federated learning (GSFL).
//!
//! Clients are partitioned into groups. Inside a group, clients train one
//! after another with split learning (the client-side model is relayed from
//! client to client through the access point while the group's server-side
//! replica stays on the edge server); groups train in parallel, and at the end
//! of every round the access point averages all client-side and all
//! server-side models. Centralized learning, vanilla relay split learning and
//! federated averaging are provided as baselines.
//!
//! Alongside the training math, [`latency`] reports the simulated wall time of
//! each round from FLOP counts and link rates.

pub mod config;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod latency;
pub mod nn;
pub mod report;
pub mod schemes;
pub mod split;

pub use config::{parse_config, parse_config_str, DatasetSource, ExperimentConfig};
pub use error::{Error, IdxError, Result};
pub use latency::{LatencyParams, Scheme};
pub use schemes::{Experiment, RoundMetrics, RunReport};
