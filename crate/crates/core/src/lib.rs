//! Deterministic discrete-event simulator of a sensor / gateway / cloud
//! network that moves condition-monitoring inference between tiers.
//!
//! Start with [`scenario::Scenario`] to describe a run and
//! [`run::run_scenario`] to execute it; the lower-level pieces (energy model,
//! heuristics, node state machine, classifier oracle, event engine) are
//! usable on their own.

pub mod energy;
pub mod error;
pub mod heuristics;
pub mod model;
pub mod node;
pub mod oracle;
pub mod run;
pub mod scenario;
pub mod seed;
pub mod sim;
pub mod summary;

pub use error::{ConfigError, Error, ProtocolViolation, SimError, TraceError};
pub use model::{
    AnomalyTracker, BatteryLevel, BatteryState, ConditionClass, Energy, HeuristicParams,
    InferenceMode, NodeId, NodeState, SimTime,
};
pub use run::{run_scenario, RunArtifacts};
pub use scenario::Scenario;
pub use sim::{SimConfig, Simulation};
pub use summary::{summarize, Summary};
