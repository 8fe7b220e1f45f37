use thiserror::Error;

use crate::model::{NodeId, NodeState, SimTime};
use crate::node::LifecycleEvent;

/// Invalid parameters, rejected before a run starts.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// A lifecycle event that has no edge out of the current state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("protocol violation: {event:?} is not valid in state {state:?}")]
pub struct ProtocolViolation {
    pub state: NodeState,
    pub event: LifecycleEvent,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnergyError {
    #[error("off-board cycle energy must be positive, got {0} mJ")]
    NonPositiveOffboard(f64),
}

/// Conditions that abort a run. These indicate a simulator bug, not bad input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("event scheduled at {at} before current time {now}")]
    ScheduledInPast { at: SimTime, now: SimTime },
    #[error("negative latency for node {node}: response at {now}, request sent at {sent}")]
    NegativeLatency {
        node: NodeId,
        now: SimTime,
        sent: SimTime,
    },
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("row {row}: {message}")]
    Malformed { row: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl TraceError {
    pub(crate) fn row(row: u64, message: impl Into<String>) -> Self {
        TraceError::Malformed {
            row,
            message: message.into(),
        }
    }
}

/// Top-level error for scenario runs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("simulation aborted: {0}")]
    Sim(#[from] SimError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
