//! Error types shared across the crate.

use thiserror::Error;

use crate::world::{AgentId, ArticleId, DepotId, Point2D};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("unknown location {0}")]
    UnknownLocation(String),
    #[error("no action at plan index {0}")]
    NoSuchAction(usize),
    #[error("insufficient stock at {depot} for {article}: requested {requested}, available {available}")]
    InsufficientStock {
        depot: DepotId,
        article: ArticleId,
        requested: u32,
        available: u32,
    },
    #[error("agent {agent} carries {carried} of {article}, cannot deliver {requested}")]
    InsufficientCargo {
        agent: AgentId,
        article: ArticleId,
        requested: u32,
        carried: u32,
    },
    #[error("agent {agent} is at {actual}, not at the {what} {expected}")]
    WrongLocation {
        agent: AgentId,
        expected: Point2D,
        actual: Point2D,
        what: String,
    },
    #[error("battery rule fired but the scenario has no charger")]
    NoCharger,
}

#[derive(Debug, Error)]
pub enum FitnessError {
    #[error("legacy aggregation needs exactly two constraint values (distance, obstacles), got {0}")]
    LegacyArity(usize),
    #[error("aggregation needs at least one constraint value")]
    NoConstraints,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Fitness(#[from] FitnessError),
    #[error("no agent can progress at tick {tick} and work remains")]
    SimStalled { tick: u64 },
    #[error("run exceeded {max_ticks} ticks with work remaining")]
    MaxTicksExceeded { max_ticks: u64 },
}

/// Validation failure with the path of the offending field.
#[derive(Debug, Error)]
#[error("invalid scenario at {path}: {message}")]
pub struct ValidationError {
    pub path: String,
    pub message: String,
}

impl ValidationError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}
