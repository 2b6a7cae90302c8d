use std::path::PathBuf;

use crate::graph::NodeId;

/// Errors raised by the decay toolkit.
#[derive(Debug, thiserror::Error)]
pub enum DecayError {
    #[error("edge list is empty")]
    EmptyEdgeList,
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(NodeId, NodeId),
    #[error("tie strength {strength} on edge ({u}, {v}) is outside (0, 1]")]
    TieStrength { u: NodeId, v: NodeId, strength: f64 },
    #[error("node {0} has no incident edges")]
    IsolatedNode(NodeId),
    #[error("invalid initial probability: {0}")]
    InitialProbability(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {node} is not alive at step {step}")]
    NotAlive { node: NodeId, step: usize },
    #[error("edge ({0}, {1}) is not present")]
    MissingEdge(NodeId, NodeId),
    #[error("{0}")]
    Domain(String),
    #[error("enumeration needs {required} subsets but the cap is {cap}")]
    EnumerationCap { required: u128, cap: u128 },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl DecayError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        DecayError::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DecayError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, DecayError>;

/// Checks that `value` lies in `[0, 1]`.
pub(crate) fn check_unit(name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(DecayError::domain(format!(
            "{name} = {value} is outside [0, 1]"
        )))
    }
}
