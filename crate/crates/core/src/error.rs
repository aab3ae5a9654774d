use thiserror::Error;

use crate::id::NodeId;

/// Errors raised by the membership, routing and protocol layers.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("node {0} is not in the membership view")]
    UnknownNode(NodeId),
    #[error("region boundary {0} is not in the membership view")]
    BoundaryNotFound(NodeId),
    #[error("ring offset {offset} out of range for a ring of {len} nodes")]
    OutOfRange { offset: usize, len: usize },
    #[error("cluster has a single member; there is nobody to broadcast to")]
    SingletonCluster,
    #[error("cluster of {n} nodes is too small (need at least {min})")]
    ClusterTooSmall { n: usize, min: usize },
    #[error("cannot split an empty arc")]
    EmptyArc,
    #[error("region [{left}, {right}] is not a valid arc relative to root {root}")]
    InvalidRegion {
        root: NodeId,
        left: NodeId,
        right: NodeId,
    },
    #[error("fan-out must be a positive even integer, got {0}")]
    InvalidFanout(usize),
    #[error("operation not allowed while node is {0:?}")]
    InvalidStatus(crate::protocol::Status),
    #[error("no seed nodes configured")]
    NoSeeds,
    #[error("invalid node id {0:?}")]
    ParseNodeId(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
