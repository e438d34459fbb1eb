use alloc::string::String;

use crate::dbn::Node;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} values, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("value {value} out of range for variable {var} (domain size {domain})")]
    ValueOutOfRange {
        var: usize,
        value: usize,
        domain: usize,
    },

    #[error("node {0} does not exist in this process")]
    UnknownNode(Node),

    #[error("transition for cluster {cluster} has zero total mass")]
    DegenerateTransition { cluster: usize },

    #[error("observation has zero likelihood under the current belief (cluster {cluster:?})")]
    ImpossibleObservation { cluster: Option<usize> },

    #[error("clustering is invalid: {0}")]
    InvalidClustering(String),

    #[error("clusters overlap; operation requires disjoint clusters")]
    OverlappingClusters,

    #[error("adding edges from {phi:?} to x{var} would create an intra-slice cycle")]
    CycleWouldForm { var: usize, phi: alloc::vec::Vec<usize> },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state space of {size} states exceeds cap {cap}")]
    StateSpaceTooLarge { size: u128, cap: usize },
}
