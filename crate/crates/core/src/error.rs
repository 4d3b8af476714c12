use alloc::string::String;
use alloc::vec::Vec;

use crate::tabular::Class;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("instance does not conform to schema: {0}")]
    InvalidInstance(String),
    #[error("schema mismatch: expected {expected} features, found {found}")]
    SchemaMismatch { expected: usize, found: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("degenerate split: {train} training rows, {test} test rows")]
    DegenerateSplit { train: usize, test: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training data contains a single class")]
    SingleClassTraining,
    #[error("instance not present in lookup table")]
    UnknownInstance,
    #[error("insufficient like neighbours: found {found}, wanted {wanted}")]
    InsufficientNeighbors { found: usize, wanted: usize },
    #[error("insufficient eligible seeds for class {class}: found {found}, wanted {wanted}")]
    InsufficientEligible {
        class: Class,
        found: usize,
        wanted: usize,
    },
    #[error("query is already predicted as the target class {0}")]
    AlreadyTargetClass(Class),
    #[error("schema has no actionable features that can change")]
    NoActionableFeatures,
    #[error("no valid individual counterfactual for any of the {attempted} pool instances")]
    AllSinglesFailed { attempted: usize },
    #[error("no training instance is predicted as the contrast class {0}")]
    EmptyContrastClass(Class),
    #[error("k-medoids needs at least {k} points, got {points}")]
    TooFewPoints { points: usize, k: usize },
    #[error("no candidate substitution flips any pool instance (region size {region_size}, votes: {votes:?})")]
    NoValidCandidate {
        region_size: usize,
        votes: Vec<(String, usize)>,
    },
    #[error("paired samples have zero difference variance")]
    ZeroVariance,
    #[error("paired samples differ in length ({left} vs {right}) or have fewer than two pairs")]
    LengthMismatch { left: usize, right: usize },
    #[error("item {0} missing from ordering or not unique")]
    MissingItem(String),
    #[error("seeds exhausted: built {succeeded} of {wanted} item sets")]
    ExhaustedSeeds { succeeded: usize, wanted: usize },
    #[error("counterfactual is not valid")]
    InvalidCounterfactual,
}
