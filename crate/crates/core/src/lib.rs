//! Search core for single-instance and group counterfactual explanations of
//! tabular binary classifiers.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem (CSV ingestion, model files, the CLI) lives in the `groupcf`
//! companion crate.
//!
//! The pipeline, bottom-up:
//!
//! * [`tabular`]: schema, instances, datasets, stratified splits and the
//!   training-split feature statistics (median, MAD, decile bins).
//! * [`model`]: the black-box classifier, either gradient-boosted trees or a
//!   lookup table.
//! * [`neighbors`]: Hamming distance over binned features, nearest like
//!   neighbour pools and low-confidence seed selection.
//! * [`singlecf`]: random-sampling counterfactuals with post-hoc
//!   sparsification.
//! * [`groupcf`]: key-feature voting, contrast-class regions, candidate
//!   substitutions and max-coverage selection.
//! * [`metrics`]: proximity, sparsity, the paired t-test and gap scores.
//! * [`studygen`]: matched item sets and explanation text.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod groupcf;
pub mod metrics;
pub mod model;
pub mod neighbors;
mod rng;
pub mod singlecf;
pub mod studygen;
pub mod tabular;

pub use error::{Error, Result};
pub use groupcf::{GroupConfig, GroupCounterfactual, GroupExplainer, SamplingMode};
pub use model::{BoostedTrees, Classifier, LookupTable, Model, TrainConfig};
pub use singlecf::{CfSearchConfig, Counterfactual, FeatureChange};
pub use tabular::{
    Class, Dataset, FeatureKind, FeatureSchema, FeatureSpec, FeatureStats, Instance, Row,
};
