//! Learning Mahalanobis similarity metrics from absolute (Likert or decile)
//! ratings, and evaluating them with triplet and kNN losses.
//!
//! The crate provides:
//! - ingestion of defendant tables and survey judgments ([`data`]),
//! - pair and triplet constraints derived from ratings ([`constraints`]),
//! - the LMNN, MMC and LSML learners plus Euclidean and precision baselines ([`learners`]),
//! - triplet-violation and kNN losses ([`evaluation`]),
//! - the repeated split protocol and sigma sweeps ([`experiment`]),
//! - descriptive survey tables ([`survey`]),
//! - the batch command line ([`cli`]).

// `!(x > 0.0)` is used on purpose so NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod cli;
pub mod config;
pub mod constraints;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod experiment;
pub mod learners;
pub mod numerics;
pub mod survey;
pub mod synthetic;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    FeatureVector, LabeledDataset, MahalanobisMetric, MetricForm, PairSets, RatingScale, Triplet, TripletSet,
    TripletVariant,
};
