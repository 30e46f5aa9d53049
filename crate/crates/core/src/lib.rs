//! Pool-based active learning.
//!
//! Datasets and index bookkeeping live in [`data`], classifiers in
//! [`models`], query strategies in [`strategy`], simulated annotators in
//! [`oracle`]. An experiment ([`experiment`]) ties them together, writes one
//! resumable state file per fold ([`state`]) and exports aggregated learning
//! curves ([`analysis`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod data;
pub mod error;
pub mod experiment;
pub mod models;
pub mod numfmt;
pub mod oracle;
pub mod seed;
pub mod state;
pub mod stopping;
pub mod strategy;

pub use analysis::{AggregateCurve, LearningCurve, Metric, XKind};
pub use data::{kfold_split, load_dataset, split_al, ColumnSelector, Dataset, IndexCollection, LoadOptions, Split};
pub use error::{Error, Result};
pub use experiment::{
    analyse_state_files, resume_experiment, run_experiment, Experiment, ExperimentConfig, ExperimentReport,
    OracleProtocol, Progress, RunOptions, SplitConfig,
};
pub use models::{Classifier, KnnClassifier, LogisticRegression, ModelConfig};
pub use oracle::{OracleAnswer, OracleConfig};
pub use state::{Checkpoint, QueryState, StateHeader};
pub use stopping::{StoppingCriterion, StoppingKind};
pub use strategy::{QueryStrategy, SelectionContext, StrategyConfig, StrategyName};
