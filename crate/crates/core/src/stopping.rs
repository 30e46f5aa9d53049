//! When to end the query loop.
//!
//! `time_limit` depends on wall-clock time and is therefore the one
//! criterion that can make two runs of the same configuration differ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::QueryState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoppingKind {
    /// Number of query rounds.
    NumOfQueries,
    /// Total annotation cost.
    CostLimit,
    /// Fraction of the initial unlabeled pool that has been queried.
    PercentOfUnlabel,
    /// Seconds of wall-clock time.
    TimeLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingCriterion {
    pub kind: StoppingKind,
    pub threshold: f64,
}

impl Default for StoppingCriterion {
    fn default() -> Self {
        StoppingCriterion {
            kind: StoppingKind::NumOfQueries,
            threshold: 50.0,
        }
    }
}

impl StoppingCriterion {
    pub fn new(kind: StoppingKind, threshold: f64) -> Self {
        StoppingCriterion { kind, threshold }
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.threshold;
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Config(format!("stopping threshold must be positive, got {t}")));
        }
        if self.kind == StoppingKind::PercentOfUnlabel && t > 1.0 {
            return Err(Error::Config(format!(
                "percent_of_unlabel threshold must be in (0, 1], got {t}"
            )));
        }
        Ok(())
    }

    /// Evaluated after each round on the query rounds recorded so far.
    pub fn should_stop(&self, trace: &[QueryState], initial_unlabeled_size: usize, elapsed_secs: f64) -> bool {
        match self.kind {
            StoppingKind::NumOfQueries => trace.len() as f64 >= self.threshold,
            StoppingKind::CostLimit => trace.iter().map(|s| s.round_cost).sum::<f64>() >= self.threshold,
            StoppingKind::PercentOfUnlabel => {
                let queried: usize = trace.iter().map(|s| s.queried_indices.len()).sum();
                initial_unlabeled_size > 0 && queried as f64 / initial_unlabeled_size as f64 >= self.threshold
            }
            StoppingKind::TimeLimit => elapsed_secs >= self.threshold,
        }
    }
}
