//! Simulated annotators.
//!
//! An oracle answers from the ground truth, flipping the label with
//! probability `noise_rate` to a uniformly chosen other class. Whether a
//! given query is corrupted is a hash of `(oracle seed, oracle id, instance,
//! repeat counter)`, not a draw from a running generator, so asking the same
//! question twice gives the same answer and replays after a restart are
//! exact.
//!
//! Multiple oracles are combined either by repeated labeling with a
//! majority vote or by IEthresh, which keeps querying only the oracles whose
//! upper confidence bound on agreement with the majority stays within a
//! fraction `epsilon` of the best one.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::seed;

/// Price of one answer: a flat amount, or a table keyed by the returned
/// (encoded) class.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum CostModel {
    Uniform(f64),
    PerLabel(BTreeMap<usize, f64>),
}

impl<'de> Deserialize<'de> for CostModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        // Untagged enums buffer map keys as strings, so parse them here.
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Uniform(f64),
            PerLabel(BTreeMap<String, f64>),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Uniform(c) => Ok(CostModel::Uniform(c)),
            Raw::PerLabel(table) => table
                .into_iter()
                .map(|(k, v)| {
                    k.parse::<usize>()
                        .map(|k| (k, v))
                        .map_err(|_| serde::de::Error::custom(format!("cost table key {k:?} is not a class index")))
                })
                .collect::<std::result::Result<_, _>>()
                .map(CostModel::PerLabel),
        }
    }
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel::Uniform(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub id: String,
    #[serde(default)]
    pub noise_rate: f64,
    #[serde(default)]
    pub cost: CostModel,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleAnswer {
    pub index: usize,
    pub label: usize,
    pub cost: f64,
    pub oracle_id: String,
}

impl OracleConfig {
    pub fn new(id: impl Into<String>, noise_rate: f64) -> Self {
        OracleConfig {
            id: id.into(),
            noise_rate,
            cost: CostModel::default(),
            seed: 0,
        }
    }

    pub fn with_cost(mut self, cost: CostModel) -> Self {
        self.cost = cost;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(Error::Config(format!(
                "oracle {:?}: noise_rate {} outside [0, 1]",
                self.id, self.noise_rate
            )));
        }
        match &self.cost {
            CostModel::Uniform(c) if !(*c > 0.0 && c.is_finite()) => {
                Err(Error::Config(format!("oracle {:?}: cost must be positive", self.id)))
            }
            CostModel::PerLabel(table) => {
                if let Some((_, c)) = table.iter().find(|(_, c)| !(**c > 0.0 && c.is_finite())) {
                    return Err(Error::Config(format!("oracle {:?}: cost {c} is not positive", self.id)));
                }
                if let Some(missing) = (0..n_classes).find(|y| !table.contains_key(y)) {
                    return Err(Error::Config(format!(
                        "oracle {:?}: no cost for class {missing}",
                        self.id
                    )));
                }
                if let Some(extra) = table.keys().find(|&&y| y >= n_classes) {
                    return Err(Error::Config(format!(
                        "oracle {:?}: cost for unknown class {extra}",
                        self.id
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn cost_of(&self, label: usize) -> f64 {
        match &self.cost {
            CostModel::Uniform(c) => *c,
            CostModel::PerLabel(table) => table.get(&label).copied().unwrap_or(f64::NAN),
        }
    }

    pub fn label_costs(&self, n_classes: usize) -> Vec<f64> {
        (0..n_classes).map(|y| self.cost_of(y)).collect()
    }

    fn query_hash(&self, index: usize, repeat: usize) -> u64 {
        let base = seed::derive(self.seed, seed::fnv1a(self.id.as_bytes()));
        seed::derive(seed::derive(base, index as u64), repeat as u64)
    }

    /// The label this oracle gives for `index` on its `repeat`-th asking.
    pub fn noisy_label(&self, truth: usize, n_classes: usize, index: usize, repeat: usize) -> usize {
        let h = self.query_hash(index, repeat);
        if n_classes < 2 || seed::unit_interval(h) >= self.noise_rate {
            return truth;
        }
        let other = (seed::derive(h, 1) % (n_classes as u64 - 1)) as usize;
        if other >= truth {
            other + 1
        } else {
            other
        }
    }

    pub fn answer(&self, truth: &[usize], n_classes: usize, index: usize, repeat: usize) -> Result<OracleAnswer> {
        let true_label = *truth
            .get(index)
            .ok_or_else(|| Error::param(format!("instance {index} out of range for {} labels", truth.len())))?;
        let label = self.noisy_label(true_label, n_classes, index, repeat);
        Ok(OracleAnswer {
            index,
            label,
            cost: self.cost_of(label),
            oracle_id: self.id.clone(),
        })
    }
}

/// One answer per index, each asked for the first time.
pub fn oracle_query(
    oracle: &OracleConfig,
    truth: &[usize],
    n_classes: usize,
    indices: &[usize],
) -> Result<Vec<OracleAnswer>> {
    indices.iter().map(|&i| oracle.answer(truth, n_classes, i, 0)).collect()
}

/// Most frequent label, ties to the smallest.
pub fn majority_vote(labels: impl IntoIterator<Item = usize>) -> Option<usize> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    // max_by_key keeps the last maximum; iterate descending so it is the smallest label.
    counts.into_iter().rev().max_by_key(|&(_, c)| c).map(|(l, _)| l)
}

/// Result of asking for one instance several times.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedLabel {
    pub label: usize,
    pub cost: f64,
    pub answers: Vec<OracleAnswer>,
}

/// Every oracle answers `repeats` times (repeat counters `0..repeats`); the
/// majority label wins and the costs add up.
pub fn repeated_query(
    oracles: &[OracleConfig],
    repeats: usize,
    truth: &[usize],
    n_classes: usize,
    index: usize,
) -> Result<AggregatedLabel> {
    if repeats < 1 {
        return Err(Error::param("repeat count must be at least 1"));
    }
    if oracles.is_empty() {
        return Err(Error::param("no oracles to query"));
    }
    let answers = oracles
        .iter()
        .flat_map(|o| (0..repeats).map(move |r| o.answer(truth, n_classes, index, r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(AggregatedLabel {
        label: majority_vote(answers.iter().map(|a| a.label)).expect("at least one answer"),
        cost: answers.iter().map(|a| a.cost).sum(),
        answers,
    })
}

/// Agreement record of one oracle: 1 when it matched the round's majority.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleHistory {
    pub id: String,
    pub rewards: Vec<u8>,
}

impl OracleHistory {
    pub fn new(id: impl Into<String>) -> Self {
        OracleHistory {
            id: id.into(),
            rewards: Vec::new(),
        }
    }

    pub fn with_rewards(id: impl Into<String>, rewards: Vec<u8>) -> Self {
        OracleHistory { id: id.into(), rewards }
    }
}

/// `mean + t_{1 - alpha/2, n-1} * s / sqrt(n)`; infinite below two
/// observations so new oracles get explored.
pub fn upper_interval(rewards: &[u8], alpha: f64) -> f64 {
    let n = rewards.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let nf = n as f64;
    let mean = rewards.iter().map(|&r| f64::from(r)).sum::<f64>() / nf;
    let var = rewards.iter().map(|&r| (f64::from(r) - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if var == 0.0 {
        return mean;
    }
    let t = StudentsT::new(0.0, 1.0, nf - 1.0)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - alpha / 2.0);
    mean + t * var.sqrt() / nf.sqrt()
}

/// Oracles whose upper interval reaches `epsilon` times the best one, in
/// history order. Never empty.
pub fn ieth_select(histories: &[OracleHistory], epsilon: f64, alpha: f64) -> Result<Vec<String>> {
    if histories.is_empty() {
        return Err(Error::param("IEthresh needs at least one oracle"));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::param(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    let ui: Vec<f64> = histories.iter().map(|h| upper_interval(&h.rewards, alpha)).collect();
    let best = ui.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = epsilon * best;
    Ok(histories
        .iter()
        .zip(&ui)
        .filter(|(_, &u)| u >= threshold)
        .map(|(h, _)| h.id.clone())
        .collect())
}

/// Rewards each answering oracle for agreeing with the majority of this
/// round's answers and returns that majority label. Oracles without an
/// answer are left untouched.
pub fn ieth_update(histories: &mut [OracleHistory], answers: &[OracleAnswer]) -> Option<usize> {
    let majority = majority_vote(answers.iter().map(|a| a.label))?;
    for a in answers {
        if let Some(h) = histories.iter_mut().find(|h| h.id == a.oracle_id) {
            h.rewards.push(u8::from(a.label == majority));
        }
    }
    Some(majority)
}
