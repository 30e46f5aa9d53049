//! Query strategies.
//!
//! Every strategy returns `min(batch_size, |pool|)` distinct members of the
//! unlabeled pool. Scores are maximized; ties go to the smaller position in
//! the pool. All logarithms are natural.
//!
//! | name               | score                                                     |
//! |--------------------|-----------------------------------------------------------|
//! | `uncertainty`      | least confident, negative margin, or entropy of `p(y|x)`   |
//! | `random`           | uniform draw without replacement                           |
//! | `qbc`              | vote entropy or mean KL to consensus of a bootstrap committee |
//! | `eer`              | negative expected future pool error after a hypothetical label |
//! | `graph_density`    | mean RBF similarity to k nearest pool neighbours, discounted as the batch grows |
//! | `cost_performance` | entropy divided by the expected labeling cost              |
//!
//! `cost_performance` is this crate's reading of "entropy per unit cost";
//! there is no single canonical definition.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{random_sample, Dataset, IndexCollection};
use crate::error::{Error, Result};
use crate::models::{argmax, Classifier};
use crate::seed;

/// Bootstrap draws per committee member before giving up on two classes.
pub const MAX_BOOTSTRAP_RESAMPLES: usize = 100;

const SUBSAMPLE_STREAM: u64 = 0x5ab5;
const SELECT_STREAM: u64 = 0x5e1e;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyMeasure {
    LeastConfident,
    Margin,
    #[default]
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Disagreement {
    #[default]
    VoteEntropy,
    KlDivergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    #[default]
    Uncertainty,
    Random,
    Qbc,
    Eer,
    GraphDensity,
    CostPerformance,
}

/// Everything a strategy may look at when choosing the next batch.
pub struct SelectionContext<'a> {
    pub dataset: &'a Dataset,
    pub labeled: &'a IndexCollection,
    /// Labels as returned by the oracles, aligned with `labeled`.
    pub labeled_labels: &'a [usize],
    pub pool: &'a IndexCollection,
    /// Current model, trained on `labeled`.
    pub model: &'a dyn Classifier,
    /// Expected labeling cost per class, if labels are not uniformly priced.
    pub label_costs: Option<&'a [f64]>,
}

impl SelectionContext<'_> {
    fn pool_features(&self) -> Array2<f64> {
        self.dataset.rows(&self.pool.to_vec())
    }

    fn pool_proba(&self) -> Result<Array2<f64>> {
        self.model.predict_proba(self.pool_features().view())
    }
}

/// The selection contract shared by built-in and user strategies.
pub trait QueryStrategy: Send + Sync {
    fn select(&self, ctx: &SelectionContext<'_>, batch_size: usize, seed: u64) -> Result<IndexCollection>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    pub name: StrategyName,
    pub measure: UncertaintyMeasure,
    pub committee_size: usize,
    pub disagreement: Disagreement,
    /// Pool subsampling cap applied before selection; 0 disables it.
    pub subsample_cap: usize,
    /// RBF width for graph density; `None` means `1 / n_features`.
    pub rbf_gamma: Option<f64>,
    pub knn_k: usize,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            name: StrategyName::Uncertainty,
            measure: UncertaintyMeasure::Entropy,
            committee_size: 5,
            disagreement: Disagreement::VoteEntropy,
            subsample_cap: 0,
            rbf_gamma: None,
            knn_k: 10,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self, batch_size: usize) -> Result<()> {
        if self.committee_size < 2 {
            return Err(Error::Config("committee_size must be at least 2".into()));
        }
        if self.subsample_cap != 0 && self.subsample_cap < batch_size {
            return Err(Error::Config(format!(
                "subsample_cap {} is smaller than batch_size {batch_size}",
                self.subsample_cap
            )));
        }
        if self.knn_k == 0 {
            return Err(Error::Config("knn_k must be positive".into()));
        }
        if let Some(g) = self.rbf_gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Config(format!("rbf_gamma must be positive, got {g}")));
            }
        }
        Ok(())
    }
}

impl QueryStrategy for StrategyConfig {
    fn select(&self, ctx: &SelectionContext<'_>, batch_size: usize, seed: u64) -> Result<IndexCollection> {
        if ctx.pool.is_empty() {
            return Err(Error::param("empty unlabeled pool"));
        }
        if batch_size == 0 {
            return Err(Error::param("batch_size must be positive"));
        }
        let subsampled;
        let ctx = if self.subsample_cap > 0 {
            subsampled = subsample_pool(ctx.pool, self.subsample_cap, seed::derive(seed, SUBSAMPLE_STREAM));
            &SelectionContext {
                pool: &subsampled,
                ..*ctx
            }
        } else {
            ctx
        };
        let seed = seed::derive(seed, SELECT_STREAM);
        let pool = ctx.pool;
        let pick =
            |positions: Vec<usize>| -> IndexCollection { positions.into_iter().filter_map(|p| pool.get(p)).collect() };
        Ok(match self.name {
            StrategyName::Uncertainty => pick(uncertainty_select(ctx.pool_proba()?.view(), self.measure, batch_size)?),
            StrategyName::Random => random_select(pool, batch_size, seed)?,
            StrategyName::Qbc => qbc_select(
                ctx.dataset,
                ctx.labeled,
                ctx.labeled_labels,
                pool,
                ctx.model,
                self.committee_size,
                self.disagreement,
                batch_size,
                seed,
            )?,
            StrategyName::Eer => eer_select(
                ctx.dataset,
                ctx.labeled,
                ctx.labeled_labels,
                pool,
                ctx.model,
                batch_size,
            )?,
            StrategyName::GraphDensity => {
                let gamma = self.rbf_gamma.unwrap_or(1.0 / ctx.dataset.n_features().max(1) as f64);
                graph_density_select(ctx.dataset, pool, self.knn_k, gamma, batch_size)?
            }
            StrategyName::CostPerformance => {
                let probs = ctx.pool_proba()?;
                let costs = expected_costs(probs.view(), ctx.label_costs)?;
                pick(cost_performance_select(probs.view(), &costs, batch_size)?)
            }
        })
    }
}

/// Expected labeling cost of each row under its predicted label
/// distribution. Uniform pricing gives cost 1 everywhere.
pub fn expected_costs(probs: ArrayView2<'_, f64>, label_costs: Option<&[f64]>) -> Result<Vec<f64>> {
    match label_costs {
        None => Ok(vec![1.0; probs.nrows()]),
        Some(c) if c.len() != probs.ncols() => Err(Error::param(format!(
            "{} label costs for {} classes",
            c.len(),
            probs.ncols()
        ))),
        Some(c) => Ok(probs
            .rows()
            .into_iter()
            .map(|r| r.iter().zip(c).map(|(p, c)| p * c).sum())
            .collect()),
    }
}

/// Sums after sorting, so the result does not depend on term order.
fn order_free_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.into_iter().sum()
}

/// Shannon entropy in nats, `0 ln 0 = 0`.
pub fn entropy(probs: impl IntoIterator<Item = f64>) -> f64 {
    -order_free_sum(probs.into_iter().filter(|&p| p > 0.0).map(|p| p * p.ln()).collect())
}

/// Per-row informativeness; larger is more uncertain.
pub fn uncertainty_scores(probs: ArrayView2<'_, f64>, measure: UncertaintyMeasure) -> Vec<f64> {
    probs
        .rows()
        .into_iter()
        .map(|row| match measure {
            UncertaintyMeasure::LeastConfident => 1.0 - row.fold(f64::NEG_INFINITY, |m, &v| m.max(v)),
            UncertaintyMeasure::Margin => {
                let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
                for &p in row {
                    if p > first {
                        second = first;
                        first = p;
                    } else if p > second {
                        second = p;
                    }
                }
                -(first - second)
            }
            UncertaintyMeasure::Entropy => entropy(row.iter().copied()),
        })
        .collect()
}

/// Positions of the `k` largest scores, ties to the smaller position.
pub fn top_scores(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Returns pool positions (row numbers of `probs`).
pub fn uncertainty_select(
    probs: ArrayView2<'_, f64>,
    measure: UncertaintyMeasure,
    batch_size: usize,
) -> Result<Vec<usize>> {
    if probs.nrows() == 0 {
        return Err(Error::param("empty unlabeled pool"));
    }
    Ok(top_scores(&uncertainty_scores(probs, measure), batch_size))
}

pub fn random_select(pool: &IndexCollection, batch_size: usize, seed: u64) -> Result<IndexCollection> {
    if pool.is_empty() {
        return Err(Error::param("empty unlabeled pool"));
    }
    Ok(random_sample(pool, batch_size, seed))
}

/// Vote entropy of hard votes `votes[member]` over `n_classes`.
pub fn vote_entropy(votes: &[usize], n_classes: usize) -> f64 {
    let m = votes.len() as f64;
    let mut counts = vec![0usize; n_classes];
    for &v in votes {
        counts[v] += 1;
    }
    entropy(counts.into_iter().map(|c| c as f64 / m))
}

/// Mean KL divergence of each member's distribution from the committee
/// consensus. `members[c]` is member `c`'s distribution for one instance.
pub fn kl_to_consensus(members: &[Vec<f64>]) -> f64 {
    let m = members.len() as f64;
    let n_classes = members.first().map_or(0, Vec::len);
    let consensus: Vec<f64> = (0..n_classes)
        .map(|y| members.iter().map(|p| p[y]).sum::<f64>() / m)
        .collect();
    let per_member: Vec<f64> = members
        .iter()
        .map(|p| {
            order_free_sum(
                p.iter()
                    .zip(&consensus)
                    .filter(|(&pc, _)| pc > 0.0)
                    .map(|(&pc, &q)| pc * (pc / q).ln())
                    .collect(),
            )
            .max(0.0)
        })
        .collect();
    order_free_sum(per_member) / m
}

/// Disagreement score per pool row from the committee's probability
/// matrices (`committee[c]` is `|pool| x C`).
pub fn committee_scores(committee: &[Array2<f64>], disagreement: Disagreement) -> Vec<f64> {
    let rows = committee.first().map_or(0, |p| p.nrows());
    let n_classes = committee.first().map_or(0, |p| p.ncols());
    (0..rows)
        .map(|i| match disagreement {
            Disagreement::VoteEntropy => {
                let votes: Vec<usize> = committee.iter().map(|p| argmax(p.row(i).iter().copied())).collect();
                vote_entropy(&votes, n_classes)
            }
            Disagreement::KlDivergence => {
                let members: Vec<Vec<f64>> = committee.iter().map(|p| p.row(i).to_vec()).collect();
                kl_to_consensus(&members)
            }
        })
        .collect()
}

/// Draws a with-replacement resample of `0..len` containing two classes.
fn bootstrap(labels: &[usize], rng: &mut impl rand::Rng) -> Result<Vec<usize>> {
    let len = labels.len();
    for _ in 0..MAX_BOOTSTRAP_RESAMPLES {
        let draw: Vec<usize> = (0..len).map(|_| rng.random_range(0..len)).collect();
        let first = labels[draw[0]];
        if draw.iter().any(|&i| labels[i] != first) {
            return Ok(draw);
        }
    }
    Err(Error::InvalidData(format!(
        "bootstrap produced a single class {MAX_BOOTSTRAP_RESAMPLES} times"
    )))
}

/// Trains the bootstrap committee and returns each member's pool
/// probabilities. Member `i` draws from `seed::derive(seed, i)`.
pub fn train_committee(
    dataset: &Dataset,
    labeled: &IndexCollection,
    labeled_labels: &[usize],
    pool: &IndexCollection,
    prototype: &dyn Classifier,
    committee_size: usize,
    seed: u64,
) -> Result<Vec<Array2<f64>>> {
    if labeled.len() != labeled_labels.len() {
        return Err(Error::param("labeled indices and labels differ in length"));
    }
    if labeled_labels
        .iter()
        .all(|&y| Some(y) == labeled_labels.first().copied())
    {
        return Err(Error::InvalidData(
            "committee needs at least two labeled classes".into(),
        ));
    }
    let labeled_vec = labeled.to_vec();
    let pool_x = dataset.rows(&pool.to_vec());
    (0..committee_size)
        .map(|i| {
            let draw = bootstrap(labeled_labels, &mut seed::rng(seed::derive(seed, i as u64)))?;
            let idx: Vec<usize> = draw.iter().map(|&p| labeled_vec[p]).collect();
            let y: Vec<usize> = draw.iter().map(|&p| labeled_labels[p]).collect();
            let mut member = prototype.untrained();
            member.fit(dataset.rows(&idx).view(), &y, dataset.n_classes())?;
            member.predict_proba(pool_x.view())
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn qbc_select(
    dataset: &Dataset,
    labeled: &IndexCollection,
    labeled_labels: &[usize],
    pool: &IndexCollection,
    prototype: &dyn Classifier,
    committee_size: usize,
    disagreement: Disagreement,
    batch_size: usize,
    seed: u64,
) -> Result<IndexCollection> {
    if pool.is_empty() {
        return Err(Error::param("empty unlabeled pool"));
    }
    let committee = train_committee(dataset, labeled, labeled_labels, pool, prototype, committee_size, seed)?;
    let scores = committee_scores(&committee, disagreement);
    Ok(top_scores(&scores, batch_size)
        .into_iter()
        .filter_map(|p| pool.get(p))
        .collect())
}

/// Expected future pool error of labeling each pool member, averaged over
/// the current model's label distribution for it.
pub fn eer_risks(
    dataset: &Dataset,
    labeled: &IndexCollection,
    labeled_labels: &[usize],
    pool: &IndexCollection,
    model: &dyn Classifier,
) -> Result<Vec<f64>> {
    if pool.is_empty() {
        return Err(Error::param("empty unlabeled pool"));
    }
    let pool_vec = pool.to_vec();
    let current = model.predict_proba(dataset.rows(&pool_vec).view())?;
    let n_classes = dataset.n_classes();
    let base_idx = labeled.to_vec();

    (0..pool_vec.len())
        .into_par_iter()
        .map(|pos| {
            let candidate = pool_vec[pos];
            let rest: Vec<usize> = pool_vec.iter().copied().filter(|&u| u != candidate).collect();
            let rest_x = dataset.rows(&rest);
            let mut idx = base_idx.clone();
            idx.push(candidate);
            let train_x = dataset.rows(&idx);
            let mut risk = 0.0;
            for y in 0..n_classes {
                let mut labels = labeled_labels.to_vec();
                labels.push(y);
                let mut retrained = model.untrained();
                retrained.fit(train_x.view(), &labels, n_classes)?;
                let future = retrained.predict_proba(rest_x.view())?;
                let error: f64 = future
                    .rows()
                    .into_iter()
                    .map(|r| 1.0 - r.fold(f64::NEG_INFINITY, |m, &v| m.max(v)))
                    .sum();
                risk += current[[pos, y]] * error;
            }
            Ok(risk)
        })
        .collect()
}

/// Lowest expected risk first; the batch is filled in ascending risk order
/// without re-estimating between picks.
pub fn eer_select(
    dataset: &Dataset,
    labeled: &IndexCollection,
    labeled_labels: &[usize],
    pool: &IndexCollection,
    model: &dyn Classifier,
    batch_size: usize,
) -> Result<IndexCollection> {
    let neg: Vec<f64> = eer_risks(dataset, labeled, labeled_labels, pool, model)?
        .into_iter()
        .map(|r| -r)
        .collect();
    Ok(top_scores(&neg, batch_size)
        .into_iter()
        .filter_map(|p| pool.get(p))
        .collect())
}

/// Kernel-graph densities of the pool rows.
#[derive(Debug, Clone)]
pub struct DensityGraph {
    pub density: Vec<f64>,
    /// `neighbours[i]`: the k nearest other rows of row `i`.
    pub neighbours: Vec<Vec<usize>>,
    pub similarity: Array2<f64>,
}

impl DensityGraph {
    pub fn build(features: ArrayView2<'_, f64>, knn_k: usize, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::param(format!("rbf gamma must be positive, got {gamma}")));
        }
        let m = features.nrows();
        if m == 0 {
            return Err(Error::param("empty unlabeled pool"));
        }
        let k = knn_k.min(m - 1);
        let mut dist = Array2::zeros((m, m));
        for i in 0..m {
            for j in i + 1..m {
                let d: f64 = features
                    .row(i)
                    .iter()
                    .zip(features.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                dist[[i, j]] = d;
                dist[[j, i]] = d;
            }
        }
        let similarity = dist.mapv(|d: f64| (-gamma * d).exp());
        let neighbours: Vec<Vec<usize>> = (0..m)
            .map(|i| {
                let mut others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
                others.sort_by(|&a, &b| dist[[i, a]].total_cmp(&dist[[i, b]]).then(a.cmp(&b)));
                others.truncate(k);
                others
            })
            .collect();
        let density = neighbours
            .iter()
            .enumerate()
            .map(|(i, nb)| {
                if nb.is_empty() {
                    1.0
                } else {
                    nb.iter().map(|&j| similarity[[i, j]]).sum::<f64>() / nb.len() as f64
                }
            })
            .collect();
        Ok(DensityGraph {
            density,
            neighbours,
            similarity,
        })
    }

    /// Greedy batch selection with neighbour discounting; returns positions.
    pub fn select(mut self, batch_size: usize) -> Vec<usize> {
        let m = self.density.len();
        let mut taken = vec![false; m];
        let mut picked = Vec::with_capacity(batch_size.min(m));
        while picked.len() < batch_size.min(m) {
            let best = (0..m)
                .filter(|&i| !taken[i])
                .fold(None::<usize>, |best, i| match best {
                    Some(b) if self.density[b] >= self.density[i] => Some(b),
                    _ => Some(i),
                })
                .expect("pool not exhausted");
            taken[best] = true;
            picked.push(best);
            self.discount(best);
        }
        picked
    }

    /// Lowers the density of every row that has `picked` as a neighbour.
    pub fn discount(&mut self, picked: usize) {
        for (j, nb) in self.neighbours.iter().enumerate() {
            if nb.contains(&picked) {
                self.density[j] -= self.similarity[[picked, j]] / nb.len() as f64;
            }
        }
    }
}

pub fn graph_density_select(
    dataset: &Dataset,
    pool: &IndexCollection,
    knn_k: usize,
    gamma: f64,
    batch_size: usize,
) -> Result<IndexCollection> {
    let graph = DensityGraph::build(dataset.rows(&pool.to_vec()).view(), knn_k, gamma)?;
    Ok(graph
        .select(batch_size)
        .into_iter()
        .filter_map(|p| pool.get(p))
        .collect())
}

/// Entropy per unit cost; returns pool positions.
pub fn cost_performance_select(probs: ArrayView2<'_, f64>, costs: &[f64], batch_size: usize) -> Result<Vec<usize>> {
    if probs.nrows() == 0 {
        return Err(Error::param("empty unlabeled pool"));
    }
    if costs.len() != probs.nrows() {
        return Err(Error::param(format!(
            "{} costs for {} pool rows",
            costs.len(),
            probs.nrows()
        )));
    }
    if let Some(c) = costs.iter().find(|&&c| !(c > 0.0)) {
        return Err(Error::param(format!("labeling cost must be positive, got {c}")));
    }
    let scores: Vec<f64> = uncertainty_scores(probs, UncertaintyMeasure::Entropy)
        .into_iter()
        .zip(costs)
        .map(|(h, c)| h / c)
        .collect();
    Ok(top_scores(&scores, batch_size))
}

/// Caps the pool at `cap` uniformly drawn members (order preserved).
pub fn subsample_pool(unlabeled: &IndexCollection, cap: usize, seed: u64) -> IndexCollection {
    if unlabeled.len() <= cap {
        unlabeled.clone()
    } else {
        random_sample(unlabeled, cap, seed)
    }
}
