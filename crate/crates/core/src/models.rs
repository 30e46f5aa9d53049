//! Built-in probabilistic classifiers.
//!
//! Strategies and the experiment loop only see the [`Classifier`] trait, so
//! any model producing class probabilities can be plugged in.

use std::fmt;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A trainable model producing a row-stochastic `n x C` probability matrix.
pub trait Classifier: Send + Sync + fmt::Debug {
    /// Trains on `features` with labels in `0..n_classes`. Classes absent
    /// from `labels` still get a probability column.
    fn fit(&mut self, features: ArrayView2<'_, f64>, labels: &[usize], n_classes: usize) -> Result<()>;

    fn predict_proba(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>>;

    /// Argmax of [`Classifier::predict_proba`], ties to the smaller class.
    fn predict(&self, features: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        Ok(self
            .predict_proba(features)?
            .rows()
            .into_iter()
            .map(|r| argmax(r.iter().copied()))
            .collect())
    }

    /// A fresh, untrained model with the same hyperparameters.
    fn untrained(&self) -> Box<dyn Classifier>;
}

/// Index of the first maximum.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn check_training_input(features: ArrayView2<'_, f64>, labels: &[usize], n_classes: usize) -> Result<()> {
    if features.nrows() != labels.len() {
        return Err(Error::Model(format!(
            "{} feature rows but {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(Error::Model(format!("label {bad} outside 0..{n_classes}")));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::Model("non-finite feature value".into()));
    }
    let first = labels.first().copied();
    if labels.iter().all(|&y| Some(y) == first) {
        return Err(Error::Model("training data contains a single class".into()));
    }
    Ok(())
}

/// Hyperparameters of the built-in models, as they appear in configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    LogisticRegression {
        #[serde(default = "default_l2")]
        l2: f64,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    Knn {
        #[serde(default = "default_knn_k")]
        k: usize,
    },
}

fn default_l2() -> f64 {
    0.01
}
fn default_max_iter() -> usize {
    500
}
fn default_tol() -> f64 {
    1e-6
}
fn default_knn_k() -> usize {
    5
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::LogisticRegression {
            l2: default_l2(),
            max_iter: default_max_iter(),
            tol: default_tol(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ModelConfig::LogisticRegression { l2, max_iter, tol } => {
                if !(l2 >= 0.0 && l2.is_finite()) || max_iter == 0 || !(tol > 0.0) {
                    return Err(Error::Config(format!(
                        "logistic regression needs l2 >= 0, max_iter >= 1, tol > 0 (got {l2}, {max_iter}, {tol})"
                    )));
                }
            }
            ModelConfig::Knn { k } => {
                if k == 0 {
                    return Err(Error::Config("knn k must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Box<dyn Classifier> {
        match *self {
            ModelConfig::LogisticRegression { l2, max_iter, tol } => {
                Box::new(LogisticRegression::new(l2, max_iter, tol))
            }
            ModelConfig::Knn { k } => Box::new(KnnClassifier::new(k)),
        }
    }
}

/// Multinomial (softmax) logistic regression.
///
/// Minimizes mean cross-entropy plus `(l2 / 2) * ||W||^2` over the non-bias
/// weights, by full-batch gradient descent with an Armijo backtracking line
/// search from zero weights. No randomness is involved.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// `C x (d + 1)`, bias in the last column.
    weights: Option<Array2<f64>>,
    iterations: usize,
    grad_norm: f64,
}

const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-20;

impl LogisticRegression {
    pub fn new(l2: f64, max_iter: usize, tol: f64) -> Self {
        LogisticRegression {
            l2,
            max_iter,
            tol,
            weights: None,
            iterations: 0,
            grad_norm: f64::NAN,
        }
    }

    /// Untrained model whose weights are fixed; mostly useful in tests.
    pub fn with_weights(weights: Array2<f64>) -> Self {
        LogisticRegression {
            weights: Some(weights),
            ..Self::default()
        }
    }

    pub fn weights(&self) -> Option<&Array2<f64>> {
        self.weights.as_ref()
    }

    /// Gradient-descent iterations used by the last fit.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Gradient norm at the returned weights of the last fit.
    pub fn final_grad_norm(&self) -> f64 {
        self.grad_norm
    }
}

impl Default for LogisticRegression {
    fn default() -> Self {
        LogisticRegression::new(default_l2(), default_max_iter(), default_tol())
    }
}

fn logits(weights: &Array2<f64>, features: ArrayView2<'_, f64>) -> Array2<f64> {
    let d = features.ncols();
    let mut z = features.dot(&weights.slice(s![.., ..d]).t());
    z += &weights.column(d);
    z
}

/// Softmax in place, row by row; returns each row's log-sum-exp.
fn softmax_rows(z: &mut Array2<f64>) -> Array1<f64> {
    let mut lse = Array1::zeros(z.nrows());
    for (mut row, out) in z.rows_mut().into_iter().zip(lse.iter_mut()) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
        *out = max + sum.ln();
    }
    lse
}

fn penalty(weights: &Array2<f64>, l2: f64) -> f64 {
    let d = weights.ncols() - 1;
    0.5 * l2 * weights.slice(s![.., ..d]).iter().map(|w| w * w).sum::<f64>()
}

/// Regularized mean softmax cross-entropy at `weights`.
pub fn softmax_loss(weights: &Array2<f64>, features: ArrayView2<'_, f64>, labels: &[usize], l2: f64) -> f64 {
    let z = logits(weights, features);
    let n = labels.len() as f64;
    let ce: f64 = z
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &y)| {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() - row[y]
        })
        .sum();
    ce / n + penalty(weights, l2)
}

/// Regularized loss and its analytic gradient (same shape as `weights`).
pub fn softmax_loss_and_gradient(
    weights: &Array2<f64>,
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    l2: f64,
) -> (f64, Array2<f64>) {
    let n = labels.len() as f64;
    let d = features.ncols();
    let mut p = logits(weights, features);
    let z_true: f64 = labels.iter().enumerate().map(|(i, &y)| p[[i, y]]).sum();
    let lse = softmax_rows(&mut p);
    let loss = (lse.sum() - z_true) / n + penalty(weights, l2);

    for (i, &y) in labels.iter().enumerate() {
        p[[i, y]] -= 1.0;
    }
    let mut grad = Array2::zeros(weights.raw_dim());
    let mut gw = p.t().dot(&features) / n;
    gw.scaled_add(l2, &weights.slice(s![.., ..d]));
    grad.slice_mut(s![.., ..d]).assign(&gw);
    grad.column_mut(d).assign(&(p.sum_axis(Axis(0)) / n));
    (loss, grad)
}

impl Classifier for LogisticRegression {
    fn fit(&mut self, features: ArrayView2<'_, f64>, labels: &[usize], n_classes: usize) -> Result<()> {
        check_training_input(features, labels, n_classes)?;
        let mut w = Array2::zeros((n_classes, features.ncols() + 1));
        let (mut loss, mut grad) = softmax_loss_and_gradient(&w, features, labels, self.l2);
        let mut step = 1.0;
        // Upper bound on the curvature of the mean softmax loss.
        let lipschitz =
            0.5 * features.rows().into_iter().map(|r| 1.0 + r.dot(&r)).sum::<f64>() / features.nrows() as f64 + self.l2;
        let mut iterations = 0;
        let mut grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        while iterations < self.max_iter && grad_norm > self.tol {
            iterations += 1;
            step *= 2.0;
            let accepted = loop {
                let candidate = &w - &(step * &grad);
                let cand_loss = softmax_loss(&candidate, features, labels, self.l2);
                if cand_loss <= loss - ARMIJO_C * step * grad_norm * grad_norm {
                    break Some(candidate);
                }
                step *= 0.5;
                if step < MIN_STEP {
                    break None;
                }
            };
            // Loss decrease below rounding: fall back to the fixed 1/L step,
            // which still shrinks the gradient.
            w = match accepted {
                Some(candidate) => candidate,
                None => {
                    step = 1.0 / lipschitz;
                    &w - &(step * &grad)
                }
            };
            (loss, grad) = softmax_loss_and_gradient(&w, features, labels, self.l2);
            grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        }
        self.weights = Some(w);
        self.iterations = iterations;
        self.grad_norm = grad_norm;
        Ok(())
    }

    fn predict_proba(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let w = self
            .weights
            .as_ref()
            .ok_or_else(|| Error::Model("model is not trained".into()))?;
        if w.ncols() != features.ncols() + 1 {
            return Err(Error::Model(format!(
                "model expects {} features, got {}",
                w.ncols() - 1,
                features.ncols()
            )));
        }
        let mut p = logits(w, features);
        softmax_rows(&mut p);
        Ok(p)
    }

    fn untrained(&self) -> Box<dyn Classifier> {
        Box::new(LogisticRegression::new(self.l2, self.max_iter, self.tol))
    }
}

/// k-nearest-neighbour classifier with Laplace-smoothed vote probabilities
/// `(count + 1) / (k + C)`.
///
/// Neighbours are ranked by Euclidean distance, ties to the smaller training
/// index. If fewer than `k` training points are stored, all of them vote.
#[derive(Debug, Clone)]
pub struct KnnClassifier {
    pub k: usize,
    train: Option<(Array2<f64>, Vec<usize>, usize)>,
}

impl KnnClassifier {
    pub fn new(k: usize) -> Self {
        KnnClassifier { k, train: None }
    }

    /// Training indices of the neighbours of `query`, nearest first.
    pub fn neighbours(&self, query: &[f64]) -> Result<Vec<usize>> {
        let (x, _, _) = self
            .train
            .as_ref()
            .ok_or_else(|| Error::Model("model is not trained".into()))?;
        if query.len() != x.ncols() {
            return Err(Error::Model(format!(
                "model expects {} features, got {}",
                x.ncols(),
                query.len()
            )));
        }
        let mut dist: Vec<(f64, usize)> = x
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, row)| (row.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(dist.into_iter().take(self.k.min(x.nrows())).map(|(_, i)| i).collect())
    }
}

impl Classifier for KnnClassifier {
    fn fit(&mut self, features: ArrayView2<'_, f64>, labels: &[usize], n_classes: usize) -> Result<()> {
        check_training_input(features, labels, n_classes)?;
        if self.k == 0 {
            return Err(Error::Model("knn k must be positive".into()));
        }
        self.train = Some((features.to_owned(), labels.to_vec(), n_classes));
        Ok(())
    }

    fn predict_proba(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let (_, y, c) = self
            .train
            .as_ref()
            .ok_or_else(|| Error::Model("model is not trained".into()))?;
        let mut out = Array2::zeros((features.nrows(), *c));
        for (row, mut probs) in features.rows().into_iter().zip(out.rows_mut()) {
            let query: Vec<f64> = row.to_vec();
            let nb = self.neighbours(&query)?;
            let denom = (nb.len() + c) as f64;
            probs.fill(1.0);
            for i in nb {
                probs[y[i]] += 1.0;
            }
            probs /= denom;
        }
        Ok(out)
    }

    fn untrained(&self) -> Box<dyn Classifier> {
        Box::new(KnnClassifier::new(self.k))
    }
}
