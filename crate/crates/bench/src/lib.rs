//! Fixtures shared by the benchmarks.

use alkit::data::{Dataset, IndexCollection};
use alkit::models::{Classifier, LogisticRegression};
use ndarray::Array2;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

/// Two Gaussian classes, unit variance, means at -1 and +1 on every axis.
pub fn blobs(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let x = Array2::from_shape_fn((n, d), |(i, _)| 2.0 * labels[i] as f64 - 1.0 + noise.sample(&mut rng));
    Dataset::new(x, labels, None).unwrap()
}

/// The first `n_labeled` rows labeled, the rest as pool, and a model
/// trained on the labeled rows.
pub struct Scenario {
    pub dataset: Dataset,
    pub labeled: IndexCollection,
    pub labels: Vec<usize>,
    pub pool: IndexCollection,
    pub model: LogisticRegression,
}

impl Scenario {
    pub fn new(n: usize, d: usize, n_labeled: usize) -> Self {
        let dataset = blobs(n, d, 7);
        let labeled: IndexCollection = (0..n_labeled).collect();
        let labels: Vec<usize> = labeled.iter().map(|i| dataset.labels()[i]).collect();
        let pool: IndexCollection = (n_labeled..n).collect();
        let mut model = LogisticRegression::default();
        model
            .fit(dataset.rows(&labeled.to_vec()).view(), &labels, dataset.n_classes())
            .unwrap();
        Scenario {
            dataset,
            labeled,
            labels,
            pool,
            model,
        }
    }
}
