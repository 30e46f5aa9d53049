//! Independent reference implementations and the comparisons against them.
//! Every check returns a one-line summary on success.

use alkit::analysis::auc;
use alkit::data::{Dataset, IndexCollection};
use alkit::models::{softmax_loss_and_gradient, Classifier, LogisticRegression};
use alkit::oracle::{repeated_query, upper_interval, OracleConfig};
use alkit::strategy::{eer_risks, eer_select};
use ndarray::Array2;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// (#concordant + 0.5 #tied) / (#pos #neg), by looking at every pair.
pub fn brute_force_auc(truth: &[usize], scores: &[f64]) -> f64 {
    let mut twice = 0u64;
    let (mut pos, mut neg) = (0u64, 0u64);
    for (i, &ti) in truth.iter().enumerate() {
        if ti == 1 {
            pos += 1;
        } else {
            neg += 1;
        }
        if ti != 1 {
            continue;
        }
        for (j, &tj) in truth.iter().enumerate() {
            if tj == 0 {
                if scores[i] > scores[j] {
                    twice += 2;
                } else if scores[i] == scores[j] {
                    twice += 1;
                }
            }
        }
    }
    twice as f64 / 2.0 / (pos * neg) as f64
}

pub fn auc_matches_pair_counting(trials: usize) -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(0xa0c);
    let mut done = 0;
    while done < trials {
        let n = rng.random_range(2..120);
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        if !truth.contains(&0) || !truth.contains(&1) {
            continue;
        }
        // Coarse grid so ties are common.
        let scores: Vec<f64> = (0..n)
            .map(|_| f64::from(rng.random_range(0..12u32)) / 4.0 - 1.0)
            .collect();
        let got = auc(&truth, &scores).map_err(|e| e.to_string())?;
        let want = brute_force_auc(&truth, &scores);
        if got != want {
            return Err(format!("auc {got} vs pair count {want} on {truth:?} / {scores:?}"));
        }
        done += 1;
    }
    Ok(format!("{trials} score vectors, exact equality"))
}

fn naive_softmax_loss(w: &Array2<f64>, x: &Array2<f64>, y: &[usize], l2: f64) -> f64 {
    let (c, d1) = w.dim();
    let d = d1 - 1;
    let mut total = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let z: Vec<f64> = (0..c)
            .map(|k| (0..d).map(|j| w[[k, j]] * x[[i, j]]).sum::<f64>() + w[[k, d]])
            .collect();
        let norm: f64 = z.iter().map(|v| v.exp()).sum();
        total -= (z[yi].exp() / norm).ln();
    }
    let mut reg = 0.0;
    for k in 0..c {
        for j in 0..d {
            reg += w[[k, j]] * w[[k, j]];
        }
    }
    total / y.len() as f64 + 0.5 * l2 * reg
}

/// Analytic gradient against central differences (h = 1e-5) of an
/// independently written loss.
pub fn gradient_check(datasets: usize, points: usize) -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(0x96ad);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..datasets {
        let (n, d, c) = (rng.random_range(10..40), rng.random_range(1..6), rng.random_range(2..5));
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0));
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let l2 = rng.random_range(0.0..0.5);
        for _ in 0..points {
            let w = Array2::from_shape_fn((c, d + 1), |_| rng.random_range(-1.5..1.5));
            let (_, grad) = softmax_loss_and_gradient(&w, x.view(), &y, l2);
            let mut numeric = Array2::zeros(w.raw_dim());
            for idx in 0..w.len() {
                let (k, j) = (idx / (d + 1), idx % (d + 1));
                let mut plus = w.clone();
                plus[[k, j]] += h;
                let mut minus = w.clone();
                minus[[k, j]] -= h;
                numeric[[k, j]] =
                    (naive_softmax_loss(&plus, &x, &y, l2) - naive_softmax_loss(&minus, &x, &y, l2)) / (2.0 * h);
            }
            let diff = (&grad - &numeric).mapv(|v| v * v).sum().sqrt();
            let scale = grad
                .mapv(|v| v * v)
                .sum()
                .sqrt()
                .max(numeric.mapv(|v| v * v).sum().sqrt());
            let rel = if scale == 0.0 { diff } else { diff / scale };
            worst = worst.max(rel);
            if rel >= 1e-5 {
                return Err(format!("relative gradient error {rel:.3e} (n={n}, d={d}, C={c})"));
            }
        }
    }
    Ok(format!(
        "{datasets} datasets x {points} points, worst relative error {worst:.2e}"
    ))
}

/// P(majority of r answers correct) for symmetric binary noise p, r odd.
pub fn binomial_majority(p: f64, r: u32) -> f64 {
    let choose = |n: u32, k: u32| (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1));
    (0..=r / 2)
        .map(|k| choose(r, k) * p.powi(k as i32) * (1.0 - p).powi((r - k) as i32))
        .sum()
}

pub fn repeated_majority_accuracy(trials: usize) -> Result<String, String> {
    let want = binomial_majority(0.3, 5);
    if (want - 0.83692).abs() > 1e-12 {
        return Err(format!("binomial reference {want} is not 0.83692"));
    }
    let truth: Vec<usize> = (0..trials).map(|i| i % 2).collect();
    let oracle = OracleConfig::new("noisy", 0.3).with_seed(2024);
    let mut correct = 0;
    for i in 0..trials {
        let agg = repeated_query(std::slice::from_ref(&oracle), 5, &truth, 2, i).map_err(|e| e.to_string())?;
        correct += usize::from(agg.label == truth[i]);
    }
    let acc = correct as f64 / trials as f64;
    if (acc - want).abs() <= 0.01 {
        Ok(format!("accuracy {acc:.4} vs {want:.5} over {trials} trials"))
    } else {
        Err(format!("accuracy {acc:.4} vs {want:.5} over {trials} trials"))
    }
}

pub fn noise_rate(trials: usize) -> Result<String, String> {
    let truth = vec![0usize; trials];
    let oracle = OracleConfig::new("flip", 0.3).with_seed(99);
    let flips = (0..trials)
        .filter(|&i| oracle.noisy_label(truth[i], 3, i, 0) != 0)
        .count();
    let rate = flips as f64 / trials as f64;
    if (rate - 0.3).abs() <= 0.02 {
        Ok(format!("flip rate {rate:.4}"))
    } else {
        Err(format!("flip rate {rate:.4}, expected 0.3 +- 0.02"))
    }
}

/// UI = mean + t(1 - alpha/2, n - 1) s / sqrt(n), written out longhand.
pub fn upper_interval_reference(trials: usize) -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(0x1e7);
    for _ in 0..trials {
        let n = rng.random_range(2..40);
        let rewards: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.7))).collect();
        let alpha = rng.random_range(0.01..0.3);
        let ones = rewards.iter().filter(|&&r| r == 1).count() as f64;
        let nf = n as f64;
        let mean = ones / nf;
        let var = (ones * (1.0 - mean).powi(2) + (nf - ones) * mean * mean) / (nf - 1.0);
        let want = if var == 0.0 {
            mean
        } else {
            let t = StudentsT::new(0.0, 1.0, nf - 1.0)
                .unwrap()
                .inverse_cdf(1.0 - alpha / 2.0);
            mean + t * (var / nf).sqrt()
        };
        let got = upper_interval(&rewards, alpha);
        if (got - want).abs() > 1e-12 {
            return Err(format!("UI {got} vs {want} for {rewards:?}"));
        }
    }
    Ok(format!("{trials} reward histories"))
}

/// Expected error reduction written as plain loops: for each candidate,
/// retrain with each possible label and add up the remaining pool's
/// expected 0/1 loss, weighted by the current model's belief in that label.
pub fn naive_eer_risks(
    dataset: &Dataset,
    labeled: &[usize],
    labels: &[usize],
    pool: &[usize],
    model: &dyn Classifier,
) -> Vec<f64> {
    let c = dataset.n_classes();
    let belief = model.predict_proba(dataset.rows(pool).view()).unwrap();
    let mut risks = Vec::new();
    for (pos, &cand) in pool.iter().enumerate() {
        let mut train = labeled.to_vec();
        train.push(cand);
        let rest: Vec<usize> = pool.iter().copied().filter(|&u| u != cand).collect();
        let mut risk = 0.0;
        for y in 0..c {
            let mut ys = labels.to_vec();
            ys.push(y);
            let mut m = model.untrained();
            m.fit(dataset.rows(&train).view(), &ys, c).unwrap();
            let p = m.predict_proba(dataset.rows(&rest).view()).unwrap();
            let mut loss = 0.0;
            for i in 0..rest.len() {
                let mut best = f64::NEG_INFINITY;
                for k in 0..c {
                    if p[[i, k]] > best {
                        best = p[[i, k]];
                    }
                }
                loss += 1.0 - best;
            }
            risk += belief[[pos, y]] * loss;
        }
        risks.push(risk);
    }
    risks
}

/// Positions of the `b` smallest risks, ties to the earlier position.
fn naive_smallest(risks: &[f64], b: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..risks.len()).collect();
    order.sort_by(|&i, &j| risks[i].partial_cmp(&risks[j]).unwrap().then(i.cmp(&j)));
    order.truncate(b);
    order
}

pub fn eer_matches_naive(pools: usize) -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(0xee7);
    let mut near_ties = 0;
    for trial in 0..pools {
        let n_lab = rng.random_range(2..=8);
        let n_pool = rng.random_range(1..=12);
        let n = n_lab + n_pool + rng.random_range(0..4);
        let d = rng.random_range(1..4);
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0));
        let mut y: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        y[0] = 0;
        y[1] = 1;
        let ds = Dataset::new(x, y, None).map_err(|e| e.to_string())?;
        let mut rest: Vec<usize> = (2..n).collect();
        rest.shuffle(&mut rng);
        let mut labeled = vec![0, 1];
        labeled.extend_from_slice(&rest[..n_lab - 2]);
        let pool = rest[n_lab - 2..n_lab - 2 + n_pool].to_vec();
        let labels: Vec<usize> = labeled.iter().map(|&i| ds.labels()[i]).collect();
        let mut model = LogisticRegression::new(rng.random_range(0.01..1.0), 40, 1e-6);
        model
            .fit(ds.rows(&labeled).view(), &labels, 2)
            .map_err(|e| e.to_string())?;
        let batch = rng.random_range(1..=3);

        let labeled_c = IndexCollection::from_vec(labeled.clone()).unwrap();
        let pool_c = IndexCollection::from_vec(pool.clone()).unwrap();
        let got = eer_select(&ds, &labeled_c, &labels, &pool_c, &model, batch).map_err(|e| e.to_string())?;
        let risks = naive_eer_risks(&ds, &labeled, &labels, &pool, &model);
        let want: Vec<usize> = naive_smallest(&risks, batch).into_iter().map(|p| pool[p]).collect();
        if got.to_vec() != want {
            // Accept only a reordering among risks equal to rounding.
            let lib = eer_risks(&ds, &labeled_c, &labels, &pool_c, &model).map_err(|e| e.to_string())?;
            let same = lib
                .iter()
                .zip(&risks)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            let kth = risks[naive_smallest(&risks, batch)[want.len() - 1]];
            let tied = got.iter().all(|i| {
                let r = risks[pool.iter().position(|&p| p == i).unwrap()];
                r <= kth + 1e-12 * (1.0 + kth.abs())
            });
            if !(same && tied) {
                return Err(format!(
                    "trial {trial}: eer picked {:?}, naive {want:?}, risks {risks:?}",
                    got.to_vec()
                ));
            }
            near_ties += 1;
        }
    }
    Ok(format!("{pools} pools, {near_ties} resolved as rounding-level ties"))
}
