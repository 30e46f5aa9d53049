//! Randomized invariant checks shared by the proptest target and the
//! acceptance binary. Each check runs `cases` generated inputs from a fixed
//! seed and reports the first counterexample.

use alkit::analysis::{auc, interpolate, LearningCurve, XKind};
use alkit::data::{kfold_split, split_al, update_partition, Dataset, IndexCollection};
use alkit::models::{argmax, Classifier, KnnClassifier, LogisticRegression};
use alkit::numfmt::{g17, to_json_line};
use alkit::oracle::{ieth_select, OracleConfig, OracleHistory};
use alkit::state::QueryState;
use alkit::stopping::{StoppingCriterion, StoppingKind};
use alkit::strategy::{
    committee_scores, kl_to_consensus, uncertainty_scores, uncertainty_select, vote_entropy, DensityGraph,
    Disagreement, QueryStrategy, SelectionContext, StrategyConfig, StrategyName, UncertaintyMeasure,
};
use alkit::Error;
use ndarray::Array2;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

pub type Check = fn(u32) -> Result<(), String>;

/// Every invariant with a short name.
pub fn all() -> Vec<(&'static str, Check)> {
    vec![
        ("split partition identities", split_partition as Check),
        ("kfold partition identities", kfold_partition),
        ("update_partition conservation", partition_conservation),
        ("predict_proba row-stochastic", row_stochastic),
        ("predict equals argmax of predict_proba", predict_argmax),
        ("uncertainty class-permutation invariance", uncertainty_permutation),
        ("committee class-permutation invariance", committee_permutation),
        ("duplicate pool row keeps top-1", duplicate_keeps_top1),
        ("strategy output contract", strategy_contract),
        ("graph density range and discount", density_discount),
        ("interpolation knots and monotonicity", interpolation),
        ("stopping monotonicity", stopping_monotone),
        ("state line round-trip", state_roundtrip),
        ("g17 round-trip", g17_roundtrip),
        ("oracle noise idempotence", oracle_idempotent),
        ("ieth selection non-empty", ieth_nonempty),
        ("auc antisymmetry", auc_antisymmetry),
    ]
}

fn check<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        max_shrink_iters: 256,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn fail<T>(e: Error) -> Result<T, TestCaseError> {
    Err(TestCaseError::fail(e.to_string()))
}

/// Balanced labels `i % c` over `n` rows of bounded features.
fn dataset_strategy(n: std::ops::Range<usize>, d: usize, c: std::ops::Range<usize>) -> impl Strategy<Value = Dataset> {
    (n, c).prop_flat_map(move |(n, c)| {
        prop::collection::vec(-5.0..5.0f64, n * d).prop_map(move |v| {
            let x = Array2::from_shape_vec((n, d), v).unwrap();
            Dataset::new(x, (0..n).map(|i| i % c).collect(), None).unwrap()
        })
    })
}

fn prob_matrix(rows: std::ops::Range<usize>, c: std::ops::Range<usize>) -> impl Strategy<Value = Array2<f64>> {
    (rows, c).prop_flat_map(|(r, c)| {
        prop::collection::vec(0.001..1.0f64, r * c).prop_map(move |v| {
            let mut m = Array2::from_shape_vec((r, c), v).unwrap();
            for mut row in m.rows_mut() {
                let s = row.sum();
                row /= s;
            }
            m
        })
    })
}

fn permutation(c: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..c).collect::<Vec<_>>()).prop_shuffle()
}

fn permute_columns(m: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn(m.dim(), |(i, j)| m[[i, perm[j]]])
}

pub fn split_partition(cases: u32) -> Result<(), String> {
    let s = (
        dataset_strategy(20..80, 1, 2..5),
        0.1..0.5f64,
        0.01..0.9f64,
        1..4usize,
        any::<u64>(),
    );
    check(cases, s, |(ds, ratio, rate, count, seed)| {
        let splits = match split_al(&ds, ratio, rate, count, seed) {
            Ok(s) => s,
            Err(e @ Error::InvalidData(_)) => return Err(TestCaseError::reject(e.to_string())),
            Err(e) => return fail(e),
        };
        prop_assert_eq!(splits.len(), count);
        for sp in &splits {
            sp.validate(&ds).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert!(sp.test.is_disjoint(&sp.train));
            prop_assert_eq!(sp.test.len() + sp.train.len(), ds.len());
            prop_assert!(sp.initially_labeled.is_disjoint(&sp.initially_unlabeled));
            let mut union: Vec<usize> = sp
                .initially_labeled
                .iter()
                .chain(sp.initially_unlabeled.iter())
                .collect();
            union.sort_unstable();
            prop_assert_eq!(union, sp.train.to_vec());
            let classes: std::collections::BTreeSet<usize> =
                sp.initially_labeled.iter().map(|i| ds.labels()[i]).collect();
            prop_assert!(classes.len() >= 2);
        }
        prop_assert_eq!(split_al(&ds, ratio, rate, count, seed).unwrap(), splits);
        Ok(())
    })
}

pub fn kfold_partition(cases: u32) -> Result<(), String> {
    let s = (dataset_strategy(30..90, 1, 2..4), 2..6usize, 0.05..0.5f64, any::<u64>());
    check(cases, s, |(ds, k, rate, seed)| {
        let folds = match kfold_split(&ds, k, rate, seed) {
            Ok(f) => f,
            Err(e @ Error::InvalidData(_)) => return Err(TestCaseError::reject(e.to_string())),
            Err(e) => return fail(e),
        };
        prop_assert_eq!(folds.len(), k);
        let mut tests: Vec<usize> = folds.iter().flat_map(|f| f.test.iter()).collect();
        tests.sort_unstable();
        prop_assert_eq!(tests, (0..ds.len()).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(|f| f.test.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for f in &folds {
            f.validate(&ds).map_err(|e| TestCaseError::fail(e.to_string()))?;
        }
        Ok(())
    })
}

pub fn partition_conservation(cases: u32) -> Result<(), String> {
    let s = (1..60usize, any::<u64>()).prop_flat_map(|(n, seed)| {
        let perm = Just((0..n * 3).step_by(3).collect::<Vec<usize>>()).prop_shuffle();
        (
            perm,
            0..=n,
            prop::collection::vec(any::<prop::sample::Index>(), 0..8),
            Just(seed),
        )
    });
    check(cases, s, |(items, n_labeled, picks, _)| {
        let labeled = IndexCollection::from_vec(items[..n_labeled].to_vec()).unwrap();
        let unlabeled = IndexCollection::from_vec(items[n_labeled..].to_vec()).unwrap();
        if unlabeled.is_empty() {
            prop_assert!(update_partition(&labeled, &unlabeled, &[0]).is_err());
            return Ok(());
        }
        let mut queried: Vec<usize> = picks
            .iter()
            .map(|p| unlabeled.get(p.index(unlabeled.len())).unwrap())
            .collect();
        queried.dedup();
        let distinct: std::collections::HashSet<usize> = queried.iter().copied().collect();
        match update_partition(&labeled, &unlabeled, &queried) {
            Ok((l, u)) => {
                prop_assert_eq!(distinct.len(), queried.len());
                prop_assert_eq!(l.len(), labeled.len() + queried.len());
                prop_assert_eq!(l.len() + u.len(), items.len());
                prop_assert!(l.is_disjoint(&u));
                let mut all: Vec<usize> = l.iter().chain(u.iter()).collect();
                all.sort_unstable();
                let mut expected = items.clone();
                expected.sort_unstable();
                prop_assert_eq!(all, expected);
                prop_assert_eq!(&l.to_vec()[labeled.len()..], &queried[..]);
            }
            Err(_) => prop_assert!(distinct.len() < queried.len()),
        }
        Ok(())
    })
}

fn model_inputs() -> impl Strategy<Value = (Dataset, Array2<f64>)> {
    (
        dataset_strategy(4..20, 3, 2..5),
        prop::collection::vec(-20.0..20.0f64, 3 * 6),
    )
        .prop_map(|(ds, q)| (ds, Array2::from_shape_vec((6, 3), q).unwrap()))
}

pub fn row_stochastic(cases: u32) -> Result<(), String> {
    check(cases, (model_inputs(), 1..8usize), |((ds, query), k)| {
        let models: Vec<Box<dyn Classifier>> = vec![
            Box::new(LogisticRegression::new(0.01, 50, 1e-6)),
            Box::new(KnnClassifier::new(k)),
        ];
        for mut m in models {
            m.fit(ds.features(), ds.labels(), ds.n_classes()).or_else(fail)?;
            let p = m.predict_proba(query.view()).or_else(fail)?;
            prop_assert_eq!(p.ncols(), ds.n_classes());
            for row in p.rows() {
                prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
                prop_assert!((row.sum() - 1.0).abs() < 1e-12, "row sums to {}", row.sum());
            }
        }
        Ok(())
    })
}

pub fn predict_argmax(cases: u32) -> Result<(), String> {
    check(cases, (model_inputs(), 1..8usize), |((ds, query), k)| {
        let models: Vec<Box<dyn Classifier>> = vec![
            Box::new(LogisticRegression::new(0.1, 30, 1e-6)),
            Box::new(KnnClassifier::new(k)),
        ];
        for mut m in models {
            m.fit(ds.features(), ds.labels(), ds.n_classes()).or_else(fail)?;
            let p = m.predict_proba(query.view()).or_else(fail)?;
            let y = m.predict(query.view()).or_else(fail)?;
            let expected: Vec<usize> = p.rows().into_iter().map(|r| argmax(r.iter().copied())).collect();
            prop_assert_eq!(y, expected);
        }
        Ok(())
    })
}

pub fn uncertainty_permutation(cases: u32) -> Result<(), String> {
    let s = prob_matrix(1..30, 2..6).prop_flat_map(|m| {
        let c = m.ncols();
        (Just(m), permutation(c), 1..5usize)
    });
    check(cases, s, |(m, perm, batch)| {
        let permuted = permute_columns(&m, &perm);
        for measure in [
            UncertaintyMeasure::LeastConfident,
            UncertaintyMeasure::Margin,
            UncertaintyMeasure::Entropy,
        ] {
            prop_assert_eq!(
                uncertainty_scores(m.view(), measure),
                uncertainty_scores(permuted.view(), measure)
            );
            prop_assert_eq!(
                uncertainty_select(m.view(), measure, batch).or_else(fail)?,
                uncertainty_select(permuted.view(), measure, batch).or_else(fail)?
            );
        }
        Ok(())
    })
}

pub fn committee_permutation(cases: u32) -> Result<(), String> {
    let s = (2..6usize, 1..12usize, 2..5usize).prop_flat_map(|(members, rows, c)| {
        (
            prop::collection::vec(prob_matrix(rows..rows + 1, c..c + 1), members),
            permutation(c),
        )
    });
    check(cases, s, |(committee, perm)| {
        let permuted: Vec<Array2<f64>> = committee.iter().map(|m| permute_columns(m, &perm)).collect();
        for d in [Disagreement::VoteEntropy, Disagreement::KlDivergence] {
            prop_assert_eq!(committee_scores(&committee, d), committee_scores(&permuted, d));
        }
        let c = perm.len();
        let votes: Vec<usize> = committee.iter().map(|m| argmax(m.row(0).iter().copied())).collect();
        let relabeled: Vec<usize> = votes
            .iter()
            .map(|&v| perm.iter().position(|&p| p == v).unwrap())
            .collect();
        prop_assert_eq!(vote_entropy(&votes, c), vote_entropy(&relabeled, c));
        let members: Vec<Vec<f64>> = committee.iter().map(|m| m.row(0).to_vec()).collect();
        prop_assert!(kl_to_consensus(&members) >= 0.0);
        Ok(())
    })
}

pub fn duplicate_keeps_top1(cases: u32) -> Result<(), String> {
    let s = prob_matrix(2..25, 2..5).prop_flat_map(|m| {
        let r = m.nrows();
        (Just(m), any::<prop::sample::Index>(), 0..=r)
    });
    check(cases, s, |(m, dup, at)| {
        for measure in [
            UncertaintyMeasure::LeastConfident,
            UncertaintyMeasure::Margin,
            UncertaintyMeasure::Entropy,
        ] {
            let top = uncertainty_select(m.view(), measure, 1).or_else(fail)?[0];
            let mut src = dup.index(m.nrows());
            if src == top {
                src = (src + 1) % m.nrows();
            }
            // Insert a copy of row `src` at position `at`.
            let mut rows: Vec<Vec<f64>> = m.rows().into_iter().map(|r| r.to_vec()).collect();
            rows.insert(at, rows[src].clone());
            let c = m.ncols();
            let grown = Array2::from_shape_vec((rows.len(), c), rows.concat()).unwrap();
            let new_top = uncertainty_select(grown.view(), measure, 1).or_else(fail)?[0];
            let shifted = if top >= at { top + 1 } else { top };
            // A duplicate can only win a tie if it sits before the original.
            let scores = uncertainty_scores(m.view(), measure);
            if scores[src] == scores[top] && at <= top {
                prop_assert!(new_top == shifted || new_top == at);
            } else {
                prop_assert_eq!(new_top, shifted);
            }
        }
        Ok(())
    })
}

pub fn strategy_contract(cases: u32) -> Result<(), String> {
    let names = prop::sample::select(vec![
        StrategyName::Uncertainty,
        StrategyName::Random,
        StrategyName::Qbc,
        StrategyName::Eer,
        StrategyName::GraphDensity,
        StrategyName::CostPerformance,
    ]);
    let s = (
        dataset_strategy(8..20, 2, 2..4),
        names,
        1..5usize,
        0..6usize,
        any::<u64>(),
    );
    check(cases, s, |(ds, name, batch, cap, seed)| {
        let n = ds.len();
        let labeled = IndexCollection::from_vec((0..ds.n_classes().max(3)).collect()).unwrap();
        let labels: Vec<usize> = labeled.iter().map(|i| ds.labels()[i]).collect();
        let pool: IndexCollection = (labeled.len()..n).rev().collect();
        let mut model = KnnClassifier::new(3);
        model
            .fit(ds.rows(&labeled.to_vec()).view(), &labels, ds.n_classes())
            .or_else(fail)?;
        let costs: Vec<f64> = (0..ds.n_classes()).map(|c| 1.0 + c as f64).collect();
        let ctx = SelectionContext {
            dataset: &ds,
            labeled: &labeled,
            labeled_labels: &labels,
            pool: &pool,
            model: &model,
            label_costs: Some(&costs),
        };
        let config = StrategyConfig {
            name,
            committee_size: 3,
            subsample_cap: if cap == 0 { 0 } else { cap.max(batch) },
            knn_k: 3,
            ..StrategyConfig::default()
        };
        let picked = config.select(&ctx, batch, seed).or_else(fail)?;
        prop_assert_eq!(picked.len(), batch.min(pool.len()));
        prop_assert!(picked.iter().all(|i| pool.contains(i)));
        prop_assert_eq!(config.select(&ctx, batch, seed).or_else(fail)?, picked);
        Ok(())
    })
}

pub fn density_discount(cases: u32) -> Result<(), String> {
    let s = (2..25usize, 1..6usize, 0.05..2.0f64).prop_flat_map(|(m, k, gamma)| {
        (
            prop::collection::vec(-3.0..3.0f64, m * 2).prop_map(move |v| Array2::from_shape_vec((m, 2), v).unwrap()),
            Just(k),
            Just(gamma),
            0..m,
        )
    });
    check(cases, s, |(x, k, gamma, pick)| {
        let mut g = DensityGraph::build(x.view(), k, gamma).or_else(fail)?;
        prop_assert!(g.density.iter().all(|&d| d > 0.0 && d <= 1.0), "{:?}", g.density);
        let before = g.density.clone();
        g.discount(pick);
        prop_assert!(g.density.iter().zip(&before).all(|(a, b)| a <= b));
        Ok(())
    })
}

pub fn interpolation(cases: u32) -> Result<(), String> {
    let s = (
        prop::collection::vec((0.01..5.0f64, 0.0..1.0f64), 1..20),
        -10.0..10.0f64,
        prop::collection::vec(0.0..1.0f64, 1..30),
    );
    check(cases, s, |(steps, x0, probes)| {
        let mut x = x0;
        let mut y = 0.0;
        let points: Vec<(f64, f64)> = steps
            .iter()
            .map(|&(dx, dy)| {
                x += dx;
                y += dy;
                (x, y)
            })
            .collect();
        let curve = LearningCurve::new(XKind::Cost, points.clone()).or_else(fail)?;
        for &(px, py) in &points {
            prop_assert_eq!(interpolate(&curve, px), Some(py));
        }
        let (lo, hi) = (points[0].0, points.last().unwrap().0);
        let mut grid: Vec<f64> = probes.iter().map(|t| lo + t * (hi - lo)).collect();
        grid.sort_by(f64::total_cmp);
        let values: Vec<f64> = grid.iter().map(|&g| interpolate(&curve, g).unwrap()).collect();
        prop_assert!(values.windows(2).all(|w| w[0] <= w[1]), "{:?}", values);
        prop_assert_eq!(interpolate(&curve, hi + 1.0), None);
        Ok(())
    })
}

pub fn stopping_monotone(cases: u32) -> Result<(), String> {
    let kinds = prop::sample::select(vec![
        StoppingKind::NumOfQueries,
        StoppingKind::CostLimit,
        StoppingKind::PercentOfUnlabel,
    ]);
    let s = (
        kinds,
        0.0..60.0f64,
        prop::collection::vec((1..4usize, 0.0..5.0f64), 0..30),
        0..20usize,
    );
    check(cases, s, |(kind, threshold, rounds, extra)| {
        let threshold = if kind == StoppingKind::PercentOfUnlabel {
            threshold / 60.0
        } else {
            threshold
        };
        let criterion = StoppingCriterion::new(kind, threshold);
        let mut next = 0;
        let trace: Vec<QueryState> = rounds
            .iter()
            .enumerate()
            .map(|(i, &(b, c))| {
                let q: Vec<usize> = (next..next + b).collect();
                next += b;
                QueryState::new(i + 1, q, vec![0; b], c, 0)
            })
            .collect();
        let initial = next + extra;
        let verdicts: Vec<bool> = (0..=trace.len())
            .map(|i| criterion.should_stop(&trace[..i], initial, 0.0))
            .collect();
        prop_assert!(verdicts.windows(2).all(|w| !w[0] || w[1]), "{:?}", verdicts);
        Ok(())
    })
}

fn finite_f64() -> impl Strategy<Value = f64> {
    prop_oneof![
        any::<f64>().prop_filter("finite", |x| x.is_finite()),
        -1.0..1.0f64,
        Just(0.0),
        Just(f64::MIN_POSITIVE / 3.0),
    ]
}

pub fn state_roundtrip(cases: u32) -> Result<(), String> {
    let s = (
        1..1000usize,
        prop::collection::vec((0..10_000usize, 0..5usize), 1..6),
        finite_f64(),
        prop::collection::btree_map("[a-z_]{1,8}", finite_f64(), 0..4),
        any::<u64>(),
        0.0..100.0f64,
    );
    check(cases, s, |(round, qa, cost, perf, seed, wall)| {
        let (q, l): (Vec<usize>, Vec<usize>) = qa.into_iter().unzip();
        let mut state = QueryState::new(round, q, l, cost, seed);
        state.performance = perf;
        state.wall_time = wall;
        state.oracle_answers = vec![OracleConfig::new("o", 0.1).answer(&[0, 1, 0], 2, 1, 0).unwrap()];
        let line = to_json_line(&state).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(!line.contains('\n'));
        let back: QueryState = serde_json::from_str(&line).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(back, state);
        Ok(())
    })
}

pub fn g17_roundtrip(cases: u32) -> Result<(), String> {
    check(cases, finite_f64(), |x| {
        let text = g17(x);
        let parsed: f64 = text
            .parse()
            .map_err(|_| TestCaseError::fail(format!("unparsable {text}")))?;
        prop_assert_eq!(parsed.to_bits(), x.to_bits(), "{} -> {}", x, text);
        let json: f64 = serde_json::from_str(&text).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(json.to_bits(), x.to_bits());
        Ok(())
    })
}

pub fn oracle_idempotent(cases: u32) -> Result<(), String> {
    let s = (
        "[a-z]{1,6}",
        0.0..=1.0f64,
        any::<u64>(),
        2..6usize,
        0..1000usize,
        0..4usize,
        any::<prop::sample::Index>(),
    );
    check(cases, s, |(id, noise, seed, c, index, repeat, truth)| {
        let o = OracleConfig::new(id, noise).with_seed(seed);
        let t = truth.index(c);
        let a = o.noisy_label(t, c, index, repeat);
        prop_assert!(a < c);
        prop_assert_eq!(a, o.noisy_label(t, c, index, repeat));
        if noise == 0.0 {
            prop_assert_eq!(a, t);
        }
        if noise == 1.0 {
            prop_assert_ne!(a, t);
        }
        Ok(())
    })
}

pub fn ieth_nonempty(cases: u32) -> Result<(), String> {
    let s = (
        prop::collection::vec(prop::collection::vec(0..=1u8, 0..12), 1..6),
        0.05..=1.0f64,
        0.01..0.5f64,
    );
    check(cases, s, |(rewards, epsilon, alpha)| {
        let histories: Vec<OracleHistory> = rewards
            .iter()
            .enumerate()
            .map(|(i, r)| OracleHistory::with_rewards(format!("o{i}"), r.clone()))
            .collect();
        let chosen = ieth_select(&histories, epsilon, alpha).or_else(fail)?;
        prop_assert!(!chosen.is_empty());
        prop_assert!(chosen.iter().all(|id| histories.iter().any(|h| &h.id == id)));
        Ok(())
    })
}

pub fn auc_antisymmetry(cases: u32) -> Result<(), String> {
    let s = prop::collection::vec((any::<bool>(), -1e6..1e6f64), 2..80);
    check(cases, s, |pairs| {
        let truth: Vec<usize> = pairs.iter().map(|&(b, _)| b as usize).collect();
        let scores: Vec<f64> = pairs.iter().map(|&(_, s)| s).collect();
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        if !truth.contains(&0) || !truth.contains(&1) || sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(TestCaseError::reject("degenerate"));
        }
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let a = auc(&truth, &scores).or_else(fail)?;
        let b = auc(&truth, &neg).or_else(fail)?;
        prop_assert!((a + b - 1.0).abs() < 1e-12, "{} + {}", a, b);
        Ok(())
    })
}
