//! The active-learning main loop and its experiment harness.
//!
//! Each fold runs independently: train on the labeled set, evaluate on the
//! test set, pick a batch from the (optionally subsampled) pool, ask the
//! oracles, move the batch to the labeled set, record the round. Folds run
//! on a worker pool; since every random choice is seeded from
//! `(seed, fold, round)` the outputs do not depend on the number of workers
//! or on interruptions.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    aggregate_aligned, export_results, interpolate_cost_curves, AggregateCurve, LearningCurve, Metric, XKind,
};
use crate::data::{kfold_split, load_dataset, split_al, ColumnSelector, Dataset, IndexCollection, LoadOptions, Split};
use crate::error::{Error, Result};
use crate::models::{Classifier, ModelConfig};
use crate::oracle::{ieth_select, ieth_update, repeated_query, OracleAnswer, OracleConfig, OracleHistory};
use crate::seed;
use crate::state::{
    read_checkpoint, Baseline, Checkpoint, Partition, Performance, QueryState, StateHeader, StateWriter,
};
use crate::stopping::StoppingCriterion;
use crate::strategy::{QueryStrategy, SelectionContext, StrategyConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub label_column: ColumnSelector,
    #[serde(default)]
    pub has_header: bool,
    #[serde(default)]
    pub name_column: Option<ColumnSelector>,
}

impl DatasetConfig {
    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            label_column: self.label_column.clone(),
            has_header: self.has_header,
            name_column: self.name_column.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitConfig {
    Holdout {
        #[serde(default = "default_test_ratio")]
        test_ratio: f64,
        #[serde(default = "default_initial_label_rate")]
        initial_label_rate: f64,
        #[serde(default = "default_split_count")]
        split_count: usize,
    },
    Kfold {
        #[serde(default = "default_split_count")]
        k: usize,
        #[serde(default = "default_initial_label_rate")]
        initial_label_rate: f64,
    },
    /// Folds given by instance names in a JSON file (see [`NamedSplitFile`]).
    Names { file: PathBuf },
}

fn default_test_ratio() -> f64 {
    0.3
}
fn default_initial_label_rate() -> f64 {
    0.1
}
fn default_split_count() -> usize {
    5
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig::Holdout {
            test_ratio: default_test_ratio(),
            initial_label_rate: default_initial_label_rate(),
            split_count: default_split_count(),
        }
    }
}

/// `{"folds": [{"test": [...], "initially_labeled": [...], "initially_unlabeled": [...]}]}`
/// with instance names in place of indices. The training part of each fold
/// is the union of its labeled and unlabeled lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedSplitFile {
    pub folds: Vec<NamedFold>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedFold {
    pub test: Vec<String>,
    pub initially_labeled: Vec<String>,
    pub initially_unlabeled: Vec<String>,
}

impl NamedSplitFile {
    pub fn resolve(&self, dataset: &Dataset) -> Result<Vec<Split>> {
        if self.folds.is_empty() {
            return Err(Error::Config("split file lists no folds".into()));
        }
        self.folds
            .iter()
            .enumerate()
            .map(|(k, f)| {
                let collect = |names: &[String]| -> Result<IndexCollection> {
                    IndexCollection::from_vec(dataset.indices_of_names(names)?)
                        .map_err(|_| Error::InvalidData(format!("fold {k}: a name is listed twice")))
                };
                let labeled = collect(&f.initially_labeled)?;
                let unlabeled = collect(&f.initially_unlabeled)?;
                let mut train: Vec<usize> = labeled.iter().chain(unlabeled.iter()).collect();
                train.sort_unstable();
                let split = Split {
                    test: collect(&f.test)?,
                    train: IndexCollection::from_vec(train)
                        .map_err(|_| Error::InvalidData(format!("fold {k}: labeled and unlabeled overlap")))?,
                    initially_labeled: labeled,
                    initially_unlabeled: unlabeled,
                };
                split
                    .validate(dataset)
                    .map_err(|e| Error::InvalidData(format!("fold {k}: {e}")))?;
                Ok(split)
            })
            .collect()
    }
}

/// How answers are obtained for each queried instance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleProtocol {
    /// The one configured oracle answers.
    #[default]
    Single,
    /// Oracles chosen by IEthresh answer; the majority label is used.
    Ieth {
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    /// Every oracle answers `r` times; the majority label is used.
    Repeated {
        #[serde(default = "default_repeats")]
        r: usize,
    },
}

fn default_epsilon() -> f64 {
    0.8
}
fn default_alpha() -> f64 {
    0.05
}
fn default_repeats() -> usize {
    3
}

fn default_name() -> String {
    "experiment".into()
}
fn default_oracles() -> Vec<OracleConfig> {
    vec![OracleConfig::new("oracle", 0.0)]
}
fn default_metrics() -> Vec<Metric> {
    vec![Metric::Accuracy]
}
fn default_grid_size() -> usize {
    100
}
fn default_one() -> usize {
    1
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

/// An experiment configuration file. Everything except `dataset.path` has a
/// default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub strategy: StrategyConfig,
    #[serde(default = "default_oracles")]
    pub oracles: Vec<OracleConfig>,
    #[serde(default)]
    pub oracle_protocol: OracleProtocol,
    #[serde(default)]
    pub stopping: StoppingCriterion,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    /// x axis of the aggregated learning curves.
    #[serde(default)]
    pub curve_axis: XKind,
    /// Grid points used when `curve_axis` is `cost`.
    #[serde(default = "default_grid_size")]
    pub cost_grid_size: usize,
    #[serde(default = "default_one")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_one")]
    pub workers: usize,
}

impl ExperimentConfig {
    /// A configuration with every default and the given dataset.
    pub fn with_dataset(path: impl Into<PathBuf>) -> Self {
        serde_json::from_value(serde_json::json!({ "dataset": { "path": path.into() } })).expect("defaults deserialize")
    }

    /// Parses a JSON config. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = std::path::absolute(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.dataset.path);
        rebase(&mut cfg.output_dir);
        if let SplitConfig::Names { file } = &mut cfg.split {
            rebase(file);
        }
        Ok(cfg)
    }

    /// Checks everything that does not need the dataset.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Config(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return cfg_err(format!("experiment name {:?} is not a valid file stem", self.name));
        }
        if self.batch_size == 0 {
            return cfg_err("batch_size must be positive".into());
        }
        if self.workers == 0 {
            return cfg_err("workers must be positive".into());
        }
        if self.metrics.is_empty() {
            return cfg_err("at least one metric is required".into());
        }
        if self.cost_grid_size < 2 {
            return cfg_err("cost_grid_size must be at least 2".into());
        }
        match self.split {
            SplitConfig::Holdout {
                test_ratio,
                initial_label_rate,
                split_count,
            } => {
                if !(test_ratio > 0.0 && test_ratio < 1.0) || !(initial_label_rate > 0.0 && initial_label_rate < 1.0) {
                    return cfg_err("test_ratio and initial_label_rate must lie in (0, 1)".into());
                }
                if split_count == 0 {
                    return cfg_err("split_count must be positive".into());
                }
            }
            SplitConfig::Kfold { k, initial_label_rate } => {
                if k < 2 || !(initial_label_rate > 0.0 && initial_label_rate < 1.0) {
                    return cfg_err("k-fold needs k >= 2 and initial_label_rate in (0, 1)".into());
                }
            }
            SplitConfig::Names { .. } => {}
        }
        self.model.validate()?;
        self.strategy.validate(self.batch_size)?;
        self.stopping.validate()?;
        if self.oracles.is_empty() {
            return cfg_err("at least one oracle is required".into());
        }
        let mut ids = HashSet::new();
        if let Some(dup) = self.oracles.iter().find(|o| !ids.insert(o.id.as_str())) {
            return cfg_err(format!("duplicate oracle id {:?}", dup.id));
        }
        match self.oracle_protocol {
            OracleProtocol::Single if self.oracles.len() != 1 => {
                cfg_err(format!("single-oracle protocol with {} oracles", self.oracles.len()))
            }
            OracleProtocol::Ieth { epsilon, alpha }
                if !(epsilon > 0.0 && epsilon <= 1.0 && alpha > 0.0 && alpha < 1.0) =>
            {
                cfg_err("ieth needs epsilon in (0, 1] and alpha in (0, 1)".into())
            }
            OracleProtocol::Repeated { r: 0 } => cfg_err("repeated protocol needs r >= 1".into()),
            _ => Ok(()),
        }
    }

    /// Checks that need the loaded dataset.
    pub fn validate_for(&self, dataset: &Dataset) -> Result<()> {
        let c = dataset.n_classes();
        if c != 2 {
            if let Some(m) = self.metrics.iter().find(|m| m.is_binary_only()) {
                return Err(Error::Config(format!(
                    "metric {m} needs a binary task, dataset has {c} classes"
                )));
            }
        }
        for o in &self.oracles {
            o.validate(c)?;
        }
        Ok(())
    }

    /// SHA-256 of the configuration, ignoring settings that cannot change
    /// results (`workers`, `output_dir`).
    pub fn digest(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("workers");
            map.remove("output_dir");
        }
        let hash = Sha256::digest(canonical_json(&value).as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn state_path(&self, fold: usize) -> PathBuf {
        self.output_dir.join(format!("{}_fold{fold}.jsonl", self.name))
    }

    pub fn aggregate_stem(&self, metric: Metric) -> String {
        format!("{}_{}", self.name, metric.name())
    }
}

/// JSON with object keys sorted at every level.
fn canonical_json(v: &serde_json::Value) -> String {
    use serde_json::Value;
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical_json(&map[k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => format!("[{}]", items.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

/// Progress notifications from a running experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progress {
    /// Round `round` of `fold` is durably written.
    RoundWritten {
        fold: usize,
        round: usize,
    },
    FoldFinished {
        fold: usize,
    },
}

#[derive(Clone, Copy, Default)]
pub struct RunOptions<'a> {
    /// Continue from existing state files instead of starting over.
    pub resume: bool,
    pub observer: Option<&'a (dyn Fn(Progress) + Sync)>,
    /// A strategy to use instead of the configured one.
    pub strategy: Option<&'a dyn QueryStrategy>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub rounds: usize,
    pub queried: usize,
    pub total_cost: f64,
    pub final_performance: Performance,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub name: String,
    pub digest: String,
    pub folds: Vec<FoldSummary>,
    pub traces: Vec<Checkpoint>,
    pub aggregates: Vec<(Metric, AggregateCurve)>,
    pub files: Vec<PathBuf>,
    pub elapsed: Duration,
}

/// A configuration bound to its loaded dataset and splits.
#[derive(Debug)]
pub struct Experiment {
    config: ExperimentConfig,
    dataset: Dataset,
    splits: Vec<Split>,
    digest: String,
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let dataset = load_dataset(&config.dataset.path, &config.dataset.load_options())?;
        Self::with_dataset(config, dataset)
    }

    /// Uses an in-memory dataset; `config.dataset.path` is only recorded.
    pub fn with_dataset(config: ExperimentConfig, dataset: Dataset) -> Result<Self> {
        config.validate()?;
        config.validate_for(&dataset)?;
        let splits = make_splits(&config, &dataset)?;
        let digest = config.digest();
        Ok(Experiment {
            config,
            dataset,
            splits,
            digest,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    fn train(&self, labeled: &IndexCollection, labels: &[usize]) -> Result<Box<dyn Classifier>> {
        let mut model = self.config.model.build();
        model.fit(
            self.dataset.rows(&labeled.to_vec()).view(),
            labels,
            self.dataset.n_classes(),
        )?;
        Ok(model)
    }

    fn evaluate(&self, model: &dyn Classifier, split: &Split) -> Result<Performance> {
        let test = split.test.to_vec();
        let probs = model.predict_proba(self.dataset.rows(&test).view())?;
        let truth: Vec<usize> = test.iter().map(|&i| self.dataset.labels()[i]).collect();
        self.config
            .metrics
            .iter()
            .map(|m| Ok((m.name().to_string(), m.evaluate(&truth, probs.view())?)))
            .collect()
    }

    /// Expected per-class price of one aggregated label under the protocol.
    fn protocol_label_costs(&self) -> Vec<f64> {
        let c = self.dataset.n_classes();
        let oracles = &self.config.oracles;
        let sum = |scale: f64| -> Vec<f64> {
            (0..c)
                .map(|y| scale * oracles.iter().map(|o| o.cost_of(y)).sum::<f64>())
                .collect()
        };
        match self.config.oracle_protocol {
            OracleProtocol::Single => oracles[0].label_costs(c),
            OracleProtocol::Repeated { r } => sum(r as f64),
            OracleProtocol::Ieth { .. } => sum(1.0 / oracles.len() as f64),
        }
    }

    /// Label, cost and raw answers for one queried instance.
    fn ask(&self, index: usize, histories: &mut [OracleHistory]) -> Result<(usize, f64, Vec<OracleAnswer>)> {
        let truth = self.dataset.labels();
        let c = self.dataset.n_classes();
        let oracles = &self.config.oracles;
        match self.config.oracle_protocol {
            OracleProtocol::Single => {
                let a = oracles[0].answer(truth, c, index, 0)?;
                Ok((a.label, a.cost, vec![a]))
            }
            OracleProtocol::Repeated { r } => {
                let agg = repeated_query(oracles, r, truth, c, index)?;
                Ok((agg.label, agg.cost, agg.answers))
            }
            OracleProtocol::Ieth { epsilon, alpha } => {
                let chosen = ieth_select(histories, epsilon, alpha)?;
                let answers = oracles
                    .iter()
                    .filter(|o| chosen.contains(&o.id))
                    .map(|o| o.answer(truth, c, index, 0))
                    .collect::<Result<Vec<_>>>()?;
                let label = ieth_update(histories, &answers).expect("IEthresh selects at least one oracle");
                Ok((label, answers.iter().map(|a| a.cost).sum(), answers))
            }
        }
    }

    /// Opens the fold's state file: resumed when asked and present,
    /// otherwise started from the split with a fresh round-0 evaluation.
    fn open_fold(&self, fold: usize, resume: bool) -> Result<(StateWriter, Partition)> {
        let split = &self.splits[fold];
        let path = self.config.state_path(fold);
        if resume && path.exists() {
            if let Some(rec) = read_checkpoint(&path)? {
                let header = &rec.checkpoint.header;
                if header.config_digest != self.digest {
                    return Err(Error::DigestMismatch {
                        path,
                        expected: self.digest.clone(),
                        found: header.config_digest.clone(),
                    });
                }
                if header.fold != fold || &header.split != split {
                    return Err(Error::State {
                        path,
                        message: "fold or split differs from the configuration".into(),
                    });
                }
                if rec.discarded_tail {
                    log::info!("fold {fold}: dropped an incomplete round from {}", path.display());
                }
                let partition = rec.checkpoint.replay(self.dataset.labels())?;
                return Ok((StateWriter::resume(path, rec)?, partition));
            }
        }
        let started = Instant::now();
        let labeled = split.initially_labeled.clone();
        let labels: Vec<usize> = labeled.iter().map(|i| self.dataset.labels()[i]).collect();
        let model = self.train(&labeled, &labels)?;
        let baseline = Baseline {
            performance: self.evaluate(model.as_ref(), split)?,
            wall_time: started.elapsed().as_secs_f64(),
        };
        let header = StateHeader::new(&self.config.name, &self.digest, fold, split.clone(), baseline);
        let writer = StateWriter::create(path, header)?;
        Ok((
            writer,
            Partition {
                labeled,
                labeled_labels: labels,
                unlabeled: split.initially_unlabeled.clone(),
            },
        ))
    }

    /// Runs (or continues) one fold until its stopping criterion holds or
    /// the pool is exhausted.
    pub fn run_fold(&self, fold: usize, options: &RunOptions<'_>) -> Result<Checkpoint> {
        if fold >= self.splits.len() {
            return Err(Error::param(format!("fold {fold} does not exist")));
        }
        let (mut writer, mut part) = self.open_fold(fold, options.resume).map_err(|e| e.in_fold(fold, 0))?;
        let cfg = &self.config;
        let strategy: &dyn QueryStrategy = options.strategy.unwrap_or(&cfg.strategy);
        let split = &self.splits[fold];
        let oracle_ids: Vec<String> = cfg.oracles.iter().map(|o| o.id.clone()).collect();
        let mut histories = writer.checkpoint().replay_histories(&oracle_ids);
        let label_costs = self.protocol_label_costs();
        let initial_pool = split.initially_unlabeled.len();
        let mut elapsed_before = writer.checkpoint().header.baseline.wall_time
            + writer.checkpoint().trace().iter().map(|s| s.wall_time).sum::<f64>();
        let mut model = self
            .train(&part.labeled, &part.labeled_labels)
            .map_err(|e| e.in_fold(fold, 0))?;

        loop {
            let cp = writer.checkpoint();
            if part.unlabeled.is_empty() || cfg.stopping.should_stop(cp.trace(), initial_pool, elapsed_before) {
                break;
            }
            let round = cp.next_round();
            let started = Instant::now();
            let round_seed = seed::round_seed(cfg.seed, fold, round);
            let state = self
                .query_round(
                    round,
                    round_seed,
                    &mut part,
                    &mut model,
                    &mut histories,
                    &label_costs,
                    strategy,
                    split,
                )
                .map_err(|e| e.in_fold(fold, round))?;
            let mut state = state;
            state.wall_time = started.elapsed().as_secs_f64();
            elapsed_before += state.wall_time;
            writer.append(state).map_err(|e| e.in_fold(fold, round))?;
            if let Some(obs) = options.observer {
                obs(Progress::RoundWritten { fold, round });
            }
        }
        if let Some(obs) = options.observer {
            obs(Progress::FoldFinished { fold });
        }
        Ok(writer.into_checkpoint())
    }

    #[allow(clippy::too_many_arguments)]
    fn query_round(
        &self,
        round: usize,
        round_seed: u64,
        part: &mut Partition,
        model: &mut Box<dyn Classifier>,
        histories: &mut [OracleHistory],
        label_costs: &[f64],
        strategy: &dyn QueryStrategy,
        split: &Split,
    ) -> Result<QueryState> {
        let ctx = SelectionContext {
            dataset: &self.dataset,
            labeled: &part.labeled,
            labeled_labels: &part.labeled_labels,
            pool: &part.unlabeled,
            model: model.as_ref(),
            label_costs: Some(label_costs),
        };
        let picked = strategy.select(&ctx, self.config.batch_size, round_seed)?;
        let expected = self.config.batch_size.min(part.unlabeled.len());
        if picked.len() != expected || picked.iter().any(|i| !part.unlabeled.contains(i)) {
            return Err(Error::param(format!(
                "strategy returned {} instances ({expected} expected) or instances outside the pool",
                picked.len()
            )));
        }
        let queried = picked.to_vec();
        let mut labels = Vec::with_capacity(queried.len());
        let mut answers = Vec::new();
        let mut cost = 0.0;
        for &i in &queried {
            let (label, c, mut a) = self.ask(i, histories)?;
            labels.push(label);
            cost += c;
            answers.append(&mut a);
        }
        let (labeled, unlabeled) = crate::data::update_partition(&part.labeled, &part.unlabeled, &queried)?;
        part.labeled = labeled;
        part.unlabeled = unlabeled;
        part.labeled_labels.extend_from_slice(&labels);
        *model = self.train(&part.labeled, &part.labeled_labels)?;

        let mut state = QueryState::new(round, queried, labels, cost, round_seed);
        state.performance = self.evaluate(model.as_ref(), split)?;
        state.oracle_answers = answers;
        Ok(state)
    }

    /// Runs every fold on `config.workers` threads, then aggregates and
    /// exports the learning curves.
    pub fn run(&self, options: &RunOptions<'_>) -> Result<ExperimentReport> {
        let started = Instant::now();
        let out = &self.config.output_dir;
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let folds: Vec<usize> = (0..self.splits.len()).collect();
        let results: Vec<Result<Checkpoint>> = if self.config.workers == 1 {
            folds.iter().map(|&f| self.run_fold(f, options)).collect()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.config.workers)
                .build()
                .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
            pool.install(|| folds.par_iter().map(|&f| self.run_fold(f, options)).collect())
        };
        let traces = results.into_iter().collect::<Result<Vec<_>>>()?;
        let mut report = build_report(&self.config, &traces)?;
        report.digest = self.digest.clone();
        report.elapsed = started.elapsed();
        Ok(report)
    }
}

fn make_splits(config: &ExperimentConfig, dataset: &Dataset) -> Result<Vec<Split>> {
    match &config.split {
        SplitConfig::Holdout {
            test_ratio,
            initial_label_rate,
            split_count,
        } => split_al(dataset, *test_ratio, *initial_label_rate, *split_count, config.seed),
        SplitConfig::Kfold { k, initial_label_rate } => kfold_split(dataset, *k, *initial_label_rate, config.seed),
        SplitConfig::Names { file } => {
            let text = fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
            let named: NamedSplitFile =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", file.display())))?;
            named.resolve(dataset)
        }
    }
}

/// Learning curve of `metric` over one fold's trace, starting with the
/// round-0 baseline.
pub fn fold_curve(checkpoint: &Checkpoint, metric: &str, axis: XKind) -> Result<LearningCurve> {
    let value = |p: &Performance| {
        p.get(metric)
            .copied()
            .ok_or_else(|| Error::InvalidData(format!("metric {metric} not recorded")))
    };
    let mut points = vec![(0.0, value(&checkpoint.header.baseline.performance)?)];
    let mut cost = 0.0;
    for s in checkpoint.trace() {
        cost += s.round_cost;
        let x = match axis {
            XKind::Round => s.round as f64,
            XKind::Cost => cost,
        };
        points.push((x, value(&s.performance)?));
    }
    LearningCurve::new(axis, points)
}

/// Aggregates one metric over folds. Round curves are cut to the shortest
/// fold; cost curves are interpolated on their common range.
pub fn aggregate_metric(traces: &[Checkpoint], metric: &str, axis: XKind, grid_size: usize) -> Result<AggregateCurve> {
    let curves = traces
        .iter()
        .map(|cp| fold_curve(cp, metric, axis))
        .collect::<Result<Vec<_>>>()?;
    match axis {
        XKind::Round => {
            let shortest = curves.iter().map(LearningCurve::len).min().unwrap_or(0);
            let cut = curves
                .into_iter()
                .map(|c| LearningCurve::new(XKind::Round, c.points()[..shortest].to_vec()))
                .collect::<Result<Vec<_>>>()?;
            aggregate_aligned(&cut)
        }
        XKind::Cost => interpolate_cost_curves(&curves, grid_size),
    }
}

fn build_report(config: &ExperimentConfig, traces: &[Checkpoint]) -> Result<ExperimentReport> {
    let mut aggregates = Vec::new();
    let mut files = (0..traces.len()).map(|f| config.state_path(f)).collect::<Vec<_>>();
    for &metric in &config.metrics {
        let agg = aggregate_metric(traces, metric.name(), config.curve_axis, config.cost_grid_size)?;
        let exported = export_results(&agg, &config.output_dir, &config.aggregate_stem(metric), metric.name())?;
        files.push(exported.csv);
        files.push(exported.svg);
        aggregates.push((metric, agg));
    }
    let folds = traces
        .iter()
        .map(|cp| FoldSummary {
            fold: cp.header.fold,
            rounds: cp.trace().len(),
            queried: cp.trace().iter().map(|s| s.queried_indices.len()).sum(),
            total_cost: cp.total_cost(),
            final_performance: cp
                .trace()
                .last()
                .map_or_else(|| cp.header.baseline.performance.clone(), |s| s.performance.clone()),
        })
        .collect();
    Ok(ExperimentReport {
        name: config.name.clone(),
        digest: String::new(),
        folds,
        traces: traces.to_vec(),
        aggregates,
        files,
        elapsed: Duration::ZERO,
    })
}

/// Loads, runs and exports an experiment from scratch.
pub fn run_experiment(config: ExperimentConfig) -> Result<ExperimentReport> {
    Experiment::prepare(config)?.run(&RunOptions::default())
}

/// Continues an interrupted experiment from the state files in its output
/// directory; finished folds are left as they are.
pub fn resume_experiment(config: ExperimentConfig) -> Result<ExperimentReport> {
    Experiment::prepare(config)?.run(&RunOptions {
        resume: true,
        ..Default::default()
    })
}

/// Re-aggregates existing state files into `<out_dir>/<name>_<metric>.csv`
/// and `.svg`, one pair per metric found in the files.
pub fn analyse_state_files(
    paths: &[PathBuf],
    out_dir: &Path,
    name: &str,
    axis: XKind,
    grid_size: usize,
) -> Result<Vec<(String, AggregateCurve)>> {
    if paths.is_empty() {
        return Err(Error::Config("no state files matched".into()));
    }
    let traces = paths
        .iter()
        .map(|p| {
            read_checkpoint(p)?.map(|r| r.checkpoint).ok_or_else(|| Error::State {
                path: p.clone(),
                message: "missing header".into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let metrics: Vec<String> = traces[0].header.baseline.performance.keys().cloned().collect();
    metrics
        .into_iter()
        .map(|m| {
            let agg = aggregate_metric(&traces, &m, axis, grid_size)?;
            export_results(&agg, out_dir, &format!("{name}_{m}"), &m)?;
            Ok((m, agg))
        })
        .collect()
}
