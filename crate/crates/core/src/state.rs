//! Per-round experiment state and crash-safe checkpoint files.
//!
//! A state file is JSON lines. The first line is a [`StateHeader`]: the
//! configuration digest, the fold id, the fold's split and the evaluation of
//! the initial model (round 0). Every following line is one [`QueryState`],
//! written and flushed before the next round starts. Floats carry 17
//! significant digits.
//!
//! Recovery replays the recorded queries over the stored split. A trailing
//! line without its newline is the remains of an interrupted write and is
//! discarded, as if that round never happened.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{update_partition, IndexCollection, Split};
use crate::error::{Error, Result};
use crate::numfmt;
use crate::oracle::{ieth_update, OracleAnswer, OracleHistory};

pub const STATE_FORMAT: &str = "alkit-state/1";

/// Metric name to value.
pub type Performance = BTreeMap<String, f64>;

/// Record of one query round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryState {
    pub round: usize,
    pub queried_indices: Vec<usize>,
    /// Aggregated label used for training, aligned with `queried_indices`.
    pub returned_labels: Vec<usize>,
    pub round_cost: f64,
    /// Test performance of the model retrained after this round.
    pub performance: Performance,
    pub round_seed: u64,
    /// Every individual oracle answer given this round.
    #[serde(default)]
    pub oracle_answers: Vec<OracleAnswer>,
    /// Seconds spent on the round; informational only.
    #[serde(default)]
    pub wall_time: f64,
}

impl QueryState {
    pub fn new(round: usize, queried: Vec<usize>, labels: Vec<usize>, round_cost: f64, round_seed: u64) -> Self {
        QueryState {
            round,
            queried_indices: queried,
            returned_labels: labels,
            round_cost,
            performance: Performance::new(),
            round_seed,
            oracle_answers: Vec::new(),
            wall_time: 0.0,
        }
    }
}

/// Round-0 evaluation of the model trained on the initial labeled set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Baseline {
    pub performance: Performance,
    #[serde(default)]
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateHeader {
    pub format: String,
    pub experiment: String,
    pub config_digest: String,
    pub fold: usize,
    pub split: Split,
    pub baseline: Baseline,
}

impl StateHeader {
    pub fn new(
        experiment: impl Into<String>,
        config_digest: impl Into<String>,
        fold: usize,
        split: Split,
        baseline: Baseline,
    ) -> Self {
        StateHeader {
            format: STATE_FORMAT.into(),
            experiment: experiment.into(),
            config_digest: config_digest.into(),
            fold,
            split,
            baseline,
        }
    }
}

/// In-memory image of a state file.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: StateHeader,
    trace: Vec<QueryState>,
}

impl Checkpoint {
    pub fn new(header: StateHeader) -> Self {
        Checkpoint {
            header,
            trace: Vec::new(),
        }
    }

    pub fn trace(&self) -> &[QueryState] {
        &self.trace
    }

    pub fn last_round(&self) -> usize {
        self.trace.last().map_or(0, |s| s.round)
    }

    pub fn next_round(&self) -> usize {
        self.last_round() + 1
    }

    /// Appends a state, enforcing consecutive rounds starting at 1.
    pub fn append(&mut self, state: QueryState) -> Result<()> {
        let expected = self.next_round();
        if state.round != expected {
            return Err(Error::param(format!(
                "round {} appended where round {expected} was expected",
                state.round
            )));
        }
        if state.queried_indices.is_empty() || state.queried_indices.len() != state.returned_labels.len() {
            return Err(Error::param(format!(
                "round {}: {} queried indices with {} labels",
                state.round,
                state.queried_indices.len(),
                state.returned_labels.len()
            )));
        }
        self.trace.push(state);
        Ok(())
    }

    pub fn total_cost(&self) -> f64 {
        self.trace.iter().map(|s| s.round_cost).sum()
    }

    /// Labeled set, unlabeled pool and training labels after replaying all
    /// recorded queries over the split. `truth` supplies the labels of the
    /// initially labeled instances.
    pub fn replay(&self, truth: &[usize]) -> Result<Partition> {
        let split = &self.header.split;
        let mut labeled = split.initially_labeled.clone();
        let mut unlabeled = split.initially_unlabeled.clone();
        let mut labels: Vec<usize> = labeled
            .iter()
            .map(|i| {
                truth
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::param(format!("instance {i} out of range")))
            })
            .collect::<Result<_>>()?;
        for s in &self.trace {
            (labeled, unlabeled) = update_partition(&labeled, &unlabeled, &s.queried_indices)?;
            labels.extend_from_slice(&s.returned_labels);
        }
        Ok(Partition {
            labeled,
            labeled_labels: labels,
            unlabeled,
        })
    }

    /// IEthresh agreement histories rebuilt from the recorded answers.
    pub fn replay_histories(&self, oracle_ids: &[String]) -> Vec<OracleHistory> {
        let mut histories: Vec<OracleHistory> = oracle_ids.iter().map(OracleHistory::new).collect();
        for s in &self.trace {
            for &index in &s.queried_indices {
                let answers: Vec<OracleAnswer> =
                    s.oracle_answers.iter().filter(|a| a.index == index).cloned().collect();
                ieth_update(&mut histories, &answers);
            }
        }
        histories
    }
}

/// Labeled/unlabeled bookkeeping of a fold at some point of its run.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub labeled: IndexCollection,
    /// Training labels aligned with `labeled`.
    pub labeled_labels: Vec<usize>,
    pub unlabeled: IndexCollection,
}

/// Outcome of reading a state file.
#[derive(Debug, Clone, PartialEq)]
pub struct Recovered {
    pub checkpoint: Checkpoint,
    /// Length in bytes of the intact prefix of the file.
    pub valid_len: u64,
    /// An incomplete trailing line was ignored.
    pub discarded_tail: bool,
}

fn state_err(path: &Path, message: impl Into<String>) -> Error {
    Error::State {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads a state file. Returns `None` when not even the header line was
/// completely written.
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Option<Recovered>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut buf = Vec::new();
    let mut checkpoint: Option<Checkpoint> = None;
    let mut valid_len = 0u64;
    let mut discarded_tail = false;
    let mut line_no = 0;
    loop {
        buf.clear();
        let read = reader.read_until(b'\n', &mut buf).map_err(|e| Error::io(path, e))?;
        if read == 0 {
            break;
        }
        line_no += 1;
        if buf.last() != Some(&b'\n') {
            discarded_tail = true;
            break;
        }
        let text = std::str::from_utf8(&buf).map_err(|_| state_err(path, format!("line {line_no} is not UTF-8")))?;
        match checkpoint.as_mut() {
            None => {
                let header: StateHeader =
                    serde_json::from_str(text).map_err(|e| state_err(path, format!("bad header: {e}")))?;
                if header.format != STATE_FORMAT {
                    return Err(state_err(path, format!("unsupported format {:?}", header.format)));
                }
                checkpoint = Some(Checkpoint::new(header));
            }
            Some(cp) => {
                let state: QueryState =
                    serde_json::from_str(text).map_err(|e| state_err(path, format!("line {line_no}: {e}")))?;
                cp.append(state)
                    .map_err(|e| state_err(path, format!("line {line_no}: {e}")))?;
            }
        }
        valid_len += read as u64;
    }
    if discarded_tail {
        log::warn!("{}: ignoring incomplete trailing line {line_no}", path.display());
    }
    Ok(checkpoint.map(|checkpoint| Recovered {
        checkpoint,
        valid_len,
        discarded_tail,
    }))
}

/// Reads a state file written under `expected_digest` and rebuilds the
/// fold's partition from it.
pub fn recover(path: impl AsRef<Path>, expected_digest: &str, truth: &[usize]) -> Result<(Recovered, Partition)> {
    let path = path.as_ref();
    let recovered = read_checkpoint(path)?.ok_or_else(|| state_err(path, "missing header"))?;
    let found = &recovered.checkpoint.header.config_digest;
    if found != expected_digest {
        return Err(Error::DigestMismatch {
            path: path.to_path_buf(),
            expected: expected_digest.to_string(),
            found: found.clone(),
        });
    }
    let partition = recovered
        .checkpoint
        .replay(truth)
        .map_err(|e| state_err(path, format!("replay failed: {e}")))?;
    Ok((recovered, partition))
}

/// Append-only writer of one fold's state file.
#[derive(Debug)]
pub struct StateWriter {
    path: PathBuf,
    file: File,
    checkpoint: Checkpoint,
}

impl StateWriter {
    /// Starts a new file (replacing any existing one) with `header`.
    pub fn create(path: impl Into<PathBuf>, header: StateHeader) -> Result<Self> {
        let path = path.into();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut writer = StateWriter {
            path,
            file,
            checkpoint: Checkpoint::new(header),
        };
        let line =
            numfmt::to_json_line(&writer.checkpoint.header).map_err(|e| state_err(&writer.path, e.to_string()))?;
        writer.write_line(&line)?;
        Ok(writer)
    }

    /// Continues a recovered file, cutting off any incomplete tail first.
    pub fn resume(path: impl Into<PathBuf>, recovered: Recovered) -> Result<Self> {
        let path = path.into();
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        file.set_len(recovered.valid_len).map_err(|e| Error::io(&path, e))?;
        let file = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(StateWriter {
            path,
            file,
            checkpoint: recovered.checkpoint,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.checkpoint
    }

    pub fn into_checkpoint(self) -> Checkpoint {
        self.checkpoint
    }

    fn write_line(&mut self, line: &str) -> Result<()> {
        let mut bytes = Vec::with_capacity(line.len() + 1);
        bytes.extend_from_slice(line.as_bytes());
        bytes.push(b'\n');
        self.file.write_all(&bytes).map_err(|e| Error::io(&self.path, e))?;
        self.file.flush().map_err(|e| Error::io(&self.path, e))
    }

    /// Validates, writes and flushes one round.
    pub fn append(&mut self, state: QueryState) -> Result<()> {
        let line = numfmt::to_json_line(&state).map_err(|e| state_err(&self.path, e.to_string()))?;
        self.checkpoint.append(state)?;
        self.write_line(&line)
    }
}

/// Drops every `wall_time` field so files from different runs can be
/// compared byte for byte.
pub fn canonicalize(text: &str) -> Result<String> {
    fn strip(v: &mut serde_json::Value) {
        match v {
            serde_json::Value::Object(map) => {
                map.remove("wall_time");
                map.values_mut().for_each(strip);
            }
            serde_json::Value::Array(items) => items.iter_mut().for_each(strip),
            _ => {}
        }
    }
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let mut v: serde_json::Value =
            serde_json::from_str(line).map_err(|e| Error::InvalidData(format!("not a JSON line: {e}")))?;
        strip(&mut v);
        out.push_str(&v.to_string());
        out.push('\n');
    }
    Ok(out)
}

/// [`canonicalize`] applied to a file.
pub fn canonical_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    canonicalize(&text)
}
