//! Append-only trajectory store and training-batch export.
//!
//! The store is one UTF-8 JSONL file of [`StoredTrajectory`] lines plus a
//! small state file holding the persisted training-step counter `t`, the
//! export watermark, and the next sequence number. Every record is written
//! with a single flushed write so an interrupted process leaves only whole
//! lines. Exports gate pending records through the current stage mask,
//! write a batch file, and advance `t`; the counter never decreases across
//! process restarts.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::policy::{Message, Role, TokenLogProb};
use crate::reward::RewardBreakdown;
use crate::rollout::TrajectoryRecord;
use crate::schedule::{filter_batch, stage_mask, SchedulePolicy, StageMask};

pub const SCHEMA_VERSION: u32 = 1;

const TRAJECTORIES_FILE: &str = "trajectories.jsonl";
const STATE_FILE: &str = "state.json";
const BATCH_DIR: &str = "batches";

/// One stored line: the full trajectory record plus run metadata. Field
/// names are normative for the on-disk schema and versioned by
/// `schema_version`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTrajectory {
    pub schema_version: u32,
    pub run_id: String,
    /// Monotonic per-store sequence number; the export watermark compares
    /// against it.
    pub seq: u64,
    /// Wall-clock milliseconds; excluded from store digests.
    pub timestamp_ms: u64,
    /// Training-step counter at collection time.
    pub schedule_step: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    /// Execution reward components; absent on designer records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_breakdown: Option<RewardBreakdown>,
    #[serde(flatten)]
    pub record: TrajectoryRecord,
}

/// One line of a training-batch export file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchLine {
    pub trajectory_id: String,
    pub role: Role,
    pub context: Vec<Message>,
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<TokenLogProb>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advantage: Option<f64>,
    pub stage_weight: f64,
    /// The training step this batch commits.
    pub step: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoreState {
    schema_version: u32,
    next_seq: u64,
    /// Persisted training-step counter; advances only on committed exports.
    step_t: u64,
    /// Lowest sequence number not yet consumed by an export.
    exported_seq: u64,
}

impl Default for StoreState {
    fn default() -> Self {
        StoreState { schema_version: SCHEMA_VERSION, next_seq: 0, step_t: 0, exported_seq: 0 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store i/o failure at {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("corrupt store line {line_no} in {path}: {message}")]
    CorruptLine { path: String, line_no: usize, message: String },
    #[error("corrupt state file {path}: {message}")]
    CorruptState { path: String, message: String },
    #[error("store is empty")]
    Empty,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.display().to_string(), source }
}

/// What an export attempt produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExportOutcome {
    Written { path: PathBuf, lines: usize, step: u64 },
    NothingToExport,
}

/// Append-only store rooted at a directory. Writes are serialized through
/// one appender; reads open the file independently.
pub struct TrajectoryStore {
    dir: PathBuf,
    appender: Mutex<std::fs::File>,
    state: Mutex<StoreState>,
}

impl TrajectoryStore {
    /// Open or create a store directory, restoring persisted state.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        std::fs::create_dir_all(dir.join(BATCH_DIR)).map_err(io_err(&dir))?;

        let state_path = dir.join(STATE_FILE);
        let state = if state_path.exists() {
            let text = std::fs::read_to_string(&state_path).map_err(io_err(&state_path))?;
            serde_json::from_str(&text).map_err(|e| StoreError::CorruptState {
                path: state_path.display().to_string(),
                message: e.to_string(),
            })?
        } else {
            StoreState::default()
        };

        let log_path = dir.join(TRAJECTORIES_FILE);
        let appender = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(io_err(&log_path))?;

        Ok(TrajectoryStore { dir, appender: Mutex::new(appender), state: Mutex::new(state) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Current persisted training-step counter.
    pub fn step_t(&self) -> u64 {
        self.state.lock().expect("state lock").step_t
    }

    fn now_ms() -> u64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }

    /// Append records; each line is committed with one flushed write so a
    /// killed process cannot tear it.
    pub fn append(
        &self,
        run_id: &str,
        schedule_step: u64,
        dataset: Option<&str>,
        records: impl IntoIterator<Item = (TrajectoryRecord, Option<RewardBreakdown>)>,
    ) -> Result<u64, StoreError> {
        let log_path = self.dir.join(TRAJECTORIES_FILE);
        let mut appender = self.appender.lock().expect("appender lock");
        let mut state = self.state.lock().expect("state lock");
        let mut written = 0u64;
        for (record, reward_breakdown) in records {
            let stored = StoredTrajectory {
                schema_version: SCHEMA_VERSION,
                run_id: run_id.to_string(),
                seq: state.next_seq,
                timestamp_ms: Self::now_ms(),
                schedule_step,
                dataset: dataset.map(str::to_string),
                reward_breakdown,
                record,
            };
            let mut line = serde_json::to_string(&stored).expect("records serialize");
            line.push('\n');
            appender.write_all(line.as_bytes()).map_err(io_err(&log_path))?;
            appender.flush().map_err(io_err(&log_path))?;
            state.next_seq += 1;
            written += 1;
        }
        self.persist_state(&state)?;
        Ok(written)
    }

    /// Read every stored line, strictly.
    pub fn read_all(&self) -> Result<Vec<StoredTrajectory>, StoreError> {
        let path = self.dir.join(TRAJECTORIES_FILE);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let mut out = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let stored: StoredTrajectory =
                serde_json::from_str(line).map_err(|e| StoreError::CorruptLine {
                    path: path.display().to_string(),
                    line_no: line_no + 1,
                    message: e.to_string(),
                })?;
            out.push(stored);
        }
        Ok(out)
    }

    /// Content digest of the store with wall-clock timestamps excluded.
    pub fn digest(&self) -> Result<String, StoreError> {
        let path = self.dir.join(TRAJECTORIES_FILE);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let mut hasher = Sha256::new();
        for (line_no, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut value: serde_json::Value =
                serde_json::from_str(line).map_err(|e| StoreError::CorruptLine {
                    path: path.display().to_string(),
                    line_no: line_no + 1,
                    message: e.to_string(),
                })?;
            if let Some(obj) = value.as_object_mut() {
                obj.remove("timestamp_ms");
            }
            hasher.update(value.to_string().as_bytes());
            hasher.update(b"\n");
        }
        Ok(hex::encode(hasher.finalize()))
    }

    /// Export pending records gated by the current stage mask.
    ///
    /// All pending records (seq above the watermark, schedule_step ≥
    /// `since_step`) are consumed; only active-role records are written,
    /// with their stage weights stamped. A committed batch advances and
    /// persists `t`. With nothing pending, or nothing surviving the mask,
    /// nothing changes and [`ExportOutcome::NothingToExport`] is returned.
    pub fn export(
        &self,
        policy: SchedulePolicy,
        since_step: u64,
    ) -> Result<ExportOutcome, StoreError> {
        let mut state = self.state.lock().expect("state lock");
        let step = state.step_t;
        let mask: StageMask = stage_mask(step, policy);

        let pending: Vec<StoredTrajectory> = self
            .read_all()?
            .into_iter()
            .filter(|s| s.seq >= state.exported_seq && s.schedule_step >= since_step)
            .collect();
        if pending.is_empty() {
            return Ok(ExportOutcome::NothingToExport);
        }
        let max_seq = pending.iter().map(|s| s.seq).max().expect("non-empty");

        let records: Vec<TrajectoryRecord> = pending.iter().map(|s| s.record.clone()).collect();
        let kept = filter_batch(records, mask);
        if kept.is_empty() {
            return Ok(ExportOutcome::NothingToExport);
        }

        let batch_path = self.dir.join(BATCH_DIR).join(format!("batch-{step:06}.jsonl"));
        let mut buffer = String::new();
        for record in &kept {
            let line = BatchLine {
                trajectory_id: record.id.clone(),
                role: record.role,
                context: record.context_messages.clone(),
                output: record.output_text.clone(),
                token_logprobs: record.token_logprobs.clone(),
                advantage: record.advantage,
                stage_weight: record.stage_weight.unwrap_or(1.0),
                step,
            };
            buffer.push_str(&serde_json::to_string(&line).expect("batch lines serialize"));
            buffer.push('\n');
        }
        std::fs::write(&batch_path, buffer).map_err(io_err(&batch_path))?;

        state.exported_seq = max_seq + 1;
        state.step_t += 1;
        self.persist_state(&state)?;
        Ok(ExportOutcome::Written { path: batch_path, lines: kept.len(), step })
    }

    /// Atomic state persistence: write a temp file, then rename over.
    fn persist_state(&self, state: &StoreState) -> Result<(), StoreError> {
        let path = self.dir.join(STATE_FILE);
        let tmp = self.dir.join(format!("{STATE_FILE}.tmp"));
        let text = serde_json::to_string_pretty(state).expect("state serializes");
        std::fs::write(&tmp, text).map_err(io_err(&tmp))?;
        std::fs::rename(&tmp, &path).map_err(io_err(&path))?;
        Ok(())
    }
}
