use std::collections::{HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use nusrecon::io::write_atomic;
use nusrecon::pipeline::{MethodName, ReconConfig};
use serde::{Deserialize, Serialize};
use tokio::sync::Notify;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
    Deleted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    /// Submission order.
    pub seq: u64,
    pub state: JobState,
    pub method: MethodName,
    pub config: ReconConfig,
    /// Unix milliseconds.
    pub submitted: u64,
    pub started: Option<u64>,
    pub finished: Option<u64>,
    /// Wall-clock of the solve only.
    pub recon_seconds: Option<f64>,
    pub error_message: Option<String>,
    pub artifacts: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("no job {0}")]
    NotFound(String),
    #[error("job {id} is {state:?}")]
    Conflict { id: String, state: JobState },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Format(#[from] nusrecon::io::FormatError),
    #[error("corrupt state file {path}: {source}")]
    Corrupt { path: PathBuf, source: serde_json::Error },
}

pub const INPUT: &str = "input.sig";
pub const SCHEDULE: &str = "schedule.txt";
pub const CONFIG: &str = "config.json";
pub const RESULT: &str = "result.sig";
pub const DIAGNOSTICS: &str = "diagnostics.json";
const STATE: &str = "state.json";

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

struct Inner {
    jobs: HashMap<String, JobRecord>,
    queue: VecDeque<String>,
    next_seq: u64,
}

/// Job directory tree plus the in-memory index and FIFO queue. Every state
/// change goes through the index lock and is persisted before it is visible.
pub struct Store {
    root: PathBuf,
    inner: Mutex<Inner>,
    pub(crate) wake: Notify,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

impl Store {
    /// Loads every job under `root/jobs`. Jobs caught mid-run go back to the
    /// queue, which is ordered by submission.
    pub fn open(root: &Path) -> Result<Self, StoreError> {
        let jobs_dir = root.join("jobs");
        std::fs::create_dir_all(&jobs_dir).map_err(io_err(&jobs_dir))?;
        let mut jobs = HashMap::new();
        for entry in std::fs::read_dir(&jobs_dir).map_err(io_err(&jobs_dir))? {
            let dir = entry.map_err(io_err(&jobs_dir))?.path();
            let path = dir.join(STATE);
            if !path.is_file() {
                continue;
            }
            let bytes = std::fs::read(&path).map_err(io_err(&path))?;
            let mut rec: JobRecord = serde_json::from_slice(&bytes).map_err(|source| StoreError::Corrupt { path: path.clone(), source })?;
            if rec.state == JobState::Running {
                rec.state = JobState::Queued;
                rec.started = None;
                write_atomic(&path, &serde_json::to_vec_pretty(&rec).expect("record serialises"))?;
            }
            jobs.insert(rec.id.clone(), rec);
        }
        let mut queued: Vec<&JobRecord> = jobs.values().filter(|r| r.state == JobState::Queued).collect();
        queued.sort_by_key(|r| r.seq);
        let queue = queued.iter().map(|r| r.id.clone()).collect();
        let next_seq = jobs.values().map(|r| r.seq + 1).max().unwrap_or(0);
        Ok(Store {
            root: root.to_path_buf(),
            inner: Mutex::new(Inner { jobs, queue, next_seq }),
            wake: Notify::new(),
        })
    }

    pub fn job_dir(&self, id: &str) -> PathBuf {
        self.root.join("jobs").join(id)
    }

    fn persist(&self, rec: &JobRecord) -> Result<(), StoreError> {
        let path = self.job_dir(&rec.id).join(STATE);
        write_atomic(&path, &serde_json::to_vec_pretty(rec).expect("record serialises"))?;
        Ok(())
    }

    /// Writes the inputs and enqueues a new job.
    pub fn submit(&self, input: &[u8], schedule: &[u8], config: &ReconConfig) -> Result<JobRecord, StoreError> {
        let id = uuid::Uuid::new_v4().to_string();
        let dir = self.job_dir(&id);
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write_atomic(&dir.join(INPUT), input)?;
        write_atomic(&dir.join(SCHEDULE), schedule)?;
        write_atomic(&dir.join(CONFIG), &serde_json::to_vec_pretty(config).expect("config serialises"))?;
        let mut inner = self.inner.lock().expect("store lock");
        let rec = JobRecord {
            id: id.clone(),
            seq: inner.next_seq,
            state: JobState::Queued,
            method: config.method,
            config: config.clone(),
            submitted: now_ms(),
            started: None,
            finished: None,
            recon_seconds: None,
            error_message: None,
            artifacts: vec![INPUT.into(), SCHEDULE.into(), CONFIG.into()],
        };
        self.persist(&rec)?;
        inner.next_seq += 1;
        inner.jobs.insert(id.clone(), rec.clone());
        inner.queue.push_back(id);
        drop(inner);
        self.wake.notify_one();
        Ok(rec)
    }

    pub fn get(&self, id: &str) -> Result<JobRecord, StoreError> {
        let inner = self.inner.lock().expect("store lock");
        inner.jobs.get(id).cloned().ok_or_else(|| StoreError::NotFound(id.into()))
    }

    /// Pops the oldest queued job and marks it running.
    pub fn claim(&self) -> Result<Option<JobRecord>, StoreError> {
        let mut inner = self.inner.lock().expect("store lock");
        while let Some(id) = inner.queue.pop_front() {
            let Some(rec) = inner.jobs.get(&id) else { continue };
            if rec.state != JobState::Queued {
                continue;
            }
            let mut rec = rec.clone();
            rec.state = JobState::Running;
            rec.started = Some(now_ms());
            self.persist(&rec)?;
            inner.jobs.insert(id, rec.clone());
            return Ok(Some(rec));
        }
        Ok(None)
    }

    /// Records the outcome of a run unless the job was deleted meanwhile.
    pub fn finish(&self, id: &str, outcome: Result<(Vec<u8>, Vec<u8>, f64), String>) -> Result<(), StoreError> {
        let mut inner = self.inner.lock().expect("store lock");
        let Some(rec) = inner.jobs.get(id) else { return Ok(()) };
        if rec.state != JobState::Running {
            return Ok(());
        }
        let mut rec = rec.clone();
        let dir = self.job_dir(id);
        match outcome {
            Ok((result, diagnostics, secs)) => {
                write_atomic(&dir.join(RESULT), &result)?;
                write_atomic(&dir.join(DIAGNOSTICS), &diagnostics)?;
                rec.state = JobState::Done;
                rec.recon_seconds = Some(secs);
                rec.artifacts.extend([RESULT.to_string(), DIAGNOSTICS.to_string()]);
            }
            Err(msg) => {
                rec.state = JobState::Failed;
                rec.error_message = Some(msg);
            }
        }
        rec.finished = Some(now_ms());
        self.persist(&rec)?;
        inner.jobs.insert(id.to_string(), rec);
        Ok(())
    }

    /// Bytes of a finished job's artifact.
    pub fn artifact(&self, id: &str, name: &str) -> Result<Vec<u8>, StoreError> {
        let rec = self.get(id)?;
        match rec.state {
            JobState::Done => {}
            JobState::Deleted => return Err(StoreError::NotFound(id.into())),
            state => return Err(StoreError::Conflict { id: id.into(), state }),
        }
        let path = self.job_dir(id).join(name);
        std::fs::read(&path).map_err(io_err(&path))
    }

    /// Removes the artifacts and leaves a tombstone record.
    pub fn delete(&self, id: &str) -> Result<JobRecord, StoreError> {
        let mut inner = self.inner.lock().expect("store lock");
        let rec = inner.jobs.get(id).ok_or_else(|| StoreError::NotFound(id.into()))?;
        if rec.state == JobState::Deleted {
            return Err(StoreError::NotFound(id.into()));
        }
        let mut rec = rec.clone();
        let dir = self.job_dir(id);
        for name in &rec.artifacts {
            let path = dir.join(name);
            if path.exists() {
                std::fs::remove_file(&path).map_err(io_err(&path))?;
            }
        }
        rec.artifacts.clear();
        rec.state = JobState::Deleted;
        rec.recon_seconds = None;
        rec.finished.get_or_insert_with(now_ms);
        self.persist(&rec)?;
        inner.jobs.insert(id.to_string(), rec.clone());
        inner.queue.retain(|q| q != id);
        Ok(rec)
    }
}
