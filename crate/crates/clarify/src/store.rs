//! On-disk run store: `runs/<id>/manifest.json`, `runs/<id>/records.jsonl`,
//! `cache/<shard>/<digest>.json` and `sessions/<id>.json` under one root.
//!
//! Whole-file writes go through a temp file and a rename, so readers see the
//! old or the new content and never a torn one. Appends to `records.jsonl`
//! can tear on a crash; the loader drops an unterminated last line.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use clarify_core::metrics::MetricsReport;
use clarify_core::record::{RunResult, Skipped, StatementRecord, Strategy};
use clarify_core::session::ClarifySession;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gateway::ResponseCache;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage failure at {path}: {source}")]
    StorageFailure { path: PathBuf, source: io::Error },
    #[error("corrupt store file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("no run {0}")]
    UnknownRun(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::StorageFailure { path: path.to_path_buf(), source }
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes `bytes` to `path` through a uniquely named sibling temp file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let n = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = dir.join(format!(".{name}.{}.{n}.tmp", std::process::id()));
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io_err(path))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text)
        .map_err(|e| StoreError::Corrupt { path: path.to_path_buf(), reason: e.to_string() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub strategy: Strategy,
    pub corpus_digest: String,
    pub config: serde_json::Value,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    pub status: RunStatus,
    pub n_records: usize,
    pub skipped: Vec<Skipped>,
    pub failed: Vec<Skipped>,
    pub metrics: Option<MetricsReport>,
}

/// Content-addressed run id: the first 16 hex digits of SHA-256 over the
/// strategy, corpus digest and config snapshot.
pub fn run_id(strategy: Strategy, corpus_digest: &str, config: &serde_json::Value) -> String {
    let mut h = Sha256::new();
    h.update(strategy.as_str());
    h.update([0]);
    h.update(corpus_digest);
    h.update([0]);
    h.update(serde_json::to_vec(config).expect("config serializes"));
    hex::encode(h.finalize())[..16].to_string()
}

#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in ["runs", "cache", "sessions"] {
            let d = root.join(sub);
            fs::create_dir_all(&d).map_err(io_err(&d))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn run_dir(&self, id: &str) -> PathBuf {
        self.root.join("runs").join(id)
    }

    pub fn records_path(&self, id: &str) -> PathBuf {
        self.run_dir(id).join("records.jsonl")
    }

    pub fn manifest_path(&self, id: &str) -> PathBuf {
        self.run_dir(id).join("manifest.json")
    }

    /// Opens a run for writing. An existing unfinished run with the same id
    /// is resumed: its intact records are returned and later appends go to
    /// the same file.
    pub fn begin_run(
        &self,
        strategy: Strategy,
        corpus_digest: &str,
        config: serde_json::Value,
    ) -> Result<(RunWriter, Vec<StatementRecord>), StoreError> {
        let id = run_id(strategy, corpus_digest, &config);
        let manifest_path = self.manifest_path(&id);
        let previous: Option<RunManifest> =
            if manifest_path.exists() { Some(read_json(&manifest_path)?) } else { None };
        let existing = if previous.is_some() { self.load_records(&id)? } else { Vec::new() };
        let manifest = RunManifest {
            run_id: id.clone(),
            strategy,
            corpus_digest: corpus_digest.into(),
            config,
            started_at: previous.as_ref().map_or_else(Utc::now, |m| m.started_at),
            finished_at: None,
            status: RunStatus::Running,
            n_records: existing.len(),
            skipped: Vec::new(),
            failed: Vec::new(),
            metrics: None,
        };
        self.write_manifest(&manifest)?;
        // Rewrite the intact prefix so a torn tail does not linger.
        let records_path = self.records_path(&id);
        write_atomic(&records_path, &records_bytes(&existing))?;
        let file = OpenOptions::new().append(true).open(&records_path).map_err(io_err(&records_path))?;
        Ok((RunWriter { manifest, path: records_path, file: Mutex::new(file) }, existing))
    }

    fn write_manifest(&self, m: &RunManifest) -> Result<(), StoreError> {
        let bytes = serde_json::to_vec_pretty(m).expect("manifest serializes");
        write_atomic(&self.manifest_path(&m.run_id), &bytes)
    }

    /// Seals a run: records are rewritten in the result's order and the
    /// manifest is marked complete.
    pub fn finish_run(&self, writer: RunWriter, result: &RunResult) -> Result<String, StoreError> {
        let RunWriter { mut manifest, path, file } = writer;
        drop(file);
        write_atomic(&path, &records_bytes(&result.records))?;
        manifest.finished_at = Some(Utc::now());
        manifest.status = RunStatus::Complete;
        manifest.n_records = result.records.len();
        manifest.skipped = result.skipped.clone();
        manifest.failed = result.failed.clone();
        manifest.metrics = result.metrics.clone();
        self.write_manifest(&manifest)?;
        Ok(manifest.run_id)
    }

    /// Marks a run failed, keeping whatever records were appended.
    pub fn abandon_run(&self, writer: RunWriter) -> Result<(), StoreError> {
        let mut manifest = writer.manifest;
        manifest.status = RunStatus::Failed;
        manifest.finished_at = Some(Utc::now());
        self.write_manifest(&manifest)
    }

    /// One-shot persistence of a finished result.
    pub fn save_run(
        &self,
        result: &RunResult,
        corpus_digest: &str,
        config: serde_json::Value,
    ) -> Result<String, StoreError> {
        let (writer, _) = self.begin_run(result.strategy, corpus_digest, config)?;
        self.finish_run(writer, result)
    }

    pub fn load_manifest(&self, id: &str) -> Result<RunManifest, StoreError> {
        let p = self.manifest_path(id);
        if !p.exists() {
            return Err(StoreError::UnknownRun(id.into()));
        }
        read_json(&p)
    }

    /// Records of a run; an unterminated last line is ignored.
    pub fn load_records(&self, id: &str) -> Result<Vec<StatementRecord>, StoreError> {
        let p = self.records_path(id);
        if !p.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(&p).map_err(io_err(&p))?;
        let mut lines: Vec<&str> = text.split('\n').collect();
        // After splitting, the last element is "" for a terminated file and
        // the torn fragment otherwise.
        lines.pop();
        lines
            .iter()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| StoreError::Corrupt {
                    path: p.clone(),
                    reason: format!("line {}: {e}", i + 1),
                })
            })
            .collect()
    }

    pub fn load_run(&self, id: &str) -> Result<(RunManifest, RunResult), StoreError> {
        let manifest = self.load_manifest(id)?;
        let records = self.load_records(id)?;
        let result = RunResult {
            strategy: manifest.strategy,
            records,
            skipped: manifest.skipped.clone(),
            failed: manifest.failed.clone(),
            metrics: manifest.metrics.clone(),
        };
        Ok((manifest, result))
    }

    pub fn list_runs(&self) -> Result<Vec<RunManifest>, StoreError> {
        let dir = self.root.join("runs");
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let entry = entry.map_err(io_err(&dir))?;
            let id = entry.file_name().to_string_lossy().into_owned();
            if self.manifest_path(&id).exists() {
                out.push(self.load_manifest(&id)?);
            }
        }
        out.sort_by(|a, b| a.started_at.cmp(&b.started_at).then_with(|| a.run_id.cmp(&b.run_id)));
        Ok(out)
    }

    pub fn cache(&self) -> DiskCache {
        DiskCache { root: self.root.join("cache") }
    }

    fn session_path(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{id}.json"))
    }

    pub fn save_session(&self, session: &ClarifySession) -> Result<(), StoreError> {
        let bytes = serde_json::to_vec_pretty(session).expect("session serializes");
        write_atomic(&self.session_path(&session.id), &bytes)
    }

    pub fn load_session(&self, id: &str) -> Result<Option<ClarifySession>, StoreError> {
        if !is_safe_id(id) {
            return Ok(None);
        }
        let p = self.session_path(id);
        if !p.exists() {
            return Ok(None);
        }
        read_json(&p).map(Some)
    }
}

fn is_safe_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn records_bytes(records: &[StatementRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("record serializes");
        out.push(b'\n');
    }
    out
}

/// Appends records to a running run, one line per record, from any thread.
pub struct RunWriter {
    manifest: RunManifest,
    path: PathBuf,
    file: Mutex<File>,
}

impl RunWriter {
    pub fn run_id(&self) -> &str {
        &self.manifest.run_id
    }

    pub fn append(&self, record: &StatementRecord) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(record).expect("record serializes");
        line.push(b'\n');
        let mut f = self.file.lock().expect("writer lock");
        f.write_all(&line).and_then(|_| f.flush()).map_err(io_err(&self.path))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub digest: String,
    pub reply: String,
    pub model: String,
    pub created_at: DateTime<Utc>,
}

/// Completion cache sharded by the first two digest characters.
#[derive(Debug, Clone)]
pub struct DiskCache {
    root: PathBuf,
}

impl DiskCache {
    pub fn path_for(&self, digest: &str) -> PathBuf {
        let shard = digest.get(..2).unwrap_or("__");
        self.root.join(shard).join(format!("{digest}.json"))
    }

    pub fn get_entry(&self, digest: &str) -> Result<Option<CacheEntry>, StoreError> {
        if !is_safe_id(digest) {
            return Ok(None);
        }
        let p = self.path_for(digest);
        match fs::read_to_string(&p) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| StoreError::Corrupt { path: p, reason: e.to_string() }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&p)(e)),
        }
    }

    pub fn put_entry(&self, entry: &CacheEntry) -> Result<(), StoreError> {
        if !is_safe_id(&entry.digest) {
            return Err(StoreError::Corrupt {
                path: self.root.clone(),
                reason: format!("unsafe digest {:?}", entry.digest),
            });
        }
        let bytes = serde_json::to_vec(entry).expect("entry serializes");
        write_atomic(&self.path_for(&entry.digest), &bytes)
    }
}

impl ResponseCache for DiskCache {
    fn get(&self, digest: &str) -> Result<Option<String>, String> {
        self.get_entry(digest).map(|e| e.map(|e| e.reply)).map_err(|e| e.to_string())
    }

    fn put(&self, digest: &str, reply: &str, model: &str) -> Result<(), String> {
        self.put_entry(&CacheEntry {
            digest: digest.into(),
            reply: reply.into(),
            model: model.into(),
            created_at: Utc::now(),
        })
        .map_err(|e| e.to_string())
    }
}

/// Index of records by statement id, for resume.
pub fn records_by_id(records: Vec<StatementRecord>) -> HashMap<String, StatementRecord> {
    records.into_iter().map(|r| (r.statement_id.clone(), r)).collect()
}
