use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::custody::{summary_line, AcquisitionSidecar, ArtifactEntry, ArtifactKind};
use super::verify::{verify_item, HashingWriter, LocalDigests};
use super::{EngineError, RetryPolicy};
use crate::category::FilterSpec;
use crate::model::{AcquisitionRecord, CloudFile, HashAlgorithm, HashClaim, Revision};
use crate::paths::{revision_filenames, sanitize_segment, PathSanitizer};
use crate::provider::{Driver, DriverCapabilities, ProviderError, ProviderSession};
use crate::timefmt::{format_duration, format_timestamp, truncate_millis};

/// Receives every custody line as it is written.
pub type ConsoleSink = Arc<dyn Fn(&str) + Send + Sync>;

/// Live job counters, safe to read while the job runs.
#[derive(Debug, Default)]
pub struct JobProgress {
    items_total: AtomicU64,
    items_done: AtomicU64,
    bytes_done: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressSnapshot {
    pub items_total: u64,
    pub items_done: u64,
    pub bytes_done: u64,
}

impl JobProgress {
    pub fn snapshot(&self) -> ProgressSnapshot {
        ProgressSnapshot {
            items_total: self.items_total.load(Ordering::SeqCst),
            items_done: self.items_done.load(Ordering::SeqCst),
            bytes_done: self.bytes_done.load(Ordering::SeqCst),
        }
    }
}

#[derive(Clone)]
pub struct AcquireOptions {
    pub retry: RetryPolicy,
    /// Items processed concurrently; each item is handled by one worker.
    pub workers: usize,
    pub progress: Option<Arc<JobProgress>>,
    pub console: Option<ConsoleSink>,
    /// Local paths in custody records are shown relative to this directory.
    pub display_base: Option<PathBuf>,
    pub export_format: String,
    pub application: String,
}

impl Default for AcquireOptions {
    fn default() -> Self {
        AcquireOptions {
            retry: RetryPolicy::default(),
            workers: 1,
            progress: None,
            console: None,
            display_base: None,
            export_format: "pdf".into(),
            application: crate::application_id(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub downloaded: usize,
    pub updated: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub file_id: String,
    pub remote_path: String,
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quarantine_path: Option<String>,
}

#[derive(Debug, Clone)]
pub struct AcquisitionJob {
    pub session: ProviderSession,
    pub filter: FilterSpec,
    pub destination_root: PathBuf,
    pub started_at: DateTime<Utc>,
    /// One entry per local artifact written, in log order.
    pub records: Vec<AcquisitionRecord>,
    pub failures: Vec<FailureRecord>,
    pub counters: Counters,
    pub duration: Option<Duration>,
    /// Content bytes written by this job.
    pub bytes_acquired: u64,
}

impl AcquisitionJob {
    pub fn new(
        session: ProviderSession,
        filter: FilterSpec,
        destination_root: impl Into<PathBuf>,
    ) -> Self {
        AcquisitionJob {
            session,
            filter,
            destination_root: destination_root.into(),
            started_at: truncate_millis(Utc::now()),
            records: Vec::new(),
            failures: Vec::new(),
            counters: Counters::default(),
            duration: None,
            bytes_acquired: 0,
        }
    }

    pub fn summary_line(&self) -> String {
        summary_line(
            self.counters.downloaded,
            self.counters.updated,
            self.counters.failed,
            &self.session.user,
        )
    }

    pub fn duration_line(&self) -> String {
        format!(
            "Duration: {}",
            format_duration(self.duration.unwrap_or_default())
        )
    }

    pub fn log_path(&self) -> PathBuf {
        self.destination_root
            .join(format!("{}.log", self.session.service.as_str()))
    }

    pub fn metadata_dir(&self) -> PathBuf {
        self.destination_root.join("metadata")
    }

    pub fn quarantine_dir(&self) -> PathBuf {
        self.destination_root.join("quarantine")
    }
}

static ACTIVE_DESTINATIONS: Mutex<BTreeSet<PathBuf>> = Mutex::new(BTreeSet::new());

struct DestinationLock(PathBuf);

impl DestinationLock {
    fn acquire(root: &Path) -> Result<Self, EngineError> {
        let key = std::path::absolute(root).unwrap_or_else(|_| root.to_path_buf());
        let mut active = ACTIVE_DESTINATIONS
            .lock()
            .unwrap_or_else(|e| e.into_inner());
        if !active.insert(key.clone()) {
            return Err(EngineError::DestinationBusy(root.to_path_buf()));
        }
        Ok(DestinationLock(key))
    }
}

impl Drop for DestinationLock {
    fn drop(&mut self) {
        let mut active = ACTIVE_DESTINATIONS
            .lock()
            .unwrap_or_else(|e| e.into_inner());
        active.remove(&self.0);
    }
}

/// Single writer for the custody log and the in-memory record list.
struct CustodyWriter {
    log: File,
    records: Vec<AcquisitionRecord>,
    console: Option<ConsoleSink>,
}

impl CustodyWriter {
    fn append(&mut self, record: AcquisitionRecord) -> std::io::Result<()> {
        let line = super::custody::write_log_line(&record, &mut self.log)?;
        if let Some(c) = &self.console {
            c(&line);
        }
        self.records.push(record);
        Ok(())
    }
}

enum ItemStatus {
    Downloaded,
    Updated,
    Unchanged,
    Failed(FailureRecord),
}

struct ItemContext<'a> {
    driver: &'a dyn Driver,
    session: &'a ProviderSession,
    capabilities: DriverCapabilities,
    options: &'a AcquireOptions,
    metadata_dir: PathBuf,
    quarantine_dir: PathBuf,
    custody: &'a Mutex<CustodyWriter>,
    bytes: &'a AtomicU64,
}

/// Acquires `targets` into the job's destination tree.
///
/// For each target: persist the raw provider metadata, enumerate revisions,
/// download every revision (or export a snapshot of a cloud-native
/// artifact), verify, and append one custody record per artifact. Items
/// whose previous acquisition is complete and unchanged are left alone.
/// Per-item failures are collected in `job.failures`; only an unusable
/// destination aborts the job.
pub fn acquire(
    driver: &dyn Driver,
    mut job: AcquisitionJob,
    targets: &[CloudFile],
    options: &AcquireOptions,
) -> Result<AcquisitionJob, EngineError> {
    let started = Instant::now();
    let _lock = DestinationLock::acquire(&job.destination_root)?;
    let unwritable = |path: &Path| {
        let path = path.to_path_buf();
        move |source| EngineError::DestinationUnwritable { path, source }
    };
    let metadata_dir = job.metadata_dir();
    fs::create_dir_all(&metadata_dir).map_err(unwritable(&metadata_dir))?;
    let log_path = job.log_path();
    let log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(unwritable(&log_path))?;

    let capabilities = options.retry.run(|| driver.capabilities())?;

    let mut sanitizer = PathSanitizer::new(&job.destination_root);
    let locals: Vec<PathBuf> = targets
        .iter()
        .map(|t| sanitizer.local_path(&t.remote_path, &t.file_id))
        .collect();

    let progress = options.progress.clone().unwrap_or_default();
    progress
        .items_total
        .store(targets.len() as u64, Ordering::SeqCst);

    let custody = Mutex::new(CustodyWriter {
        log,
        records: Vec::new(),
        console: options.console.clone(),
    });
    let bytes = AtomicU64::new(0);
    let ctx = ItemContext {
        driver,
        session: &job.session,
        capabilities,
        options,
        metadata_dir,
        quarantine_dir: job.quarantine_dir(),
        custody: &custody,
        bytes: &bytes,
    };

    let run_one = |i: usize| {
        let status = process_item(&ctx, &targets[i], &locals[i], &progress.bytes_done);
        progress.items_done.fetch_add(1, Ordering::SeqCst);
        status
    };

    let mut statuses: Vec<Option<ItemStatus>> = (0..targets.len()).map(|_| None).collect();
    if options.workers <= 1 || targets.len() <= 1 {
        for (i, slot) in statuses.iter_mut().enumerate() {
            *slot = Some(run_one(i));
        }
    } else {
        let next = AtomicUsize::new(0);
        let results = Mutex::new(&mut statuses);
        thread::scope(|s| {
            for _ in 0..options.workers.min(targets.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= targets.len() {
                        break;
                    }
                    let status = run_one(i);
                    results.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(status);
                });
            }
        });
    }

    for status in statuses.into_iter().flatten() {
        match status {
            ItemStatus::Downloaded => job.counters.downloaded += 1,
            ItemStatus::Updated => job.counters.updated += 1,
            ItemStatus::Unchanged => {}
            ItemStatus::Failed(f) => {
                job.counters.failed += 1;
                job.failures.push(f);
            }
        }
    }
    let writer = custody.into_inner().unwrap_or_else(|e| e.into_inner());
    job.records.extend(writer.records);
    job.bytes_acquired = bytes.load(Ordering::SeqCst);
    job.duration = Some(started.elapsed());
    Ok(job)
}

fn change_token(file: &CloudFile) -> String {
    match &file.provider_hash {
        Some(h) => format!("{}:{}", algorithm_tag(h.algorithm), h.value),
        None => format!("modified:{}", format_timestamp(&file.modified_time)),
    }
}

fn algorithm_tag(a: HashAlgorithm) -> &'static str {
    match a {
        HashAlgorithm::Md5 => "md5",
        HashAlgorithm::Sha256 => "sha256",
        HashAlgorithm::OpaqueRev => "rev",
    }
}

fn failure(file: &CloudFile, code: &str, message: impl Into<String>) -> FailureRecord {
    FailureRecord {
        file_id: file.file_id.clone(),
        remote_path: file.remote_path.clone(),
        code: code.to_string(),
        message: message.into(),
        quarantine_path: None,
    }
}

fn provider_failure(file: &CloudFile, e: &ProviderError) -> FailureRecord {
    failure(file, e.code(), e.to_string())
}

fn read_sidecar(path: &Path) -> Option<AcquisitionSidecar> {
    let bytes = fs::read(path).ok()?;
    serde_json::from_slice(&bytes).ok()
}

/// Every non-quarantined artifact is still on disk with the recorded digest.
fn artifacts_intact(sidecar: &AcquisitionSidecar) -> bool {
    sidecar
        .artifacts
        .iter()
        .filter(|a| !a.quarantined)
        .all(|a| {
            File::open(&a.path)
                .ok()
                .and_then(|f| LocalDigests::of_reader(f).ok())
                .is_some_and(|d| d.sha256 == a.sha256 && d.md5 == a.md5)
        })
}

fn display_path(options: &AcquireOptions, path: &Path) -> String {
    let shown = options
        .display_base
        .as_deref()
        .and_then(|base| path.strip_prefix(base).ok())
        .unwrap_or(path);
    shown.to_string_lossy().into_owned()
}

fn process_item(
    ctx: &ItemContext<'_>,
    target: &CloudFile,
    local: &Path,
    progress_bytes: &AtomicU64,
) -> ItemStatus {
    let retry = &ctx.options.retry;
    let id = target.file_id.as_str();
    let meta = match retry.run(|| ctx.driver.file_metadata(ctx.session, id)) {
        Ok(m) => m,
        Err(e) => return ItemStatus::Failed(provider_failure(target, &e)),
    };
    let file = &meta.file;
    let revisions = match retry.run(|| ctx.driver.list_revisions(ctx.session, id)) {
        Ok(r) => r,
        Err(e) => return ItemStatus::Failed(provider_failure(file, &e)),
    };

    let id_seg = sanitize_segment(id);
    let raw_path = ctx.metadata_dir.join(format!("{id_seg}.json"));
    let sidecar_path = ctx.metadata_dir.join(format!("{id_seg}.acquisition.json"));
    let token = change_token(file);
    let previous = read_sidecar(&sidecar_path);
    if let Some(prev) = &previous {
        if prev.complete && prev.change_token == token && artifacts_intact(prev) {
            return ItemStatus::Unchanged;
        }
    }
    let updated = previous.as_ref().is_some_and(|p| p.change_token != token);

    if let Err(e) = fs::write(&raw_path, &meta.raw) {
        return ItemStatus::Failed(failure(
            file,
            "LOCAL_IO",
            format!("{}: {e}", raw_path.display()),
        ));
    }

    let dir = local.parent().unwrap_or(local);
    if let Err(e) = fs::create_dir_all(dir) {
        return ItemStatus::Failed(failure(file, "LOCAL_IO", format!("{}: {e}", dir.display())));
    }
    let base_name = local
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "_".into());

    let mut artifacts = Vec::new();
    let mut first_failure: Option<FailureRecord> = None;

    if file.is_cloud_native() {
        let format = ctx.options.export_format.as_str();
        if !file.export_formats.iter().any(|f| f == format) {
            first_failure = Some(failure(
                file,
                "EXPORT_FORMAT_UNSUPPORTED",
                format!(
                    "{format} not offered (available: {})",
                    file.export_formats.join(", ")
                ),
            ));
        } else {
            let name = format!("{base_name}.{format}");
            let fetched = fetch_to(ctx, dir, &name, progress_bytes, None, |sink| {
                ctx.driver.export_snapshot(ctx.session, id, format, sink)
            });
            match fetched {
                Ok(digests) => {
                    let entry = ArtifactEntry {
                        kind: ArtifactKind::Snapshot,
                        revision_id: None,
                        revision_timestamp: None,
                        format: Some(format.to_string()),
                        ..finish_artifact(ctx, file, None, &dir.join(&name), &digests)
                    };
                    match finalize(ctx, file, entry, dir, &name) {
                        Ok(a) => artifacts.push(a),
                        Err(f) => first_failure = Some(f),
                    }
                }
                Err(e) => first_failure = Some(provider_failure(file, &e)),
            }
        }
    } else {
        let names = revision_filenames(&base_name, &revisions);
        let newest = revisions.len().saturating_sub(1);
        for (i, (rev, name)) in revisions.iter().zip(&names).enumerate() {
            let claim = rev.hash.clone().or_else(|| {
                (i == newest)
                    .then(|| file.provider_hash.clone())
                    .flatten()
                    .filter(|h| h.algorithm == HashAlgorithm::Md5)
            });
            let fetched = fetch_to(
                ctx,
                dir,
                name,
                progress_bytes,
                Some(rev.size_bytes),
                |sink| {
                    ctx.driver
                        .download_revision(ctx.session, id, &rev.revision_id, sink)
                },
            );
            let digests = match fetched {
                Ok(d) => d,
                Err(e) => {
                    first_failure.get_or_insert_with(|| provider_failure(file, &e));
                    continue;
                }
            };
            let final_path = dir.join(name);
            match verify_item(claim.as_ref(), &digests, &ctx.capabilities) {
                Ok(recorded) => {
                    let entry = revision_entry(ctx, file, rev, &final_path, &digests, recorded);
                    match finalize(ctx, file, entry, dir, name) {
                        Ok(a) => artifacts.push(a),
                        Err(f) => {
                            first_failure.get_or_insert(f);
                        }
                    }
                }
                Err(mismatch) => {
                    let (entry, fail) =
                        quarantine(ctx, file, rev, dir, name, &digests, claim, mismatch);
                    artifacts.push(entry);
                    first_failure.get_or_insert(fail);
                }
            }
        }
    }

    let sidecar = AcquisitionSidecar {
        file_id: file.file_id.clone(),
        remote_path: file.remote_path.clone(),
        service: ctx.session.service,
        user: ctx.session.user.clone(),
        application: ctx.options.application.clone(),
        acquired_at: truncate_millis(Utc::now()),
        change_token: token,
        revision_count: file.revision_count,
        cloud_native: file.is_cloud_native(),
        complete: first_failure.is_none(),
        artifacts,
        failure: first_failure
            .as_ref()
            .map(|f| format!("{}: {}", f.code, f.message)),
    };
    let json = serde_json::to_vec_pretty(&sidecar).expect("sidecar serializes");
    if let Err(e) = fs::write(&sidecar_path, json) {
        first_failure.get_or_insert_with(|| {
            failure(file, "LOCAL_IO", format!("{}: {e}", sidecar_path.display()))
        });
    }

    match first_failure {
        Some(f) => ItemStatus::Failed(f),
        None if updated => ItemStatus::Updated,
        None => ItemStatus::Downloaded,
    }
}

fn part_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!(".{name}.part"))
}

/// Streams one artifact into `<dir>/.<name>.part`, retrying transient
/// failures from scratch.
fn fetch_to(
    ctx: &ItemContext<'_>,
    dir: &Path,
    name: &str,
    progress_bytes: &AtomicU64,
    expected_size: Option<u64>,
    mut fetch: impl FnMut(&mut dyn Write) -> Result<u64, ProviderError>,
) -> Result<LocalDigests, ProviderError> {
    let part = part_path(dir, name);
    let result = ctx.options.retry.run(|| {
        let f = File::create(&part).map_err(ProviderError::Sink)?;
        let mut w = HashingWriter::new(BufWriter::new(f)).with_counter(progress_bytes);
        let n = fetch(&mut w)?;
        w.flush().map_err(ProviderError::Sink)?;
        let (_, digests) = w.finish();
        if let Some(size) = expected_size {
            if n != size {
                return Err(ProviderError::TransientIo(format!(
                    "received {n} bytes, expected {size}"
                )));
            }
        }
        Ok(digests)
    });
    match &result {
        Ok(d) => {
            ctx.bytes.fetch_add(d.size, Ordering::SeqCst);
        }
        Err(_) => {
            let _ = fs::remove_file(&part);
        }
    }
    result
}

fn finish_artifact(
    ctx: &ItemContext<'_>,
    file: &CloudFile,
    recorded: Option<HashClaim>,
    final_path: &Path,
    digests: &LocalDigests,
) -> ArtifactEntry {
    let hash = recorded.unwrap_or_else(|| {
        verify_item(None, digests, &ctx.capabilities).expect("no claim cannot mismatch")
    });
    let record = AcquisitionRecord {
        time_utc: truncate_millis(Utc::now()),
        application: ctx.options.application.clone(),
        user: ctx.session.user.clone(),
        file_id: file.file_id.clone(),
        remote_path: file.remote_path.clone(),
        revision_label: AcquisitionRecord::revision_label(file.revision_count),
        local_path: display_path(ctx.options, final_path),
        hash: HashClaim::md5_display(Some(&hash)).to_string(),
    };
    ArtifactEntry {
        kind: ArtifactKind::Revision,
        revision_id: None,
        revision_timestamp: None,
        format: None,
        path: final_path.to_string_lossy().into_owned(),
        size_bytes: digests.size,
        hash,
        md5: digests.md5.clone(),
        sha256: digests.sha256.clone(),
        record: Some(record),
        quarantined: false,
    }
}

fn revision_entry(
    ctx: &ItemContext<'_>,
    file: &CloudFile,
    rev: &Revision,
    final_path: &Path,
    digests: &LocalDigests,
    recorded: HashClaim,
) -> ArtifactEntry {
    ArtifactEntry {
        revision_id: Some(rev.revision_id.clone()),
        revision_timestamp: Some(format_timestamp(&rev.timestamp)),
        ..finish_artifact(ctx, file, Some(recorded), final_path, digests)
    }
}

/// Moves the part file into place and writes its custody record.
fn finalize(
    ctx: &ItemContext<'_>,
    file: &CloudFile,
    entry: ArtifactEntry,
    dir: &Path,
    name: &str,
) -> Result<ArtifactEntry, FailureRecord> {
    let part = part_path(dir, name);
    let final_path = dir.join(name);
    fs::rename(&part, &final_path)
        .map_err(|e| failure(file, "LOCAL_IO", format!("{}: {e}", final_path.display())))?;
    if let Some(record) = &entry.record {
        let mut custody = ctx.custody.lock().unwrap_or_else(|e| e.into_inner());
        custody
            .append(record.clone())
            .map_err(|e| failure(file, "LOCAL_IO", format!("custody log: {e}")))?;
    }
    Ok(entry)
}

#[allow(clippy::too_many_arguments)]
fn quarantine(
    ctx: &ItemContext<'_>,
    file: &CloudFile,
    rev: &Revision,
    dir: &Path,
    name: &str,
    digests: &LocalDigests,
    claim: Option<HashClaim>,
    mismatch: super::verify::IntegrityMismatch,
) -> (ArtifactEntry, FailureRecord) {
    let qdir = ctx.quarantine_dir.join(sanitize_segment(&file.file_id));
    let qpath = qdir.join(name);
    let moved = fs::create_dir_all(&qdir).and_then(|_| fs::rename(part_path(dir, name), &qpath));
    if let Err(e) = &moved {
        tracing::error!(file_id = %file.file_id, "quarantine failed: {e}");
    }
    let mut fail = failure(file, "INTEGRITY_MISMATCH", mismatch.to_string());
    fail.quarantine_path = Some(display_path(ctx.options, &qpath));
    let hash = claim.unwrap_or_else(|| HashClaim::provider_rev("unknown"));
    let entry = ArtifactEntry {
        kind: ArtifactKind::Revision,
        revision_id: Some(rev.revision_id.clone()),
        revision_timestamp: Some(format_timestamp(&rev.timestamp)),
        format: None,
        path: qpath.to_string_lossy().into_owned(),
        size_bytes: digests.size,
        hash,
        md5: digests.md5.clone(),
        sha256: digests.sha256.clone(),
        record: None,
        quarantined: true,
    };
    (entry, fail)
}
