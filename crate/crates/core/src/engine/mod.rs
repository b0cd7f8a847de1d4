//! The three acquisition phases: discovery, selection, acquisition.

use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use crate::category::FilterSpec;
use crate::model::CloudFile;
use crate::paths::sanitize_segment;
use crate::provider::{Driver, ProviderError, ProviderSession, ServiceId};

mod acquire;
mod custody;
mod discover;
pub mod verify;

pub use acquire::{
    acquire, AcquireOptions, AcquisitionJob, ConsoleSink, Counters, FailureRecord, JobProgress,
    ProgressSnapshot,
};
pub use custody::{summary_line, write_log_line, AcquisitionSidecar, ArtifactEntry, ArtifactKind};
pub use discover::{
    discover, read_manifest_ids, render_listing, select, Discovery, FileManifest, ManifestRow,
    CSV_HEADER,
};
pub use verify::{verify_item, IntegrityMismatch, LocalDigests};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("DISCOVERY_INCOMPLETE: {0}")]
    DiscoveryIncomplete(String),
    #[error("UNKNOWN_MANIFEST_ID: {}", .0.join(", "))]
    UnknownManifestId(Vec<String>),
    #[error("destination {path} is not writable: {source}")]
    DestinationUnwritable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("a job is already running for {0}")]
    DestinationBusy(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::Provider(e) => e.code(),
            EngineError::DiscoveryIncomplete(_) => "DISCOVERY_INCOMPLETE",
            EngineError::UnknownManifestId(_) => "UNKNOWN_MANIFEST_ID",
            EngineError::DestinationUnwritable { .. } => "DESTINATION_UNWRITABLE",
            EngineError::DestinationBusy(_) => "DESTINATION_BUSY",
            EngineError::Io { .. } => "LOCAL_IO",
            EngineError::Manifest { .. } => "BAD_MANIFEST",
        }
    }
}

/// Retry schedule for `TRANSIENT_IO` failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_retries: 0,
            initial_backoff: Duration::ZERO,
        }
    }

    /// Runs `op`, retrying retryable errors with doubling backoff.
    pub fn run<T>(
        &self,
        mut op: impl FnMut() -> Result<T, ProviderError>,
    ) -> Result<T, ProviderError> {
        let mut backoff = self.initial_backoff;
        let mut attempt = 0;
        loop {
            match op() {
                Err(e) if e.is_retryable() && attempt < self.max_retries => {
                    attempt += 1;
                    tracing::debug!(attempt, error = %e, "retrying after {:?}", backoff);
                    thread::sleep(backoff);
                    backoff *= 2;
                }
                other => return other,
            }
        }
    }
}

/// Default on-disk layout relative to a base directory: `config/`,
/// `localdata/` and `downloaded/<user>/`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workspace {
    pub base: PathBuf,
}

impl Workspace {
    pub fn new(base: impl Into<PathBuf>) -> Self {
        Workspace { base: base.into() }
    }

    pub fn config_dir(&self) -> PathBuf {
        self.base.join("config")
    }

    pub fn localdata_dir(&self) -> PathBuf {
        self.base.join("localdata")
    }

    pub fn downloads_for(&self, user: &str) -> PathBuf {
        self.base.join("downloaded").join(sanitize_segment(user))
    }

    pub fn csv_path(&self, user: &str, service: ServiceId) -> PathBuf {
        csv_path(&self.localdata_dir(), user, service)
    }
}

/// Result of the first two phases.
#[derive(Debug, Clone)]
pub struct Plan {
    pub discovery: Discovery,
    pub targets: Vec<CloudFile>,
}

/// Discovery followed by selection. Both front ends go through here so a
/// given account and filter always produce the same CSV and target list.
pub fn prepare(
    driver: &dyn Driver,
    session: &ProviderSession,
    workspace: &Workspace,
    filter: &FilterSpec,
    retry: &RetryPolicy,
) -> Result<Plan, EngineError> {
    let discovery = discover(driver, session, &workspace.localdata_dir(), retry)?;
    let targets = select(&discovery.manifest, filter)?;
    Ok(Plan { discovery, targets })
}

pub(crate) fn csv_path(localdata: &Path, user: &str, service: ServiceId) -> PathBuf {
    localdata.join(format!(
        "{}-{}.csv",
        sanitize_segment(user),
        service.as_str()
    ))
}
