//! Chain-of-custody output: log lines, summary line, metadata sidecars.

use std::io::{self, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::model::{AcquisitionRecord, HashClaim};
use crate::provider::ServiceId;

/// Writes the record's line (plus newline) to `sink` and returns it.
pub fn write_log_line(record: &AcquisitionRecord, sink: &mut dyn Write) -> io::Result<String> {
    let line = record.log_line();
    writeln!(sink, "{line}")?;
    Ok(line)
}

/// `N files downloaded and M updated from <user> drive`, with
/// ` and K failed` appended when K > 0.
pub fn summary_line(downloaded: usize, updated: usize, failed: usize, user: &str) -> String {
    let mut s = format!("{downloaded} files downloaded and {updated} updated from {user} drive");
    if failed > 0 {
        s.push_str(&format!(" and {failed} failed"));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Revision,
    Snapshot,
}

/// One local file produced for a remote item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub kind: ArtifactKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revision_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revision_timestamp: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    /// Path as written on disk.
    pub path: String,
    pub size_bytes: u64,
    /// The hash that was recorded for this artifact.
    pub hash: HashClaim,
    pub md5: String,
    pub sha256: String,
    /// Matching custody log entry; absent for quarantined content.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<AcquisitionRecord>,
    #[serde(default)]
    pub quarantined: bool,
}

/// Engine-computed companion to the raw provider metadata,
/// `metadata/<file_id>.acquisition.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcquisitionSidecar {
    pub file_id: String,
    pub remote_path: String,
    pub service: ServiceId,
    pub user: String,
    pub application: String,
    pub acquired_at: DateTime<Utc>,
    /// Provider digest, change token or modification time the content was
    /// acquired under.
    pub change_token: String,
    pub revision_count: u32,
    pub cloud_native: bool,
    pub complete: bool,
    pub artifacts: Vec<ArtifactEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_forms() {
        assert_eq!(
            summary_line(9, 0, 0, "example.dev@gmail.com"),
            "9 files downloaded and 0 updated from example.dev@gmail.com drive"
        );
        assert_eq!(
            summary_line(8, 0, 1, "u"),
            "8 files downloaded and 0 updated from u drive and 1 failed"
        );
    }
}
