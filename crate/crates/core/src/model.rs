//! Normalized evidence types shared by drivers and the engine.

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::category::{categorize_file, FileCategory, NativeKind};
use crate::timefmt::format_timestamp;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("{algorithm:?} digest must be {expected} lowercase hex chars, got '{value}'")]
    BadDigest {
        algorithm: HashAlgorithm,
        expected: usize,
        value: String,
    },
    #[error("file {file_id}: {reason}")]
    InvalidFile { file_id: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HashAlgorithm {
    Md5,
    Sha256,
    /// Provider change token; unique per content version but not a digest.
    OpaqueRev,
}

impl HashAlgorithm {
    fn hex_len(self) -> Option<usize> {
        match self {
            HashAlgorithm::Md5 => Some(32),
            HashAlgorithm::Sha256 => Some(64),
            HashAlgorithm::OpaqueRev => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Provenance {
    ProviderClaimed,
    LocallyComputed,
}

/// A content hash together with where it came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HashClaim {
    pub algorithm: HashAlgorithm,
    pub value: String,
    pub provenance: Provenance,
    /// Set once a provider claim has been checked against local bytes.
    #[serde(default)]
    pub verified: bool,
}

impl HashClaim {
    pub fn new(
        algorithm: HashAlgorithm,
        value: impl Into<String>,
        provenance: Provenance,
    ) -> Result<Self, ModelError> {
        let value = value.into();
        if let Some(len) = algorithm.hex_len() {
            let ok = value.len() == len
                && value
                    .bytes()
                    .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
            if !ok {
                return Err(ModelError::BadDigest {
                    algorithm,
                    expected: len,
                    value,
                });
            }
        }
        Ok(HashClaim {
            algorithm,
            value,
            provenance,
            verified: false,
        })
    }

    pub fn provider_md5(value: impl Into<String>) -> Result<Self, ModelError> {
        Self::new(HashAlgorithm::Md5, value, Provenance::ProviderClaimed)
    }

    pub fn provider_rev(token: impl Into<String>) -> Self {
        HashClaim {
            algorithm: HashAlgorithm::OpaqueRev,
            value: token.into(),
            provenance: Provenance::ProviderClaimed,
            verified: false,
        }
    }

    /// Whether the claim can be checked against content bytes.
    pub fn is_verifiable(&self) -> bool {
        self.algorithm != HashAlgorithm::OpaqueRev
    }

    /// Provider MD5 hex, the only value rendered in listing and log hash columns.
    pub fn md5_display(claim: Option<&HashClaim>) -> &str {
        match claim {
            Some(c) if c.algorithm == HashAlgorithm::Md5 => &c.value,
            _ => "-",
        }
    }
}

/// One historical version of a file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Revision {
    pub revision_id: String,
    pub timestamp: DateTime<Utc>,
    pub size_bytes: u64,
    pub hash: Option<HashClaim>,
}

/// Sorts revisions into (timestamp, revision_id) order.
pub fn sort_revisions(revs: &mut [Revision]) {
    revs.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| a.revision_id.cmp(&b.revision_id))
    });
}

/// One remote artifact as listed by a provider.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloudFile {
    pub file_id: String,
    pub remote_path: String,
    pub name: String,
    pub size_bytes: u64,
    pub modified_time: DateTime<Utc>,
    pub category: FileCategory,
    pub revision_count: u32,
    pub provider_hash: Option<HashClaim>,
    /// Present for cloud-native artifacts, which have no downloadable content.
    pub native: Option<NativeKind>,
    pub export_formats: Vec<String>,
}

impl CloudFile {
    /// Builds a regular (downloadable) file with a single revision.
    pub fn regular(
        file_id: impl Into<String>,
        remote_path: impl Into<String>,
        size_bytes: u64,
        modified_time: DateTime<Utc>,
    ) -> Self {
        let remote_path = remote_path.into();
        let name = final_segment(&remote_path).to_string();
        CloudFile {
            file_id: file_id.into(),
            category: categorize_file(&name, None),
            name,
            remote_path,
            size_bytes,
            modified_time,
            revision_count: 1,
            provider_hash: None,
            native: None,
            export_formats: Vec::new(),
        }
    }

    pub fn is_cloud_native(&self) -> bool {
        self.native.is_some()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |reason: &str| {
            Err(ModelError::InvalidFile {
                file_id: self.file_id.clone(),
                reason: reason.to_string(),
            })
        };
        if self.file_id.is_empty() {
            return bad("empty file id");
        }
        if self.remote_path.is_empty() {
            return bad("empty remote path");
        }
        if self.name != final_segment(&self.remote_path) {
            return bad("name is not the final path segment");
        }
        if self.revision_count < 1 {
            return bad("revision count must be at least 1");
        }
        if self.category != categorize_file(&self.name, self.native) {
            return bad("category does not match name");
        }
        if self.is_cloud_native() {
            if self
                .provider_hash
                .as_ref()
                .is_some_and(|h| h.algorithm != HashAlgorithm::OpaqueRev)
            {
                return bad("cloud-native artifact carries a content hash");
            }
            if self.export_formats.is_empty() {
                return bad("cloud-native artifact without export formats");
            }
        } else if !self.export_formats.is_empty() {
            return bad("export formats on a regular file");
        }
        Ok(())
    }

    pub fn hash_display(&self) -> &str {
        HashClaim::md5_display(self.provider_hash.as_ref())
    }
}

pub fn final_segment(path: &str) -> &str {
    path.trim_end_matches('/')
        .rsplit('/')
        .next()
        .unwrap_or(path)
}

/// Column header of the custody log, as printed before the first record.
pub const LOG_HEADER: &str =
    "TIME(UTC) APPLICATION  USER FILE-ID REMOTE PATH REVISION LOCAL PATH HASH(MD5)";

/// One chain-of-custody entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcquisitionRecord {
    pub time_utc: DateTime<Utc>,
    pub application: String,
    pub user: String,
    pub file_id: String,
    pub remote_path: String,
    pub revision_label: String,
    pub local_path: String,
    pub hash: String,
}

impl AcquisitionRecord {
    pub fn revision_label(revision_count: u32) -> String {
        format!("v.{revision_count}")
    }

    /// The eight fields in log column order.
    pub fn fields(&self) -> [String; 8] {
        [
            format_timestamp(&self.time_utc),
            self.application.clone(),
            self.user.clone(),
            self.file_id.clone(),
            self.remote_path.clone(),
            self.revision_label.clone(),
            self.local_path.clone(),
            self.hash.clone(),
        ]
    }

    /// Space separated; the revision label is preceded by three spaces so the
    /// end of a remote path containing spaces stays visible.
    pub fn log_line(&self) -> String {
        let [time, app, user, id, remote, label, local, hash] = self.fields();
        format!("{time} {app} {user} {id} {remote}   {label} {local} {hash}")
    }
}

impl fmt::Display for AcquisitionRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.log_line())
    }
}

/// Splits a log line back into its eight columns.
///
/// Time, application, user, file id and hash never contain spaces. The remote
/// and local paths may, so they are separated at the first `"   v.<N> "`
/// marker. Lines whose remote path itself contains that marker are ambiguous;
/// the metadata sidecar is the authoritative machine-readable form.
pub fn split_log_line(line: &str) -> Option<[String; 8]> {
    let mut rest = line;
    let mut head: Vec<&str> = Vec::with_capacity(4);
    for _ in 0..4 {
        let (tok, tail) = rest.split_once(' ')?;
        if tok.is_empty() {
            return None;
        }
        head.push(tok);
        rest = tail;
    }
    let (middle, hash) = rest.rsplit_once(' ')?;
    let mut search = 0;
    loop {
        let at = search + middle[search..].find("   v.")?;
        let after = &middle[at + 5..];
        let digits = after.bytes().take_while(u8::is_ascii_digit).count();
        if digits > 0 && after.as_bytes().get(digits) == Some(&b' ') {
            let remote = &middle[..at];
            let label = &middle[at + 3..at + 5 + digits];
            let local = &after[digits + 1..];
            return Some([
                head[0].to_string(),
                head[1].to_string(),
                head[2].to_string(),
                head[3].to_string(),
                remote.to_string(),
                label.to_string(),
                local.to_string(),
                hash.to_string(),
            ]);
        }
        search = at + 1;
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use chrono::TimeZone;

    pub fn file_named(path: &str) -> CloudFile {
        CloudFile::regular(
            format!("id-{}", path.replace('/', "_")),
            path,
            10,
            Utc.timestamp_millis_opt(0).unwrap(),
        )
    }
}
