//! JSON bodies of the simulator's HTTP protocol.

use serde::{Deserialize, Serialize};

use crate::category::{categorize_file, NativeKind};
use crate::model::{final_segment, CloudFile, HashClaim, Revision};
use crate::provider::Dialect;
use crate::timefmt::parse_timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WireKind {
    #[serde(rename = "file")]
    File,
    #[serde(rename = "cloud-native")]
    CloudNative,
}

/// Catalog entry, as returned by `GET /files`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireFile {
    pub id: String,
    pub path: String,
    pub name: String,
    pub size: u64,
    pub modified: String,
    pub revisions: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub md5: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rev: Option<String>,
    pub kind: WireKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub native_type: Option<NativeKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exports: Option<Vec<String>>,
}

/// Full per-file metadata, as returned by `GET /files/{id}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireFileDetail {
    #[serde(flatten)]
    pub file: WireFile,
    pub created: String,
    pub owner: String,
    pub mime_type: String,
    pub parents: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireListing {
    pub files: Vec<WireFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_page_token: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRevision {
    pub id: String,
    pub timestamp: String,
    pub size: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub md5: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRevisions {
    pub revisions: Vec<WireRevision>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireError {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireAuthCode {
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireTokenRequest {
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireToken {
    pub access_token: String,
    pub user: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireAbout {
    pub service: String,
    pub dialect: Dialect,
    pub default_page_size: usize,
}

impl WireFile {
    pub fn to_cloud_file(&self) -> Result<CloudFile, String> {
        let modified_time = parse_timestamp(&self.modified)
            .ok_or_else(|| format!("bad timestamp '{}' on {}", self.modified, self.id))?;
        let native = match self.kind {
            WireKind::File => None,
            WireKind::CloudNative => Some(self.native_type.unwrap_or(NativeKind::Other)),
        };
        let provider_hash = match (&self.md5, &self.rev) {
            (Some(md5), _) => {
                Some(HashClaim::provider_md5(md5.clone()).map_err(|e| e.to_string())?)
            }
            (None, Some(rev)) => Some(HashClaim::provider_rev(rev.clone())),
            (None, None) => None,
        };
        let name = final_segment(&self.path).to_string();
        if name != self.name {
            return Err(format!(
                "name '{}' does not match path '{}'",
                self.name, self.path
            ));
        }
        let file = CloudFile {
            file_id: self.id.clone(),
            remote_path: self.path.clone(),
            category: categorize_file(&name, native),
            name,
            size_bytes: self.size,
            modified_time,
            revision_count: self.revisions,
            provider_hash,
            native,
            export_formats: self.exports.clone().unwrap_or_default(),
        };
        file.validate().map_err(|e| e.to_string())?;
        Ok(file)
    }
}

impl WireRevision {
    pub fn to_revision(&self) -> Result<Revision, String> {
        Ok(Revision {
            revision_id: self.id.clone(),
            timestamp: parse_timestamp(&self.timestamp)
                .ok_or_else(|| format!("bad revision timestamp '{}'", self.timestamp))?,
            size_bytes: self.size,
            hash: self
                .md5
                .as_ref()
                .map(|m| HashClaim::provider_md5(m.clone()))
                .transpose()
                .map_err(|e| e.to_string())?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::category::FileCategory;

    #[test]
    fn native_entry_round_trip() {
        let json = r#"{"id":"A","path":"My Drive/ppt test","name":"ppt test","size":0,
            "modified":"2015-06-25T03:48:43.600Z","revisions":2,"kind":"cloud-native",
            "native_type":"presentation","exports":["pdf"]}"#;
        let w: WireFile = serde_json::from_str(json).unwrap();
        let f = w.to_cloud_file().unwrap();
        assert!(f.is_cloud_native());
        assert_eq!(f.category, FileCategory::Ppt);
        assert_eq!(f.hash_display(), "-");
    }

    #[test]
    fn hashed_entry_keeps_md5() {
        let w = WireFile {
            id: "B".into(),
            path: "My Drive/tree.py".into(),
            name: "tree.py".into(),
            size: 3,
            modified: "2015-06-25T03:48:43.600Z".into(),
            revisions: 1,
            md5: Some("61366435095ca0ca55e7192df66a0fe8".into()),
            rev: None,
            kind: WireKind::File,
            native_type: None,
            exports: None,
        };
        let s = serde_json::to_string(&w).unwrap();
        assert!(!s.contains("rev\""));
        assert_eq!(
            w.to_cloud_file().unwrap().hash_display(),
            "61366435095ca0ca55e7192df66a0fe8"
        );
    }
}
