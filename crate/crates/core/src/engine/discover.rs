use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{csv_path, EngineError, RetryPolicy};
use crate::category::{FileCategory, FilterSpec};
use crate::model::CloudFile;
use crate::provider::{Driver, ProviderError, ProviderSession, ServiceId};

pub const CSV_HEADER: [&str; 4] = ["file_id", "remote_path", "revisions", "hash"];

/// One listing row: `FILE-ID REMOTE PATH REVISION HASH(MD5)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub file_id: String,
    pub remote_path: String,
    pub revisions: u32,
    /// Provider MD5, or `-`.
    pub hash: String,
}

/// An account's full catalog, ordered by file id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileManifest {
    pub service: ServiceId,
    pub user: String,
    pub files: Vec<CloudFile>,
}

impl FileManifest {
    pub fn new(service: ServiceId, user: impl Into<String>, mut files: Vec<CloudFile>) -> Self {
        files.sort_by(|a, b| a.file_id.cmp(&b.file_id));
        FileManifest {
            service,
            user: user.into(),
            files,
        }
    }

    pub fn rows(&self) -> Vec<ManifestRow> {
        self.files
            .iter()
            .map(|f| ManifestRow {
                file_id: f.file_id.clone(),
                remote_path: f.remote_path.clone(),
                revisions: f.revision_count,
                hash: f.hash_display().to_string(),
            })
            .collect()
    }

    pub fn get(&self, file_id: &str) -> Option<&CloudFile> {
        self.files
            .binary_search_by(|f| f.file_id.as_str().cmp(file_id))
            .ok()
            .map(|i| &self.files[i])
    }

    pub fn category_of(&self, file_id: &str) -> Option<FileCategory> {
        self.get(file_id).map(|f| f.category)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), EngineError> {
        let io = |source| EngineError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io)?;
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| EngineError::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        w.write_record(CSV_HEADER).map_err(csv_err)?;
        for row in self.rows() {
            w.write_record([
                row.file_id.as_str(),
                row.remote_path.as_str(),
                &row.revisions.to_string(),
                row.hash.as_str(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| EngineError::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        fs::write(path, bytes).map_err(io)
    }
}

/// Plain-text listing table as printed by `-l`.
pub fn render_listing(manifest: &FileManifest) -> String {
    let mut out = String::from("FILE-ID REMOTE PATH REVISION HASH(MD5)\n");
    for row in manifest.rows() {
        out.push_str(&format!(
            "{} {} {} {}\n",
            row.file_id, row.remote_path, row.revisions, row.hash
        ));
    }
    out
}

/// Reads file ids from the first column of a manifest CSV. A leading
/// `file_id` header row is optional.
pub fn read_manifest_ids(path: &Path) -> Result<Vec<String>, EngineError> {
    let bad = |message: String| EngineError::Manifest {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let mut ids = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let Some(id) = rec.get(0).map(str::trim) else {
            continue;
        };
        if id.is_empty() || (i == 0 && id.eq_ignore_ascii_case("file_id")) {
            continue;
        }
        ids.push(id.to_string());
    }
    Ok(ids)
}

#[derive(Debug, Clone)]
pub struct Discovery {
    pub manifest: FileManifest,
    pub csv_path: PathBuf,
}

/// Pages the catalog to exhaustion and writes
/// `<localdata>/<user>-<service>.csv`.
///
/// All-or-nothing: a page that still fails after retries, a short page
/// followed by a continuation token, or a repeated file id abandons the
/// whole listing.
pub fn discover(
    driver: &dyn Driver,
    session: &ProviderSession,
    localdata_dir: &Path,
    retry: &RetryPolicy,
) -> Result<Discovery, EngineError> {
    let mut files = Vec::new();
    let mut seen = HashSet::new();
    let mut token: Option<String> = None;
    let mut page_no = 0usize;
    loop {
        let page = match retry.run(|| driver.list_files(session, token.as_deref())) {
            Ok(p) => p,
            Err(e @ (ProviderError::TokenExpired | ProviderError::NotAuthenticated(_))) => {
                return Err(e.into())
            }
            Err(e) => {
                return Err(EngineError::DiscoveryIncomplete(format!(
                    "page {page_no}: {e}"
                )))
            }
        };
        if page.next_page_token.is_some() && page.files.len() < page.requested_page_size {
            return Err(EngineError::DiscoveryIncomplete(format!(
                "page {page_no} holds {} of {} entries but is not the last page",
                page.files.len(),
                page.requested_page_size
            )));
        }
        for f in page.files {
            if !seen.insert(f.file_id.clone()) {
                return Err(EngineError::DiscoveryIncomplete(format!(
                    "file {} listed twice",
                    f.file_id
                )));
            }
            files.push(f);
        }
        page_no += 1;
        match page.next_page_token {
            Some(t) => token = Some(t),
            None => break,
        }
    }
    let manifest = FileManifest::new(session.service, session.user.clone(), files);
    let csv_path = csv_path(localdata_dir, &session.user, session.service);
    manifest.write_csv(&csv_path)?;
    Ok(Discovery { manifest, csv_path })
}

/// Applies a filter, keeping manifest order. Manifest filters must name
/// only files present in the account.
pub fn select(manifest: &FileManifest, filter: &FilterSpec) -> Result<Vec<CloudFile>, EngineError> {
    if let FilterSpec::Manifest(ids) = filter {
        let known: BTreeSet<&str> = manifest.files.iter().map(|f| f.file_id.as_str()).collect();
        let missing: Vec<String> = ids
            .iter()
            .filter(|id| !known.contains(id.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(EngineError::UnknownManifestId(missing));
        }
    }
    Ok(manifest
        .files
        .iter()
        .filter(|f| filter.matches(f))
        .cloned()
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support::file_named;

    fn manifest() -> FileManifest {
        FileManifest::new(
            ServiceId::Simdrive,
            "u",
            vec![
                file_named("My Drive/b.pdf"),
                file_named("My Drive/a.docx"),
                file_named("My Drive/c, with comma.txt"),
            ],
        )
    }

    #[test]
    fn manifest_sorted_by_id() {
        let m = manifest();
        let ids: Vec<_> = m.files.iter().map(|f| f.file_id.as_str()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        assert!(m.get(&m.files[1].file_id).is_some());
    }

    #[test]
    fn select_preserves_order_and_filters() {
        let m = manifest();
        assert_eq!(select(&m, &FilterSpec::All).unwrap(), m.files);
        let pdf = select(&m, &"pdf".parse().unwrap()).unwrap();
        assert_eq!(pdf.len(), 1);
        assert_eq!(pdf[0].name, "b.pdf");
    }

    #[test]
    fn unknown_manifest_ids_are_all_reported() {
        let m = manifest();
        let err = select(&m, &FilterSpec::manifest(["ZZZ", "YYY"])).unwrap_err();
        match err {
            EngineError::UnknownManifestId(ids) => assert_eq!(ids, vec!["YYY", "ZZZ"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip_with_and_without_header() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest();
        let path = dir.path().join("localdata").join("u-simdrive.csv");
        m.write_csv(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("file_id,remote_path,revisions,hash\n"));
        assert!(text.contains("\"My Drive/c, with comma.txt\""));
        let ids = read_manifest_ids(&path).unwrap();
        let expected: Vec<_> = m.files.iter().map(|f| f.file_id.clone()).collect();
        assert_eq!(ids, expected);

        let bare = dir.path().join("bare.csv");
        fs::write(&bare, "id-1,My Drive/x,1,-\nid-2,My Drive/y,3,-\n").unwrap();
        assert_eq!(read_manifest_ids(&bare).unwrap(), vec!["id-1", "id-2"]);
    }

    #[test]
    fn listing_table() {
        let empty = FileManifest::new(ServiceId::Simdrive, "u", vec![]);
        assert_eq!(
            render_listing(&empty),
            "FILE-ID REMOTE PATH REVISION HASH(MD5)\n"
        );
        let text = render_listing(&manifest());
        assert_eq!(text.lines().count(), 4);
        assert!(text.contains(" My Drive/b.pdf 1 -\n"));
    }
}
