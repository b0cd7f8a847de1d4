//! Seeded catalog generation.
//!
//! Everything here is a pure function of [`FixtureSpec`]: file ids, paths,
//! timestamps, revision ids, content bytes and digests.

use std::collections::HashMap;

use chrono::{DateTime, Duration, TimeZone, Utc};
use md5::Md5;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use kumoforge_core::provider::wire::{WireFile, WireFileDetail, WireKind, WireRevision};
use kumoforge_core::provider::Dialect;
use kumoforge_core::timefmt::format_timestamp;
use kumoforge_core::NativeKind;

use crate::pdf;
use crate::prng::{Draws, KeyedStream};

pub const DEFAULT_USER: &str = "investigator@simdrive.test";
pub const DEFAULT_MAX_FILES: usize = 100_000;
pub const ROOT_FOLDER: &str = "My Drive";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RevisionDepth {
    /// Fraction of regular files (rounded to the nearest count) that get
    /// `revisions` versions.
    pub fraction: f64,
    pub revisions: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectoryShape {
    pub max_depth: u32,
    pub branching: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureSpec {
    pub seed: u64,
    /// Catalog entries, cloud-native artifacts included.
    pub file_count: usize,
    pub file_size_bytes: u64,
    pub revision_depths: Vec<RevisionDepth>,
    pub cloud_native_count: usize,
    pub dialect: Dialect,
    pub directory_shape: DirectoryShape,
    pub user: String,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec::desk_scale(1)
    }
}

impl FixtureSpec {
    /// Nine entries: eight regular 1 MiB files (one of them with three
    /// revisions) and one cloud-native document.
    pub fn listing(seed: u64) -> Self {
        FixtureSpec {
            seed,
            file_count: 9,
            file_size_bytes: 1024 * 1024,
            revision_depths: vec![RevisionDepth {
                fraction: 0.125,
                revisions: 3,
            }],
            cloud_native_count: 1,
            dialect: Dialect::Hashed,
            directory_shape: DirectoryShape {
                max_depth: 3,
                branching: 2,
            },
            user: DEFAULT_USER.into(),
        }
    }

    /// 64 files of 256 KiB (16 MiB), single revision, no cloud-native items.
    pub fn desk_scale(seed: u64) -> Self {
        FixtureSpec {
            seed,
            file_count: 64,
            file_size_bytes: 256 * 1024,
            revision_depths: Vec::new(),
            cloud_native_count: 0,
            dialect: Dialect::Hashed,
            directory_shape: DirectoryShape {
                max_depth: 2,
                branching: 3,
            },
            user: DEFAULT_USER.into(),
        }
    }

    pub fn empty(seed: u64) -> Self {
        FixtureSpec {
            file_count: 0,
            cloud_native_count: 0,
            ..FixtureSpec::desk_scale(seed)
        }
    }

    pub fn with_dialect(mut self, dialect: Dialect) -> Self {
        self.dialect = dialect;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FixtureError {
    #[error("FIXTURE_TOO_LARGE: {requested} files requested, limit is {max}")]
    TooLarge { requested: usize, max: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimRevision {
    pub id: String,
    pub timestamp: DateTime<Utc>,
    pub size: u64,
    pub md5: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimFile {
    pub id: String,
    pub path: String,
    pub name: String,
    pub native: Option<NativeKind>,
    pub created: DateTime<Utc>,
    /// Ascending by timestamp.
    pub revisions: Vec<SimRevision>,
    pub exports: Vec<String>,
    pub rev_token: String,
}

impl SimFile {
    pub fn newest(&self) -> &SimRevision {
        self.revisions.last().expect("at least one revision")
    }

    pub fn revision(&self, id: &str) -> Option<&SimRevision> {
        self.revisions.iter().find(|r| r.id == id)
    }
}

/// Ground truth for one catalog entry, including digests the catalog itself
/// may withhold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthFile {
    pub file_id: String,
    pub path: String,
    pub cloud_native: bool,
    pub revisions: Vec<SimRevision>,
    pub exports: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureSummary {
    pub user: String,
    pub dialect: Dialect,
    pub file_count: usize,
    /// Sum of all revision sizes.
    pub total_bytes: u64,
    pub files: Vec<TruthFile>,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub spec: FixtureSpec,
    files: Vec<SimFile>,
    index: HashMap<String, usize>,
}

const NAME_POOL: &[&str] = &[
    "resume.docx",
    "tree.py",
    "report.pdf",
    "budget.xlsx",
    "photo.png",
    "slides.pptx",
    "notes.txt",
    "song.mp3",
    "clip.mp4",
    "archive",
    "minutes.odt",
    "scan.tiff",
    "data.csv",
    "voice.m4a",
    "letter.doc",
    "chart.ods",
    "talk.odp",
    "main.c",
    "diagram.gif",
    "interview.wav",
];

const FOLDER_POOL: &[&str] = &[
    "test folder",
    "stuff",
    "more stuff",
    "projects",
    "photos",
    "old",
];

const NATIVE_POOL: &[(&str, NativeKind)] = &[
    ("revision doc test", NativeKind::Document),
    ("ppt test", NativeKind::Presentation),
    ("budget sheet", NativeKind::Spreadsheet),
];

const ID_ALPHABET: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";

fn base_time() -> DateTime<Utc> {
    Utc.timestamp_millis_opt(1_423_124_906_032)
        .single()
        .expect("valid base time")
}

fn pooled(pool: &[&str], i: usize) -> String {
    let entry = pool[i % pool.len()];
    let round = i / pool.len();
    if round == 0 {
        return entry.to_string();
    }
    match entry.rfind('.') {
        Some(dot) => format!("{} {}{}", &entry[..dot], round + 1, &entry[dot..]),
        None => format!("{entry} {}", round + 1),
    }
}

fn make_id(seed: u64, index: usize) -> String {
    let mut d = Draws::new(seed, &["file-id", &index.to_string()]);
    // Index-dependent prefix keeps ids unique; the rest only looks random.
    let mut id = format!("0B{index:04}");
    while id.len() < 28 {
        id.push(ID_ALPHABET[d.below(ID_ALPHABET.len() as u64) as usize] as char);
    }
    id
}

fn folder_path(seed: u64, index: usize, shape: DirectoryShape) -> String {
    let mut d = Draws::new(seed, &["folder", &index.to_string()]);
    let depth = d.below(u64::from(shape.max_depth) + 1);
    let mut path = ROOT_FOLDER.to_string();
    let mut branch_offset = 0;
    for level in 0..depth {
        let b = d.below(u64::from(shape.branching.max(1))) as usize;
        branch_offset += b + level as usize;
        path.push('/');
        path.push_str(&pooled(FOLDER_POOL, branch_offset));
    }
    path
}

pub fn content_stream(seed: u64, file_id: &str, revision_id: &str) -> KeyedStream {
    KeyedStream::new(seed, &["content", file_id, revision_id])
}

fn digests(stream: &KeyedStream, size: u64) -> (String, String) {
    let mut md5 = Md5::new();
    let mut sha = Sha256::new();
    let mut buf = vec![0u8; 64 * 1024];
    let mut off = 0u64;
    while off < size {
        let n = (size - off).min(buf.len() as u64) as usize;
        stream.fill(off, &mut buf[..n]);
        md5.update(&buf[..n]);
        sha.update(&buf[..n]);
        off += n as u64;
    }
    (hex::encode(md5.finalize()), hex::encode(sha.finalize()))
}

impl Fixture {
    pub fn generate(spec: FixtureSpec, max_files: usize) -> Result<Self, FixtureError> {
        if spec.file_count > max_files {
            return Err(FixtureError::TooLarge {
                requested: spec.file_count,
                max: max_files,
            });
        }
        let n_native = spec.cloud_native_count.min(spec.file_count);
        let n_regular = spec.file_count - n_native;

        let mut depth_of = vec![1u32; n_regular];
        let mut cursor = 0usize;
        for d in &spec.revision_depths {
            let count = (d.fraction * n_regular as f64).round() as usize;
            for slot in depth_of.iter_mut().skip(cursor).take(count) {
                *slot = d.revisions.max(1);
            }
            cursor = (cursor + count).min(n_regular);
        }

        let mut files = Vec::with_capacity(spec.file_count);
        for i in 0..spec.file_count {
            let id = make_id(spec.seed, i);
            let mut draws = Draws::new(spec.seed, &["time", &i.to_string()]);
            let created = base_time()
                + Duration::days(i as i64)
                + Duration::milliseconds(draws.below(86_400_000) as i64);
            let (name, native, revision_count) = if i < n_regular {
                (
                    pooled(NAME_POOL, i),
                    None,
                    depth_of.get(i).copied().unwrap_or(1),
                )
            } else {
                let j = i - n_regular;
                let (n, kind) = NATIVE_POOL[j % NATIVE_POOL.len()];
                let name = if j < NATIVE_POOL.len() {
                    n.to_string()
                } else {
                    format!("{n} {}", j / NATIVE_POOL.len() + 1)
                };
                (name, Some(kind), 1)
            };
            let path = format!(
                "{}/{}",
                folder_path(spec.seed, i, spec.directory_shape),
                name
            );

            let revisions = (0..revision_count)
                .map(|k| {
                    let mut rd = Draws::new(spec.seed, &["revision", &id, &k.to_string()]);
                    let rid = format!("{k:02}{:014x}", rd.next_u64() >> 8);
                    let timestamp = created + Duration::hours(i64::from(k));
                    let size = if native.is_some() {
                        0
                    } else {
                        spec.file_size_bytes
                    };
                    let (md5, sha256) = if native.is_some() {
                        digests(&content_stream(spec.seed, &id, &rid), 0)
                    } else {
                        digests(&content_stream(spec.seed, &id, &rid), size)
                    };
                    SimRevision {
                        id: rid,
                        timestamp,
                        size,
                        md5,
                        sha256,
                    }
                })
                .collect::<Vec<_>>();
            let newest = &revisions[revisions.len() - 1];
            let rev_token = format!(
                "{:012x}",
                KeyedStream::new(spec.seed, &["rev-token", &id, &newest.id]).word(0) >> 16
            );
            files.push(SimFile {
                id,
                path,
                name,
                native,
                created,
                revisions,
                exports: if native.is_some() {
                    vec!["pdf".into(), "txt".into()]
                } else {
                    Vec::new()
                },
                rev_token,
            });
        }
        files.sort_by(|a, b| a.id.cmp(&b.id));
        let index = files
            .iter()
            .enumerate()
            .map(|(i, f)| (f.id.clone(), i))
            .collect();
        Ok(Fixture { spec, files, index })
    }

    pub fn files(&self) -> &[SimFile] {
        &self.files
    }

    pub fn get(&self, id: &str) -> Option<&SimFile> {
        self.index.get(id).map(|&i| &self.files[i])
    }

    pub fn user(&self) -> &str {
        &self.spec.user
    }

    pub fn dialect(&self) -> Dialect {
        self.spec.dialect
    }

    pub fn content(&self, file: &SimFile, rev: &SimRevision) -> KeyedStream {
        content_stream(self.spec.seed, &file.id, &rev.id)
    }

    pub fn wire_file(&self, f: &SimFile) -> WireFile {
        let newest = f.newest();
        let hashed = self.spec.dialect == Dialect::Hashed;
        WireFile {
            id: f.id.clone(),
            path: f.path.clone(),
            name: f.name.clone(),
            size: newest.size,
            modified: format_timestamp(&newest.timestamp),
            revisions: f.revisions.len() as u32,
            md5: (hashed && f.native.is_none()).then(|| newest.md5.clone()),
            rev: (!hashed).then(|| f.rev_token.clone()),
            kind: if f.native.is_some() {
                WireKind::CloudNative
            } else {
                WireKind::File
            },
            native_type: f.native,
            exports: f.native.map(|_| f.exports.clone()),
        }
    }

    pub fn wire_detail(&self, f: &SimFile) -> WireFileDetail {
        let mime_type = match f.native {
            Some(NativeKind::Document) => "application/vnd.google-apps.document",
            Some(NativeKind::Spreadsheet) => "application/vnd.google-apps.spreadsheet",
            Some(NativeKind::Presentation) => "application/vnd.google-apps.presentation",
            Some(NativeKind::Other) => "application/vnd.google-apps.unknown",
            None => "application/octet-stream",
        };
        let parents = f
            .path
            .rsplit_once('/')
            .map(|(parent, _)| vec![parent.to_string()])
            .unwrap_or_default();
        WireFileDetail {
            file: self.wire_file(f),
            created: format_timestamp(&f.created),
            owner: self.spec.user.clone(),
            mime_type: mime_type.into(),
            parents,
        }
    }

    pub fn wire_revision(&self, f: &SimFile, r: &SimRevision) -> WireRevision {
        let hashed = self.spec.dialect == Dialect::Hashed && f.native.is_none();
        WireRevision {
            id: r.id.clone(),
            timestamp: format_timestamp(&r.timestamp),
            size: r.size,
            md5: hashed.then(|| r.md5.clone()),
        }
    }

    /// Snapshot rendering of a cloud-native artifact.
    pub fn export(&self, f: &SimFile, format: &str) -> Option<Vec<u8>> {
        if f.native.is_none() || !f.exports.iter().any(|e| e == format) {
            return None;
        }
        let body: Vec<String> = vec![
            format!("Path: {}", f.path),
            format!("File id: {}", f.id),
            format!("Last edited: {}", format_timestamp(&f.newest().timestamp)),
            format!("Owner: {}", self.spec.user),
        ];
        match format {
            "pdf" => Some(pdf::render(&f.name, &body)),
            "txt" => Some(format!("{}\n\n{}\n", f.name, body.join("\n")).into_bytes()),
            _ => None,
        }
    }

    pub fn truth(&self, f: &SimFile) -> TruthFile {
        TruthFile {
            file_id: f.id.clone(),
            path: f.path.clone(),
            cloud_native: f.native.is_some(),
            revisions: f.revisions.clone(),
            exports: f.exports.clone(),
        }
    }

    pub fn summary(&self) -> FixtureSummary {
        FixtureSummary {
            user: self.spec.user.clone(),
            dialect: self.spec.dialect,
            file_count: self.files.len(),
            total_bytes: self
                .files
                .iter()
                .flat_map(|f| f.revisions.iter().map(|r| r.size))
                .sum(),
            files: self.files.iter().map(|f| self.truth(f)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn listing_fixture_shape() {
        let fx = Fixture::generate(FixtureSpec::listing(1), DEFAULT_MAX_FILES).unwrap();
        assert_eq!(fx.files().len(), 9);
        let natives: Vec<_> = fx.files().iter().filter(|f| f.native.is_some()).collect();
        assert_eq!(natives.len(), 1);
        let three: Vec<_> = fx
            .files()
            .iter()
            .filter(|f| f.revisions.len() == 3)
            .collect();
        assert_eq!(three.len(), 1);
        for f in fx.files() {
            assert!(f.path.starts_with("My Drive/"));
            assert!(f.path.ends_with(&f.name));
            let ts: Vec<_> = f.revisions.iter().map(|r| r.timestamp).collect();
            assert!(ts.windows(2).all(|w| w[1] - w[0] == Duration::hours(1)));
            let ids: HashSet<_> = f.revisions.iter().map(|r| &r.id).collect();
            assert_eq!(ids.len(), f.revisions.len());
        }
        let ids: Vec<_> = fx.files().iter().map(|f| f.id.clone()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
    }

    #[test]
    fn same_spec_same_hashes() {
        let a = Fixture::generate(FixtureSpec::listing(1), DEFAULT_MAX_FILES).unwrap();
        let b = Fixture::generate(FixtureSpec::listing(1), DEFAULT_MAX_FILES).unwrap();
        assert_eq!(a.summary(), b.summary());
        let c = Fixture::generate(FixtureSpec::listing(2), DEFAULT_MAX_FILES).unwrap();
        assert_ne!(
            a.summary().files[0].revisions[0].md5,
            c.summary().files[0].revisions[0].md5
        );
    }

    #[test]
    fn digests_match_independent_hash_of_content() {
        let fx = Fixture::generate(
            FixtureSpec {
                file_size_bytes: 100_003,
                ..FixtureSpec::listing(5)
            },
            DEFAULT_MAX_FILES,
        )
        .unwrap();
        let f = fx.files().iter().find(|f| f.native.is_none()).unwrap();
        let r = f.newest();
        let bytes = fx.content(f, r).bytes(0, r.size as usize);
        assert_eq!(hex::encode(Md5::digest(&bytes)), r.md5);
        assert_eq!(hex::encode(Sha256::digest(&bytes)), r.sha256);
    }

    #[test]
    fn empty_and_too_large() {
        let fx = Fixture::generate(FixtureSpec::empty(1), DEFAULT_MAX_FILES).unwrap();
        assert!(fx.files().is_empty());
        let err = Fixture::generate(FixtureSpec::desk_scale(1), 10).unwrap_err();
        assert_eq!(
            err,
            FixtureError::TooLarge {
                requested: 64,
                max: 10
            }
        );
    }

    #[test]
    fn dialects() {
        let hashed = Fixture::generate(FixtureSpec::listing(1), DEFAULT_MAX_FILES).unwrap();
        for f in hashed.files() {
            let w = hashed.wire_file(f);
            assert!(w.rev.is_none());
            assert_eq!(w.md5.is_some(), f.native.is_none());
            if let Some(md5) = w.md5 {
                assert_eq!(md5.len(), 32);
            }
        }
        let unhashed = Fixture::generate(
            FixtureSpec::listing(1).with_dialect(Dialect::Unhashed),
            DEFAULT_MAX_FILES,
        )
        .unwrap();
        for f in unhashed.files() {
            let w = unhashed.wire_file(f);
            assert!(w.md5.is_none());
            assert!(w.rev.is_some());
            assert!(unhashed.wire_revision(f, f.newest()).md5.is_none());
        }
    }

    #[test]
    fn pooled_names_stay_unique() {
        let names: HashSet<_> = (0..100).map(|i| pooled(NAME_POOL, i)).collect();
        assert_eq!(names.len(), 100);
        assert_eq!(pooled(NAME_POOL, NAME_POOL.len()), "resume 2.docx");
    }

    #[test]
    fn export_only_for_native() {
        let fx = Fixture::generate(FixtureSpec::listing(1), DEFAULT_MAX_FILES).unwrap();
        let native = fx.files().iter().find(|f| f.native.is_some()).unwrap();
        assert!(fx.export(native, "pdf").unwrap().starts_with(b"%PDF"));
        assert!(fx.export(native, "xyz").is_none());
        let regular = fx.files().iter().find(|f| f.native.is_none()).unwrap();
        assert!(fx.export(regular, "pdf").is_none());
    }
}
