//! Mapping remote paths onto the local evidence tree.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};

use crate::model::Revision;
use crate::timefmt::{format_timestamp, parse_timestamp};

const ILLEGAL: &[char] = &['<', '>', ':', '"', '\\', '|', '?', '*', '/'];

/// Replaces characters that are illegal in a path segment on common
/// filesystems with `_`. `.` and `..` become `_` and `__`.
pub fn sanitize_segment(seg: &str) -> String {
    match seg {
        "." => return "_".into(),
        ".." => return "__".into(),
        _ => {}
    }
    seg.chars()
        .map(|c| {
            if ILLEGAL.contains(&c) || c.is_control() {
                '_'
            } else {
                c
            }
        })
        .collect()
}

/// Per-job injective mapping from `(remote_path, file_id)` to a path under a
/// root directory.
///
/// Remote paths are split on `/`; empty segments are dropped. When two
/// distinct files land on the same local path, or a file would occupy a path
/// already used as a directory (or vice versa), the later one gets
/// `.<file_id>` appended to the clashing segment.
#[derive(Debug)]
pub struct PathSanitizer {
    root: PathBuf,
    files: HashMap<PathBuf, String>,
    dirs: HashSet<PathBuf>,
    by_id: HashMap<String, PathBuf>,
}

impl PathSanitizer {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        PathSanitizer {
            root: root.into(),
            files: HashMap::new(),
            dirs: HashSet::new(),
            by_id: HashMap::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn local_path(&mut self, remote_path: &str, file_id: &str) -> PathBuf {
        if let Some(p) = self.by_id.get(file_id) {
            return p.clone();
        }
        let id_suffix = sanitize_segment(file_id);
        let mut segments: Vec<String> = remote_path
            .split('/')
            .filter(|s| !s.is_empty())
            .map(sanitize_segment)
            .collect();
        if segments.is_empty() {
            segments.push("_".into());
        }
        let last = segments.pop().unwrap_or_default();

        let mut cur = self.root.clone();
        for seg in segments {
            let mut name = seg;
            while self.files.contains_key(&cur.join(&name)) {
                name = format!("{name}.{id_suffix}");
            }
            cur.push(name);
            self.dirs.insert(cur.clone());
        }

        let mut name = last;
        loop {
            let candidate = cur.join(&name);
            if !self.files.contains_key(&candidate) && !self.dirs.contains(&candidate) {
                self.files.insert(candidate.clone(), file_id.to_string());
                self.by_id.insert(file_id.to_string(), candidate.clone());
                return candidate;
            }
            name = format!("{name}.{id_suffix}");
        }
    }
}

/// One-shot form of [`PathSanitizer::local_path`] for a single file.
pub fn sanitize_local_path(remote_path: &str, file_id: &str, root: &Path) -> PathBuf {
    PathSanitizer::new(root).local_path(remote_path, file_id)
}

/// `"(<timestamp>) <base_name>"`.
pub fn revision_filename(base_name: &str, rev: &Revision) -> String {
    format!("({}) {}", format_timestamp(&rev.timestamp), base_name)
}

/// Names for every revision of one file, in input order. Revisions sharing a
/// timestamp get `#<revision_id>` inside the parentheses.
pub fn revision_filenames(base_name: &str, revs: &[Revision]) -> Vec<String> {
    let mut counts: HashMap<DateTime<Utc>, usize> = HashMap::new();
    for r in revs {
        *counts.entry(r.timestamp).or_default() += 1;
    }
    revs.iter()
        .map(|r| {
            if counts[&r.timestamp] > 1 {
                format!(
                    "({}#{}) {}",
                    format_timestamp(&r.timestamp),
                    sanitize_segment(&r.revision_id),
                    base_name
                )
            } else {
                revision_filename(base_name, r)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedRevisionName<'a> {
    pub timestamp: DateTime<Utc>,
    pub revision_id: Option<&'a str>,
    pub base_name: &'a str,
}

pub fn parse_revision_filename(name: &str) -> Option<ParsedRevisionName<'_>> {
    let inner = name.strip_prefix('(')?;
    let (prefix, base_name) = inner.split_once(") ")?;
    let (ts, revision_id) = match prefix.split_once('#') {
        Some((ts, id)) => (ts, Some(id)),
        None => (prefix, None),
    };
    // 2015-02-05T08:28:26.032Z
    if ts.len() != 24 || !ts.ends_with('Z') {
        return None;
    }
    Some(ParsedRevisionName {
        timestamp: parse_timestamp(ts)?,
        revision_id,
        base_name,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;
    use std::path::Component;

    fn rev(id: &str, millis: i64) -> Revision {
        Revision {
            revision_id: id.into(),
            timestamp: Utc.timestamp_millis_opt(millis).unwrap(),
            size_bytes: 0,
            hash: None,
        }
    }

    #[test]
    fn mirrors_remote_layout() {
        let root = Path::new("/ev");
        assert_eq!(
            sanitize_local_path("My Drive/ppt test", "id", root),
            root.join("My Drive").join("ppt test")
        );
        assert_eq!(
            sanitize_local_path("a/b:c", "id", root),
            root.join("a").join("b_c")
        );
    }

    #[test]
    fn traversal_segments_are_neutralised() {
        let root = Path::new("/ev");
        let p = sanitize_local_path("../../etc/passwd", "id", root);
        assert_eq!(p, root.join("__").join("__").join("etc").join("passwd"));
        assert_eq!(sanitize_local_path("/", "id", root), root.join("_"));
        assert_eq!(
            sanitize_local_path("//a//./b", "id", root),
            root.join("a").join("_").join("b")
        );
    }

    #[test]
    fn collision_gets_file_id_suffix() {
        // Both names collapse to "x_y"; the oracle is sanitizing each alone.
        let root = Path::new("/ev");
        let first_alone = sanitize_local_path("x\\y", "F1", root);
        let second_alone = sanitize_local_path("x:y", "F2", root);
        assert_eq!(first_alone, second_alone);

        let mut s = PathSanitizer::new(root);
        assert_eq!(s.local_path("x\\y", "F1"), root.join("x_y"));
        assert_eq!(s.local_path("x:y", "F2"), root.join("x_y.F2"));
        // Asking again for a known id is stable.
        assert_eq!(s.local_path("x:y", "F2"), root.join("x_y.F2"));
    }

    #[test]
    fn file_and_directory_clash() {
        let root = Path::new("/ev");
        let mut s = PathSanitizer::new(root);
        let file = s.local_path("a/b", "F1");
        let nested = s.local_path("a/b/c", "F2");
        assert_eq!(file, root.join("a").join("b"));
        assert_eq!(nested, root.join("a").join("b.F2").join("c"));
        let dir_then_file = s.local_path("a", "F3");
        assert_eq!(dir_then_file, root.join("a.F3"));
    }

    #[test]
    fn revision_names() {
        let r = rev("r1", 1_423_124_906_032);
        assert_eq!(
            revision_filename("resume.docx", &r),
            "(2015-02-05T08:28:26.032Z) resume.docx"
        );
        assert_eq!(
            revision_filename("a", &rev("r", 0)),
            "(1970-01-01T00:00:00.000Z) a"
        );
    }

    #[test]
    fn same_timestamp_revisions_are_disambiguated() {
        let revs = [rev("r1", 5), rev("r2", 5), rev("r3", 6)];
        let names = revision_filenames("f.txt", &revs);
        assert_eq!(names[0], "(1970-01-01T00:00:00.005Z#r1) f.txt");
        assert_eq!(names[1], "(1970-01-01T00:00:00.005Z#r2) f.txt");
        assert_eq!(names[2], "(1970-01-01T00:00:00.006Z) f.txt");
        let parsed = parse_revision_filename(&names[1]).unwrap();
        assert_eq!(parsed.revision_id, Some("r2"));
        assert_eq!(parsed.base_name, "f.txt");
    }

    #[test]
    fn parse_rejects_other_names() {
        assert!(parse_revision_filename("resume.docx").is_none());
        assert!(parse_revision_filename("(yesterday) resume.docx").is_none());
    }

    fn escapes(root: &Path, p: &Path) -> bool {
        let Ok(rel) = p.strip_prefix(root) else {
            return true;
        };
        rel.as_os_str().is_empty() || rel.components().any(|c| !matches!(c, Component::Normal(_)))
    }

    proptest! {
        #[test]
        fn timestamp_round_trips(millis in 0i64..4_102_444_800_000, base in "[a-z .]{1,12}") {
            let r = rev("x", millis);
            let name = revision_filename(&base, &r);
            let parsed = parse_revision_filename(&name).unwrap();
            prop_assert_eq!(parsed.timestamp, r.timestamp);
            prop_assert_eq!(parsed.base_name, base.as_str());
        }

        #[test]
        fn distinct_timestamps_give_distinct_names(mut ms in proptest::collection::btree_set(0i64..1_000_000_000, 1..20)) {
            let revs: Vec<_> = std::mem::take(&mut ms).into_iter().enumerate().map(|(i, m)| rev(&format!("r{i}"), m)).collect();
            let names = revision_filenames("f", &revs);
            let unique: HashSet<_> = names.iter().collect();
            prop_assert_eq!(unique.len(), names.len());
        }

        #[test]
        fn mapping_stays_inside_root_and_is_injective(
            paths in proptest::collection::vec("[a-c/:.\\\\ ]{1,10}", 1..30)
        ) {
            let root = Path::new("/evidence/root");
            let mut s = PathSanitizer::new(root);
            let mut seen = HashSet::new();
            for (i, p) in paths.iter().enumerate() {
                let local = s.local_path(p, &format!("id{i}"));
                prop_assert!(!escapes(root, &local), "{:?} escapes via {:?}", p, local);
                prop_assert!(seen.insert(local.clone()), "duplicate {:?}", local);
            }
        }
    }
}
