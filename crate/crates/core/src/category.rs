//! File type taxonomy and the selection filters built on it.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::CloudFile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileCategory {
    Doc,
    Xls,
    Ppt,
    Text,
    Pdf,
    Image,
    Audio,
    Video,
    Other,
}

impl FileCategory {
    pub const ALL: [FileCategory; 9] = [
        FileCategory::Doc,
        FileCategory::Xls,
        FileCategory::Ppt,
        FileCategory::Text,
        FileCategory::Pdf,
        FileCategory::Image,
        FileCategory::Audio,
        FileCategory::Video,
        FileCategory::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FileCategory::Doc => "doc",
            FileCategory::Xls => "xls",
            FileCategory::Ppt => "ppt",
            FileCategory::Text => "text",
            FileCategory::Pdf => "pdf",
            FileCategory::Image => "image",
            FileCategory::Audio => "audio",
            FileCategory::Video => "video",
            FileCategory::Other => "other",
        }
    }

    pub fn is_office(self) -> bool {
        matches!(
            self,
            FileCategory::Doc | FileCategory::Xls | FileCategory::Ppt
        )
    }
}

impl fmt::Display for FileCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Extension table, lowercase and without the leading dot. Each extension
/// appears under exactly one category; anything not listed is `Other`.
pub const CATEGORY_EXTENSIONS: &[(FileCategory, &[&str])] = &[
    (FileCategory::Doc, &["doc", "docx", "odf", "odt"]),
    (FileCategory::Xls, &["xls", "xlsx", "ods"]),
    (FileCategory::Ppt, &["ppt", "pptx", "odp"]),
    (
        FileCategory::Text,
        &[
            "txt", "md", "c", "h", "cpp", "java", "py", "js", "sh", "csv",
        ],
    ),
    (FileCategory::Pdf, &["pdf"]),
    (
        FileCategory::Image,
        &["jpg", "jpeg", "png", "gif", "bmp", "tif", "tiff"],
    ),
    (FileCategory::Audio, &["mp3", "wav", "flac", "ogg", "m4a"]),
    (FileCategory::Video, &["mp4", "avi", "mkv", "mov", "wmv"]),
];

/// Kind of a cloud-native artifact (a provider-side document with no
/// serialized form of its own).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NativeKind {
    Document,
    Spreadsheet,
    Presentation,
    /// Drawings, forms and anything else without an office counterpart.
    Other,
}

impl NativeKind {
    pub fn category(self) -> FileCategory {
        match self {
            NativeKind::Document => FileCategory::Doc,
            NativeKind::Spreadsheet => FileCategory::Xls,
            NativeKind::Presentation => FileCategory::Ppt,
            NativeKind::Other => FileCategory::Other,
        }
    }
}

/// Extension of a file name: text after the last dot, ignoring a leading dot
/// (`.bashrc` has no extension).
pub fn extension(name: &str) -> Option<&str> {
    let idx = name.rfind('.')?;
    if idx == 0 || idx + 1 == name.len() {
        return None;
    }
    Some(&name[idx + 1..])
}

/// Maps a file to its category. Cloud-native artifacts are classified by
/// their kind, regular files by a case-insensitive extension lookup.
pub fn categorize_file(name: &str, native: Option<NativeKind>) -> FileCategory {
    if let Some(kind) = native {
        return kind.category();
    }
    let Some(ext) = extension(name) else {
        return FileCategory::Other;
    };
    let ext = ext.to_ascii_lowercase();
    CATEGORY_EXTENSIONS
        .iter()
        .find(|(_, exts)| exts.contains(&ext.as_str()))
        .map(|(cat, _)| *cat)
        .unwrap_or(FileCategory::Other)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterGroup {
    /// doc ∪ xls ∪ ppt
    OfficeDocs,
}

/// Selection predicate over a catalog.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FilterSpec {
    All,
    Category(FileCategory),
    Group(FilterGroup),
    Manifest(BTreeSet<String>),
}

impl FilterSpec {
    /// Filter names accepted on the command line.
    pub const NAMES: [&'static str; 10] = [
        "all",
        "doc",
        "xls",
        "ppt",
        "text",
        "pdf",
        "officedocs",
        "image",
        "audio",
        "video",
    ];

    pub fn manifest<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        FilterSpec::Manifest(ids.into_iter().map(Into::into).collect())
    }

    pub fn matches(&self, file: &CloudFile) -> bool {
        match self {
            FilterSpec::All => true,
            FilterSpec::Category(c) => file.category == *c,
            FilterSpec::Group(FilterGroup::OfficeDocs) => file.category.is_office(),
            FilterSpec::Manifest(ids) => ids.contains(&file.file_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown filter '{0}' (expected one of: {names})", names = FilterSpec::NAMES.join(", "))]
pub struct UnknownFilter(pub String);

impl FromStr for FilterSpec {
    type Err = UnknownFilter;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "all" => FilterSpec::All,
            "officedocs" => FilterSpec::Group(FilterGroup::OfficeDocs),
            "doc" => FilterSpec::Category(FileCategory::Doc),
            "xls" => FilterSpec::Category(FileCategory::Xls),
            "ppt" => FilterSpec::Category(FileCategory::Ppt),
            "text" => FilterSpec::Category(FileCategory::Text),
            "pdf" => FilterSpec::Category(FileCategory::Pdf),
            "image" => FilterSpec::Category(FileCategory::Image),
            "audio" => FilterSpec::Category(FileCategory::Audio),
            "video" => FilterSpec::Category(FileCategory::Video),
            other => return Err(UnknownFilter(other.to_string())),
        })
    }
}

impl fmt::Display for FilterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterSpec::All => f.write_str("all"),
            FilterSpec::Category(c) => f.write_str(c.as_str()),
            FilterSpec::Group(FilterGroup::OfficeDocs) => f.write_str("officedocs"),
            FilterSpec::Manifest(ids) => write!(f, "manifest({} ids)", ids.len()),
        }
    }
}
