//! Uniform driver contract for cloud drive services.
//!
//! Every service implements [`Driver`]: OAuth2-style authorization, paged
//! catalog listing, revision enumeration, content download and snapshot
//! export for cloud-native artifacts. Sessions are cached on disk by
//! [`token::TokenStore`].

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::model::{CloudFile, Revision};

pub mod live;
pub mod simdrive;
pub mod token;
pub mod wire;

pub use simdrive::SimDriveDriver;
pub use token::TokenStore;

/// OAuth client id the tool registers under.
pub const CLIENT_ID: &str = "kumoforge";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceId {
    Gdrive,
    Dropbox,
    Onedrive,
    Box,
    Simdrive,
}

impl ServiceId {
    pub const ALL: [ServiceId; 5] = [
        ServiceId::Gdrive,
        ServiceId::Dropbox,
        ServiceId::Onedrive,
        ServiceId::Box,
        ServiceId::Simdrive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ServiceId::Gdrive => "gdrive",
            ServiceId::Dropbox => "dropbox",
            ServiceId::Onedrive => "onedrive",
            ServiceId::Box => "box",
            ServiceId::Simdrive => "simdrive",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ServiceId::Gdrive => "Google Drive",
            ServiceId::Dropbox => "Dropbox",
            ServiceId::Onedrive => "Microsoft OneDrive",
            ServiceId::Box => "Box",
            ServiceId::Simdrive => "SimDrive (local simulator)",
        }
    }
}

impl fmt::Display for ServiceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ServiceId {
    type Err = ProviderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gdrive" => Ok(ServiceId::Gdrive),
            "dropbox" | "dbox" => Ok(ServiceId::Dropbox),
            "onedrive" => Ok(ServiceId::Onedrive),
            "box" => Ok(ServiceId::Box),
            "simdrive" => Ok(ServiceId::Simdrive),
            other => Err(ProviderError::UnknownService(other.to_string())),
        }
    }
}

/// Whether provider metadata carries an MD5 content digest or only an
/// opaque change token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Dialect {
    Hashed,
    Unhashed,
}

impl FromStr for Dialect {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hashed" => Ok(Dialect::Hashed),
            "unhashed" => Ok(Dialect::Unhashed),
            other => Err(format!("unknown dialect '{other}' (hashed|unhashed)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceDescriptor {
    pub service_id: ServiceId,
    pub display_name: String,
    pub dialect: Dialect,
}

impl ServiceDescriptor {
    pub fn new(service_id: ServiceId, dialect: Dialect) -> Self {
        ServiceDescriptor {
            service_id,
            display_name: service_id.display_name().to_string(),
            dialect,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriverCapabilities {
    pub provides_content_hash: bool,
    pub supports_revisions: bool,
    pub supports_export: bool,
}

impl DriverCapabilities {
    pub fn for_dialect(dialect: Dialect) -> Self {
        DriverCapabilities {
            provides_content_hash: dialect == Dialect::Hashed,
            supports_revisions: true,
            supports_export: true,
        }
    }
}

/// Authenticated handle to one account on one service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderSession {
    pub service: ServiceId,
    pub user: String,
    pub access_token: String,
    pub obtained_at: DateTime<Utc>,
}

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("unknown service '{0}' (expected gdrive, dropbox, onedrive, box or simdrive)")]
    UnknownService(String),
    #[error("authorization endpoint unavailable: {0}")]
    AuthEndpointUnavailable(String),
    #[error("access code rejected")]
    AuthCodeRejected,
    #[error("token store {path}: {source}")]
    TokenStoreIo {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not authenticated with {0}")]
    NotAuthenticated(ServiceId),
    #[error("access token expired")]
    TokenExpired,
    #[error("transient I/O failure: {0}")]
    TransientIo(String),
    #[error("no such file: {0}")]
    NoSuchFile(String),
    #[error("no such revision {revision_id} of {file_id}")]
    NoSuchRevision {
        file_id: String,
        revision_id: String,
    },
    #[error("{0} is cloud-native and has no downloadable content")]
    CloudNativeNoContent(String),
    #[error("{file_id} cannot be exported as '{format}'")]
    ExportFormatUnsupported { file_id: String, format: String },
    #[error("{0} is not a cloud-native artifact")]
    NotCloudNative(String),
    #[error("{service} driver does not implement {operation}")]
    Unsupported {
        service: ServiceId,
        operation: &'static str,
    },
    #[error("malformed provider response: {0}")]
    Protocol(String),
    #[error("writing content: {0}")]
    Sink(#[source] std::io::Error),
}

impl ProviderError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ProviderError::UnknownService(_) => "UNKNOWN_SERVICE",
            ProviderError::AuthEndpointUnavailable(_) => "AUTH_ENDPOINT_UNAVAILABLE",
            ProviderError::AuthCodeRejected => "AUTH_CODE_REJECTED",
            ProviderError::TokenStoreIo { .. } => "TOKEN_STORE_IO",
            ProviderError::NotAuthenticated(_) => "NOT_AUTHENTICATED",
            ProviderError::TokenExpired => "TOKEN_EXPIRED",
            ProviderError::TransientIo(_) => "TRANSIENT_IO",
            ProviderError::NoSuchFile(_) => "NO_SUCH_FILE",
            ProviderError::NoSuchRevision { .. } => "NO_SUCH_REVISION",
            ProviderError::CloudNativeNoContent(_) => "CLOUD_NATIVE_NO_CONTENT",
            ProviderError::ExportFormatUnsupported { .. } => "EXPORT_FORMAT_UNSUPPORTED",
            ProviderError::NotCloudNative(_) => "NOT_CLOUD_NATIVE",
            ProviderError::Unsupported { .. } => "UNSUPPORTED",
            ProviderError::Protocol(_) => "PROTOCOL",
            ProviderError::Sink(_) => "LOCAL_IO",
        }
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::TransientIo(_))
    }
}

/// One page of a catalog listing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilePage {
    pub files: Vec<CloudFile>,
    pub next_page_token: Option<String>,
    /// Page size the driver asked for; every page followed by a token must be full.
    pub requested_page_size: usize,
}

/// Full per-file metadata: the provider's response body, kept byte-exact for
/// the evidence tree, plus its normalized form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileMetadata {
    pub raw: Vec<u8>,
    pub file: CloudFile,
}

pub trait Driver: Send + Sync {
    fn descriptor(&self) -> ServiceDescriptor;

    fn capabilities(&self) -> Result<DriverCapabilities, ProviderError>;

    /// URL the user visits to approve access.
    fn begin_auth(&self) -> Result<String, ProviderError>;

    /// Trades an access code for a session. Does not persist it; see
    /// [`complete_auth`].
    fn exchange_code(&self, access_code: &str) -> Result<ProviderSession, ProviderError>;

    fn list_files(
        &self,
        session: &ProviderSession,
        page_token: Option<&str>,
    ) -> Result<FilePage, ProviderError>;

    fn file_metadata(
        &self,
        session: &ProviderSession,
        file_id: &str,
    ) -> Result<FileMetadata, ProviderError>;

    /// Revisions in ascending (timestamp, revision_id) order.
    fn list_revisions(
        &self,
        session: &ProviderSession,
        file_id: &str,
    ) -> Result<Vec<Revision>, ProviderError>;

    fn download_revision(
        &self,
        session: &ProviderSession,
        file_id: &str,
        revision_id: &str,
        sink: &mut dyn Write,
    ) -> Result<u64, ProviderError>;

    fn export_snapshot(
        &self,
        session: &ProviderSession,
        file_id: &str,
        format: &str,
        sink: &mut dyn Write,
    ) -> Result<u64, ProviderError>;
}

/// Exchanges the code and caches the resulting session.
pub fn complete_auth(
    driver: &dyn Driver,
    access_code: &str,
    store: &TokenStore,
) -> Result<ProviderSession, ProviderError> {
    let session = driver.exchange_code(access_code)?;
    store.store(&session)?;
    Ok(session)
}

/// Fetches every page of the catalog.
pub fn list_all_files(
    driver: &dyn Driver,
    session: &ProviderSession,
) -> Result<Vec<CloudFile>, ProviderError> {
    let mut out = Vec::new();
    let mut token: Option<String> = None;
    loop {
        let page = driver.list_files(session, token.as_deref())?;
        out.extend(page.files);
        match page.next_page_token {
            Some(t) => token = Some(t),
            None => return Ok(out),
        }
    }
}

/// The set of drivers a front end offers.
#[derive(Clone, Default)]
pub struct Registry {
    drivers: Vec<Arc<dyn Driver>>,
}

impl Registry {
    pub fn empty() -> Self {
        Registry::default()
    }

    /// All four live services plus the simulator at `simulator_url`.
    pub fn with_defaults(simulator_url: &str) -> Self {
        let mut r = Registry::empty();
        for id in [
            ServiceId::Gdrive,
            ServiceId::Dropbox,
            ServiceId::Onedrive,
            ServiceId::Box,
        ] {
            r.register(Arc::new(live::LiveDriver::new(id)));
        }
        r.register(Arc::new(SimDriveDriver::new(simulator_url)));
        r
    }

    pub fn register(&mut self, driver: Arc<dyn Driver>) {
        let id = driver.descriptor().service_id;
        self.drivers.retain(|d| d.descriptor().service_id != id);
        self.drivers.push(driver);
    }

    pub fn get(&self, id: ServiceId) -> Option<Arc<dyn Driver>> {
        self.drivers
            .iter()
            .find(|d| d.descriptor().service_id == id)
            .cloned()
    }

    pub fn descriptors(&self) -> Vec<ServiceDescriptor> {
        self.drivers.iter().map(|d| d.descriptor()).collect()
    }
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.drivers.iter().map(|d| d.descriptor().service_id))
            .finish()
    }
}
