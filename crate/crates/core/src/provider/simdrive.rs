//! Driver for the bundled drive simulator.

use std::io::{Read, Write};
use std::sync::OnceLock;
use std::time::Duration;

use chrono::Utc;
use reqwest::blocking::{Client, RequestBuilder, Response};
use reqwest::StatusCode;

use super::wire::{
    WireAbout, WireError, WireFileDetail, WireListing, WireRevisions, WireToken, WireTokenRequest,
};
use super::{
    Dialect, Driver, DriverCapabilities, FileMetadata, FilePage, ProviderError, ProviderSession,
    ServiceDescriptor, ServiceId, CLIENT_ID,
};
use crate::model::{sort_revisions, Revision};
use crate::timefmt::truncate_millis;

pub const DEFAULT_PAGE_SIZE: usize = 100;

#[derive(Debug)]
pub struct SimDriveDriver {
    base_url: String,
    client: Client,
    page_size: usize,
    dialect: OnceLock<Dialect>,
}

impl SimDriveDriver {
    pub fn new(base_url: impl Into<String>) -> Self {
        let client = Client::builder()
            .connect_timeout(Duration::from_secs(5))
            .timeout(None::<Duration>)
            .build()
            .expect("http client");
        SimDriveDriver {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            client,
            page_size: DEFAULT_PAGE_SIZE,
            dialect: OnceLock::new(),
        }
    }

    pub fn with_page_size(mut self, page_size: usize) -> Self {
        self.page_size = page_size.max(1);
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base_url, path)
    }

    fn send(&self, req: RequestBuilder) -> Result<Response, ProviderError> {
        let resp = req
            .send()
            .map_err(|e| ProviderError::TransientIo(e.to_string()))?;
        if resp.status().is_success() {
            return Ok(resp);
        }
        Err(error_from_response(resp))
    }

    fn authed(&self, session: &ProviderSession, path: &str) -> RequestBuilder {
        self.client
            .get(self.url(path))
            .bearer_auth(&session.access_token)
    }

    fn json<T: serde::de::DeserializeOwned>(resp: Response) -> Result<T, ProviderError> {
        let body = resp
            .bytes()
            .map_err(|e| ProviderError::TransientIo(e.to_string()))?;
        serde_json::from_slice(&body).map_err(|e| ProviderError::Protocol(e.to_string()))
    }

    fn stream(resp: Response, sink: &mut dyn Write) -> Result<u64, ProviderError> {
        let expected = resp.content_length();
        let mut resp = resp;
        let mut buf = vec![0u8; 64 * 1024];
        let mut written = 0u64;
        loop {
            let n = resp
                .read(&mut buf)
                .map_err(|e| ProviderError::TransientIo(e.to_string()))?;
            if n == 0 {
                break;
            }
            sink.write_all(&buf[..n]).map_err(ProviderError::Sink)?;
            written += n as u64;
        }
        if let Some(len) = expected {
            if len != written {
                return Err(ProviderError::TransientIo(format!(
                    "short body: {written} of {len} bytes"
                )));
            }
        }
        Ok(written)
    }
}

fn error_from_response(resp: Response) -> ProviderError {
    let status = resp.status();
    let body: Option<WireError> = resp
        .bytes()
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok());
    let code = body.as_ref().map(|b| b.code.as_str()).unwrap_or("");
    let message = body
        .as_ref()
        .map(|b| b.message.clone())
        .unwrap_or_else(|| status.to_string());
    match (status, code) {
        (_, "TOKEN_EXPIRED") | (StatusCode::UNAUTHORIZED, _) => ProviderError::TokenExpired,
        (_, "AUTH_CODE_REJECTED") => ProviderError::AuthCodeRejected,
        (_, "NO_SUCH_FILE") => ProviderError::NoSuchFile(message),
        (_, "NO_SUCH_REVISION") => ProviderError::NoSuchRevision {
            file_id: String::new(),
            revision_id: message,
        },
        (_, "CLOUD_NATIVE_NO_CONTENT") => ProviderError::CloudNativeNoContent(message),
        (_, "EXPORT_FORMAT_UNSUPPORTED") => ProviderError::ExportFormatUnsupported {
            file_id: String::new(),
            format: message,
        },
        (_, "NOT_CLOUD_NATIVE") => ProviderError::NotCloudNative(message),
        (s, _) if s.is_server_error() => ProviderError::TransientIo(message),
        _ => ProviderError::Protocol(format!("{status}: {message}")),
    }
}

impl Driver for SimDriveDriver {
    fn descriptor(&self) -> ServiceDescriptor {
        let dialect = self.dialect.get().copied().unwrap_or(Dialect::Hashed);
        ServiceDescriptor::new(ServiceId::Simdrive, dialect)
    }

    fn capabilities(&self) -> Result<DriverCapabilities, ProviderError> {
        if let Some(d) = self.dialect.get() {
            return Ok(DriverCapabilities::for_dialect(*d));
        }
        let about: WireAbout = Self::json(self.send(self.client.get(self.url("/about")))?)?;
        let d = *self.dialect.get_or_init(|| about.dialect);
        Ok(DriverCapabilities::for_dialect(d))
    }

    fn begin_auth(&self) -> Result<String, ProviderError> {
        self.client
            .get(self.url("/health"))
            .send()
            .ok()
            .filter(|r| r.status().is_success())
            .ok_or_else(|| ProviderError::AuthEndpointUnavailable(self.base_url.clone()))?;
        Ok(format!(
            "{}/oauth/authorize?client_id={}",
            self.base_url, CLIENT_ID
        ))
    }

    fn exchange_code(&self, access_code: &str) -> Result<ProviderSession, ProviderError> {
        let req = self
            .client
            .post(self.url("/oauth/token"))
            .json(&WireTokenRequest {
                code: access_code.trim().to_string(),
            });
        let resp = req
            .send()
            .map_err(|e| ProviderError::AuthEndpointUnavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(match error_from_response(resp) {
                ProviderError::TransientIo(m) => ProviderError::AuthEndpointUnavailable(m),
                _ => ProviderError::AuthCodeRejected,
            });
        }
        let token: WireToken = Self::json(resp)?;
        if token.access_token.is_empty() {
            return Err(ProviderError::Protocol("empty access token".into()));
        }
        Ok(ProviderSession {
            service: ServiceId::Simdrive,
            user: token.user,
            access_token: token.access_token,
            obtained_at: truncate_millis(Utc::now()),
        })
    }

    fn list_files(
        &self,
        session: &ProviderSession,
        page_token: Option<&str>,
    ) -> Result<FilePage, ProviderError> {
        let mut query = vec![("page_size", self.page_size.to_string())];
        if let Some(t) = page_token {
            query.push(("page_token", t.to_string()));
        }
        let listing: WireListing =
            Self::json(self.send(self.authed(session, "/files").query(&query))?)?;
        let files = listing
            .files
            .iter()
            .map(|w| w.to_cloud_file().map_err(ProviderError::Protocol))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FilePage {
            files,
            next_page_token: listing.next_page_token,
            requested_page_size: self.page_size,
        })
    }

    fn file_metadata(
        &self,
        session: &ProviderSession,
        file_id: &str,
    ) -> Result<FileMetadata, ProviderError> {
        let resp = self
            .send(self.authed(session, &format!("/files/{}", encode(file_id))))
            .map_err(|e| with_file(e, file_id))?;
        let raw = resp
            .bytes()
            .map_err(|e| ProviderError::TransientIo(e.to_string()))?
            .to_vec();
        let detail: WireFileDetail =
            serde_json::from_slice(&raw).map_err(|e| ProviderError::Protocol(e.to_string()))?;
        let file = detail
            .file
            .to_cloud_file()
            .map_err(ProviderError::Protocol)?;
        Ok(FileMetadata { raw, file })
    }

    fn list_revisions(
        &self,
        session: &ProviderSession,
        file_id: &str,
    ) -> Result<Vec<Revision>, ProviderError> {
        let resp = self
            .send(self.authed(session, &format!("/files/{}/revisions", encode(file_id))))
            .map_err(|e| with_file(e, file_id))?;
        let body: WireRevisions = Self::json(resp)?;
        let mut revs = body
            .revisions
            .iter()
            .map(|r| r.to_revision().map_err(ProviderError::Protocol))
            .collect::<Result<Vec<_>, _>>()?;
        sort_revisions(&mut revs);
        Ok(revs)
    }

    fn download_revision(
        &self,
        session: &ProviderSession,
        file_id: &str,
        revision_id: &str,
        sink: &mut dyn Write,
    ) -> Result<u64, ProviderError> {
        let path = format!(
            "/files/{}/revisions/{}/content",
            encode(file_id),
            encode(revision_id)
        );
        let resp = self
            .send(self.authed(session, &path))
            .map_err(|e| match e {
                ProviderError::NoSuchRevision { .. } => ProviderError::NoSuchRevision {
                    file_id: file_id.to_string(),
                    revision_id: revision_id.to_string(),
                },
                other => with_file(other, file_id),
            })?;
        Self::stream(resp, sink)
    }

    fn export_snapshot(
        &self,
        session: &ProviderSession,
        file_id: &str,
        format: &str,
        sink: &mut dyn Write,
    ) -> Result<u64, ProviderError> {
        let req = self
            .authed(session, &format!("/files/{}/export", encode(file_id)))
            .query(&[("format", format)]);
        let resp = self.send(req).map_err(|e| match e {
            ProviderError::ExportFormatUnsupported { .. } => {
                ProviderError::ExportFormatUnsupported {
                    file_id: file_id.to_string(),
                    format: format.to_string(),
                }
            }
            other => with_file(other, file_id),
        })?;
        Self::stream(resp, sink)
    }
}

fn with_file(e: ProviderError, file_id: &str) -> ProviderError {
    match e {
        ProviderError::NoSuchFile(_) => ProviderError::NoSuchFile(file_id.to_string()),
        ProviderError::CloudNativeNoContent(_) => {
            ProviderError::CloudNativeNoContent(file_id.to_string())
        }
        ProviderError::NotCloudNative(_) => ProviderError::NotCloudNative(file_id.to_string()),
        other => other,
    }
}

/// Percent-encodes a path segment.
fn encode(segment: &str) -> String {
    let mut out = String::with_capacity(segment.len());
    for b in segment.bytes() {
        if b.is_ascii_alphanumeric() || b"-._~".contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}
