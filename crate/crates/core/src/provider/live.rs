//! Endpoint tables for the commercial services.
//!
//! Only authorization URL construction is implemented; the remaining driver
//! operations report `Unsupported`. The tables record how each simulator
//! endpoint maps onto the provider's own API so a full driver can be written
//! against them.

use std::io::Write;

use super::{
    Dialect, Driver, DriverCapabilities, FileMetadata, FilePage, ProviderError, ProviderSession,
    ServiceDescriptor, ServiceId, CLIENT_ID,
};
use crate::model::Revision;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LiveEndpoints {
    pub authorize: &'static str,
    /// Query string appended before `client_id`, already percent-encoded.
    pub authorize_params: &'static str,
    pub token: &'static str,
    pub list_files: &'static str,
    pub file_metadata: &'static str,
    pub list_revisions: &'static str,
    pub revision_content: &'static str,
    pub export: &'static str,
    pub dialect: Dialect,
}

const OOB: &str = "redirect_uri=urn%3Aietf%3Awg%3Aoauth%3A2.0%3Aoob&response_type=code";

pub fn endpoints(service: ServiceId) -> Option<LiveEndpoints> {
    Some(match service {
        ServiceId::Gdrive => LiveEndpoints {
            authorize: "https://accounts.google.com/o/oauth2/auth",
            authorize_params: "scope=https%3A%2F%2Fwww.googleapis.com%2Fauth%2Fdrive.readonly",
            token: "https://oauth2.googleapis.com/token",
            list_files: "https://www.googleapis.com/drive/v3/files",
            file_metadata: "https://www.googleapis.com/drive/v3/files/{id}",
            list_revisions: "https://www.googleapis.com/drive/v3/files/{id}/revisions",
            revision_content:
                "https://www.googleapis.com/drive/v3/files/{id}/revisions/{rid}?alt=media",
            export: "https://www.googleapis.com/drive/v3/files/{id}/export?mimeType={mime}",
            dialect: Dialect::Hashed,
        },
        ServiceId::Dropbox => LiveEndpoints {
            authorize: "https://www.dropbox.com/oauth2/authorize",
            authorize_params: "token_access_type=offline",
            token: "https://api.dropboxapi.com/oauth2/token",
            list_files: "https://api.dropboxapi.com/2/files/list_folder",
            file_metadata: "https://api.dropboxapi.com/2/files/get_metadata",
            list_revisions: "https://api.dropboxapi.com/2/files/list_revisions",
            revision_content: "https://content.dropboxapi.com/2/files/download",
            export: "https://content.dropboxapi.com/2/files/export",
            dialect: Dialect::Unhashed,
        },
        ServiceId::Onedrive => LiveEndpoints {
            authorize: "https://login.microsoftonline.com/common/oauth2/v2.0/authorize",
            authorize_params: "scope=Files.Read.All%20offline_access",
            token: "https://login.microsoftonline.com/common/oauth2/v2.0/token",
            list_files: "https://graph.microsoft.com/v1.0/me/drive/root/children",
            file_metadata: "https://graph.microsoft.com/v1.0/me/drive/items/{id}",
            list_revisions: "https://graph.microsoft.com/v1.0/me/drive/items/{id}/versions",
            revision_content:
                "https://graph.microsoft.com/v1.0/me/drive/items/{id}/versions/{rid}/content",
            export: "https://graph.microsoft.com/v1.0/me/drive/items/{id}/content?format={format}",
            dialect: Dialect::Unhashed,
        },
        ServiceId::Box => LiveEndpoints {
            authorize: "https://account.box.com/api/oauth2/authorize",
            authorize_params: "scope=root_readonly",
            token: "https://api.box.com/oauth2/token",
            list_files: "https://api.box.com/2.0/folders/0/items",
            file_metadata: "https://api.box.com/2.0/files/{id}",
            list_revisions: "https://api.box.com/2.0/files/{id}/versions",
            revision_content: "https://api.box.com/2.0/files/{id}/content?version={rid}",
            export: "https://api.box.com/2.0/files/{id}/representations",
            dialect: Dialect::Unhashed,
        },
        ServiceId::Simdrive => return None,
    })
}

/// Authorization-only driver for a commercial service.
#[derive(Debug, Clone)]
pub struct LiveDriver {
    service: ServiceId,
    endpoints: LiveEndpoints,
}

impl LiveDriver {
    /// # Panics
    /// For `ServiceId::Simdrive`, which has no live endpoints.
    pub fn new(service: ServiceId) -> Self {
        let endpoints = endpoints(service).expect("live endpoints for a commercial service");
        LiveDriver { service, endpoints }
    }

    fn unsupported<T>(&self, operation: &'static str) -> Result<T, ProviderError> {
        Err(ProviderError::Unsupported {
            service: self.service,
            operation,
        })
    }
}

impl Driver for LiveDriver {
    fn descriptor(&self) -> ServiceDescriptor {
        ServiceDescriptor::new(self.service, self.endpoints.dialect)
    }

    fn capabilities(&self) -> Result<DriverCapabilities, ProviderError> {
        Ok(DriverCapabilities::for_dialect(self.endpoints.dialect))
    }

    fn begin_auth(&self) -> Result<String, ProviderError> {
        Ok(format!(
            "{}?{}&{}&client_id={}",
            self.endpoints.authorize, self.endpoints.authorize_params, OOB, CLIENT_ID
        ))
    }

    fn exchange_code(&self, _access_code: &str) -> Result<ProviderSession, ProviderError> {
        self.unsupported("exchange_code")
    }

    fn list_files(
        &self,
        _session: &ProviderSession,
        _page_token: Option<&str>,
    ) -> Result<FilePage, ProviderError> {
        self.unsupported("list_files")
    }

    fn file_metadata(
        &self,
        _session: &ProviderSession,
        _file_id: &str,
    ) -> Result<FileMetadata, ProviderError> {
        self.unsupported("file_metadata")
    }

    fn list_revisions(
        &self,
        _session: &ProviderSession,
        _file_id: &str,
    ) -> Result<Vec<Revision>, ProviderError> {
        self.unsupported("list_revisions")
    }

    fn download_revision(
        &self,
        _session: &ProviderSession,
        _file_id: &str,
        _revision_id: &str,
        _sink: &mut dyn Write,
    ) -> Result<u64, ProviderError> {
        self.unsupported("download_revision")
    }

    fn export_snapshot(
        &self,
        _session: &ProviderSession,
        _file_id: &str,
        _format: &str,
        _sink: &mut dyn Write,
    ) -> Result<u64, ProviderError> {
        self.unsupported("export_snapshot")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn google_auth_url() {
        let url = LiveDriver::new(ServiceId::Gdrive).begin_auth().unwrap();
        assert!(url.starts_with("https://accounts.google.com/o/oauth2/auth?scope=https"));
        assert!(url.ends_with("client_id=kumoforge"));
    }

    #[test]
    fn every_commercial_service_has_a_table() {
        for id in [
            ServiceId::Gdrive,
            ServiceId::Dropbox,
            ServiceId::Onedrive,
            ServiceId::Box,
        ] {
            let d = LiveDriver::new(id);
            assert!(d.begin_auth().unwrap().starts_with("https://"));
            assert_eq!(d.exchange_code("x").unwrap_err().code(), "UNSUPPORTED");
        }
        assert!(endpoints(ServiceId::Simdrive).is_none());
    }
}
