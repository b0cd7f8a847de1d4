//! Persistent session cache: `<config_dir>/<service_id>.dat`.
//!
//! The file is plain UTF-8 `key=value` lines (`service`, `user`, `token`,
//! `obtained_at`). Tokens are stored unencrypted; protect the config
//! directory accordingly.

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use crate::provider::{ProviderError, ProviderSession, ServiceId};
use crate::timefmt::{format_timestamp, parse_timestamp, truncate_millis};

#[derive(Debug, Clone)]
pub struct TokenStore {
    dir: PathBuf,
}

impl TokenStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        TokenStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, service: ServiceId) -> PathBuf {
        self.dir.join(format!("{}.dat", service.as_str()))
    }

    pub fn store(&self, session: &ProviderSession) -> Result<PathBuf, ProviderError> {
        let path = self.path_for(session.service);
        let io_err = |source| ProviderError::TokenStoreIo {
            path: path.clone(),
            source,
        };
        fs::create_dir_all(&self.dir).map_err(io_err)?;
        let body = format!(
            "service={}\nuser={}\ntoken={}\nobtained_at={}\n",
            session.service.as_str(),
            session.user,
            session.access_token,
            format_timestamp(&session.obtained_at),
        );
        fs::write(&path, body).map_err(io_err)?;
        Ok(path)
    }

    /// Loads the cached session, or `NotAuthenticated` when there is none.
    pub fn load(&self, service: ServiceId) -> Result<ProviderSession, ProviderError> {
        let path = self.path_for(service);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == ErrorKind::NotFound => {
                return Err(ProviderError::NotAuthenticated(service))
            }
            Err(source) => return Err(ProviderError::TokenStoreIo { path, source }),
        };
        let mut stored_service = None;
        let mut user = None;
        let mut token = None;
        let mut obtained_at = None;
        for line in text.lines() {
            let Some((k, v)) = line.split_once('=') else {
                continue;
            };
            match k.trim() {
                "service" => stored_service = v.trim().parse::<ServiceId>().ok(),
                "user" => user = Some(v.trim().to_string()),
                "token" => token = Some(v.trim().to_string()),
                "obtained_at" => obtained_at = parse_timestamp(v.trim()),
                _ => {}
            }
        }
        match (stored_service, user, token, obtained_at) {
            (Some(s), Some(user), Some(token), Some(obtained_at))
                if s == service && !token.is_empty() =>
            {
                Ok(ProviderSession {
                    service,
                    user,
                    access_token: token,
                    obtained_at,
                })
            }
            _ => Err(ProviderError::NotAuthenticated(service)),
        }
    }

    pub fn remove(&self, service: ServiceId) -> Result<(), ProviderError> {
        let path = self.path_for(service);
        match fs::remove_file(&path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(()),
            Err(source) => Err(ProviderError::TokenStoreIo { path, source }),
        }
    }
}

/// Normalizes a session to what survives a store/load cycle.
pub fn stored_form(session: &ProviderSession) -> ProviderSession {
    ProviderSession {
        obtained_at: truncate_millis(session.obtained_at),
        ..session.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Utc;

    fn session() -> ProviderSession {
        ProviderSession {
            service: ServiceId::Simdrive,
            user: "investigator@simdrive.test".into(),
            access_token: "simtok-1-1".into(),
            obtained_at: Utc::now(),
        }
    }

    #[test]
    fn store_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let store = TokenStore::new(dir.path().join("config"));
        let s = session();
        let path = store.store(&s).unwrap();
        assert_eq!(path, dir.path().join("config").join("simdrive.dat"));
        assert!(path.exists());
        assert_eq!(store.load(ServiceId::Simdrive).unwrap(), stored_form(&s));
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            "service=simdrive\nuser=investigator@simdrive.test\ntoken=simtok-1-1\nobtained_at="
        ));
    }

    #[test]
    fn missing_file_means_not_authenticated() {
        let dir = tempfile::tempdir().unwrap();
        let store = TokenStore::new(dir.path());
        store.store(&session()).unwrap();
        store.remove(ServiceId::Simdrive).unwrap();
        let err = store.load(ServiceId::Simdrive).unwrap_err();
        assert_eq!(err.code(), "NOT_AUTHENTICATED");
        assert_eq!(
            store.load(ServiceId::Box).unwrap_err().code(),
            "NOT_AUTHENTICATED"
        );
    }

    #[test]
    fn unwritable_dir_reports_store_io() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, b"x").unwrap();
        let store = TokenStore::new(blocker.join("config"));
        assert_eq!(
            store.store(&session()).unwrap_err().code(),
            "TOKEN_STORE_IO"
        );
    }

    #[test]
    fn wrong_service_in_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = TokenStore::new(dir.path());
        std::fs::write(
            store.path_for(ServiceId::Gdrive),
            "service=box\nuser=u\ntoken=t\nobtained_at=2015-06-25T03:48:43.600Z\n",
        )
        .unwrap();
        assert!(store.load(ServiceId::Gdrive).is_err());
    }
}
