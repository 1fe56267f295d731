use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::ServiceError;

/// Service settings, read from a TOML file and then overridden by
/// `MICROGRAPHIA_*` environment variables.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    /// Trained model artifact. The service refuses to start without one.
    pub artifact: PathBuf,
    /// Directory holding the journal and image blobs.
    pub store: PathBuf,
    /// Largest accepted request body, in bytes.
    pub upload_limit: usize,
    /// Session lifetime in seconds.
    pub token_ttl: i64,
    /// Optional directory of static files served at `/`.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            artifact: PathBuf::from("model.json"),
            store: PathBuf::from("portal-data"),
            upload_limit: 25 * 1024 * 1024,
            token_ttl: 12 * 3600,
            static_dir: None,
        }
    }
}

pub const ENV_PREFIX: &str = "MICROGRAPHIA_";

impl ServiceConfig {
    /// Relative paths in the file resolve against the file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ServiceConfig =
            toml::from_str(&text).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            for p in [&mut cfg.artifact, &mut cfg.store] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
            if let Some(p) = cfg.static_dir.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Applies `MICROGRAPHIA_LISTEN`, `_ARTIFACT`, `_STORE`, `_UPLOAD_LIMIT`,
    /// `_TOKEN_TTL` and `_STATIC_DIR` from `lookup`.
    pub fn with_overrides(mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ServiceError> {
        let get = |name: &str| lookup(&format!("{ENV_PREFIX}{name}"));
        let bad = |name: &str, v: &str| ServiceError::Config(format!("{ENV_PREFIX}{name}: cannot parse `{v}`"));
        if let Some(v) = get("LISTEN") {
            self.listen = v.parse().map_err(|_| bad("LISTEN", &v))?;
        }
        if let Some(v) = get("ARTIFACT") {
            self.artifact = v.into();
        }
        if let Some(v) = get("STORE") {
            self.store = v.into();
        }
        if let Some(v) = get("UPLOAD_LIMIT") {
            self.upload_limit = v.parse().map_err(|_| bad("UPLOAD_LIMIT", &v))?;
        }
        if let Some(v) = get("TOKEN_TTL") {
            self.token_ttl = v.parse().map_err(|_| bad("TOKEN_TTL", &v))?;
        }
        if let Some(v) = get("STATIC_DIR") {
            self.static_dir = Some(v.into());
        }
        if self.token_ttl <= 0 {
            return Err(ServiceError::Config("token_ttl must be positive".into()));
        }
        Ok(self)
    }

    /// File (if any) plus process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ServiceError> {
        let base = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        base.with_overrides(|k| std::env::var(k).ok())
    }
}
