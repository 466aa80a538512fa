use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Serialize;
use serde_json::Value;

use super::GatewayError;
use crate::canonical;

/// Content-addressed response store: one JSON file per entry under
/// `<root>/<first two hex digits>/<sha256>.json`.
pub struct ResponseCache {
    root: PathBuf,
    write_lock: Mutex<()>,
}

impl ResponseCache {
    pub fn new(root: &Path) -> Self {
        ResponseCache {
            root: root.to_path_buf(),
            write_lock: Mutex::new(()),
        }
    }

    /// SHA-256 over (operation, model, canonical request body).
    pub fn key<R: Serialize>(operation: &str, model: &str, request: &R) -> String {
        let mut material = Vec::new();
        material.extend_from_slice(operation.as_bytes());
        material.push(0);
        material.extend_from_slice(model.as_bytes());
        material.push(0);
        material.extend_from_slice(&canonical::to_compact(request));
        canonical::sha256_hex(&material)
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.root.join(&key[..2]).join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<Value>, GatewayError> {
        let path = self.path_for(key);
        let raw = match std::fs::read(&path) {
            Ok(raw) => raw,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(GatewayError::Cache(format!("{}: {e}", path.display()))),
        };
        let mut entry: Value =
            serde_json::from_slice(&raw).map_err(|e| GatewayError::Cache(format!("{}: {e}", path.display())))?;
        match entry.get_mut("response") {
            Some(v) => Ok(Some(v.take())),
            None => Err(GatewayError::Cache(format!("{}: missing response", path.display()))),
        }
    }

    pub fn put<R: Serialize>(
        &self,
        key: &str,
        operation: &str,
        model: &str,
        request: &R,
        response: &Value,
    ) -> Result<(), GatewayError> {
        let entry = serde_json::json!({
            "key": key,
            "operation": operation,
            "model": model,
            "request_digest": canonical::digest(request),
            "response": response,
        });
        let _guard = self.write_lock.lock().expect("cache lock");
        canonical::write_atomic(&self.path_for(key), &canonical::to_vec(&entry))
            .map_err(|e| GatewayError::Cache(e.to_string()))
    }
}
