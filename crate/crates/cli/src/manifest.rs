//! Run manifests and machine-readable error records.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha1::{Digest, Sha1};

use qlsync_core::Error;

/// SHA-1 of `"blob <len>\0" + bytes`, the object id git assigns a file.
pub fn git_blob_sha1(bytes: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    format!("{:x}", h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha1: String,
}

impl FileEntry {
    pub fn describe(dir: &Path, name: &str) -> std::io::Result<Self> {
        let data = fs::read(dir.join(name))?;
        Ok(FileEntry {
            path: name.to_string(),
            bytes: data.len() as u64,
            sha1: git_blob_sha1(&data),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub experiment: String,
    pub config: Value,
    /// Blob hash of the canonical config JSON.
    pub input_hash: String,
    pub files: Vec<FileEntry>,
    pub metrics: Value,
    /// Present for experiments that check a tolerance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passed: Option<bool>,
    pub started_unix_seconds: f64,
    pub wall_clock_seconds: f64,
}

impl Manifest {
    /// The manifest without its timing fields.
    pub fn without_timestamps(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("manifest serializes");
        let obj = v.as_object_mut().expect("manifest is an object");
        obj.remove("started_unix_seconds");
        obj.remove("wall_clock_seconds");
        v
    }
}

/// Process exit status for an error: 2 bad input, 3 capacity, 4 runtime.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parameter(_) | Error::Json(_) | Error::Validation(_) => 2,
        Error::Capacity { .. } => 3,
        _ => 4,
    }
}

pub fn error_record(e: &Error) -> Value {
    let mut rec = json!({
        "error": {
            "kind": e.kind(),
            "message": e.to_string(),
            "exit_code": exit_code(e),
        }
    });
    if let Error::Capacity {
        required_bytes,
        cap_bytes,
        ..
    } = e
    {
        rec["error"]["required_bytes"] = json!(required_bytes);
        rec["error"]["cap_bytes"] = json!(cap_bytes);
        rec["error"]["advice"] = json!(
            "reduce resource.n_g or resource.n_ql, or raise memory_cap (bytes) if the machine has the memory"
        );
    }
    if let Error::Convergence { residuals, .. } = e {
        rec["error"]["residuals"] = json!(residuals);
    }
    rec
}
