//! Output directory handling: schema-checked CSV tables, JSON reports and the
//! run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ArtifactEntry {
    pub file: String,
    pub sha256: String,
    /// Data rows for CSV tables; absent for JSON documents.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: Value,
    pub artifacts: Vec<ArtifactEntry>,
}

#[derive(Debug)]
pub enum ArtifactError {
    /// The directory cannot be created or written.
    Unwritable(String),
    /// A row does not satisfy the table schema.
    Schema(String),
}

impl std::fmt::Display for ArtifactError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ArtifactError::Unwritable(m) => write!(f, "output directory: {m}"),
            ArtifactError::Schema(m) => write!(f, "artifact schema: {m}"),
        }
    }
}

/// Writes every artifact of one run and records it for the manifest.
pub struct ArtifactDir {
    root: PathBuf,
    entries: Vec<ArtifactEntry>,
}

/// Each row must serialise to a flat record of finite numbers, strings or
/// booleans, with the same fields in the same order as the first row.
fn check_rows<T: Serialize>(name: &str, rows: &[T]) -> Result<(), ArtifactError> {
    let mut schema: Option<Vec<String>> = None;
    for (i, row) in rows.iter().enumerate() {
        let v = serde_json::to_value(row)
            .map_err(|e| ArtifactError::Schema(format!("{name} row {i}: {e}")))?;
        let Value::Object(map) = v else {
            return Err(ArtifactError::Schema(format!(
                "{name} row {i} is not a record"
            )));
        };
        for (k, val) in &map {
            let ok = match val {
                Value::Number(n) => n.as_f64().is_some_and(f64::is_finite),
                Value::String(_) | Value::Bool(_) => true,
                _ => false,
            };
            if !ok {
                return Err(ArtifactError::Schema(format!(
                    "{name} row {i}: field {k} = {val} is not a finite scalar"
                )));
            }
        }
        let keys: Vec<String> = map.keys().cloned().collect();
        match &schema {
            None => schema = Some(keys),
            Some(s) if *s != keys => {
                return Err(ArtifactError::Schema(format!(
                    "{name} row {i} has fields {keys:?}, expected {s:?}"
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Header line of `T`, taken from the serialisation of a default row so
/// that empty tables still carry their header.
fn header_of<T: Serialize + Default>() -> Result<Vec<u8>, ArtifactError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(T::default())
        .map_err(|e| ArtifactError::Schema(e.to_string()))?;
    let buf = w
        .into_inner()
        .map_err(|e| ArtifactError::Schema(e.to_string()))?;
    let end = buf
        .iter()
        .position(|&b| b == b'\n')
        .map_or(buf.len(), |i| i + 1);
    Ok(buf[..end].to_vec())
}

impl ArtifactDir {
    /// Create `root` if needed and make sure files can be written into it.
    pub fn create(root: &Path) -> Result<Self, ArtifactError> {
        fs::create_dir_all(root)
            .map_err(|e| ArtifactError::Unwritable(format!("{}: {e}", root.display())))?;
        let probe = root.join(".write-probe");
        fs::write(&probe, b"")
            .map_err(|e| ArtifactError::Unwritable(format!("{}: {e}", root.display())))?;
        let _ = fs::remove_file(&probe);
        Ok(Self {
            root: root.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn put(&mut self, file: &str, bytes: &[u8], rows: Option<usize>) -> Result<(), ArtifactError> {
        let path = self.root.join(file);
        fs::write(&path, bytes)
            .map_err(|e| ArtifactError::Unwritable(format!("{}: {e}", path.display())))?;
        self.entries.push(ArtifactEntry {
            file: file.to_string(),
            sha256: sha256_hex(bytes),
            rows,
        });
        Ok(())
    }

    pub fn csv<T: Serialize + Default>(
        &mut self,
        file: &str,
        rows: &[T],
    ) -> Result<(), ArtifactError> {
        check_rows(file, rows)?;
        let mut buf = header_of::<T>()?;
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(Vec::new());
        for r in rows {
            w.serialize(r)
                .map_err(|e| ArtifactError::Schema(format!("{file}: {e}")))?;
        }
        buf.extend(
            w.into_inner()
                .map_err(|e| ArtifactError::Schema(e.to_string()))?,
        );
        self.put(file, &buf, Some(rows.len()))
    }

    pub fn json<T: Serialize>(&mut self, file: &str, value: &T) -> Result<(), ArtifactError> {
        let mut bytes = serde_json::to_vec_pretty(value)
            .map_err(|e| ArtifactError::Schema(format!("{file}: {e}")))?;
        bytes.push(b'\n');
        self.put(file, &bytes, None)
    }

    /// Write `manifest.json` listing every artifact written so far.
    pub fn finish(
        mut self,
        command: &str,
        seed: u64,
        config: Value,
    ) -> Result<Manifest, ArtifactError> {
        let canonical = serde_json::to_vec(
            &serde_json::json!({ "command": command, "seed": seed, "config": config }),
        )
        .map_err(|e| ArtifactError::Schema(e.to_string()))?;
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_sha256: sha256_hex(&canonical),
            config,
            artifacts: std::mem::take(&mut self.entries),
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)
            .map_err(|e| ArtifactError::Schema(e.to_string()))?;
        bytes.push(b'\n');
        let path = self.root.join("manifest.json");
        fs::write(&path, bytes)
            .map_err(|e| ArtifactError::Unwritable(format!("{}: {e}", path.display())))?;
        Ok(manifest)
    }
}
