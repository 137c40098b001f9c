//! Artifact persistence: atomic writes, provenance-stamped JSON documents and
//! JSON-lines record files.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Writes via a sibling temp file and a rename so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// Which configuration and seed produced an artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub provenance: Provenance,
    pub data: T,
}

impl Provenance {
    /// Errors unless `found` was produced by this configuration hash.
    pub fn check(&self, path: &Path, found: &Provenance) -> Result<()> {
        if self.config_hash != found.config_hash {
            return Err(Error::Provenance {
                path: path.to_path_buf(),
                expected: self.config_hash.clone(),
                found: found.config_hash.clone(),
            });
        }
        Ok(())
    }
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Config(format!("serialization failed: {e}")))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = to_json_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::schema(path, e.to_string()))
}

pub fn write_artifact<T: Serialize>(path: &Path, provenance: &Provenance, data: &T) -> Result<()> {
    write_json(
        path,
        &Artifact {
            provenance: provenance.clone(),
            data,
        },
    )
}

/// Reads an artifact, checking provenance when `expected` is given.
pub fn read_artifact<T: DeserializeOwned>(path: &Path, expected: Option<&Provenance>) -> Result<Artifact<T>> {
    let a: Artifact<T> = read_json(path)?;
    if let Some(p) = expected {
        p.check(path, &a.provenance)?;
    }
    Ok(a)
}

/// JSON lines with a provenance header line followed by one record per line.
pub fn write_jsonl<T: Serialize>(path: &Path, provenance: &Provenance, records: &[T]) -> Result<()> {
    let ser = |e: serde_json::Error| Error::Config(format!("serialization failed: {e}"));
    let mut out = serde_json::to_string(&serde_json::json!({ "provenance": provenance })).map_err(ser)?;
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(ser)?);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path, expected: Option<&Provenance>) -> Result<(Provenance, Vec<T>)> {
    #[derive(Deserialize)]
    struct Header {
        provenance: Provenance,
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| Error::schema(path, "missing provenance header"))?;
    let header: Header =
        serde_json::from_str(first).map_err(|e| Error::schema(path, format!("line 1: {e}")))?;
    if let Some(p) = expected {
        p.check(path, &header.provenance)?;
    }
    let records = lines
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::schema(path, format!("line {}: {e}", i + 1))))
        .collect::<Result<Vec<T>>>()?;
    Ok((header.provenance, records))
}
