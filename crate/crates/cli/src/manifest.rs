//! Content-addressed record of a run's artifacts: `artifact,file,sha256`,
//! where the hash covers a header file followed by its binary payload.

use std::fs;
use std::path::Path;

use hdrec_core::io::payload_path;
use hdrec_core::TomoError;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_HEADER: &str = "artifact,file,sha256";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub artifact: String,
    pub file: String,
    pub sha256: String,
}

/// SHA-256 of `path`, followed by its `.raw` payload for `.hdr` headers.
pub fn artifact_hash(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(fs::read(path).map_err(|e| TomoError::io(path, e))?);
    if path.extension().is_some_and(|e| e == "hdr") {
        let payload = payload_path(path);
        hasher.update(fs::read(&payload).map_err(|e| TomoError::io(&payload, e))?);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Hashes `dir/file` and records it under `artifact`.
    pub fn add(&mut self, dir: &Path, artifact: &str, file: &str) -> Result<()> {
        let sha256 = artifact_hash(&dir.join(file))?;
        self.entries.push(ManifestEntry {
            artifact: artifact.into(),
            file: file.into(),
            sha256,
        });
        Ok(())
    }

    pub fn get(&self, artifact: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.artifact == artifact)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{MANIFEST_HEADER}\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{}\n", e.artifact, e.file, e.sha256));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| TomoError::io(path, e).into())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let csv_err = |message: String| CliError::Csv {
            path: path.display().to_string(),
            message,
        };
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(e.to_string()))?;
        let header = reader.headers().map_err(|e| csv_err(e.to_string()))?;
        if header.iter().collect::<Vec<_>>().join(",") != MANIFEST_HEADER {
            return Err(csv_err(format!("expected header '{MANIFEST_HEADER}'")));
        }
        let mut entries = Vec::new();
        for record in reader.records() {
            let r = record.map_err(|e| csv_err(e.to_string()))?;
            entries.push(ManifestEntry {
                artifact: r[0].to_string(),
                file: r[1].to_string(),
                sha256: r[2].to_string(),
            });
        }
        Ok(Manifest { entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_covers_payload() {
        let dir = tempfile::tempdir().unwrap();
        let hdr = dir.path().join("a.hdr");
        fs::write(&hdr, "magic=X\n").unwrap();
        fs::write(payload_path(&hdr), [1u8, 2, 3]).unwrap();
        let h1 = artifact_hash(&hdr).unwrap();
        fs::write(payload_path(&hdr), [1u8, 2, 4]).unwrap();
        assert_ne!(artifact_hash(&hdr).unwrap(), h1);

        let csv = dir.path().join("b.csv");
        fs::write(&csv, "").unwrap();
        assert_eq!(
            artifact_hash(&csv).unwrap(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("s.csv"), "x\n").unwrap();
        let mut m = Manifest::default();
        m.add(dir.path(), "scheme", "s.csv").unwrap();
        let path = dir.path().join("manifest.csv");
        m.write(&path).unwrap();
        assert_eq!(Manifest::read(&path).unwrap(), m);
        assert_eq!(m.get("scheme").unwrap().file, "s.csv");
        assert!(m.get("model").is_none());
    }
}
