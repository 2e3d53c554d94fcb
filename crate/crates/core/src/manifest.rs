//! Selection manifests: the ordered, provenance-carrying list of selected
//! example ids written by every selector.
//!
//! JSONL layout: one header object, then one object per selected example.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::traj::TrajectoryStore;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Round {
    Main,
    Topup,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub source: String,
    /// Cluster index within the clustering that produced the entry; `None`
    /// for selectors that do not cluster.
    pub cluster: Option<usize>,
    pub round: Round,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub tool: String,
    pub version: u32,
    pub seed: u64,
    pub budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub config_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionManifest {
    pub header: ManifestHeader,
    pub entries: Vec<ManifestEntry>,
}

impl SelectionManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    /// Checks that ids are unique and all present in `store`.
    pub fn check_against(&self, store: &TrajectoryStore) -> Result<()> {
        let known: HashSet<&str> = store.ids().iter().map(String::as_str).collect();
        let mut seen = HashSet::with_capacity(self.entries.len());
        for e in &self.entries {
            if !known.contains(e.id.as_str()) {
                return Err(Error::Integrity(format!("manifest id `{}` not in store", e.id)));
            }
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Integrity(format!("manifest id `{}` repeated", e.id)));
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, writer: &mut W) -> Result<()> {
        serde_json::to_writer(&mut *writer, &self.header)?;
        writer.write_all(b"\n")?;
        for e in &self.entries {
            serde_json::to_writer(&mut *writer, e)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path.as_ref())?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader
            .lines()
            .enumerate()
            .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
        let (_, first) = lines.next().ok_or_else(|| Error::format("manifest is empty"))?;
        let header: ManifestHeader =
            serde_json::from_str(&first?).map_err(|e| Error::format(format!("manifest header: {e}")))?;
        if header.version != MANIFEST_VERSION {
            return Err(Error::format(format!(
                "unsupported manifest version {}",
                header.version
            )));
        }
        let mut entries = Vec::new();
        for (lineno, line) in lines {
            let entry: ManifestEntry = serde_json::from_str(&line?)
                .map_err(|e| Error::format(format!("manifest line {}: {e}", lineno + 1)))?;
            entries.push(entry);
        }
        Ok(SelectionManifest { header, entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path.as_ref())?))
    }
}

/// Hex SHA-256 of a serialisable configuration plus the input digest.
pub fn config_digest<C: Serialize>(config: &C, input_digest: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(config).expect("config serialises"));
    hasher.update(b"\n");
    hasher.update(input_digest.as_bytes());
    hex::encode(hasher.finalize())
}
