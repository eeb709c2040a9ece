//! Side store linking patch identities to boxes, frames and timestamps.
//!
//! Backed by an append-only JSONL log (one [`PatchMeta`] per line) and an
//! in-memory map rebuilt on load.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::InvertedMultiIndex;
use crate::model::{BoundingBox, PatchIdentity};
use crate::scalar::Scalar;
use crate::summary::Collection;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchMeta {
    #[serde(flatten)]
    pub identity: PatchIdentity,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub timestamp: f64,
}

impl PatchMeta {
    pub fn video_id(&self) -> &str {
        &self.identity.video_id
    }
}

/// Default metadata path for an index file: `<index>.meta.jsonl`.
pub fn metadata_path(index_path: &Path) -> PathBuf {
    let mut s = index_path.as_os_str().to_owned();
    s.push(".meta.jsonl");
    PathBuf::from(s)
}

#[derive(Debug, Default)]
pub struct MetadataStore {
    records: Vec<PatchMeta>,
    by_identity: HashMap<PatchIdentity, usize>,
    /// video -> frame -> earliest timestamp
    frames: BTreeMap<String, BTreeMap<String, f64>>,
    log: Option<BufWriter<File>>,
}

impl MetadataStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a log file; later `put`s are appended to it.
    pub fn open(path: &Path) -> Result<Self> {
        let mut store = if path.exists() { Self::load(path)? } else { Self::default() };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        store.log = Some(BufWriter::new(file));
        Ok(store)
    }

    /// Reads a log into memory without attaching a writer.
    pub fn load(path: &Path) -> Result<Self> {
        let mut store = Self::default();
        for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let meta: PatchMeta =
                serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
            store.insert_in_memory(meta)?;
        }
        Ok(store)
    }

    /// Writes every record, in insertion order, to a fresh file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for meta in &self.records {
            write_line(&mut w, meta)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn from_collection<T: Scalar>(collection: &Collection<T>) -> Result<Self> {
        let mut store = Self::default();
        for (r, ts) in collection.iter() {
            store.put(PatchMeta { identity: r.identity.clone(), bbox: r.bbox, timestamp: ts })?;
        }
        Ok(store)
    }

    fn insert_in_memory(&mut self, meta: PatchMeta) -> Result<()> {
        if self.by_identity.contains_key(&meta.identity) {
            return Err(Error::DuplicateKey(meta.identity.to_string()));
        }
        let ts = self
            .frames
            .entry(meta.identity.video_id.clone())
            .or_default()
            .entry(meta.identity.frame_id.clone())
            .or_insert(meta.timestamp);
        *ts = ts.min(meta.timestamp);
        self.by_identity.insert(meta.identity.clone(), self.records.len());
        self.records.push(meta);
        Ok(())
    }

    pub fn put(&mut self, meta: PatchMeta) -> Result<()> {
        if self.by_identity.contains_key(&meta.identity) {
            return Err(Error::DuplicateKey(meta.identity.to_string()));
        }
        if let Some(w) = self.log.as_mut() {
            write_line(w, &meta)?;
        }
        self.insert_in_memory(meta)
    }

    pub fn flush(&mut self) -> Result<()> {
        if let Some(w) = self.log.as_mut() {
            w.flush()?;
        }
        Ok(())
    }

    pub fn get(&self, identity: &PatchIdentity) -> Result<&PatchMeta> {
        self.by_identity.get(identity).map(|&i| &self.records[i]).ok_or_else(|| Error::NotFound(identity.to_string()))
    }

    /// Frame IDs of a video in timestamp order (ties by ID); empty when unknown.
    pub fn frames_of(&self, video_id: &str) -> Vec<String> {
        let Some(frames) = self.frames.get(video_id) else {
            return Vec::new();
        };
        let mut out: Vec<(f64, &String)> = frames.iter().map(|(f, &t)| (t, f)).collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        out.into_iter().map(|(_, f)| f.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PatchMeta> {
        self.records.iter()
    }

    /// Every patch referenced by the index resolves here.
    pub fn check_integrity<T: Scalar>(&self, index: &InvertedMultiIndex<T>) -> Result<()> {
        for id in index.patch_table() {
            self.get(id)?;
        }
        Ok(())
    }
}

fn write_line<W: Write>(w: &mut W, meta: &PatchMeta) -> Result<()> {
    serde_json::to_writer(&mut *w, meta).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    Ok(())
}
