//! Inverted multi-index over product-quantized patch embeddings.
//!
//! Every patch is encoded with the trained codebooks and appended, once per
//! subspace, to the posting list of its assigned centroid. A posting holds
//! the patch handle, the full-precision residual of that subspace part, the
//! predicted box and a frame handle. Handles are dense and assigned in
//! ingestion order.

mod persist;
mod shared;

use std::collections::HashMap;

pub use persist::{FORMAT_VERSION, MAGIC};
pub use shared::SharedIndex;

use crate::error::{Error, Result};
use crate::model::{check_dim, BoundingBox, PatchIdentity, PatchRecord};
use crate::pq::{PQConfig, ProductQuantizer, TrainReport};
use crate::scalar::Scalar;
use crate::summary::Collection;

/// Borrowed view of one posting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posting<'a> {
    pub patch_ref: u64,
    pub frame_ref: u64,
    pub bbox: BoundingBox,
    pub residual: &'a [f64],
}

/// Columnar posting list of one `(subspace, centroid)` cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PostingList {
    sub_dim: usize,
    handles: Vec<u64>,
    frame_refs: Vec<u64>,
    boxes: Vec<BoundingBox>,
    residuals: Vec<f64>,
}

impl PostingList {
    fn new(sub_dim: usize) -> Self {
        Self { sub_dim, ..Default::default() }
    }

    fn push(&mut self, handle: u64, frame_ref: u64, bbox: BoundingBox, residual: &[f64]) -> usize {
        debug_assert_eq!(residual.len(), self.sub_dim);
        self.handles.push(handle);
        self.frame_refs.push(frame_ref);
        self.boxes.push(bbox);
        self.residuals.extend_from_slice(residual);
        self.handles.len() - 1
    }

    pub fn len(&self) -> usize {
        self.handles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.handles.is_empty()
    }

    pub fn handles(&self) -> &[u64] {
        &self.handles
    }

    pub fn residual(&self, slot: usize) -> &[f64] {
        &self.residuals[slot * self.sub_dim..(slot + 1) * self.sub_dim]
    }

    pub fn get(&self, slot: usize) -> Posting<'_> {
        Posting {
            patch_ref: self.handles[slot],
            frame_ref: self.frame_refs[slot],
            bbox: self.boxes[slot],
            residual: self.residual(slot),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Posting<'_>> {
        (0..self.len()).map(|i| self.get(i))
    }
}

/// `(video_id, frame_id)` of an indexed frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FrameKey {
    pub video_id: String,
    pub frame_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedMultiIndex<T> {
    quantizer: ProductQuantizer<T>,
    /// `P x M` cells, row-major by subspace.
    postings: Vec<PostingList>,
    patch_table: Vec<PatchIdentity>,
    frame_table: Vec<FrameKey>,
    // derived from the above; rebuilt on load
    codes: Vec<u32>,
    slots: Vec<u32>,
    patch_frame: Vec<u64>,
    frame_members: Vec<Vec<u64>>,
    patch_lookup: HashMap<PatchIdentity, u64>,
    frame_lookup: HashMap<FrameKey, u64>,
}

impl<T: Scalar> InvertedMultiIndex<T> {
    /// Index with trained codebooks and no postings.
    pub fn empty(quantizer: ProductQuantizer<T>) -> Self {
        let config = *quantizer.config();
        Self {
            quantizer,
            postings: (0..config.subspaces * config.centroids).map(|_| PostingList::new(config.sub_dim())).collect(),
            patch_table: Vec::new(),
            frame_table: Vec::new(),
            codes: Vec::new(),
            slots: Vec::new(),
            patch_frame: Vec::new(),
            frame_members: Vec::new(),
            patch_lookup: HashMap::new(),
            frame_lookup: HashMap::new(),
        }
    }

    /// Trains codebooks on the collection, then inserts every record in order.
    pub fn build(collection: &Collection<T>, config: &PQConfig) -> Result<(Self, TrainReport)> {
        Self::build_from_records(collection.records(), config)
    }

    pub fn build_from_records(records: &[PatchRecord<T>], config: &PQConfig) -> Result<(Self, TrainReport)> {
        config.validate()?;
        if records.len() < config.centroids {
            return Err(Error::InsufficientTrainingData { needed: config.centroids, got: records.len() });
        }
        let vectors: Vec<_> = records.iter().map(|r| r.embedding.clone()).collect();
        let (quantizer, report) = ProductQuantizer::train(&vectors, config)?;
        let mut index = Self::empty(quantizer);
        for r in records {
            index.insert(r)?;
        }
        Ok((index, report))
    }

    /// Encodes with the existing codebooks and appends; returns the new handle.
    pub fn insert(&mut self, record: &PatchRecord<T>) -> Result<u64> {
        let config = *self.config();
        check_dim(config.dim, record.embedding.dim())?;
        if self.patch_lookup.contains_key(&record.identity) {
            return Err(Error::DuplicatePatch(record.identity.to_string()));
        }
        let code = self.quantizer.encode(&record.embedding)?;
        let residual = self.quantizer.residual(&record.embedding, &code)?;

        let handle = self.patch_table.len() as u64;
        let key = FrameKey { video_id: record.identity.video_id.clone(), frame_id: record.identity.frame_id.clone() };
        let frame_ref = match self.frame_lookup.get(&key) {
            Some(&f) => f,
            None => {
                let f = self.frame_table.len() as u64;
                self.frame_table.push(key.clone());
                self.frame_lookup.insert(key, f);
                self.frame_members.push(Vec::new());
                f
            }
        };
        for (p, (&m, part)) in code.0.iter().zip(&residual).enumerate() {
            let list = &mut self.postings[p * config.centroids + m as usize];
            let slot = list.push(handle, frame_ref, record.bbox, part);
            self.codes.push(m);
            self.slots.push(slot as u32);
        }
        self.patch_frame.push(frame_ref);
        self.frame_members[frame_ref as usize].push(handle);
        self.patch_lookup.insert(record.identity.clone(), handle);
        self.patch_table.push(record.identity.clone());
        Ok(handle)
    }

    pub fn config(&self) -> &PQConfig {
        self.quantizer.config()
    }

    pub fn quantizer(&self) -> &ProductQuantizer<T> {
        &self.quantizer
    }

    /// Number of indexed patches.
    pub fn len(&self) -> usize {
        self.patch_table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patch_table.is_empty()
    }

    pub fn posting_list(&self, subspace: usize, centroid: usize) -> &PostingList {
        &self.postings[subspace * self.config().centroids + centroid]
    }

    /// Total postings in one subspace; equals `len()` for every subspace.
    pub fn subspace_total(&self, subspace: usize) -> usize {
        let m = self.config().centroids;
        self.postings[subspace * m..(subspace + 1) * m].iter().map(PostingList::len).sum()
    }

    pub fn total_postings(&self) -> usize {
        self.postings.iter().map(PostingList::len).sum()
    }

    pub fn identity(&self, handle: u64) -> Option<&PatchIdentity> {
        self.patch_table.get(handle as usize)
    }

    pub fn handle_of(&self, identity: &PatchIdentity) -> Option<u64> {
        self.patch_lookup.get(identity).copied()
    }

    pub fn patch_table(&self) -> &[PatchIdentity] {
        &self.patch_table
    }

    /// Centroid assignments of a patch, one per subspace.
    pub fn code(&self, handle: u64) -> &[u32] {
        let p = self.config().subspaces;
        &self.codes[handle as usize * p..(handle as usize + 1) * p]
    }

    /// Stored residual of a patch in one subspace.
    pub fn residual(&self, handle: u64, subspace: usize) -> &[f64] {
        let p = self.config().subspaces;
        let i = handle as usize * p + subspace;
        self.posting_list(subspace, self.codes[i] as usize).residual(self.slots[i] as usize)
    }

    pub fn bbox(&self, handle: u64) -> BoundingBox {
        let i = handle as usize * self.config().subspaces;
        self.posting_list(0, self.codes[i] as usize).boxes[self.slots[i] as usize]
    }

    /// Centroids plus residuals, in `f64`.
    pub fn reconstruct(&self, handle: u64) -> Vec<f64> {
        let config = *self.config();
        let mut out = Vec::with_capacity(config.dim);
        for (p, cb) in self.quantizer.codebooks().iter().enumerate() {
            let c = cb.centroid(self.code(handle)[p] as usize);
            out.extend(c.iter().zip(self.residual(handle, p)).map(|(c, r)| c.widen() + r));
        }
        out
    }

    pub fn frame_of(&self, handle: u64) -> u64 {
        self.patch_frame[handle as usize]
    }

    pub fn frame(&self, frame_ref: u64) -> &FrameKey {
        &self.frame_table[frame_ref as usize]
    }

    pub fn frame_count(&self) -> usize {
        self.frame_table.len()
    }

    /// Handles of every patch stored for a frame, ascending.
    pub fn frame_members(&self, frame_ref: u64) -> &[u64] {
        &self.frame_members[frame_ref as usize]
    }

    /// Checks the structural invariants: each patch sits in exactly one cell
    /// per subspace and per-subspace totals equal the patch count.
    pub fn check_structure(&self) -> Result<()> {
        let config = *self.config();
        let n = self.len();
        let mut seen = vec![0u32; n];
        for p in 0..config.subspaces {
            seen.iter_mut().for_each(|s| *s = 0);
            for m in 0..config.centroids {
                for &h in self.posting_list(p, m).handles() {
                    let slot = seen
                        .get_mut(h as usize)
                        .ok_or_else(|| Error::Malformed(format!("posting references unknown handle {h}")))?;
                    *slot += 1;
                    if self.code(h)[p] as usize != m {
                        return Err(Error::Malformed(format!("handle {h} filed under wrong centroid")));
                    }
                }
            }
            if let Some(h) = seen.iter().position(|&c| c != 1) {
                return Err(Error::Malformed(format!("handle {h} appears {} times in subspace {p}", seen[h])));
            }
            if self.subspace_total(p) != n {
                return Err(Error::Malformed(format!("subspace {p} holds {} postings", self.subspace_total(p))));
            }
        }
        Ok(())
    }

    /// Rebuilds derived lookups from postings and tables (used after load).
    fn from_parts(
        quantizer: ProductQuantizer<T>,
        postings: Vec<PostingList>,
        patch_table: Vec<PatchIdentity>,
        frame_table: Vec<FrameKey>,
    ) -> Result<Self> {
        let config = *quantizer.config();
        let n = patch_table.len();
        let mut codes = vec![u32::MAX; n * config.subspaces];
        let mut slots = vec![0u32; n * config.subspaces];
        let mut patch_frame = vec![u64::MAX; n];
        for p in 0..config.subspaces {
            for m in 0..config.centroids {
                let list = &postings[p * config.centroids + m];
                for (slot, (&h, &f)) in list.handles.iter().zip(&list.frame_refs).enumerate() {
                    let h = h as usize;
                    if h >= n || f as usize >= frame_table.len() {
                        return Err(Error::Malformed(format!("posting ({h}, {f}) out of range")));
                    }
                    if codes[h * config.subspaces + p] != u32::MAX {
                        return Err(Error::Malformed(format!("handle {h} repeated in subspace {p}")));
                    }
                    codes[h * config.subspaces + p] = m as u32;
                    slots[h * config.subspaces + p] = slot as u32;
                    if patch_frame[h] != u64::MAX && patch_frame[h] != f {
                        return Err(Error::Malformed(format!("handle {h} has inconsistent frames")));
                    }
                    patch_frame[h] = f;
                }
            }
        }
        if codes.contains(&u32::MAX) {
            return Err(Error::Malformed("patch missing from a subspace".into()));
        }
        let mut frame_members = vec![Vec::new(); frame_table.len()];
        for (h, &f) in patch_frame.iter().enumerate() {
            frame_members[f as usize].push(h as u64);
        }
        let mut patch_lookup = HashMap::with_capacity(n);
        for (h, id) in patch_table.iter().enumerate() {
            if patch_lookup.insert(id.clone(), h as u64).is_some() {
                return Err(Error::Malformed(format!("duplicate patch {id}")));
            }
            let key = &frame_table[patch_frame[h] as usize];
            if key.video_id != id.video_id || key.frame_id != id.frame_id {
                return Err(Error::Malformed(format!("patch {id} linked to frame {}/{}", key.video_id, key.frame_id)));
            }
        }
        let frame_lookup = frame_table.iter().enumerate().map(|(i, k)| (k.clone(), i as u64)).collect();
        Ok(Self {
            quantizer,
            postings,
            patch_table,
            frame_table,
            codes,
            slots,
            patch_frame,
            frame_members,
            patch_lookup,
            frame_lookup,
        })
    }
}
