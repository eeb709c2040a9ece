//! Binary index file.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic            8 bytes  "LOVOIDX1"
//! version          u32
//! scalar width     u32      bytes per codebook coordinate (4 = f32)
//! config           u64 dim, u64 subspaces, u64 sub_dim, u64 centroids, u64 train_iters, u64 seed
//! codebooks        P x M x m scalars
//! posting counts   P x M u64
//! postings         per cell, per posting: u64 handle, u64 frame, 4 x f64 box, m x f64 residual
//! patch table      u64 count, then per patch: str video, str frame, u32 patch index
//! frame table      u64 count, then per frame: str video, str frame
//! checksum         u64 FNV-1a of every preceding byte
//! ```
//!
//! Strings are a u32 byte length followed by UTF-8.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{BoundingBox, PatchIdentity};
use crate::pq::{Codebook, PQConfig, ProductQuantizer};
use crate::scalar::Scalar;
use crate::seed::fnv1a;

use super::{FrameKey, InvertedMultiIndex, PostingList};

pub const MAGIC: &[u8; 8] = b"LOVOIDX1";
pub const FORMAT_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Malformed(format!("unexpected end of data at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Malformed("length overflows usize".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Malformed(e.to_string()))
    }
}

impl<T: Scalar> InvertedMultiIndex<T> {
    /// Serializes to the binary format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = *self.config();
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(FORMAT_VERSION);
        w.u32(T::BYTES as u32);
        for v in [c.dim, c.subspaces, c.sub_dim(), c.centroids, c.train_iters] {
            w.u64(v as u64);
        }
        w.u64(c.seed);
        for cb in self.quantizer.codebooks() {
            for &x in cb.raw() {
                x.write_le(&mut w.0);
            }
        }
        for list in &self.postings {
            w.u64(list.len() as u64);
        }
        for list in &self.postings {
            for posting in list.iter() {
                w.u64(posting.patch_ref);
                w.u64(posting.frame_ref);
                for v in posting.bbox.to_array() {
                    w.f64(v);
                }
                for &r in posting.residual {
                    w.f64(r);
                }
            }
        }
        w.u64(self.patch_table.len() as u64);
        for id in &self.patch_table {
            w.str(&id.video_id);
            w.str(&id.frame_id);
            w.u32(id.patch_index);
        }
        w.u64(self.frame_table.len() as u64);
        for f in &self.frame_table {
            w.str(&f.video_id);
            w.str(&f.frame_id);
        }
        let checksum = fnv1a(&w.0);
        w.u64(checksum);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() >= MAGIC.len() && &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::BadMagic);
        }
        if bytes.len() < MAGIC.len() + 8 {
            return Err(Error::ChecksumMismatch);
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        if fnv1a(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
            return Err(Error::ChecksumMismatch);
        }
        let mut r = Reader { buf: body, pos: MAGIC.len() };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch { expected: FORMAT_VERSION, found: version });
        }
        let width = r.u32()? as usize;
        if width != T::BYTES {
            return Err(Error::Malformed(format!("file stores {width}-byte scalars, expected {}", T::BYTES)));
        }
        let (dim, subspaces, sub_dim, centroids, train_iters) =
            (r.usize()?, r.usize()?, r.usize()?, r.usize()?, r.usize()?);
        let seed = r.u64()?;
        let config = PQConfig::new(dim, subspaces, centroids, train_iters, seed)?;
        if config.sub_dim() != sub_dim {
            return Err(Error::Malformed(format!("subspace dimension {sub_dim} inconsistent with config")));
        }
        let mut codebooks = Vec::with_capacity(subspaces);
        for p in 0..subspaces {
            let raw = r.take(centroids * sub_dim * T::BYTES)?;
            let values = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
            codebooks.push(Codebook::new(p, sub_dim, values)?);
        }
        let quantizer = ProductQuantizer::from_codebooks(config, codebooks)?;

        let counts = (0..subspaces * centroids).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        let mut postings = Vec::with_capacity(counts.len());
        for &count in &counts {
            let mut list = PostingList::new(sub_dim);
            let mut residual = vec![0.0; sub_dim];
            for _ in 0..count {
                let handle = r.u64()?;
                let frame = r.u64()?;
                let bbox = BoundingBox::new(r.f64()?, r.f64()?, r.f64()?, r.f64()?)?;
                for x in residual.iter_mut() {
                    *x = r.f64()?;
                }
                list.push(handle, frame, bbox, &residual);
            }
            postings.push(list);
        }

        let n = r.usize()?;
        let mut patch_table = Vec::with_capacity(n.min(body.len()));
        for _ in 0..n {
            let (video, frame) = (r.str()?, r.str()?);
            patch_table.push(PatchIdentity::new(video, frame, r.u32()?));
        }
        let frames = r.usize()?;
        let mut frame_table = Vec::with_capacity(frames.min(body.len()));
        for _ in 0..frames {
            frame_table.push(FrameKey { video_id: r.str()?, frame_id: r.str()? });
        }
        if r.pos != body.len() {
            return Err(Error::Malformed(format!("{} trailing bytes", body.len() - r.pos)));
        }
        Self::from_parts(quantizer, postings, patch_table, frame_table)
    }

    pub fn persist(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
