//! Video summary: keyframes, patch grid, and per-patch embeddings and boxes.

mod exchange;
mod frame;
mod grid;
mod keyframe;
mod provider;

use std::collections::{HashMap, HashSet};

use log::warn;
use rayon::prelude::*;

pub use exchange::{read_exchange, read_exchange_file, write_exchange, write_exchange_file, ExchangeRecord};
pub use frame::{read_frame_sequences, read_frame_sequences_file, Frame, FrameLine, FrameSequence, LabeledRegion};
pub use grid::{build_patch_grid, PatchGrid};
pub use keyframe::{extract_keyframes, mean_abs_change, KeyframePolicy};
pub use provider::{class_direction, EmbeddingProvider, FileProvider, ProviderOutput, SyntheticProvider};

use crate::error::{Error, Result};
use crate::model::{normalize, DenseVector, PatchIdentity, PatchRecord};
use crate::scalar::Scalar;

/// Records produced from one frame.
#[derive(Debug, Clone)]
pub struct FrameSummary<T> {
    pub records: Vec<PatchRecord<T>>,
    pub dropped: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SummaryStats {
    pub frames: usize,
    pub keyframes: usize,
    pub patches: usize,
    pub dropped: usize,
}

/// The vector collection: every kept patch with the timestamp of its frame.
#[derive(Debug, Clone, Default)]
pub struct Collection<T> {
    records: Vec<PatchRecord<T>>,
    timestamps: Vec<f64>,
    seen: HashSet<PatchIdentity>,
    pub stats: SummaryStats,
}

impl<T: Scalar> Collection<T> {
    pub fn new() -> Self {
        Self { records: Vec::new(), timestamps: Vec::new(), seen: HashSet::new(), stats: SummaryStats::default() }
    }

    pub fn push(&mut self, record: PatchRecord<T>, timestamp: f64) -> Result<()> {
        if let Some(first) = self.records.first() {
            crate::model::check_dim(first.embedding.dim(), record.embedding.dim())?;
        }
        if !self.seen.insert(record.identity.clone()) {
            return Err(Error::DuplicatePatch(record.identity.to_string()));
        }
        self.records.push(record);
        self.timestamps.push(timestamp);
        self.stats.patches += 1;
        Ok(())
    }

    pub fn records(&self) -> &[PatchRecord<T>] {
        &self.records
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PatchRecord<T>, f64)> {
        self.records.iter().zip(self.timestamps.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.records.first().map(|r| r.embedding.dim())
    }

    /// Exchange records in collection order.
    pub fn to_exchange(&self) -> Vec<ExchangeRecord<T>> {
        self.iter()
            .map(|(r, ts)| ExchangeRecord {
                video_id: r.identity.video_id.clone(),
                frame_id: r.identity.frame_id.clone(),
                patch_index: r.identity.patch_index,
                embedding: r.embedding.values().to_vec(),
                bbox: r.bbox,
                timestamp: Some(ts),
            })
            .collect()
    }

    /// Builds a collection from exchange records, normalizing embeddings.
    ///
    /// Zero embeddings are dropped and counted. A record without a
    /// timestamp gets the ordinal of its frame within its video.
    pub fn from_exchange(records: Vec<ExchangeRecord<T>>) -> Result<Self> {
        let mut out = Self::new();
        let mut frame_ordinals: HashMap<(String, String), usize> = HashMap::new();
        let mut frames_per_video: HashMap<String, usize> = HashMap::new();
        for r in records {
            let key = (r.video_id.clone(), r.frame_id.clone());
            let ordinal = *frame_ordinals.entry(key).or_insert_with(|| {
                let n = frames_per_video.entry(r.video_id.clone()).or_default();
                *n += 1;
                *n - 1
            });
            let timestamp = r.timestamp.unwrap_or(ordinal as f64);
            let embedding = match normalize(&DenseVector::new(r.embedding)?) {
                Ok(e) => e,
                Err(Error::ZeroVector) => {
                    out.stats.dropped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let identity = PatchIdentity::new(r.video_id, r.frame_id, r.patch_index);
            out.push(PatchRecord { identity, embedding, bbox: r.bbox }, timestamp)?;
        }
        out.stats.frames = frame_ordinals.len();
        out.stats.keyframes = frame_ordinals.len();
        if out.stats.dropped > 0 {
            warn!("dropped {} zero-vector patches", out.stats.dropped);
        }
        Ok(out)
    }
}

/// Embeds every patch of one frame. Zero-vector patches are dropped and counted.
pub fn summarize_frame<T: Scalar, P: EmbeddingProvider<T> + ?Sized>(
    video_id: &str,
    frame: &Frame,
    grid: &PatchGrid,
    provider: &P,
    dim: usize,
) -> Result<FrameSummary<T>> {
    let outputs = provider.embed_patches(video_id, frame, grid)?;
    if outputs.len() != grid.len() {
        return Err(Error::Provider(format!(
            "provider returned {} outputs for a {}-patch grid",
            outputs.len(),
            grid.len()
        )));
    }
    let (w, h) = (grid.width() as f64, grid.height() as f64);
    let mut records = Vec::with_capacity(outputs.len());
    let mut dropped = 0;
    for (k, (out, default)) in outputs.into_iter().zip(grid.default_boxes()).enumerate() {
        if out.embedding.dim() != dim {
            return Err(Error::ProviderDimensionMismatch { expected: dim, found: out.embedding.dim() });
        }
        let embedding = match normalize(&out.embedding) {
            Ok(e) => e,
            Err(Error::ZeroVector) => {
                dropped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let bbox = default.offset_clamped(out.box_offset, w, h)?;
        records.push(PatchRecord {
            identity: PatchIdentity::new(video_id, frame.frame_id.clone(), k as u32),
            embedding,
            bbox,
        });
    }
    if dropped > 0 {
        warn!("{video_id}/{}: dropped {dropped} zero-vector patches", frame.frame_id);
    }
    Ok(FrameSummary { records, dropped })
}

/// Keyframes -> patch grid -> embeddings, assembled in timestamp order.
pub fn build_collection<T: Scalar, P: EmbeddingProvider<T> + ?Sized>(
    seq: &FrameSequence,
    policy: KeyframePolicy,
    patch_size: usize,
    provider: &P,
    dim: usize,
) -> Result<Collection<T>> {
    let keyframes = extract_keyframes(seq, policy)?;
    let grid = build_patch_grid(seq.height(), seq.width(), patch_size)?;
    let frames = seq.frames();
    let summarize = |&i: &usize| summarize_frame(seq.video_id(), &frames[i], &grid, provider, dim);
    let summaries: Vec<FrameSummary<T>> = if provider.is_concurrent() {
        keyframes.par_iter().map(summarize).collect::<Result<_>>()?
    } else {
        keyframes.iter().map(summarize).collect::<Result<_>>()?
    };

    let mut collection = Collection::new();
    for (summary, &i) in summaries.into_iter().zip(&keyframes) {
        collection.stats.dropped += summary.dropped;
        for record in summary.records {
            collection.push(record, frames[i].timestamp)?;
        }
    }
    collection.stats.frames = seq.len();
    collection.stats.keyframes = keyframes.len();
    Ok(collection)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BoundingBox;

    struct FixedProvider {
        dim: usize,
        offset: [f64; 4],
        zero_at: Option<usize>,
    }

    impl EmbeddingProvider<f32> for FixedProvider {
        fn embed_patches(&self, _: &str, _: &Frame, grid: &PatchGrid) -> Result<Vec<ProviderOutput<f32>>> {
            (0..grid.len())
                .map(|k| {
                    let mut v = vec![0.0f32; self.dim];
                    if Some(k) != self.zero_at {
                        v[k % self.dim] = 2.0;
                    }
                    Ok(ProviderOutput { embedding: DenseVector::new(v)?, box_offset: self.offset })
                })
                .collect()
        }
    }

    fn frames(n: usize, h: usize, w: usize) -> FrameSequence {
        let frames =
            (0..n).map(|i| Frame::new(format!("f{i:04}"), i as f64, vec![(i % 256) as u8; h * w * 3])).collect();
        FrameSequence::new("vid", h, w, frames).unwrap()
    }

    #[test]
    fn zero_offsets_keep_default_boxes() {
        let grid = build_patch_grid(64, 96, 32).unwrap();
        let p = FixedProvider { dim: 4, offset: [0.0; 4], zero_at: None };
        let s = summarize_frame("vid", &Frame::new("f", 0.0, vec![0; 64 * 96 * 3]), &grid, &p, 4).unwrap();
        assert_eq!(s.records.len(), 6);
        for (r, d) in s.records.iter().zip(grid.default_boxes()) {
            assert_eq!(&r.bbox, d);
            assert!((r.embedding.norm() - 1.0).abs() < 1e-6);
        }
        assert_eq!(s.records[4].identity, PatchIdentity::new("vid", "f", 4));
    }

    #[test]
    fn offsets_are_clamped_to_frame() {
        let grid = build_patch_grid(64, 64, 32).unwrap();
        let p = FixedProvider { dim: 4, offset: [-100.0, -5.0, 100.0, 100.0], zero_at: None };
        let s = summarize_frame("v", &Frame::new("f", 0.0, vec![0; 64 * 64 * 3]), &grid, &p, 4).unwrap();
        assert_eq!(s.records[0].bbox, BoundingBox::new(0.0, 0.0, 64.0, 64.0).unwrap());
        assert_eq!(s.records[3].bbox, BoundingBox::new(0.0, 27.0, 64.0, 64.0).unwrap());
    }

    #[test]
    fn zero_vectors_dropped_and_dimension_checked() {
        let grid = build_patch_grid(64, 64, 32).unwrap();
        let frame = Frame::new("f", 0.0, vec![0; 64 * 64 * 3]);
        let p = FixedProvider { dim: 4, offset: [0.0; 4], zero_at: Some(2) };
        let s = summarize_frame("v", &frame, &grid, &p, 4).unwrap();
        assert_eq!((s.records.len(), s.dropped), (3, 1));
        assert!(matches!(
            summarize_frame("v", &frame, &grid, &p, 8),
            Err(Error::ProviderDimensionMismatch { expected: 8, found: 4 })
        ));
    }

    #[test]
    fn synthetic_provider_is_bit_reproducible() {
        let grid = build_patch_grid(64, 64, 32).unwrap();
        let frame = Frame::new("f", 0.0, (0..64 * 64 * 3).map(|i| (i * 7 % 251) as u8).collect());
        let p = SyntheticProvider::new(42, 64);
        let a = summarize_frame::<f32, _>("v", &frame, &grid, &p, 64).unwrap();
        let b = summarize_frame::<f32, _>("v", &frame, &grid, &p, 64).unwrap();
        assert_eq!(a.records.len(), 4);
        for (x, y) in a.records.iter().zip(&b.records) {
            let xb: Vec<u32> = x.embedding.values().iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u32> = y.embedding.values().iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
            assert_eq!(x.bbox, y.bbox);
        }
        let other = summarize_frame::<f32, _>("v", &frame, &grid, &SyntheticProvider::new(43, 64), 64).unwrap();
        assert_ne!(a.records[0].embedding, other.records[0].embedding);
    }

    #[test]
    fn synthetic_offsets_within_quarter_patch() {
        let grid = build_patch_grid(128, 128, 32).unwrap();
        let frame = Frame::new("f", 0.0, (0..128 * 128 * 3).map(|i| (i % 253) as u8).collect());
        let outs: Vec<ProviderOutput<f32>> = SyntheticProvider::new(1, 16).embed_patches("v", &frame, &grid).unwrap();
        assert!(outs.iter().flat_map(|o| o.box_offset).all(|o| (-8.0..=8.0).contains(&o)));
    }

    #[test]
    fn collection_sizes() {
        let p = FixedProvider { dim: 4, offset: [0.0; 4], zero_at: None };
        let one =
            build_collection(&frames(1, 100, 64), KeyframePolicy::FixedInterval { interval: 1 }, 32, &p, 4).unwrap();
        assert_eq!(one.len(), 6);

        let seq = frames(10, 768, 768);
        let big = build_collection(&seq, KeyframePolicy::FixedInterval { interval: 1 }, 32, &p, 4).unwrap();
        assert_eq!(big.len(), 5760);
        assert_eq!(big.stats, SummaryStats { frames: 10, keyframes: 10, patches: 5760, dropped: 0 });
        assert_eq!(big.timestamps()[576], 1.0);

        let empty = FrameSequence::new("v", 64, 64, vec![]).unwrap();
        assert!(matches!(
            build_collection(&empty, KeyframePolicy::FixedInterval { interval: 1 }, 32, &p, 4),
            Err(Error::EmptySequence)
        ));
    }

    #[test]
    fn collection_rejects_duplicate_identity() {
        let mut c = Collection::<f32>::new();
        let rec = PatchRecord::new(
            PatchIdentity::new("v", "f", 0),
            DenseVector::new(vec![1.0, 0.0]).unwrap(),
            BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
        )
        .unwrap();
        c.push(rec.clone(), 0.0).unwrap();
        assert!(matches!(c.push(rec, 0.0), Err(Error::DuplicatePatch(_))));
    }

    #[test]
    fn exchange_round_trip_drops_zero_vectors() {
        let recs = vec![
            ExchangeRecord {
                video_id: "v".into(),
                frame_id: "a".into(),
                patch_index: 0,
                embedding: vec![3.0f32, 4.0],
                bbox: BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
                timestamp: None,
            },
            ExchangeRecord {
                video_id: "v".into(),
                frame_id: "b".into(),
                patch_index: 0,
                embedding: vec![0.0f32, 0.0],
                bbox: BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
                timestamp: None,
            },
            ExchangeRecord {
                video_id: "v".into(),
                frame_id: "c".into(),
                patch_index: 0,
                embedding: vec![0.0f32, 1.0],
                bbox: BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
                timestamp: Some(9.5),
            },
        ];
        let c = Collection::from_exchange(recs).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.stats.dropped, 1);
        assert_eq!(c.timestamps(), &[0.0, 9.5]);
        assert_eq!(c.records()[0].embedding.values(), &[0.6, 0.8]);
    }
}
