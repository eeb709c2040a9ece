//! Embedding providers: the boundary between pixels and vectors.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::DenseVector;
use crate::scalar::Scalar;
use crate::seed::{fnv1a, rng_for};

use super::exchange::{read_exchange_file, ExchangeRecord};
use super::frame::Frame;
use super::grid::PatchGrid;

/// Raw per-patch output of an encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderOutput<T> {
    /// Not necessarily unit-norm; may be all zeros for degenerate patches.
    pub embedding: DenseVector<T>,
    /// Pixel offset added to the patch's default box, per corner.
    pub box_offset: [f64; 4],
}

/// Produces one output per patch of a frame.
pub trait EmbeddingProvider<T: Scalar>: Send + Sync {
    fn embed_patches(&self, video_id: &str, frame: &Frame, grid: &PatchGrid) -> Result<Vec<ProviderOutput<T>>>;

    /// Whether frames may be embedded concurrently.
    fn is_concurrent(&self) -> bool {
        true
    }
}

const CLASS_TAG: u64 = 0xC1A5;
const PATCH_TAG: u64 = 0xBA7C;

/// Unit direction that represents `label` for a given seed.
///
/// Shared by [`SyntheticProvider`] and the synthetic text provider so that
/// `"class:N"` queries land next to class-`N` patches.
pub fn class_direction(seed: u64, label: u32, dim: usize) -> Vec<f64> {
    let mut rng = rng_for(&[seed, CLASS_TAG, label as u64]);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Deterministic stand-in for a patch encoder.
///
/// A patch embedding is its class direction plus Gaussian noise, where the
/// class is read from the frame's labelled regions at the patch centre and
/// the noise stream is keyed by `(seed, class, patch index, patch content)`.
#[derive(Debug, Clone)]
pub struct SyntheticProvider {
    seed: u64,
    dim: usize,
    noise: f64,
}

impl SyntheticProvider {
    pub const DEFAULT_NOISE: f64 = 0.05;

    pub fn new(seed: u64, dim: usize) -> Self {
        Self { seed, dim, noise: Self::DEFAULT_NOISE }
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn patch_hash(frame: &Frame, grid: &PatchGrid, k: usize) -> u64 {
        let s = grid.patch_size();
        let (r, c) = (k / grid.cols(), k % grid.cols());
        let mut bytes = Vec::with_capacity(s * s * 3);
        for y in r * s..(r + 1) * s {
            let start = (y * grid.width() + c * s) * 3;
            bytes.extend_from_slice(&frame.pixels[start..start + s * 3]);
        }
        fnv1a(&bytes)
    }
}

impl<T: Scalar> EmbeddingProvider<T> for SyntheticProvider {
    fn embed_patches(&self, _video_id: &str, frame: &Frame, grid: &PatchGrid) -> Result<Vec<ProviderOutput<T>>> {
        let mut directions: HashMap<u32, Vec<f64>> = HashMap::new();
        let quarter = grid.patch_size() as f64 / 4.0;
        (0..grid.len())
            .map(|k| {
                let (cx, cy) = grid.center(k);
                let label = frame.label_at(cx, cy);
                let base = directions.entry(label).or_insert_with(|| class_direction(self.seed, label, self.dim));
                let content = Self::patch_hash(frame, grid, k);
                let mut rng = rng_for(&[self.seed, PATCH_TAG, label as u64, k as u64, content]);
                let values = base
                    .iter()
                    .map(|b| {
                        let n: f64 = rng.sample(StandardNormal);
                        T::narrow(b + self.noise * n)
                    })
                    .collect();
                let mut box_offset = [0.0; 4];
                for o in &mut box_offset {
                    *o = rng.random_range(-quarter..=quarter);
                }
                Ok(ProviderOutput { embedding: DenseVector::new(values)?, box_offset })
            })
            .collect()
    }
}

/// Serves precomputed embeddings from an exchange JSONL file.
#[derive(Debug, Clone, Default)]
pub struct FileProvider<T> {
    by_frame: HashMap<(String, String), Vec<ExchangeRecord<T>>>,
}

impl<T: Scalar> FileProvider<T> {
    pub fn open(path: &Path) -> Result<Self> {
        Ok(Self::from_records(read_exchange_file(path)?))
    }

    pub fn from_records(records: Vec<ExchangeRecord<T>>) -> Self {
        let mut by_frame: HashMap<(String, String), Vec<ExchangeRecord<T>>> = HashMap::new();
        for r in records {
            by_frame.entry((r.video_id.clone(), r.frame_id.clone())).or_default().push(r);
        }
        for list in by_frame.values_mut() {
            list.sort_by_key(|r| r.patch_index);
        }
        Self { by_frame }
    }
}

impl<T: Scalar> EmbeddingProvider<T> for FileProvider<T> {
    fn embed_patches(&self, video_id: &str, frame: &Frame, grid: &PatchGrid) -> Result<Vec<ProviderOutput<T>>> {
        let key = (video_id.to_string(), frame.frame_id.clone());
        let records = self
            .by_frame
            .get(&key)
            .ok_or_else(|| Error::Provider(format!("no embeddings for {video_id}/{}", frame.frame_id)))?;
        grid.default_boxes()
            .iter()
            .enumerate()
            .map(|(k, default)| {
                let r = records
                    .iter()
                    .find(|r| r.patch_index as usize == k)
                    .ok_or_else(|| Error::Provider(format!("missing patch {k} of {video_id}/{}", frame.frame_id)))?;
                let b = r.bbox;
                Ok(ProviderOutput {
                    embedding: DenseVector::new(r.embedding.clone())?,
                    box_offset: [
                        b.x_min() - default.x_min(),
                        b.y_min() - default.y_min(),
                        b.x_max() - default.x_max(),
                        b.y_max() - default.y_max(),
                    ],
                })
            })
            .collect()
    }
}
