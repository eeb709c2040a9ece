//! Seeded synthetic data: rendered scenes with planted objects, and clustered
//! embedding corpora for recall and latency benchmarks.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::eval::{GroundTruth, Positive};
use crate::model::{normalize, BoundingBox, DenseVector, PatchIdentity, PatchRecord};
use crate::scalar::Scalar;
use crate::seed::{mix, rng_for};
use crate::summary::{build_patch_grid, Collection, Frame, FrameSequence, LabeledRegion, PatchGrid};

const PIXEL_TAG: u64 = 0x9E1;
const SCENE_TAG: u64 = 0x5CE;
const CENTER_TAG: u64 = 0xCE7;
const POINT_TAG: u64 = 0xB01;

pub const FRAME_RATE: f64 = 30.0;

pub fn frame_id(index: usize) -> String {
    format!("f{index:06}")
}

/// An object occupying one patch cell of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlantedObject {
    pub frame: usize,
    pub label: u32,
    pub cell: usize,
}

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub seed: u64,
    pub video_id: String,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub patch_size: usize,
    pub objects: Vec<PlantedObject>,
}

impl SceneSpec {
    /// 64x64 frames with 16-pixel patches (16 per frame) and no objects.
    pub fn new(seed: u64, video_id: impl Into<String>, frames: usize) -> Self {
        Self { seed, video_id: video_id.into(), frames, height: 64, width: 64, patch_size: 16, objects: Vec::new() }
    }

    pub fn grid(&self) -> Result<PatchGrid> {
        build_patch_grid(self.height, self.width, self.patch_size)
    }

    /// Frames of random noise; object cells carry a labelled region.
    pub fn render(&self) -> Result<FrameSequence> {
        let grid = self.grid()?;
        let mut frames = Vec::with_capacity(self.frames);
        for i in 0..self.frames {
            let mut pixels = vec![0u8; self.height * self.width * 3];
            rng_for(&[self.seed, PIXEL_TAG, i as u64]).fill_bytes(&mut pixels);
            let regions = self
                .objects
                .iter()
                .filter(|o| o.frame == i)
                .map(|o| {
                    let bbox = *grid.default_boxes().get(o.cell).ok_or_else(|| {
                        Error::InvalidConfig(format!("object cell {} outside a {}-cell grid", o.cell, grid.len()))
                    })?;
                    Ok(LabeledRegion { label: o.label, bbox })
                })
                .collect::<Result<Vec<_>>>()?;
            frames.push(Frame::new(frame_id(i), i as f64 / FRAME_RATE, pixels).with_regions(regions));
        }
        FrameSequence::new(self.video_id.clone(), self.height, self.width, frames)
    }

    /// Ground truth keyed `class:<label>`: the stored box of every object patch.
    pub fn ground_truth<T: Scalar>(&self, collection: &Collection<T>) -> Result<GroundTruth> {
        let mut truth = GroundTruth::new();
        for o in &self.objects {
            let id = PatchIdentity::new(self.video_id.clone(), frame_id(o.frame), o.cell as u32);
            let record = collection
                .records()
                .iter()
                .find(|r| r.identity == id)
                .ok_or_else(|| Error::NotFound(format!("object patch {id} was not ingested")))?;
            truth.add(format!("class:{}", o.label), Positive { frame_id: id.frame_id.clone(), bbox: record.bbox })?;
        }
        Ok(truth)
    }
}

/// One class-3 object in one of `frames` background frames, position drawn from the seed.
pub fn planted_scene(seed: u64, frames: usize) -> SceneSpec {
    let mut spec = SceneSpec::new(seed, "planted", frames);
    let cells = (spec.height / spec.patch_size) * (spec.width / spec.patch_size);
    let frame = (mix(&[seed, SCENE_TAG]) % frames as u64) as usize;
    let cell = (mix(&[seed, SCENE_TAG, 1]) % cells as u64) as usize;
    spec.objects.push(PlantedObject { frame, label: 3, cell });
    spec
}

/// Background frames where each frame holds an object of class 1..=`classes`
/// with probability `rate`.
pub fn random_scene(seed: u64, frames: usize, rate: f64, classes: u32) -> SceneSpec {
    let mut spec = SceneSpec::new(seed, "synthetic", frames);
    let cells = (spec.height / spec.patch_size) * (spec.width / spec.patch_size);
    let mut rng = rng_for(&[seed, SCENE_TAG]);
    for frame in 0..frames {
        if rng.random_bool(rate) {
            let label = rng.random_range(1..=classes);
            let cell = rng.random_range(0..cells);
            spec.objects.push(PlantedObject { frame, label, cell });
        }
    }
    spec
}

/// `n` unit vectors scattered around `clusters` random unit centres with
/// per-coordinate Gaussian noise `spread`. `stream` separates independent
/// draws that share the same centres.
pub fn clustered_vectors<T: Scalar>(
    n: usize,
    dim: usize,
    clusters: usize,
    spread: f64,
    seed: u64,
    stream: u64,
) -> Vec<DenseVector<T>> {
    let centers: Vec<Vec<f64>> = (0..clusters)
        .map(|c| {
            let mut rng = rng_for(&[seed, CENTER_TAG, c as u64]);
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect();
    let mut rng = rng_for(&[seed, POINT_TAG, stream]);
    (0..n)
        .map(|_| {
            let center = &centers[rng.random_range(0..clusters)];
            loop {
                let v: Vec<T> =
                    center.iter().map(|c| T::narrow(c + spread * rng.sample::<f64, _>(StandardNormal))).collect();
                if let Ok(u) = DenseVector::new(v).and_then(|v| normalize(&v)) {
                    break u;
                }
            }
        })
        .collect()
}

/// Wraps vectors as patch records, `per_frame` consecutive vectors per frame
/// laid out on a square-ish grid of 16-pixel cells.
pub fn records_from_vectors<T: Scalar>(
    vectors: Vec<DenseVector<T>>,
    video_id: &str,
    per_frame: usize,
) -> Result<Vec<PatchRecord<T>>> {
    let cols = (per_frame as f64).sqrt().ceil().max(1.0) as usize;
    vectors
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let k = i % per_frame;
            let (x, y) = ((k % cols) as f64 * 16.0, (k / cols) as f64 * 16.0);
            PatchRecord::new(
                PatchIdentity::new(video_id, frame_id(i / per_frame), k as u32),
                v,
                BoundingBox::new(x, y, x + 16.0, y + 16.0)?,
            )
        })
        .collect()
}

/// Benchmark corpus shape: 64 dimensions around 64 centres.
pub const BENCH_DIM: usize = 64;
pub const BENCH_CLUSTERS: usize = 64;
pub const BENCH_SPREAD: f64 = 0.3;

pub fn benchmark_corpus(n: usize, seed: u64) -> Result<Vec<PatchRecord<f32>>> {
    records_from_vectors(clustered_vectors(n, BENCH_DIM, BENCH_CLUSTERS, BENCH_SPREAD, seed, 0), "bench", 16)
}

/// Queries drawn from the same centres as [`benchmark_corpus`], disjoint from it.
pub fn benchmark_queries(count: usize, seed: u64) -> Vec<DenseVector<f32>> {
    clustered_vectors(count, BENCH_DIM, BENCH_CLUSTERS, BENCH_SPREAD, seed, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::summary::{build_collection, KeyframePolicy, SyntheticProvider};

    #[test]
    fn rendering_is_deterministic() {
        let spec = random_scene(4, 30, 0.3, 4);
        let a = spec.render().unwrap();
        let b = spec.render().unwrap();
        assert_eq!(a.frames(), b.frames());
        assert_eq!(a.len(), 30);
        assert!(!spec.objects.is_empty());
    }

    #[test]
    fn planted_scene_has_one_object() {
        let spec = planted_scene(11, 1000);
        assert_eq!(spec.objects.len(), 1);
        assert_eq!(spec.objects[0].label, 3);
        let seq = spec.render().unwrap();
        let planted = &seq.frames()[spec.objects[0].frame];
        assert_eq!(planted.regions.len(), 1);
    }

    #[test]
    fn hundred_frames_give_1600_records() {
        let spec = random_scene(1, 100, 0.1, 4);
        let seq = spec.render().unwrap();
        let provider = SyntheticProvider::new(1, 64);
        let c: Collection<f32> =
            build_collection(&seq, KeyframePolicy::FixedInterval { interval: 1 }, 16, &provider, 64).unwrap();
        assert_eq!(c.len(), 1600);
        let truth = spec.ground_truth(&c).unwrap();
        let total: usize = truth.query_ids().map(|q| truth.positives(q).len()).sum();
        assert_eq!(total, spec.objects.len());
    }

    #[test]
    fn clustered_vectors_are_unit_and_seeded() {
        let a = clustered_vectors::<f32>(100, 16, 4, 0.1, 3, 0);
        let b = clustered_vectors::<f32>(100, 16, 4, 0.1, 3, 0);
        let c = clustered_vectors::<f32>(100, 16, 4, 0.1, 3, 1);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|v| (v.norm() - 1.0).abs() < 1e-6));
    }

    #[test]
    fn records_layout() {
        let recs = records_from_vectors(clustered_vectors::<f32>(20, 8, 2, 0.1, 0, 0), "v", 16).unwrap();
        assert_eq!(recs[17].identity, PatchIdentity::new("v", "f000001", 1));
        assert_eq!(recs[5].bbox, BoundingBox::new(16.0, 16.0, 32.0, 32.0).unwrap());
    }
}
