//! Two-stage text query: fast search over patches, then a per-frame rerank.

mod scorer;
mod text;

use std::collections::HashSet;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use scorer::{
    CandidatePatch, ConstantScorer, ExternalScorer, FrameScore, ReferenceScorer, RerankRequest, RerankScorer,
};
pub use text::{embed_text, FileTextProvider, SyntheticTextProvider, TextProvider};

use crate::anns::{search, ScoredHit, SearchParams};
use crate::error::{Error, Result};
use crate::index::InvertedMultiIndex;
use crate::model::{BoundingBox, DenseVector};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextQuery {
    pub text: String,
    /// Fast-search breadth.
    pub k: usize,
    /// Frames returned.
    pub n: usize,
}

impl TextQuery {
    pub fn new(text: impl Into<String>, k: usize, n: usize) -> Result<Self> {
        let q = Self { text: text.into(), k, n };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::EmptyQuery);
        }
        if self.n == 0 || self.n > self.k {
            return Err(Error::InvalidConfig(format!("need 1 <= n <= k, got n={} k={}", self.n, self.k)));
        }
        Ok(())
    }
}

/// Patch-level top-k, as returned by the index.
pub fn fast_search<T: Scalar>(
    q: &DenseVector<T>,
    index: &InvertedMultiIndex<T>,
    probes: usize,
    k: usize,
) -> Result<Vec<ScoredHit>> {
    search(index, q, &SearchParams::new(probes, k))
}

/// Keeps the first (best) hit of every frame, preserving order.
pub fn dedupe_frames(hits: Vec<ScoredHit>) -> Vec<ScoredHit> {
    let mut seen = HashSet::new();
    hits.into_iter().filter(|h| seen.insert(h.frame_ref)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFrame {
    pub rank: usize,
    pub video_id: String,
    pub frame_id: String,
    /// Rerank score `l_s`.
    pub rerank_score: f64,
    pub boxes: Vec<BoundingBox>,
    /// Fast-search scores of the frame's representative patch.
    pub approx_score: f64,
    pub exact_score: f64,
    pub patch_ref: u64,
}

fn frame_patches<T: Scalar>(index: &InvertedMultiIndex<T>, hit: &ScoredHit) -> (Vec<CandidatePatch>, usize) {
    let members = index.frame_members(hit.frame_ref);
    let patches = members
        .iter()
        .map(|&h| CandidatePatch { patch_ref: h, embedding: index.reconstruct(h), bbox: index.bbox(h) })
        .collect();
    let representative = members.binary_search(&hit.patch_ref).expect("hit belongs to its frame");
    (patches, representative)
}

/// Scores each candidate frame once and returns the best `n`, ordered by
/// score descending and then by frame ID.
pub fn rerank<T: Scalar, S: RerankScorer + ?Sized>(
    index: &InvertedMultiIndex<T>,
    candidates: &[ScoredHit],
    text: &str,
    query: &DenseVector<T>,
    scorer: &S,
    n: usize,
) -> Result<Vec<RankedFrame>> {
    let qv: Vec<f64> = query.values().iter().map(|x| x.widen()).collect();
    let score_one = |hit: &ScoredHit| -> Result<RankedFrame> {
        let (patches, representative) = frame_patches(index, hit);
        let request = RerankRequest {
            video_id: &hit.identity.video_id,
            frame_id: &hit.identity.frame_id,
            text,
            query: &qv,
            patches: &patches,
            representative,
        };
        let out = scorer.score(&request)?;
        if out.boxes.is_empty() || !out.score.is_finite() {
            return Err(Error::ScorerFailure {
                frame_id: hit.identity.frame_id.clone(),
                reason: "scorer returned no boxes or a non-finite score".into(),
            });
        }
        Ok(RankedFrame {
            rank: 0,
            video_id: hit.identity.video_id.clone(),
            frame_id: hit.identity.frame_id.clone(),
            rerank_score: out.score,
            boxes: out.boxes,
            approx_score: hit.approx_score,
            exact_score: hit.exact_score,
            patch_ref: hit.patch_ref,
        })
    };
    let mut frames: Vec<RankedFrame> = if scorer.is_concurrent() {
        candidates.par_iter().map(score_one).collect::<Result<_>>()?
    } else {
        candidates.iter().map(score_one).collect::<Result<_>>()?
    };
    frames.sort_by(|a, b| {
        b.rerank_score
            .total_cmp(&a.rerank_score)
            .then_with(|| a.frame_id.cmp(&b.frame_id))
            .then_with(|| a.video_id.cmp(&b.video_id))
    });
    frames.truncate(n);
    for (i, f) in frames.iter_mut().enumerate() {
        f.rank = i + 1;
    }
    Ok(frames)
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    /// Text encoding.
    pub processing: f64,
    pub fast_search: f64,
    pub rerank: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub frames: Vec<RankedFrame>,
    /// Distinct candidate frames handed to the scorer.
    pub candidate_frames: Vec<String>,
    pub timings: PhaseTimings,
}

/// Settings shared by every query against one index.
pub struct QueryEngine<'a, T: Scalar> {
    pub index: &'a InvertedMultiIndex<T>,
    pub text: &'a dyn TextProvider<T>,
    pub scorer: &'a dyn RerankScorer,
    pub probes: usize,
}

impl<T: Scalar> QueryEngine<'_, T> {
    pub fn query(&self, query: &TextQuery) -> Result<QueryOutcome> {
        query.validate()?;
        if self.index.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let start = Instant::now();
        let q = embed_text(&query.text, self.text, self.index.config().dim)?;
        let embedded = Instant::now();
        let candidates = dedupe_frames(fast_search(&q, self.index, self.probes, query.k)?);
        let searched = Instant::now();
        let frames = rerank(self.index, &candidates, &query.text, &q, self.scorer, query.n)?;
        let done = Instant::now();
        Ok(QueryOutcome {
            frames,
            candidate_frames: candidates.iter().map(|c| c.identity.frame_id.clone()).collect(),
            timings: PhaseTimings {
                processing: (embedded - start).as_secs_f64(),
                fast_search: (searched - embedded).as_secs_f64(),
                rerank: (done - searched).as_secs_f64(),
                total: (done - start).as_secs_f64(),
            },
        })
    }
}

/// Serializable query result, free of timings so reruns compare byte-equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultManifest {
    pub query_id: String,
    pub text: String,
    pub k: usize,
    pub n: usize,
    pub probes: usize,
    pub scorer: String,
    pub frames: Vec<RankedFrame>,
}
