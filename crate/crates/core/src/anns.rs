//! Approximate nearest-neighbour search over the inverted multi-index.
//!
//! Per subspace the query part is scored against every centroid, the best
//! `A` clusters are probed, and every patch reached through any probed
//! cluster becomes a candidate. Candidates are scored as
//! `sum_p (lut[p][code_p] + q_p . r_p)`, the best `k` are kept, and those are
//! re-ranked by the exact dot product against the reconstructed vector.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::InvertedMultiIndex;
use crate::model::{check_dim, BoundingBox, DenseVector, PatchIdentity};
use crate::pq::{split, LookupTable};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchParams {
    /// Clusters probed per subspace.
    pub probes: usize,
    pub k: usize,
}

impl SearchParams {
    pub fn new(probes: usize, k: usize) -> Self {
        Self { probes, k }
    }

    pub fn validate(&self, centroids: usize) -> Result<()> {
        if self.probes == 0 || self.probes > centroids {
            return Err(Error::InvalidConfig(format!("probes must be in 1..={centroids}, got {}", self.probes)));
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub patch_ref: u64,
    pub approx_score: f64,
    pub exact_score: f64,
    pub identity: PatchIdentity,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub frame_ref: u64,
}

impl ScoredHit {
    pub fn frame_id(&self) -> &str {
        &self.identity.frame_id
    }
}

/// Descending by score, ascending by handle.
#[inline]
pub(crate) fn rank_order(a: (f64, u64), b: (f64, u64)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

fn top_by_score(row: &[f64], count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| rank_order((row[a], a as u64), (row[b], b as u64)));
    idx.truncate(count);
    idx
}

/// The `probes` highest-scoring centroids per subspace, best first.
pub fn select_clusters(lut: &LookupTable, probes: usize) -> Vec<Vec<usize>> {
    (0..lut.subspaces()).map(|p| top_by_score(lut.row(p), probes)).collect()
}

/// Dot product of `q` with a reconstructed vector, summed in the same order
/// as [`crate::scalar::dot`] so that it agrees bit for bit with a full scan.
fn exact_dot<T: Scalar>(q: &[T], reconstructed: &[f64]) -> f64 {
    q.iter().zip(reconstructed).map(|(a, b)| a.widen() * b).sum()
}

fn residual_dot<T: Scalar>(q: &[T], r: &[f64]) -> f64 {
    q.iter().zip(r).map(|(a, b)| a.widen() * b).sum()
}

fn check_query<T: Scalar>(index: &InvertedMultiIndex<T>, q: &DenseVector<T>, params: &SearchParams) -> Result<()> {
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    check_dim(index.config().dim, q.dim())?;
    params.validate(index.config().centroids)
}

pub fn search<T: Scalar>(
    index: &InvertedMultiIndex<T>,
    q: &DenseVector<T>,
    params: &SearchParams,
) -> Result<Vec<ScoredHit>> {
    check_query(index, q, params)?;
    let lut = index.quantizer().lookup_table(q)?;
    let parts = split(q, index.config())?;
    let selected = select_clusters(&lut, params.probes);

    let mut reached = vec![false; index.len()];
    let mut candidates = Vec::new();
    for (p, clusters) in selected.iter().enumerate() {
        for &m in clusters {
            for &h in index.posting_list(p, m).handles() {
                let seen = &mut reached[h as usize];
                if !*seen {
                    *seen = true;
                    candidates.push(h);
                }
            }
        }
    }

    // Dense candidate sets are cheaper to score by streaming every posting
    // list once than by gathering each candidate's residuals.
    let mut scored: Vec<(f64, u64)> = if 2 * candidates.len() >= index.len() {
        let mut acc = vec![0.0f64; index.len()];
        for (p, part) in parts.iter().enumerate() {
            for m in 0..index.config().centroids {
                let list = index.posting_list(p, m);
                let base = lut.get(p, m);
                for (slot, &h) in list.handles().iter().enumerate() {
                    acc[h as usize] += base + residual_dot(part, list.residual(slot));
                }
            }
        }
        candidates.into_iter().map(|h| (acc[h as usize], h)).collect()
    } else {
        candidates
            .into_iter()
            .map(|h| {
                let code = index.code(h);
                let s = parts.iter().enumerate().fold(0.0, |acc, (p, part)| {
                    acc + (lut.get(p, code[p] as usize) + residual_dot(part, index.residual(h, p)))
                });
                (s, h)
            })
            .collect()
    };

    let k = params.k.min(scored.len());
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, |a, b| rank_order(*a, *b));
        scored.truncate(k);
    }

    let mut hits: Vec<ScoredHit> = scored
        .into_iter()
        .map(|(approx, h)| ScoredHit {
            patch_ref: h,
            approx_score: approx,
            exact_score: exact_dot(q.values(), &index.reconstruct(h)),
            identity: index.identity(h).expect("candidate handle is indexed").clone(),
            bbox: index.bbox(h),
            frame_ref: index.frame_of(h),
        })
        .collect();
    hits.sort_by(|a, b| rank_order((a.exact_score, a.patch_ref), (b.exact_score, b.patch_ref)));
    Ok(hits)
}

/// Most frequent handle, smallest on ties. `None` for an empty list.
pub fn resolve_patch_id(component_ids: &[u64]) -> Option<u64> {
    let mut counts: HashMap<u64, usize> = HashMap::new();
    for &h in component_ids {
        *counts.entry(h).or_default() += 1;
    }
    counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|(h, _)| h)
}

/// A candidate assembled from per-subspace fragments.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentHit {
    /// Source handle of the fragment used in each subspace.
    pub components: Vec<u64>,
    pub patch_ref: u64,
    /// Sum of the fragment scores, i.e. the dot product with the composed vector.
    pub score: f64,
}

/// Fragment-level variant: each subspace ranks its own fragments and the
/// `a`-th best fragments of all subspaces form candidate `a`, whose patch ID
/// is settled by majority vote.
pub fn search_fragments<T: Scalar>(
    index: &InvertedMultiIndex<T>,
    q: &DenseVector<T>,
    params: &SearchParams,
) -> Result<Vec<FragmentHit>> {
    check_query(index, q, params)?;
    let lut = index.quantizer().lookup_table(q)?;
    let parts = split(q, index.config())?;
    let selected = select_clusters(&lut, params.probes);

    let per_subspace: Vec<Vec<(f64, u64)>> = selected
        .iter()
        .enumerate()
        .map(|(p, clusters)| {
            let part = parts[p];
            let mut frags: Vec<(f64, u64)> = clusters
                .iter()
                .flat_map(|&m| {
                    let list = index.posting_list(p, m);
                    let base = lut.get(p, m);
                    (0..list.len())
                        .map(move |slot| (base + residual_dot(part, list.residual(slot)), list.handles()[slot]))
                })
                .collect();
            frags.sort_by(|a, b| rank_order(*a, *b));
            frags.truncate(params.k);
            frags
        })
        .collect();

    let depth = per_subspace.iter().map(Vec::len).min().unwrap_or(0);
    let mut hits: Vec<FragmentHit> = (0..depth)
        .map(|a| {
            let components: Vec<u64> = per_subspace.iter().map(|f| f[a].1).collect();
            let score = per_subspace.iter().map(|f| f[a].0).sum();
            let patch_ref = resolve_patch_id(&components).expect("at least one subspace");
            FragmentHit { components, patch_ref, score }
        })
        .collect();
    hits.sort_by(|a, b| rank_order((a.score, a.patch_ref), (b.score, b.patch_ref)));
    Ok(hits)
}
