//! Retrieval evaluation: IoU matching, average precision, recall against an
//! exhaustive scan, and latency medians.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::anns::{rank_order, search, SearchParams};
use crate::error::{Error, Result};
use crate::index::InvertedMultiIndex;
use crate::model::{BoundingBox, DenseVector, PatchRecord};
use crate::query::{PhaseTimings, RankedFrame};
use crate::scalar::{dot, Scalar};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
pub const DEFAULT_PREFIX_MULTIPLIER: usize = 10;

/// Intersection over union; 0 when the union has no area.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = (a.x_max().min(b.x_max()) - a.x_min().max(b.x_min())).max(0.0);
    let h = (a.y_max().min(b.y_max()) - a.y_min().max(b.y_min())).max(0.0);
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Positive {
    pub frame_id: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TruthLine {
    query_id: String,
    frame_id: String,
    #[serde(rename = "box")]
    bbox: BoundingBox,
}

/// Positives per query ID.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    queries: BTreeMap<String, Vec<Positive>>,
}

impl GroundTruth {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rejects a repeated `(frame_id, box)` within one query.
    pub fn add(&mut self, query_id: impl Into<String>, positive: Positive) -> Result<()> {
        let query_id = query_id.into();
        let list = self.queries.entry(query_id.clone()).or_default();
        if list.contains(&positive) {
            return Err(Error::DuplicateKey(format!(
                "{query_id}: {} {:?}",
                positive.frame_id,
                positive.bbox.to_array()
            )));
        }
        list.push(positive);
        Ok(())
    }

    pub fn positives(&self, query_id: &str) -> &[Positive] {
        self.queries.get(query_id).map_or(&[], Vec::as_slice)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.queries.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.queries.values().all(Vec::is_empty)
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut truth = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TruthLine =
                serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
            truth.add(rec.query_id, Positive { frame_id: rec.frame_id, bbox: rec.bbox })?;
        }
        Ok(truth)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_reader(BufReader::new(File::open(path)?))
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (q, list) in &self.queries {
            for p in list {
                let line = TruthLine { query_id: q.clone(), frame_id: p.frame_id.clone(), bbox: p.bbox };
                out.push_str(&serde_json::to_string(&line).expect("serializable"));
                out.push('\n');
            }
        }
        out
    }
}

/// One ranked detection: a frame and a box.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame_id: String,
    pub bbox: BoundingBox,
}

/// Flattens ranked frames into detections, each frame's boxes in order.
pub fn detections(frames: &[RankedFrame]) -> Vec<Detection> {
    frames.iter().flat_map(|f| f.boxes.iter().map(|b| Detection { frame_id: f.frame_id.clone(), bbox: *b })).collect()
}

/// Greedy one-to-one matching in rank order. A detection is a true positive
/// when its best-IoU unmatched positive in the same frame exceeds `threshold`.
pub fn match_detections(ranked: &[Detection], positives: &[Positive], threshold: f64) -> Vec<bool> {
    let mut used = vec![false; positives.len()];
    ranked
        .iter()
        .map(|d| {
            let best = positives
                .iter()
                .enumerate()
                .filter(|(j, p)| !used[*j] && p.frame_id == d.frame_id)
                .map(|(j, p)| (j, iou(&d.bbox, &p.bbox)))
                .fold(None, |acc: Option<(usize, f64)>, (j, v)| match acc {
                    Some((_, b)) if b >= v => acc,
                    _ => Some((j, v)),
                });
            match best {
                Some((j, v)) if v > threshold => {
                    used[j] = true;
                    true
                }
                _ => false,
            }
        })
        .collect()
}

/// `(recall, precision)` after each rank.
pub fn precision_recall_curve(relevance: &[bool], positives: usize) -> Vec<(f64, f64)> {
    let mut tp = 0usize;
    relevance
        .iter()
        .enumerate()
        .map(|(i, &hit)| {
            tp += hit as usize;
            (tp as f64 / positives as f64, tp as f64 / (i + 1) as f64)
        })
        .collect()
}

/// Discrete AP: `sum_k p(k) * delta r(k)` over the ranks holding a true positive.
pub fn average_precision(relevance: &[bool], positives: usize) -> Result<f64> {
    if positives == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (i, &hit) in relevance.iter().enumerate() {
        if hit {
            tp += 1;
            sum += tp as f64 / (i + 1) as f64;
        }
    }
    Ok((sum / positives as f64).clamp(0.0, 1.0))
}

/// Length of the ranked prefix that is scored for a query with `truth_len` positives.
pub fn evaluation_prefix(truth_len: usize, multiplier: usize) -> usize {
    truth_len * multiplier
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEval {
    pub query_id: String,
    pub positives: usize,
    pub prefix: usize,
    pub true_positives: usize,
    pub avep: f64,
    pub precision_recall_curve: Vec<(f64, f64)>,
}

/// AP over the first `multiplier x |truth|` ranked frames.
pub fn evaluate_query(
    query_id: &str,
    frames: &[RankedFrame],
    positives: &[Positive],
    multiplier: usize,
    iou_threshold: f64,
) -> Result<QueryEval> {
    if positives.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let prefix = evaluation_prefix(positives.len(), multiplier);
    let ranked = detections(&frames[..prefix.min(frames.len())]);
    let relevance = match_detections(&ranked, positives, iou_threshold);
    Ok(QueryEval {
        query_id: query_id.to_string(),
        positives: positives.len(),
        prefix,
        true_positives: relevance.iter().filter(|&&r| r).count(),
        avep: average_precision(&relevance, positives.len())?,
        precision_recall_curve: precision_recall_curve(&relevance, positives.len()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleHit {
    pub patch_ref: u64,
    pub score: f64,
}

/// Exhaustive exact top-k, ties by smallest handle (the record's position).
pub fn brute_force_search<T: Scalar>(q: &DenseVector<T>, records: &[PatchRecord<T>], k: usize) -> Vec<OracleHit> {
    let mut all: Vec<(f64, u64)> =
        records.iter().enumerate().map(|(h, r)| (dot(q.values(), r.embedding.values()), h as u64)).collect();
    let k = k.min(all.len());
    if k == 0 {
        return Vec::new();
    }
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, |a, b| rank_order(*a, *b));
        all.truncate(k);
    }
    all.sort_by(|a, b| rank_order(*a, *b));
    all.into_iter().map(|(score, patch_ref)| OracleHit { patch_ref, score }).collect()
}

/// Fraction of the oracle's handles present in `found`.
pub fn recall_at_k(found: &[u64], oracle: &[u64]) -> f64 {
    if oracle.is_empty() {
        return 1.0;
    }
    let found: HashSet<_> = found.iter().collect();
    oracle.iter().filter(|h| found.contains(h)).count() as f64 / oracle.len() as f64
}

/// Mean recall@k of index search against the exhaustive scan.
pub fn mean_recall<T: Scalar>(
    index: &InvertedMultiIndex<T>,
    records: &[PatchRecord<T>],
    queries: &[DenseVector<T>],
    probes: usize,
    k: usize,
) -> Result<f64> {
    let params = SearchParams::new(probes, k);
    let mut total = 0.0;
    for q in queries {
        let found: Vec<u64> = search(index, q, &params)?.iter().map(|h| h.patch_ref).collect();
        let oracle: Vec<u64> = brute_force_search(q, records, k).iter().map(|h| h.patch_ref).collect();
        total += recall_at_k(&found, &oracle);
    }
    Ok(total / queries.len().max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub probes: usize,
    pub recall: f64,
}

pub fn recall_sweep<T: Scalar>(
    index: &InvertedMultiIndex<T>,
    records: &[PatchRecord<T>],
    queries: &[DenseVector<T>],
    probes: &[usize],
    k: usize,
) -> Result<Vec<SweepPoint>> {
    probes.iter().map(|&a| Ok(SweepPoint { probes: a, recall: mean_recall(index, records, queries, a, k)? })).collect()
}

/// Median of a non-empty sample; the mean of the middle pair for even sizes.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

/// Median seconds of `runs` calls to `f` (at least one).
pub fn time_median<F: FnMut()>(runs: usize, mut f: F) -> f64 {
    let samples: Vec<f64> = (0..runs.max(1))
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_secs_f64()
        })
        .collect();
    median(&samples)
}

/// Phase-wise medians.
pub fn median_timings(samples: &[PhaseTimings]) -> PhaseTimings {
    let pick = |f: fn(&PhaseTimings) -> f64| median(&samples.iter().map(f).collect::<Vec<_>>());
    PhaseTimings {
        processing: pick(|t| t.processing),
        fast_search: pick(|t| t.fast_search),
        rerank: pick(|t| t.rerank),
        total: pick(|t| t.total),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub queries: Vec<QueryEval>,
    pub mean_avep: f64,
    pub recall_at_k: Option<f64>,
    pub latency: Option<PhaseTimings>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepPoint>,
}

impl EvalReport {
    pub fn new(queries: Vec<QueryEval>) -> Self {
        let mean_avep = queries.iter().map(|q| q.avep).sum::<f64>() / queries.len().max(1) as f64;
        Self { queries, mean_avep, recall_at_k: None, latency: None, sweep: Vec::new() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<24} {:>9} {:>6} {:>4} {:>8}", "query", "positives", "prefix", "tp", "avep");
        for q in &self.queries {
            let _ = writeln!(
                out,
                "{:<24} {:>9} {:>6} {:>4} {:>8.4}",
                q.query_id, q.positives, q.prefix, q.true_positives, q.avep
            );
        }
        let _ = writeln!(out, "mean avep {:.4}", self.mean_avep);
        if let Some(r) = self.recall_at_k {
            let _ = writeln!(out, "recall@k {r:.4}");
        }
        if let Some(t) = self.latency {
            let _ = writeln!(
                out,
                "latency (median s): processing {:.6} fast_search {:.6} rerank {:.6} total {:.6}",
                t.processing, t.fast_search, t.rerank, t.total
            );
        }
        for p in &self.sweep {
            let _ = writeln!(out, "probes {:>3} recall {:.4}", p.probes, p.recall);
        }
        out
    }
}
