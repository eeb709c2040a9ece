//! Scalability sweeps: fast-search latency against index size, and rerank
//! latency against the number of candidate frames.

use std::fmt::Write as _;
use std::hint::black_box;

use serde::Serialize;

use crate::anns::{search, SearchParams};
use crate::error::Result;
use crate::eval::{median, time_median};
use crate::index::InvertedMultiIndex;
use crate::pq::PQConfig;
use crate::query::{dedupe_frames, rerank, ReferenceScorer};
use crate::synthetic::{benchmark_corpus, benchmark_queries, BENCH_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SizePoint {
    pub size: usize,
    /// Median seconds per query.
    pub fast_search: f64,
    pub candidates: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RerankPoint {
    pub objects: usize,
    /// Median seconds per query.
    pub rerank: f64,
    pub per_object: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct BenchConfig {
    pub subspaces: usize,
    pub centroids: usize,
    pub train_iters: usize,
    pub probes: usize,
    pub k: usize,
    pub queries: usize,
    pub runs: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { subspaces: 8, centroids: 16, train_iters: 25, probes: 4, k: 10, queries: 50, runs: 5, seed: 0 }
    }
}

impl BenchConfig {
    pub fn pq(&self) -> Result<PQConfig> {
        PQConfig::new(BENCH_DIM, self.subspaces, self.centroids, self.train_iters, self.seed)
    }

    /// Benchmark index of `size` vectors.
    pub fn build(&self, size: usize) -> Result<InvertedMultiIndex<f32>> {
        Ok(InvertedMultiIndex::build_from_records(&benchmark_corpus(size, self.seed)?, &self.pq()?)?.0)
    }
}

/// Median per-query fast-search time over `runs` passes of the query set.
pub fn fast_search_latency(index: &InvertedMultiIndex<f32>, config: &BenchConfig) -> Result<f64> {
    let queries = benchmark_queries(config.queries, config.seed);
    let params = SearchParams::new(config.probes, config.k);
    for q in &queries {
        search(index, q, &params)?;
    }
    let per_query = (0..config.runs.max(1))
        .map(|_| {
            time_median(1, || {
                for q in &queries {
                    black_box(search(index, q, &params).expect("validated above"));
                }
            }) / queries.len() as f64
        })
        .collect::<Vec<_>>();
    Ok(median(&per_query))
}

pub fn index_size_sweep(sizes: &[usize], config: &BenchConfig) -> Result<Vec<SizePoint>> {
    sizes
        .iter()
        .map(|&size| {
            let index = config.build(size)?;
            let fast_search = fast_search_latency(&index, config)?;
            let probe = SearchParams::new(config.probes, index.len());
            let queries = benchmark_queries(config.queries.min(10), config.seed);
            let candidates =
                queries.iter().map(|q| Ok(search(&index, q, &probe)?.len() as f64)).sum::<Result<f64>>()?
                    / queries.len() as f64;
            log::info!("size {size}: {fast_search:.6}s per query, {candidates:.0} candidates");
            Ok(SizePoint { size, fast_search, candidates })
        })
        .collect()
}

/// Reference rerank over the best `objects` candidate frames of each query.
pub fn rerank_sweep(corpus_size: usize, objects: &[usize], config: &BenchConfig) -> Result<Vec<RerankPoint>> {
    let index = config.build(corpus_size)?;
    let queries = benchmark_queries(config.queries, config.seed);
    objects
        .iter()
        .map(|&count| {
            let mut samples = Vec::with_capacity(queries.len());
            for q in &queries {
                let hits = dedupe_frames(search(&index, q, &SearchParams::new(config.probes, count * 16))?);
                let cands = &hits[..count.min(hits.len())];
                samples.push(time_median(config.runs, || {
                    black_box(
                        rerank(&index, cands, "bench", q, &ReferenceScorer, cands.len()).expect("reference scorer"),
                    );
                }));
            }
            let rerank = median(&samples);
            Ok(RerankPoint { objects: count, rerank, per_object: rerank / count.max(1) as f64 })
        })
        .collect()
}

pub fn size_csv(points: &[SizePoint]) -> String {
    let mut out = String::from("size,fast_search_seconds,candidates\n");
    for p in points {
        let _ = writeln!(out, "{},{:.9},{:.1}", p.size, p.fast_search, p.candidates);
    }
    out
}

pub fn rerank_csv(points: &[RerankPoint]) -> String {
    let mut out = String::from("objects,rerank_seconds,per_object_seconds\n");
    for p in points {
        let _ = writeln!(out, "{},{:.9},{:.9}", p.objects, p.rerank, p.per_object);
    }
    out
}
