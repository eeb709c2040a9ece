//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so every criterion is reported even when an earlier
//! one fails. The process exits non-zero on a failure only when
//! `FRAMEDEX_ACCEPTANCE_STRICT=1`; the invariants behind criteria 1-7 are also
//! enforced by ordinary unit and integration tests.

use std::time::Instant;

use framedex_core::anns::{search, SearchParams};
use framedex_core::bench::{fast_search_latency, BenchConfig};
use framedex_core::eval::{average_precision, brute_force_search, evaluate_query, mean_recall, Positive};
use framedex_core::index::InvertedMultiIndex;
use framedex_core::meta::MetadataStore;
use framedex_core::model::{distance_from_similarity, euclidean, normalize, similarity, BoundingBox};
use framedex_core::pq::{split, PQConfig, ProductQuantizer};
use framedex_core::query::{
    ConstantScorer, QueryEngine, RankedFrame, ReferenceScorer, SyntheticTextProvider, TextQuery,
};
use framedex_core::scalar::dot;
use framedex_core::seed::rng_for;
use framedex_core::summary::{build_collection, KeyframePolicy, SyntheticProvider};
use framedex_core::synthetic::{
    benchmark_corpus, benchmark_queries, clustered_vectors, frame_id, planted_scene, records_from_vectors,
};
use framedex_core::{DenseVector, Record};
use rand::Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn random_unit(dim: usize, rng: &mut impl Rng) -> DenseVector<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    normalize(&DenseVector::new(v).unwrap()).unwrap()
}

fn random_corpus(n: usize, seed: u64) -> Vec<Record> {
    // half the corpora clustered, half isotropic
    let spread = if seed.is_multiple_of(2) { 0.3 } else { 10.0 };
    records_from_vectors(clustered_vectors(n, 64, 32, spread, seed, 0), "acc", 16).unwrap()
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_for(&[1]);
    let mut checks = 0;
    for corpus in 0..20u64 {
        let n = rng.random_range(100..=2000);
        let records = random_corpus(n, 100 + corpus);
        let (index, _) =
            InvertedMultiIndex::build_from_records(&records, &PQConfig::new(64, 8, 16, 25, corpus).unwrap())
                .map_err(|e| e.to_string())?;
        let queries = clustered_vectors::<f32>(5, 64, 32, 0.3, 100 + corpus, 1);
        for q in &queries {
            for k in [1, 10, 50] {
                let got: Vec<(u64, f64)> = search(&index, q, &SearchParams::new(16, k))
                    .unwrap()
                    .iter()
                    .map(|h| (h.patch_ref, h.exact_score))
                    .collect();
                let want: Vec<(u64, f64)> =
                    brute_force_search(q, &records, k).iter().map(|h| (h.patch_ref, h.score)).collect();
                if got != want {
                    return Err(format!("corpus {corpus} (N={n}) k={k}: search {got:?} != oracle {want:?}"));
                }
                checks += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 60.0 {
        return Err(format!("{checks} comparisons matched but took {secs:.1}s (limit 60s)"));
    }
    Ok(format!("{checks} query/k comparisons over 20 corpora identical in set and order ({secs:.1}s)"))
}

/// Mean recall@10 at A=4 on the default benchmark, measured against the
/// exhaustive scan and pinned here.
const PINNED_RECALL_A4: f64 = 1.0;

fn recall_curve() -> Outcome {
    let start = Instant::now();
    let records = benchmark_corpus(10_000, 0).map_err(|e| e.to_string())?;
    let (index, _) = InvertedMultiIndex::build_from_records(&records, &PQConfig::new(64, 8, 16, 25, 0).unwrap())
        .map_err(|e| e.to_string())?;
    let queries = benchmark_queries(100, 0);
    let mut curve = Vec::new();
    for a in [1, 2, 4, 8, 16] {
        curve.push((a, mean_recall(&index, &records, &queries, a, 10).map_err(|e| e.to_string())?));
    }
    let shown = curve.iter().map(|(a, r)| format!("A={a}:{r:.3}")).collect::<Vec<_>>().join(" ");
    let secs = start.elapsed().as_secs_f64();
    if curve.windows(2).any(|w| w[1].1 < w[0].1) {
        return Err(format!("recall decreases: {shown}"));
    }
    if curve[4].1 != 1.0 {
        return Err(format!("recall at A=16 is not 1.0: {shown}"));
    }
    let a4 = curve[2].1;
    if a4 < 0.9 || (a4 - PINNED_RECALL_A4).abs() > 0.02 {
        return Err(format!("recall at A=4 {a4:.3} outside {PINNED_RECALL_A4}+-0.02 or below 0.9: {shown}"));
    }
    if secs >= 300.0 {
        return Err(format!("took {secs:.1}s (limit 300s)"));
    }
    Ok(format!("{shown} ({secs:.1}s)"))
}

fn similarity_algebra() -> Outcome {
    let mut rng = rng_for(&[3]);
    let mut worst_d: f64 = 0.0;
    for case in 0..2000 {
        let dim = rng.random_range(1..=96);
        let a = random_unit(dim, &mut rng);
        // every fourth pair is a near duplicate
        let b = if case % 4 == 0 {
            let jitter = rng.random_range(1e-9..1e-2);
            let v: Vec<f64> = a.values().iter().map(|x| x + jitter * rng.sample::<f64, _>(StandardNormal)).collect();
            normalize(&DenseVector::new(v).unwrap()).unwrap()
        } else {
            random_unit(dim, &mut rng)
        };
        let s = similarity(&a, &b).unwrap();
        let err = (distance_from_similarity(s).unwrap() - euclidean(&a, &b).unwrap()).abs();
        worst_d = worst_d.max(err);
        if err > 1e-6 {
            return Err(format!("case {case}: |sqrt(2-2s) - L2| = {err:e}"));
        }
    }

    let mut worst_r: f64 = 0.0;
    let mut cases = 0;
    for corpus in 0..10u64 {
        let records = random_corpus(300, 500 + corpus);
        let vectors: Vec<_> = records.iter().map(|r| r.embedding.clone()).collect();
        let (pq, _) = ProductQuantizer::train(&vectors, &PQConfig::new(64, 8, 16, 10, corpus).unwrap()).unwrap();
        for _ in 0..100 {
            let h = rng.random_range(0..records.len());
            let q = clustered_vectors::<f32>(1, 64, 32, 0.3, 500 + corpus, rng.random())[0].clone();
            let x = &records[h].embedding;
            let code = pq.encode(x).unwrap();
            let residual = pq.residual(x, &code).unwrap();
            let lut = pq.lookup_table(&q).unwrap();
            let approx: f64 = split(&q, pq.config())
                .unwrap()
                .iter()
                .enumerate()
                .map(|(p, part)| {
                    lut.get(p, code.0[p] as usize)
                        + part.iter().zip(&residual[p]).map(|(a, r)| f64::from(*a) * r).sum::<f64>()
                })
                .sum();
            let err = (approx - dot(q.values(), x.values())).abs();
            worst_r = worst_r.max(err);
            if err > 1e-5 {
                return Err(format!("residual decomposition off by {err:e}"));
            }
            cases += 1;
        }
    }
    Ok(format!("2000 distance cases (max err {worst_d:.1e}), {cases} decomposition cases (max err {worst_r:.1e})"))
}

fn lloyd_monotonicity() -> Outcome {
    let mut steps = 0;
    for dataset in 0..5u64 {
        let vectors = clustered_vectors::<f32>(1500, 64, 24, 0.2 + 0.2 * dataset as f64, 900 + dataset, 0);
        let (_, report) = ProductQuantizer::train(&vectors, &PQConfig::new(64, 8, 16, 25, dataset).unwrap())
            .map_err(|e| e.to_string())?;
        for (p, history) in report.distortion.iter().enumerate() {
            for (i, w) in history.windows(2).enumerate() {
                if w[1] > w[0] {
                    return Err(format!("dataset {dataset} subspace {p} step {}: {} -> {}", i + 1, w[0], w[1]));
                }
                steps += 1;
            }
        }
    }
    Ok(format!("5 datasets x 8 subspaces, {steps} Lloyd steps, none increased distortion"))
}

fn reciprocal_rank(frames: &[RankedFrame], target: &str) -> f64 {
    frames.iter().position(|f| f.frame_id == target).map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

fn planted_retrieval() -> Outcome {
    let start = Instant::now();
    let (mut hits, mut mrr_ref, mut mrr_const) = (0, 0.0, 0.0);
    for seed in 0..50u64 {
        let spec = planted_scene(seed, 1000);
        let seq = spec.render().map_err(|e| e.to_string())?;
        let provider = SyntheticProvider::new(seed, 64);
        let collection =
            build_collection::<f32, _>(&seq, KeyframePolicy::FixedInterval { interval: 1 }, 16, &provider, 64)
                .map_err(|e| e.to_string())?;
        let (index, _) = InvertedMultiIndex::build(&collection, &PQConfig::new(64, 8, 16, 25, seed).unwrap())
            .map_err(|e| e.to_string())?;
        let text = SyntheticTextProvider::new(seed, 64);
        let target = frame_id(spec.objects[0].frame);
        let query = TextQuery::new("class:3", 100, 10).unwrap();

        let with = QueryEngine { index: &index, text: &text, scorer: &ReferenceScorer, probes: 4 }
            .query(&query)
            .map_err(|e| e.to_string())?;
        let without = QueryEngine { index: &index, text: &text, scorer: &ConstantScorer::default(), probes: 4 }
            .query(&query)
            .map_err(|e| e.to_string())?;
        for out in [&with, &without] {
            if let Some(f) = out.frames.iter().find(|f| !out.candidate_frames.contains(&f.frame_id)) {
                return Err(format!("seed {seed}: frame {} is not a fast-search candidate", f.frame_id));
            }
        }
        if with.frames.first().map(|f| f.frame_id.as_str()) == Some(target.as_str()) {
            hits += 1;
        }
        mrr_ref += reciprocal_rank(&with.frames, &target) / 50.0;
        mrr_const += reciprocal_rank(&without.frames, &target) / 50.0;
    }
    let summary = format!(
        "rank-1 {hits}/50; MRR reference {mrr_ref:.3} >= constant {mrr_const:.3} ({:.1}s)",
        start.elapsed().as_secs_f64()
    );
    if hits == 50 && mrr_ref >= mrr_const {
        Ok(summary)
    } else {
        Err(summary)
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn avep_protocol() -> Outcome {
    // precision at the two hits (ranks 1 and 3), averaged over both positives
    let hand_derived = (1.0 + 2.0 / 3.0) / 2.0;
    let ap = average_precision(&[true, false, true], 2).map_err(|e| e.to_string())?;
    if (ap - hand_derived).abs() > 1e-6 {
        return Err(format!("AveP {ap} != {hand_derived}"));
    }
    let unit = BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
    let truth: Vec<Positive> = (0..3).map(|i| Positive { frame_id: format!("t{i}"), bbox: unit }).collect();
    let frames: Vec<RankedFrame> = (0..50)
        .map(|i| RankedFrame {
            rank: i + 1,
            video_id: "v".into(),
            frame_id: if i == 30 { "t0".into() } else { format!("x{i}") },
            rerank_score: 0.0,
            boxes: vec![unit],
            approx_score: 0.0,
            exact_score: 0.0,
            patch_ref: i as u64,
        })
        .collect();
    let eval = evaluate_query("q", &frames, &truth, 10, 0.5).map_err(|e| e.to_string())?;
    if eval.prefix != 30 || eval.precision_recall_curve.len() != 30 || eval.true_positives != 0 {
        return Err(format!(
            "prefix {} with {} scored ranks, expected 30",
            eval.prefix,
            eval.precision_recall_curve.len()
        ));
    }
    Ok(format!("[TP,FP,TP]/2 -> {ap:.6}; |truth|=3 scores a 30-rank prefix"))
}

fn persistence() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = rng_for(&[7]);
    for corpus in 0..10u64 {
        let records = random_corpus(rng.random_range(200..1500), 700 + corpus);
        let (index, _) =
            InvertedMultiIndex::build_from_records(&records, &PQConfig::new(64, 8, 16, 15, corpus).unwrap())
                .map_err(|e| e.to_string())?;
        let idx_path = dir.path().join(format!("c{corpus}.idx"));
        index.persist(&idx_path).map_err(|e| e.to_string())?;
        let loaded = InvertedMultiIndex::<f32>::load(&idx_path).map_err(|e| e.to_string())?;
        if loaded.to_bytes() != std::fs::read(&idx_path).unwrap() {
            return Err(format!("corpus {corpus}: index bytes changed on round trip"));
        }

        let mut meta = MetadataStore::in_memory();
        for (r, t) in records.iter().zip(0..) {
            meta.put(framedex_core::meta::PatchMeta {
                identity: r.identity.clone(),
                bbox: r.bbox,
                timestamp: t as f64,
            })
            .map_err(|e| e.to_string())?;
        }
        let meta_path = dir.path().join(format!("c{corpus}.meta.jsonl"));
        meta.save(&meta_path).map_err(|e| e.to_string())?;
        let meta_loaded = MetadataStore::load(&meta_path).map_err(|e| e.to_string())?;
        let again = dir.path().join(format!("c{corpus}.again.jsonl"));
        meta_loaded.save(&again).map_err(|e| e.to_string())?;
        if std::fs::read(&meta_path).unwrap() != std::fs::read(&again).unwrap() {
            return Err(format!("corpus {corpus}: metadata bytes changed on round trip"));
        }
        meta_loaded.check_integrity(&loaded).map_err(|e| e.to_string())?;

        for q in clustered_vectors::<f32>(5, 64, 32, 0.3, 700 + corpus, 1) {
            for a in [1, 4, 16] {
                let params = SearchParams::new(a, 20);
                if search(&index, &q, &params).unwrap() != search(&loaded, &q, &params).unwrap() {
                    return Err(format!("corpus {corpus}: results differ after reload at A={a}"));
                }
            }
        }
    }
    Ok("10 corpora: index and metadata bytes stable, search results identical after reload".into())
}

fn scalability() -> Outcome {
    let start = Instant::now();
    let config = BenchConfig { queries: 100, runs: 7, ..Default::default() };
    let small = config.build(10_000).map_err(|e| e.to_string())?;
    let t_small = fast_search_latency(&small, &config).map_err(|e| e.to_string())?;
    drop(small);
    let large = config.build(100_000).map_err(|e| e.to_string())?;
    let t_large = fast_search_latency(&large, &config).map_err(|e| e.to_string())?;
    let ratio = t_large / t_small;
    let secs = start.elapsed().as_secs_f64();
    let summary = format!(
        "median fast search {:.3} ms at 10k, {:.3} ms at 100k, ratio {ratio:.2} (limit 3.00, A=4, M=16; {secs:.1}s)",
        t_small * 1e3,
        t_large * 1e3
    );
    if ratio <= 3.0 && secs < 600.0 {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("oracle equivalence", oracle_equivalence),
        ("recall curve", recall_curve),
        ("similarity algebra", similarity_algebra),
        ("lloyd monotonicity", lloyd_monotonicity),
        ("planted retrieval", planted_retrieval),
        ("avep protocol", avep_protocol),
        ("persistence", persistence),
        ("scalability shape", scalability),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 && std::env::var("FRAMEDEX_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
