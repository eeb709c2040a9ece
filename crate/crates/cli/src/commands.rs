use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use framedex_core::bench::{index_size_sweep, rerank_csv, rerank_sweep, size_csv, BenchConfig};
use framedex_core::eval::{
    evaluate_query, median_timings, recall_sweep, EvalReport, GroundTruth, DEFAULT_IOU_THRESHOLD,
    DEFAULT_PREFIX_MULTIPLIER,
};
use framedex_core::index::InvertedMultiIndex;
use framedex_core::meta::MetadataStore;
use framedex_core::query::{
    embed_text, ConstantScorer, ExternalScorer, FileTextProvider, QueryEngine, RankedFrame, ReferenceScorer,
    RerankScorer, ResultManifest, SyntheticTextProvider, TextProvider, TextQuery,
};
use framedex_core::summary::{
    build_collection, read_exchange_file, read_frame_sequences_file, write_exchange_file, EmbeddingProvider,
    FileProvider, SyntheticProvider,
};
use framedex_core::synthetic::random_scene;
use framedex_core::{DenseVector, Error, Index, PatchCollection, Record};
use log::info;

use crate::config::{RunConfig, ScorerChoice};

pub fn ingest(c: &RunConfig) -> Result<()> {
    let (sequences, scene) = match &c.corpus {
        Some(path) => (read_frame_sequences_file(path).with_context(|| format!("reading {}", path.display()))?, None),
        None => {
            let spec = random_scene(c.seed, c.frames, c.object_rate, c.classes);
            (vec![spec.render()?], Some(spec))
        }
    };
    let provider: Box<dyn EmbeddingProvider<f32>> = match &c.patch_embeddings {
        Some(path) => Box::new(FileProvider::open(path).with_context(|| format!("reading {}", path.display()))?),
        None => Box::new(SyntheticProvider::new(c.seed, c.dim)),
    };

    let mut collection = PatchCollection::new();
    for seq in &sequences {
        let part = build_collection(seq, c.keyframe_policy(), c.patch_size, provider.as_ref(), c.dim)?;
        for (record, ts) in part.iter() {
            collection.push(record.clone(), ts)?;
        }
        collection.stats.frames += part.stats.frames;
        collection.stats.keyframes += part.stats.keyframes;
        collection.stats.dropped += part.stats.dropped;
    }

    write_exchange_file(&c.embeddings, &collection.to_exchange())
        .with_context(|| format!("writing {}", c.embeddings.display()))?;
    MetadataStore::from_collection(&collection)?.save(&c.metadata_path())?;
    if let Some(spec) = scene {
        fs::write(&c.ground_truth, spec.ground_truth(&collection)?.to_jsonl())
            .with_context(|| format!("writing {}", c.ground_truth.display()))?;
    }
    let s = collection.stats;
    println!("frames {} keyframes {} patches {} dropped {}", s.frames, s.keyframes, s.patches, s.dropped);
    Ok(())
}

fn load_collection(c: &RunConfig) -> Result<PatchCollection> {
    let records = read_exchange_file(&c.embeddings).with_context(|| format!("reading {}", c.embeddings.display()))?;
    let collection = PatchCollection::from_exchange(records)?;
    if let Some(dim) = collection.dim().filter(|&d| d != c.dim) {
        return Err(Error::DimensionMismatch { expected: c.dim, found: dim }.into());
    }
    Ok(collection)
}

fn build_and_persist(c: &RunConfig, collection: &PatchCollection) -> Result<()> {
    let (index, report) = Index::build(collection, &c.pq()?)?;
    index.persist(&c.index).with_context(|| format!("writing {}", c.index.display()))?;
    let meta = MetadataStore::from_collection(collection)?;
    meta.check_integrity(&index)?;
    meta.save(&c.metadata_path())?;
    println!("patches {}", index.len());
    for p in 0..c.subspaces {
        println!(
            "subspace {p}: postings {} distortion {:.6}",
            index.subspace_total(p),
            report.distortion[p].last().unwrap_or(&0.0)
        );
    }
    println!("total postings {} (= {} x {})", index.total_postings(), index.len(), c.subspaces);
    println!("distortion {:.6}", report.final_distortion());
    Ok(())
}

pub fn build(c: &RunConfig) -> Result<()> {
    build_and_persist(c, &load_collection(c)?)
}

/// Recovers the stored collection from an index and its metadata.
fn collection_from_index(index: &Index, meta: &MetadataStore) -> Result<PatchCollection> {
    let mut collection = PatchCollection::new();
    for (h, identity) in index.patch_table().iter().enumerate() {
        let values = index.reconstruct(h as u64).into_iter().map(|x| x as f32).collect();
        let record = Record {
            identity: identity.clone(),
            embedding: DenseVector::from_unit(values)?,
            bbox: index.bbox(h as u64),
        };
        collection.push(record, meta.get(identity)?.timestamp)?;
    }
    Ok(collection)
}

/// Retrains codebooks under the current config from an existing index.
pub fn rebuild(c: &RunConfig) -> Result<()> {
    let index = load_index(&c.index)?;
    let meta = MetadataStore::load(&c.metadata_path())?;
    let collection = collection_from_index(&index, &meta)?;
    drop(index);
    build_and_persist(c, &collection)
}

fn load_index(path: &Path) -> Result<Index> {
    InvertedMultiIndex::load(path).with_context(|| format!("loading {}", path.display()))
}

fn text_provider(c: &RunConfig) -> Result<Box<dyn TextProvider<f32>>> {
    Ok(match &c.text_embeddings {
        Some(path) => Box::new(FileTextProvider::load(path).with_context(|| format!("reading {}", path.display()))?),
        None => Box::new(SyntheticTextProvider::new(c.seed, c.dim)),
    })
}

fn scorer(choice: &ScorerChoice) -> Box<dyn RerankScorer> {
    match choice {
        ScorerChoice::Reference => Box::new(ReferenceScorer),
        ScorerChoice::Constant => Box::new(ConstantScorer::default()),
        ScorerChoice::External(cmd) => Box::new(ExternalScorer::new(cmd.clone())),
    }
}

pub fn query(c: &RunConfig, text: &str, query_id: Option<&str>, output: Option<&Path>) -> Result<()> {
    let index = load_index(&c.index)?;
    let text_provider = text_provider(c)?;
    let scorer = scorer(&c.scorer);
    let engine = QueryEngine { index: &index, text: text_provider.as_ref(), scorer: scorer.as_ref(), probes: c.probes };
    let outcome = engine.query(&TextQuery::new(text, c.k, c.n)?)?;
    let t = outcome.timings;
    info!(
        "processing {:.6}s fast_search {:.6}s rerank {:.6}s total {:.6}s",
        t.processing, t.fast_search, t.rerank, t.total
    );
    let manifest = ResultManifest {
        query_id: query_id.unwrap_or(text).to_string(),
        text: text.to_string(),
        k: c.k,
        n: c.n,
        probes: c.probes,
        scorer: c.scorer.to_string(),
        frames: outcome.frames,
    };
    let json = serde_json::to_string_pretty(&manifest)? + "\n";
    match output {
        Some(path) => fs::write(path, json).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{json}"),
    }
    Ok(())
}

pub struct EvalOptions {
    pub manifests: Vec<PathBuf>,
    pub runs: usize,
    pub sweep: bool,
}

pub fn eval(c: &RunConfig, opts: &EvalOptions) -> Result<()> {
    let truth = GroundTruth::load(&c.ground_truth).with_context(|| format!("reading {}", c.ground_truth.display()))?;
    if truth.is_empty() {
        return Err(Error::EmptyGroundTruth.into());
    }
    let index = load_index(&c.index)?;
    let text_provider = text_provider(c)?;
    let scorer = scorer(&c.scorer);
    let engine = QueryEngine { index: &index, text: text_provider.as_ref(), scorer: scorer.as_ref(), probes: c.probes };

    let manifests = opts
        .manifests
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<ResultManifest>(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut evals = Vec::new();
    let mut runs = Vec::new();
    let mut query_texts = Vec::new();
    for query_id in truth.query_ids() {
        let positives = truth.positives(query_id);
        let n = DEFAULT_PREFIX_MULTIPLIER * positives.len();
        let (text, frames): (String, Vec<RankedFrame>) = if opts.manifests.is_empty() {
            let q = TextQuery::new(query_id, c.k.max(n), n)?;
            (query_id.to_string(), engine.query(&q)?.frames)
        } else {
            match manifests.iter().find(|m| m.query_id == query_id) {
                Some(m) => (m.text.clone(), m.frames.clone()),
                None => {
                    log::warn!("no manifest for query {query_id}; scored as empty");
                    (query_id.to_string(), Vec::new())
                }
            }
        };
        evals.push(evaluate_query(query_id, &frames, positives, DEFAULT_PREFIX_MULTIPLIER, DEFAULT_IOU_THRESHOLD)?);
        let q = TextQuery::new(text.clone(), c.k.max(n), n)?;
        for _ in 0..opts.runs.max(5) {
            runs.push(engine.query(&q)?.timings);
        }
        query_texts.push(text);
    }

    let mut report = EvalReport::new(evals);
    report.latency = Some(median_timings(&runs));
    let meta = MetadataStore::load(&c.metadata_path())?;
    let records = collection_from_index(&index, &meta)?.records().to_vec();
    let vectors = query_texts
        .iter()
        .map(|t| embed_text(t, text_provider.as_ref(), c.dim))
        .collect::<framedex_core::Result<Vec<_>>>()?;
    let mut probes: Vec<usize> =
        std::iter::successors(Some(1), |a| Some(a * 2)).take_while(|&a| a < c.centroids).collect();
    probes.push(c.centroids);
    if !opts.sweep {
        probes = vec![c.probes];
    }
    let sweep = recall_sweep(&index, &records, &vectors, &probes, c.k)?;
    report.recall_at_k = sweep.iter().find(|p| p.probes == c.probes).map(|p| p.recall);
    if opts.sweep {
        report.sweep = sweep;
    }

    fs::write(&c.report, report.to_json() + "\n").with_context(|| format!("writing {}", c.report.display()))?;
    let table = report.to_table();
    fs::write(c.report.with_extension("txt"), &table)?;
    print!("{table}");
    Ok(())
}

pub struct BenchOptions {
    pub sizes: Vec<usize>,
    pub objects: Vec<usize>,
    pub rerank_corpus: usize,
    pub queries: usize,
    pub runs: usize,
    pub out_dir: PathBuf,
}

pub fn bench(c: &RunConfig, opts: &BenchOptions) -> Result<()> {
    let config = BenchConfig {
        subspaces: c.subspaces,
        centroids: c.centroids,
        train_iters: c.train_iters,
        probes: c.probes,
        k: c.k.min(10),
        queries: opts.queries,
        runs: opts.runs.max(5),
        seed: c.seed,
    };
    fs::create_dir_all(&opts.out_dir)?;
    let sizes = size_csv(&index_size_sweep(&opts.sizes, &config)?);
    fs::write(opts.out_dir.join("index_size.csv"), &sizes)?;
    print!("{sizes}");
    let rerank = rerank_csv(&rerank_sweep(opts.rerank_corpus, &opts.objects, &config)?);
    fs::write(opts.out_dir.join("rerank.csv"), &rerank)?;
    print!("{rerank}");
    Ok(())
}
