use framedex_core::anns::{search, SearchParams};
use framedex_core::model::{distance_from_similarity, euclidean, normalize, similarity};
use framedex_core::pq::{split, PQCode, PQConfig, ProductQuantizer};
use framedex_core::synthetic::{clustered_vectors, records_from_vectors};
use framedex_core::{DenseVector, Index, Record};
use proptest::prelude::*;

fn unit(dim: usize) -> impl Strategy<Value = DenseVector<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim)
        .prop_filter_map("zero vector", |v| DenseVector::new(v).ok().and_then(|v| normalize(&v).ok()))
}

fn corpus(n: usize, seed: u64) -> Vec<Record> {
    records_from_vectors(clustered_vectors(n, 32, 8, 0.3, seed, 0), "v", 16).unwrap()
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn chord_distance_matches_direct_l2((a, b) in (1usize..24).prop_flat_map(|d| (unit(d), unit(d)))) {
        let direct = euclidean(&a, &b).unwrap();
        let via = distance_from_similarity(similarity(&a, &b).unwrap()).unwrap();
        prop_assert!((direct - via).abs() <= 1e-6, "{direct} vs {via}");
    }

    #[test]
    fn similarity_symmetric_and_bounded((a, b) in (1usize..24).prop_flat_map(|d| (unit(d), unit(d)))) {
        let ab = similarity(&a, &b).unwrap();
        prop_assert_eq!(ab, similarity(&b, &a).unwrap());
        prop_assert!(ab.abs() <= 1.0 + 1e-9);
    }

    #[test]
    fn normalize_is_idempotent(v in prop::collection::vec(-100.0f64..100.0, 1..32)) {
        if let Ok(once) = normalize(&DenseVector::new(v).unwrap()) {
            let twice = normalize(&once).unwrap();
            for (x, y) in once.values().iter().zip(twice.values()) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn split_concatenates_back(v in unit(48), p in prop::sample::select(vec![1usize, 2, 3, 4, 6, 8, 12])) {
        let config = PQConfig::new(48, p, 2, 1, 0).unwrap();
        let parts = split(&v, &config).unwrap();
        prop_assert_eq!(parts.len(), p);
        prop_assert_eq!(parts.concat(), v.values().to_vec());
    }

    #[test]
    fn encoding_a_reconstruction_returns_its_code(seed in 0u64..1000) {
        let data = clustered_vectors::<f32>(200, 32, 8, 0.3, seed, 0);
        let (pq, _) = ProductQuantizer::train(&data, &PQConfig::new(32, 4, 8, 10, seed).unwrap()).unwrap();
        for v in data.iter().take(50) {
            let code = pq.encode(v).unwrap();
            let back = DenseVector::new(pq.reconstruct(&code).unwrap()).unwrap();
            prop_assert_eq!(pq.encode(&back).unwrap(), code);
        }
    }

    #[test]
    fn distortion_never_rises_with_more_iterations(seed in 0u64..1000, short in 1usize..5, extra in 1usize..10) {
        let data = clustered_vectors::<f32>(300, 16, 6, 0.4, seed, 0);
        let train = |iters| {
            let (pq, _) = ProductQuantizer::train(&data, &PQConfig::new(16, 2, 8, iters, seed).unwrap()).unwrap();
            pq.distortion(&data).unwrap()
        };
        prop_assert!(train(short + extra) <= train(short) + 1e-9);
    }

    #[test]
    fn lookup_plus_residual_is_exact_dot(seed in 0u64..1000, qseed in 0u64..1000) {
        let records = corpus(120, seed);
        let (index, _) = Index::build_from_records(&records, &PQConfig::new(32, 4, 8, 10, seed).unwrap()).unwrap();
        let q = clustered_vectors::<f32>(1, 32, 8, 0.3, qseed, 1).remove(0);
        let lut = index.quantizer().lookup_table(&q).unwrap();
        let parts = split(&q, index.config()).unwrap();
        for (h, r) in records.iter().enumerate() {
            let h = h as u64;
            let approx: f64 = (0..4)
                .map(|p| {
                    let resid: f64 = parts[p].iter().zip(index.residual(h, p)).map(|(a, b)| *a as f64 * b).sum();
                    lut.get(p, index.code(h)[p] as usize) + resid
                })
                .sum();
            prop_assert!((approx - dot(q.values(), r.embedding.values())).abs() <= 1e-5);
        }
    }

    #[test]
    fn inserted_records_are_found_by_full_probe(seed in 0u64..1000, extra in 1usize..20) {
        let records = corpus(100 + extra, seed);
        let (built, _) = Index::build_from_records(&records[..100], &PQConfig::new(32, 4, 8, 10, seed).unwrap()).unwrap();
        let mut index = built;
        for r in &records[100..] {
            let h = index.insert(r).unwrap();
            let hits = search(&index, &r.embedding, &SearchParams::new(8, index.len())).unwrap();
            prop_assert!(hits.iter().any(|hit| hit.patch_ref == h));
            prop_assert_eq!(hits.len(), index.len());
        }
    }

    #[test]
    fn persistence_preserves_search(seed in 0u64..1000, probes in 1usize..=8, k in 1usize..30) {
        let records = corpus(150, seed);
        let (index, _) = Index::build_from_records(&records, &PQConfig::new(32, 4, 8, 10, seed).unwrap()).unwrap();
        let loaded = Index::from_bytes(&index.to_bytes()).unwrap();
        let params = SearchParams::new(probes, k);
        for q in clustered_vectors::<f32>(5, 32, 8, 0.3, seed, 1) {
            prop_assert_eq!(search(&index, &q, &params).unwrap(), search(&loaded, &q, &params).unwrap());
        }
    }
}

#[test]
fn distortion_never_rises_with_more_centroids() {
    let data = clustered_vectors::<f32>(400, 32, 16, 0.3, 3, 0);
    for seed in 0..5 {
        let distortions: Vec<f64> = [1, 2, 4, 8]
            .iter()
            .map(|&m| {
                let (pq, _) = ProductQuantizer::train(&data, &PQConfig::new(32, 4, m, 25, seed).unwrap()).unwrap();
                pq.distortion(&data).unwrap()
            })
            .collect();
        assert!(distortions.windows(2).all(|w| w[1] <= w[0]), "seed {seed}: {distortions:?}");
    }
}

#[test]
fn code_of_wrong_length_is_rejected() {
    let data = clustered_vectors::<f32>(20, 8, 2, 0.3, 0, 0);
    let (pq, _) = ProductQuantizer::train(&data, &PQConfig::new(8, 2, 2, 5, 0).unwrap()).unwrap();
    assert!(pq.reconstruct(&PQCode(vec![0])).is_err());
    assert!(pq.reconstruct(&PQCode(vec![0, 2])).is_err());
}
