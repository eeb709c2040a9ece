//! Lloyd's k-means with k-means++ seeding over flat row-major data.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::scalar::{squared_distance, Scalar};

#[derive(Debug, Clone)]
pub struct KMeansResult<T> {
    /// `k x dim`, row-major.
    pub centroids: Vec<T>,
    pub assignments: Vec<u32>,
    /// Within-cluster sum of squared distances after the initial assignment
    /// and after every Lloyd step that ran.
    pub distortion: Vec<f64>,
}

/// Nearest row of `centroids` to `x`; ties go to the smallest index.
pub fn nearest<T: Scalar>(x: &[T], centroids: &[T], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.chunks_exact(dim).enumerate() {
        let d = squared_distance(x, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn assign<T: Scalar>(data: &[T], centroids: &[T], dim: usize) -> (Vec<u32>, Vec<f64>) {
    data.par_chunks_exact(dim)
        .map(|x| {
            let (i, d) = nearest(x, centroids, dim);
            (i as u32, d)
        })
        .unzip()
}

fn plus_plus_seeds<T: Scalar>(data: &[T], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    let n = data.len() / dim;
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let first = rng.random_range(0..n);
    let mut centroids = row(first).to_vec();
    let mut d2: Vec<f64> = (0..n).map(|i| squared_distance(row(i), row(first))).collect();
    while centroids.len() < k * dim {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random_range(0.0..total);
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // rounding can leave `target` just past the final partial sum
            chosen.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("positive total"))
        } else {
            rng.random_range(0..n)
        };
        let c = row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_distance(row(i), &c));
        }
        centroids.extend(c);
    }
    centroids
}

/// Mean of each cluster; empty clusters move to the points farthest from
/// their current centroid (each such point used at most once).
fn update<T: Scalar>(data: &[T], dim: usize, assignments: &[u32], dists: &[f64], centroids: &mut [T]) {
    let k = centroids.len() / dim;
    let mut sums = vec![0.0f64; k * dim];
    let mut counts = vec![0usize; k];
    for (x, &a) in data.chunks_exact(dim).zip(assignments) {
        let a = a as usize;
        counts[a] += 1;
        for (s, v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(x) {
            *s += v.widen();
        }
    }
    let mut donors: Vec<usize> = (0..dists.len()).collect();
    // farthest first, ties by smallest index
    donors.sort_by(|&a, &b| dists[b].total_cmp(&dists[a]).then(a.cmp(&b)));
    let mut donors = donors.into_iter();
    for c in 0..k {
        let target = &mut centroids[c * dim..(c + 1) * dim];
        if counts[c] == 0 {
            if let Some(p) = donors.next() {
                target.copy_from_slice(&data[p * dim..(p + 1) * dim]);
            }
            continue;
        }
        let n = counts[c] as f64;
        for (t, s) in target.iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
            *t = T::narrow(s / n);
        }
    }
}

/// Runs at most `max_steps` Lloyd steps, stopping once assignments settle.
///
/// `data.len()` must be a multiple of `dim` holding at least `k` rows.
pub fn kmeans<T: Scalar>(data: &[T], dim: usize, k: usize, max_steps: usize, rng: &mut ChaCha8Rng) -> KMeansResult<T> {
    assert!(dim > 0 && k > 0 && data.len() >= k * dim && data.len().is_multiple_of(dim));
    let mut centroids = plus_plus_seeds(data, dim, k, rng);
    let (mut assignments, mut dists) = assign(data, &centroids, dim);
    let mut distortion = vec![dists.iter().sum::<f64>()];
    for _ in 0..max_steps {
        update(data, dim, &assignments, &dists, &mut centroids);
        let (next, next_dists) = assign(data, &centroids, dim);
        distortion.push(next_dists.iter().sum());
        let settled = next == assignments;
        assignments = next;
        dists = next_dists;
        if settled {
            break;
        }
    }
    KMeansResult { centroids, assignments, distortion }
}
