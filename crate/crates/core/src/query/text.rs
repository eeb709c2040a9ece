//! Text encoders that map a query string into the patch embedding space.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{check_dim, normalize, DenseVector};
use crate::scalar::Scalar;
use crate::seed::{fnv1a, rng_for};
use crate::summary::class_direction;

pub trait TextProvider<T: Scalar>: Send + Sync {
    fn dim(&self) -> usize;

    /// Raw encoding; need not be unit-norm.
    fn encode(&self, text: &str) -> Result<DenseVector<T>>;
}

const TEXT_TAG: u64 = 0x7E47;

/// Pairs with [`crate::summary::SyntheticProvider`] under the same seed.
///
/// Every `class:N` token contributes the class-`N` direction; the sum is the
/// encoding. Text without such tokens hashes to a pseudo-random direction.
#[derive(Debug, Clone)]
pub struct SyntheticTextProvider {
    seed: u64,
    dim: usize,
}

impl SyntheticTextProvider {
    pub fn new(seed: u64, dim: usize) -> Self {
        Self { seed, dim }
    }
}

fn class_token(token: &str) -> Option<u32> {
    token.strip_prefix("class:")?.parse().ok()
}

impl<T: Scalar> TextProvider<T> for SyntheticTextProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<DenseVector<T>> {
        let mut acc = vec![0.0f64; self.dim];
        let mut found = false;
        for label in text.split_whitespace().filter_map(class_token) {
            found = true;
            for (a, c) in acc.iter_mut().zip(class_direction(self.seed, label, self.dim)) {
                *a += c;
            }
        }
        if !found {
            let mut rng = rng_for(&[self.seed, TEXT_TAG, fnv1a(text.as_bytes())]);
            acc.iter_mut().for_each(|a| *a = rng.sample(StandardNormal));
        }
        DenseVector::new(acc.into_iter().map(T::narrow).collect())
    }
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct TextLine<T> {
    text: String,
    embedding: Vec<T>,
}

/// Precomputed text embeddings read from JSONL lines `{"text", "embedding"}`.
#[derive(Debug, Clone)]
pub struct FileTextProvider<T> {
    dim: usize,
    table: HashMap<String, Vec<T>>,
}

impl<T: Scalar> FileTextProvider<T> {
    pub fn load(path: &Path) -> Result<Self> {
        let mut table = HashMap::new();
        let mut dim = None;
        for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse = |message: String| Error::Parse { line: i + 1, message };
            let rec: TextLine<T> = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
            match dim {
                None => dim = Some(rec.embedding.len()),
                Some(d) if d != rec.embedding.len() => {
                    return Err(parse(format!("embedding has {} values, expected {d}", rec.embedding.len())))
                }
                _ => {}
            }
            table.insert(rec.text, rec.embedding);
        }
        let dim = dim.ok_or_else(|| Error::Malformed("text embedding file is empty".into()))?;
        Ok(Self { dim, table })
    }
}

impl<T: Scalar> TextProvider<T> for FileTextProvider<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<DenseVector<T>> {
        let v = self.table.get(text).ok_or_else(|| Error::NotFound(format!("no embedding for query {text:?}")))?;
        DenseVector::new(v.clone())
    }
}

/// Unit-norm query vector of dimension `dim`.
pub fn embed_text<T: Scalar, P: TextProvider<T> + ?Sized>(
    text: &str,
    provider: &P,
    dim: usize,
) -> Result<DenseVector<T>> {
    if text.trim().is_empty() {
        return Err(Error::EmptyQuery);
    }
    let raw = provider.encode(text)?;
    check_dim(dim, raw.dim())?;
    normalize(&raw)
}
