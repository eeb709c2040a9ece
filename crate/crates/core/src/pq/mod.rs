//! Product quantization: subspace split, Lloyd codebooks, codes, residuals
//! and query lookup tables.
//!
//! A `D'`-dimensional vector is cut into `P` contiguous parts of `m = D'/P`
//! coordinates; part `p` is quantized against its own table of `M` centroids.

pub mod kmeans;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_dim, DenseVector};
use crate::scalar::{dot, Scalar};
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PQConfig {
    pub dim: usize,
    pub subspaces: usize,
    pub centroids: usize,
    pub train_iters: usize,
    pub seed: u64,
}

impl PQConfig {
    pub fn new(dim: usize, subspaces: usize, centroids: usize, train_iters: usize, seed: u64) -> Result<Self> {
        let c = Self { dim, subspaces, centroids, train_iters, seed };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.subspaces == 0 || !self.dim.is_multiple_of(self.subspaces) {
            return Err(Error::InvalidConfig(format!(
                "dimension {} is not a positive multiple of {} subspaces",
                self.dim, self.subspaces
            )));
        }
        if self.centroids == 0 || self.centroids > u32::MAX as usize {
            return Err(Error::InvalidConfig(format!("invalid centroid count {}", self.centroids)));
        }
        if self.train_iters == 0 {
            return Err(Error::InvalidConfig("train_iters must be positive".into()));
        }
        Ok(())
    }

    /// Subspace dimension `m`.
    pub fn sub_dim(&self) -> usize {
        self.dim / self.subspaces
    }
}

impl Default for PQConfig {
    fn default() -> Self {
        Self { dim: 64, subspaces: 8, centroids: 16, train_iters: 25, seed: 0 }
    }
}

/// Contiguous, order-preserving split into `P` parts.
pub fn split<'a, T: Scalar>(v: &'a DenseVector<T>, config: &PQConfig) -> Result<Vec<&'a [T]>> {
    check_dim(config.dim, v.dim())?;
    Ok(v.values().chunks_exact(config.sub_dim()).collect())
}

/// Centroid table of one subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<T> {
    subspace: usize,
    sub_dim: usize,
    /// `M x m`, row-major.
    centroids: Vec<T>,
}

impl<T: Scalar> Codebook<T> {
    pub fn new(subspace: usize, sub_dim: usize, centroids: Vec<T>) -> Result<Self> {
        if sub_dim == 0 || centroids.is_empty() || !centroids.len().is_multiple_of(sub_dim) {
            return Err(Error::InvalidConfig(format!(
                "{} centroid values do not form rows of {sub_dim}",
                centroids.len()
            )));
        }
        Ok(Self { subspace, sub_dim, centroids })
    }

    pub fn subspace(&self) -> usize {
        self.subspace
    }

    pub fn len(&self) -> usize {
        self.centroids.len() / self.sub_dim
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn centroid(&self, m: usize) -> &[T] {
        &self.centroids[m * self.sub_dim..(m + 1) * self.sub_dim]
    }

    pub fn raw(&self) -> &[T] {
        &self.centroids
    }

    /// Index of the Euclidean-nearest centroid, ties to the smallest index.
    pub fn quantize(&self, part: &[T]) -> u32 {
        kmeans::nearest(part, &self.centroids, self.sub_dim).0 as u32
    }
}

/// Per-subspace centroid assignments.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PQCode(pub Vec<u32>);

impl PQCode {
    pub fn assignments(&self) -> &[u32] {
        &self.0
    }
}

/// `scores[p][m] = [q]_p . c_{m,p}`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable {
    centroids: usize,
    scores: Vec<f64>,
}

impl LookupTable {
    /// Builds a table from one row of centroid scores per subspace.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let centroids = rows.first().map_or(0, Vec::len);
        assert!(centroids > 0 && rows.iter().all(|r| r.len() == centroids), "rows must be non-empty and equal length");
        Self { centroids, scores: rows.concat() }
    }

    pub fn subspaces(&self) -> usize {
        self.scores.len() / self.centroids
    }

    pub fn centroids(&self) -> usize {
        self.centroids
    }

    pub fn get(&self, p: usize, m: usize) -> f64 {
        self.scores[p * self.centroids + m]
    }

    pub fn row(&self, p: usize) -> &[f64] {
        &self.scores[p * self.centroids..(p + 1) * self.centroids]
    }
}

/// Distortion trace of codebook training, one entry per subspace.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub distortion: Vec<Vec<f64>>,
}

impl TrainReport {
    /// Final within-cluster sum of squares summed over subspaces.
    pub fn final_distortion(&self) -> f64 {
        self.distortion.iter().filter_map(|d| d.last()).sum()
    }
}

/// Trained codebooks for every subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductQuantizer<T> {
    config: PQConfig,
    codebooks: Vec<Codebook<T>>,
}

impl<T: Scalar> ProductQuantizer<T> {
    pub fn from_codebooks(config: PQConfig, codebooks: Vec<Codebook<T>>) -> Result<Self> {
        config.validate()?;
        if codebooks.len() != config.subspaces
            || codebooks.iter().any(|c| c.len() != config.centroids || c.sub_dim != config.sub_dim())
        {
            return Err(Error::InvalidConfig("codebooks do not match configuration".into()));
        }
        Ok(Self { config, codebooks })
    }

    /// Trains one codebook per subspace with seeded k-means.
    pub fn train(vectors: &[DenseVector<T>], config: &PQConfig) -> Result<(Self, TrainReport)> {
        config.validate()?;
        if vectors.len() < config.centroids {
            return Err(Error::InsufficientTrainingData { needed: config.centroids, got: vectors.len() });
        }
        for v in vectors {
            check_dim(config.dim, v.dim())?;
        }
        let m = config.sub_dim();
        let mut codebooks = Vec::with_capacity(config.subspaces);
        let mut report = TrainReport::default();
        for p in 0..config.subspaces {
            let data: Vec<T> = vectors.iter().flat_map(|v| v.values()[p * m..(p + 1) * m].iter().copied()).collect();
            let mut rng = rng_for(&[config.seed, p as u64]);
            let result = kmeans::kmeans(&data, m, config.centroids, config.train_iters, &mut rng);
            codebooks.push(Codebook::new(p, m, result.centroids)?);
            report.distortion.push(result.distortion);
        }
        Ok((Self { config: *config, codebooks }, report))
    }

    pub fn config(&self) -> &PQConfig {
        &self.config
    }

    pub fn codebooks(&self) -> &[Codebook<T>] {
        &self.codebooks
    }

    pub fn encode(&self, v: &DenseVector<T>) -> Result<PQCode> {
        let parts = split(v, &self.config)?;
        Ok(PQCode(parts.iter().zip(&self.codebooks).map(|(part, cb)| cb.quantize(part)).collect()))
    }

    fn check_code(&self, code: &PQCode) -> Result<()> {
        check_dim(self.config.subspaces, code.0.len())?;
        if let Some(&bad) = code.0.iter().find(|&&a| a as usize >= self.config.centroids) {
            return Err(Error::InvalidConfig(format!("centroid index {bad} out of range")));
        }
        Ok(())
    }

    /// Per-subspace `part - centroid`, kept in `f64`.
    pub fn residual(&self, v: &DenseVector<T>, code: &PQCode) -> Result<Vec<Vec<f64>>> {
        self.check_code(code)?;
        let parts = split(v, &self.config)?;
        Ok(parts
            .iter()
            .zip(&self.codebooks)
            .zip(&code.0)
            .map(|((part, cb), &a)| {
                part.iter().zip(cb.centroid(a as usize)).map(|(x, c)| x.widen() - c.widen()).collect()
            })
            .collect())
    }

    /// Concatenated centroids of a code.
    pub fn reconstruct(&self, code: &PQCode) -> Result<Vec<T>> {
        self.check_code(code)?;
        Ok(self.codebooks.iter().zip(&code.0).flat_map(|(cb, &a)| cb.centroid(a as usize).iter().copied()).collect())
    }

    /// `sum ||v - reconstruct(encode(v))||^2` over `vectors`.
    pub fn distortion(&self, vectors: &[DenseVector<T>]) -> Result<f64> {
        let mut total = 0.0;
        for v in vectors {
            let code = self.encode(v)?;
            total += crate::scalar::squared_distance(v.values(), &self.reconstruct(&code)?);
        }
        Ok(total)
    }

    /// Query-part x centroid dot products. `q` is expected to be unit-norm.
    pub fn lookup_table(&self, q: &DenseVector<T>) -> Result<LookupTable> {
        let parts = split(q, &self.config)?;
        let mut scores = Vec::with_capacity(self.config.subspaces * self.config.centroids);
        for (part, cb) in parts.iter().zip(&self.codebooks) {
            scores.extend((0..cb.len()).map(|m| dot(part, cb.centroid(m))));
        }
        Ok(LookupTable { centroids: self.config.centroids, scores })
    }
}
