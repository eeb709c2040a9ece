//! Shared domain types and the similarity algebra.
//!
//! All stored embeddings are unit-norm, so the dot product is the cosine
//! similarity and Euclidean distance follows from it as `sqrt(2 - 2s)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};

/// Tolerance accepted on `|s| <= 1` before a similarity is rejected.
pub const SIMILARITY_SLACK: f64 = 1e-9;

/// A dense embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector<T> {
    values: Vec<T>,
    normalized: bool,
}

impl<T: Scalar> DenseVector<T> {
    /// Wraps raw coordinates. The vector is not flagged as normalized.
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidVector("dimension must be positive".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidVector(format!("non-finite coordinate at {i}")));
        }
        Ok(Self { values, normalized: false })
    }

    /// Wraps coordinates already known to be unit-norm (e.g. read back from
    /// an index). The norm is checked against the storage precision.
    pub fn from_unit(values: Vec<T>) -> Result<Self> {
        let v = Self::new(values)?;
        let norm = v.norm();
        if (norm - 1.0).abs() > unit_tolerance::<T>() {
            return Err(Error::InvalidVector(format!("norm {norm} is not unit")));
        }
        Ok(Self { normalized: true, ..v })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        scalar::dot(&self.values, &self.values).sqrt()
    }
}

/// Norm tolerance a normalized vector satisfies at storage precision `T`.
pub fn unit_tolerance<T: Scalar>() -> f64 {
    if T::BYTES >= 8 {
        1e-9
    } else {
        1e-6
    }
}

/// Scales `v` to unit L2 norm.
pub fn normalize<T: Scalar>(v: &DenseVector<T>) -> Result<DenseVector<T>> {
    let norm = v.norm();
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    let values = v.values.iter().map(|x| T::narrow(x.widen() / norm)).collect();
    Ok(DenseVector { values, normalized: true })
}

/// Cosine similarity of two normalized vectors (their dot product).
pub fn similarity<T: Scalar>(q: &DenseVector<T>, c: &DenseVector<T>) -> Result<f64> {
    check_dim(q.dim(), c.dim())?;
    Ok(scalar::dot(&q.values, &c.values))
}

/// Euclidean distance between unit vectors with similarity `s`.
pub fn distance_from_similarity(s: f64) -> Result<f64> {
    if !s.is_finite() || s.abs() > 1.0 + SIMILARITY_SLACK {
        return Err(Error::OutOfRange(s));
    }
    let s = s.clamp(-1.0, 1.0);
    Ok((2.0 - 2.0 * s).sqrt())
}

/// Direct L2 distance.
pub fn euclidean<T: Scalar>(a: &DenseVector<T>, b: &DenseVector<T>) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    Ok(scalar::squared_distance(&a.values, &b.values).sqrt())
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Axis-aligned box in pixel coordinates, corner representation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let coords = [x_min, y_min, x_max, y_max];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidBox(format!("non-finite coordinates {coords:?}")));
        }
        if x_min > x_max || y_min > y_max {
            return Err(Error::InvalidBox(format!("inverted corners {coords:?}")));
        }
        Ok(Self { x_min, y_min, x_max, y_max })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }

    /// Adds a per-corner offset and clamps the result into `[0, width] x [0, height]`.
    ///
    /// Corners that cross after the offset collapse onto their midpoint so the
    /// result is always a valid (possibly zero-area) box.
    pub fn offset_clamped(&self, offset: [f64; 4], width: f64, height: f64) -> Result<Self> {
        if offset.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidBox(format!("non-finite offset {offset:?}")));
        }
        let mut x0 = (self.x_min + offset[0]).clamp(0.0, width);
        let mut y0 = (self.y_min + offset[1]).clamp(0.0, height);
        let mut x1 = (self.x_max + offset[2]).clamp(0.0, width);
        let mut y1 = (self.y_max + offset[3]).clamp(0.0, height);
        if x0 > x1 {
            let mid = 0.5 * (x0 + x1);
            (x0, x1) = (mid, mid);
        }
        if y0 > y1 {
            let mid = 0.5 * (y0 + y1);
            (y0, y1) = (mid, mid);
        }
        Self::new(x0, y0, x1, y1)
    }

    pub fn union(&self, other: &Self) -> Self {
        Self {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        Self::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.to_array()
    }
}

/// Globally unique name of one patch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PatchIdentity {
    pub video_id: String,
    pub frame_id: String,
    pub patch_index: u32,
}

impl PatchIdentity {
    pub fn new(video_id: impl Into<String>, frame_id: impl Into<String>, patch_index: u32) -> Self {
        Self { video_id: video_id.into(), frame_id: frame_id.into(), patch_index }
    }
}

impl fmt::Display for PatchIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}#{}", self.video_id, self.frame_id, self.patch_index)
    }
}

/// One patch of the collection: identity, unit embedding and predicted box.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchRecord<T> {
    pub identity: PatchIdentity,
    pub embedding: DenseVector<T>,
    pub bbox: BoundingBox,
}

impl<T: Scalar> PatchRecord<T> {
    /// Builds a record, normalizing the embedding.
    pub fn new(identity: PatchIdentity, embedding: DenseVector<T>, bbox: BoundingBox) -> Result<Self> {
        let embedding = if embedding.is_normalized() { embedding } else { normalize(&embedding)? };
        Ok(Self { identity, embedding, bbox })
    }
}
