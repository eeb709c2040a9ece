//! Patch-level object retrieval over video keyframes.
//!
//! Keyframes are cut into a patch grid, each patch is embedded and boxed,
//! and the unit-norm embeddings are stored in a product-quantized inverted
//! multi-index. Text queries run a two-stage search: approximate nearest
//! neighbours over the index, then a pluggable rerank over candidate frames.

pub mod anns;
pub mod bench;
pub mod error;
pub mod eval;
pub mod index;
pub mod meta;
pub mod model;
pub mod pq;
pub mod query;
pub mod scalar;
pub mod seed;
pub mod summary;
pub mod synthetic;

pub use error::{Error, Result};
pub use model::{BoundingBox, DenseVector, PatchIdentity, PatchRecord};
pub use scalar::Scalar;

/// `f32` instantiations used by the command-line tool and benchmarks.
pub type Vector = DenseVector<f32>;
pub type Record = PatchRecord<f32>;
pub type Index = index::InvertedMultiIndex<f32>;
pub type Quantizer = pq::ProductQuantizer<f32>;
pub type PatchCollection = summary::Collection<f32>;
