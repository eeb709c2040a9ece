use std::sync::{Arc, RwLock};

use crate::error::Result;
use crate::model::PatchRecord;
use crate::scalar::Scalar;

use super::InvertedMultiIndex;

/// Snapshot-swapping handle for concurrent readers and one writer.
///
/// Readers hold an `Arc` to an immutable snapshot. A write mutates a private
/// copy when snapshots are outstanding and publishes it only after it has
/// fully succeeded, so readers never see a half-applied insert.
#[derive(Debug)]
pub struct SharedIndex<T> {
    current: RwLock<Arc<InvertedMultiIndex<T>>>,
}

impl<T: Scalar> SharedIndex<T> {
    pub fn new(index: InvertedMultiIndex<T>) -> Self {
        Self { current: RwLock::new(Arc::new(index)) }
    }

    pub fn snapshot(&self) -> Arc<InvertedMultiIndex<T>> {
        Arc::clone(&self.current.read().expect("index lock poisoned"))
    }

    /// Inserts every record or none of them.
    pub fn insert_all(&self, records: &[PatchRecord<T>]) -> Result<Vec<u64>> {
        let mut guard = self.current.write().expect("index lock poisoned");
        let mut next = (**guard).clone();
        let handles = records.iter().map(|r| next.insert(r)).collect::<Result<Vec<_>>>()?;
        *guard = Arc::new(next);
        Ok(handles)
    }

    pub fn insert(&self, record: &PatchRecord<T>) -> Result<u64> {
        let mut guard = self.current.write().expect("index lock poisoned");
        // clones only while readers hold the current snapshot
        let index = Arc::make_mut(&mut guard);
        index.insert(record)
    }
}
