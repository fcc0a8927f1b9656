//! Master/working weight state with per-element change tracking at the cast
//! boundary.
//!
//! Every optimizer step updates the FP32 master weights, re-casts them into
//! the working precision, and records exactly the flat indices whose
//! working-precision bit pattern changed. The per-step sets accumulate into
//! a cumulative set that is cleared when a sync message is packed (the epoch
//! boundary). Change detection is bitwise, not numeric, so signed zeros and
//! NaN transitions are tracked deterministically.
//!
//! The cumulative set is a conservative superset of the true delta against
//! the last sync: an element can change and revert yet stay in the set.
//! Packing transmits current values, which makes the overapproximation
//! harmless.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::dtype::DType;
use crate::error::{Error, Result};
use crate::tensor::{TensorBuf, TensorMap};

/// Per-tensor sorted, duplicate-free flat indices of changed elements.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChangedIndexSet {
    tensors: BTreeMap<String, Vec<u32>>,
}

impl ChangedIndexSet {
    pub fn new() -> Self {
        ChangedIndexSet::default()
    }

    /// Register a tensor's changed indices; must be strictly increasing.
    pub fn insert_tensor(&mut self, name: &str, indices: Vec<u32>) -> Result<()> {
        if !indices.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::NotSorted);
        }
        if indices.is_empty() {
            self.tensors.remove(name);
        } else {
            self.tensors.insert(name.to_string(), indices);
        }
        Ok(())
    }

    pub fn indices(&self, name: &str) -> Option<&[u32]> {
        self.tensors.get(name).map(Vec::as_slice)
    }

    pub fn nnz(&self, name: &str) -> u64 {
        self.tensors.get(name).map_or(0, |v| v.len() as u64)
    }

    pub fn nnz_total(&self) -> u64 {
        self.tensors.values().map(|v| v.len() as u64).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[u32])> {
        self.tensors.iter().map(|(n, v)| (n.as_str(), v.as_slice()))
    }

    pub fn tensor_names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Drop all indices: the epoch boundary after a successful pack.
    pub fn clear(&mut self) {
        self.tensors.clear();
    }
}

/// Sorted per-tensor union of two changed-index sets.
pub fn accumulate(cum: &ChangedIndexSet, step: &ChangedIndexSet) -> ChangedIndexSet {
    let mut out = cum.clone();
    for (name, idx) in step.iter() {
        match out.tensors.get_mut(name) {
            None => {
                out.tensors.insert(name.to_string(), idx.to_vec());
            }
            Some(existing) => *existing = merge_sorted(existing, idx),
        }
    }
    out
}

fn merge_sorted(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            core::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            core::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Flat indices where the raw bit patterns of two equal-schema buffers
/// differ, ascending.
pub fn diff_changed(prev: &TensorBuf, curr: &TensorBuf) -> Result<Vec<u32>> {
    if prev.dtype() != curr.dtype() {
        return Err(Error::DTypeMismatch {
            name: curr.name().to_string(),
        });
    }
    if prev.shape() != curr.shape() || prev.name() != curr.name() {
        return Err(Error::ShapeMismatch {
            name: curr.name().to_string(),
        });
    }
    let width = prev.dtype().width_bytes();
    let mut out = Vec::new();
    for (i, (a, b)) in prev
        .data()
        .chunks_exact(width)
        .zip(curr.data().chunks_exact(width))
        .enumerate()
    {
        if a != b {
            out.push(i as u32);
        }
    }
    Ok(out)
}

/// FP32 deltas to add to the master weights, keyed by tensor name.
pub type UpdateMap = BTreeMap<String, Vec<f32>>;

/// FP32 master weights plus their working-precision cast, with a step
/// counter.
///
/// Single writer: [`ModelState::apply_master_update_and_track`] takes `&mut
/// self`; snapshots and reads may run concurrently with each other.
#[derive(Debug, Clone)]
pub struct ModelState {
    master: TensorMap,
    working: TensorMap,
    working_dtype: DType,
    step: u64,
}

impl ModelState {
    /// Build from FP32 master weights, casting the initial working copy.
    pub fn new(master: TensorMap, working_dtype: DType) -> Result<Self> {
        let mut working = TensorMap::new();
        for t in master.iter() {
            working.insert(t.cast_to(working_dtype)?)?;
        }
        Ok(ModelState {
            master,
            working,
            working_dtype,
            step: 0,
        })
    }

    pub fn master(&self) -> &TensorMap {
        &self.master
    }

    pub fn working(&self) -> &TensorMap {
        &self.working
    }

    pub fn working_dtype(&self) -> DType {
        self.working_dtype
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Deep copy of the working weights; later state mutation cannot reach
    /// the snapshot.
    pub fn snapshot_working(&self) -> TensorMap {
        self.working.clone()
    }

    /// One optimizer step with index tracking: master += delta, working :=
    /// cast(master), and the returned set holds exactly the indices whose
    /// working-precision bits changed this step.
    ///
    /// The previous working buffer of each tensor is dropped as soon as its
    /// diff is taken, so at most two working copies of a tensor are alive.
    pub fn apply_master_update_and_track(&mut self, update: &UpdateMap) -> Result<ChangedIndexSet> {
        for (name, delta) in update {
            let master = self
                .master
                .get_mut(name)
                .ok_or_else(|| Error::UnknownTensor { name: name.clone() })?;
            if delta.len() as u64 != master.numel() {
                return Err(Error::ShapeMismatch { name: name.clone() });
            }
            for (chunk, d) in master.data_mut().chunks_exact_mut(4).zip(delta) {
                let w =
                    f32::from_bits(u32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
                chunk.copy_from_slice(&(w + d).to_bits().to_le_bytes());
            }
        }

        let mut step_set = ChangedIndexSet::new();
        for name in update.keys() {
            // Untouched tensors keep identical master bits, and the cast is a
            // pure function, so their diff is provably empty.
            let master = self.master.get(name).expect("validated above");
            let fresh = master.cast_to(self.working_dtype)?;
            let prev = self
                .working
                .get_mut(name)
                .expect("master/working key parity");
            let changed = diff_changed(prev, &fresh)?;
            prev.replace_data(fresh.data().to_vec());
            step_set.insert_tensor(name, changed)?;
        }
        self.step += 1;
        Ok(step_set)
    }
}
