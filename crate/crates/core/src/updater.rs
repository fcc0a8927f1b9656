//! Per-tensor sparse/full routing, packing changed elements into sync
//! messages, and in-place application on a receiver.
//!
//! Values travel as the current working-precision bits, never as arithmetic
//! deltas: a receiver that scatters them lands on exactly the sender's
//! buffer even when the index set overshoots the true delta, and applying
//! the same message twice is a no-op.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::codec::{
    self, compress_values, encode_indices, RecordPayload, SyncMessage, TensorRecord, UpdatePath,
    ValueEncoding,
};
use crate::dtype::DType;
use crate::error::{Error, Result};
use crate::tensor::{TensorBuf, TensorMap};
use crate::tracking::ChangedIndexSet;

/// Decides which tensors take the sparse path.
///
/// A tensor goes sparse iff its update density stays below the threshold and
/// its name matches none of the force-full patterns. The default threshold
/// is the break-even density 1/3 at which a raw 2-byte-value, 4-byte-index
/// sparse payload costs exactly as much as the full buffer.
#[derive(Debug, Clone)]
pub struct RoutingPolicy {
    pub density_threshold: f64,
    pub force_full: Vec<String>,
}

impl Default for RoutingPolicy {
    fn default() -> Self {
        RoutingPolicy {
            density_threshold: 1.0 / 3.0,
            force_full: Vec::new(),
        }
    }
}

impl RoutingPolicy {
    pub fn forces_full(&self, name: &str) -> bool {
        self.force_full.iter().any(|p| glob_match(p, name))
    }
}

/// `*` matches any (possibly empty) substring; everything else is literal.
fn glob_match(pattern: &str, name: &str) -> bool {
    let parts: Vec<&str> = pattern.split('*').collect();
    if parts.len() == 1 {
        return pattern == name;
    }
    let first = parts[0];
    let last = parts[parts.len() - 1];
    let mut rest = match name.strip_prefix(first) {
        Some(r) => r,
        None => return false,
    };
    for part in &parts[1..parts.len() - 1] {
        if part.is_empty() {
            continue;
        }
        match rest.find(part) {
            Some(at) => rest = &rest[at + part.len()..],
            None => return false,
        }
    }
    rest.ends_with(last)
}

/// Route one tensor by its update density.
pub fn route(name: &str, nnz: u64, numel: u64, policy: &RoutingPolicy) -> UpdatePath {
    debug_assert!(nnz <= numel);
    if policy.forces_full(name) {
        return UpdatePath::Full;
    }
    if numel > 0 && (nnz as f64) < policy.density_threshold * numel as f64 {
        UpdatePath::Sparse
    } else {
        UpdatePath::Full
    }
}

/// Parameter-shaped buffer with the dtype's canonical NaN at every position
/// not named by the originating index set.
///
/// Debug/cross-check representation; the production path gathers values
/// directly from `(param, indices)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedTensor {
    pub dtype: DType,
    pub shape: Vec<u64>,
    pub data: Vec<u8>,
}

pub fn materialize_masked(param: &TensorBuf, indices: &[u32]) -> Result<MaskedTensor> {
    let numel = param.numel();
    let dtype = param.dtype();
    let width = dtype.width_bytes();
    let sentinel = &dtype.canonical_nan_bits().to_le_bytes()[..width];
    let mut data = Vec::with_capacity(param.data().len());
    for _ in 0..numel {
        data.extend_from_slice(sentinel);
    }
    for &i in indices {
        if i as u64 >= numel {
            return Err(Error::IndexOutOfRange {
                name: param.name().to_string(),
                index: i,
                numel,
            });
        }
        let at = i as usize * width;
        data[at..at + width].copy_from_slice(&param.data()[at..at + width]);
    }
    Ok(MaskedTensor {
        dtype,
        shape: param.shape().to_vec(),
        data,
    })
}

/// Values at `indices`, bit-exact from `param`, packed in index order.
pub fn gather_values(param: &TensorBuf, indices: &[u32]) -> Result<Vec<u8>> {
    let numel = param.numel();
    let width = param.dtype().width_bytes();
    let mut out = Vec::with_capacity(indices.len() * width);
    for &i in indices {
        if i as u64 >= numel {
            return Err(Error::IndexOutOfRange {
                name: param.name().to_string(),
                index: i,
                numel,
            });
        }
        let at = i as usize * width;
        out.extend_from_slice(&param.data()[at..at + width]);
    }
    Ok(out)
}

/// Assemble the broadcast view of a parameter.
///
/// Identity at this scale: tensors are whole and already in the receiver's
/// row-major layout. A sharded backend slots its gather/layout fix here
/// without touching the message format.
pub fn convert_for_broadcast(param: &TensorBuf) -> &TensorBuf {
    param
}

/// Pack one sync message from the working weights and the cumulative
/// changed-index set.
///
/// Record order follows model iteration order. Tensors with no changed
/// elements are omitted unless a force-full pattern names them. On success
/// the caller clears the set: that is the epoch boundary.
pub fn pack_updates(
    working: &TensorMap,
    cum: &ChangedIndexSet,
    policy: &RoutingPolicy,
    compress: bool,
) -> Result<SyncMessage> {
    for name in cum.tensor_names() {
        if working.get(name).is_none() {
            return Err(Error::UnknownTensor {
                name: name.to_string(),
            });
        }
    }

    let mut records = Vec::new();
    for param in working.iter() {
        let nnz = cum.nnz(param.name());
        if nnz == 0 && !policy.forces_full(param.name()) {
            continue;
        }
        let src = convert_for_broadcast(param);
        let record = match route(param.name(), nnz, src.numel(), policy) {
            UpdatePath::Sparse => {
                let indices = cum.indices(param.name()).unwrap_or(&[]);
                let raw = gather_values(src, indices)?;
                let values = if compress {
                    compress_values(&raw, src.dtype())
                } else {
                    ValueEncoding::raw(&raw, src.dtype())
                };
                TensorRecord {
                    name: param.name().to_string(),
                    dtype: src.dtype(),
                    dims: src.shape().to_vec(),
                    payload: RecordPayload::Sparse {
                        nnz,
                        indices: encode_indices(indices)?,
                        values,
                    },
                }
            }
            UpdatePath::Full => TensorRecord {
                name: param.name().to_string(),
                dtype: src.dtype(),
                dims: src.shape().to_vec(),
                payload: RecordPayload::Full {
                    data: src.data().to_vec(),
                },
            },
        };
        records.push(record);
    }
    Ok(SyncMessage { records })
}

/// The full-update baseline: every tensor ships whole.
pub fn pack_full(working: &TensorMap) -> SyncMessage {
    let records = working
        .iter()
        .map(|param| {
            let src = convert_for_broadcast(param);
            TensorRecord {
                name: src.name().to_string(),
                dtype: src.dtype(),
                dims: src.shape().to_vec(),
                payload: RecordPayload::Full {
                    data: src.data().to_vec(),
                },
            }
        })
        .collect();
    SyncMessage { records }
}

/// Apply a sync message in place: sparse scatter for sparse records, whole
/// buffer replacement for full records. Untouched elements keep their bits.
pub fn apply_update(weights: &mut TensorMap, msg: &SyncMessage) -> Result<()> {
    for rec in &msg.records {
        let tensor = weights
            .get_mut(&rec.name)
            .ok_or_else(|| Error::UnknownTensor {
                name: rec.name.clone(),
            })?;
        if rec.dtype != tensor.dtype() {
            return Err(Error::DTypeMismatch {
                name: rec.name.clone(),
            });
        }
        if rec.dims != tensor.shape() {
            return Err(Error::ShapeMismatch {
                name: rec.name.clone(),
            });
        }
        let numel = tensor.numel();
        let width = tensor.dtype().width_bytes();
        match &rec.payload {
            RecordPayload::Full { data } => {
                if data.len() != tensor.data().len() {
                    return Err(Error::ShapeMismatch {
                        name: rec.name.clone(),
                    });
                }
                tensor.replace_data(data.clone());
            }
            RecordPayload::Sparse {
                nnz,
                indices,
                values,
            } => {
                let idx = codec::decode_indices(indices)?;
                if idx.len() as u64 != *nnz || values.count != idx.len() {
                    return Err(Error::Corrupt("record counts disagree"));
                }
                let bytes = codec::decompress_values(values)?;
                let data = tensor.data_mut();
                for (k, &i) in idx.iter().enumerate() {
                    if i as u64 >= numel {
                        return Err(Error::IndexOutOfRange {
                            name: rec.name.clone(),
                            index: i,
                            numel,
                        });
                    }
                    let src = k * width;
                    let dst = i as usize * width;
                    data[dst..dst + width].copy_from_slice(&bytes[src..src + width]);
                }
            }
        }
    }
    Ok(())
}
