//! Named, shaped, packed weight buffers and an insertion-ordered collection
//! of them.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::dtype::{self, DType};
use crate::error::{Error, Result};

/// Flat indices must fit a signed 32-bit integer.
pub const MAX_ELEMENTS: u64 = 1 << 31;

/// A named, dtyped, row-major packed buffer of scalar bits: the unit of all
/// weight state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorBuf {
    name: String,
    dtype: DType,
    shape: Vec<u64>,
    data: Vec<u8>,
}

impl TensorBuf {
    pub fn new(name: &str, dtype: DType, shape: Vec<u64>, data: Vec<u8>) -> Result<Self> {
        let invalid = |reason: &str| Error::InvalidTensor {
            name: name.to_string(),
            reason: reason.to_string(),
        };
        if name.is_empty() || name.len() > u16::MAX as usize {
            return Err(invalid("name must be 1..=65535 bytes"));
        }
        if shape.len() > u8::MAX as usize {
            return Err(invalid("too many dimensions"));
        }
        let mut numel: u64 = 1;
        for &d in &shape {
            if d == 0 {
                return Err(invalid("dimensions must be positive"));
            }
            numel = numel
                .checked_mul(d)
                .ok_or_else(|| invalid("element count overflows"))?;
            if numel >= MAX_ELEMENTS {
                return Err(invalid("element count must stay below 2^31"));
            }
        }
        if data.len() as u64 != numel * dtype.width_bytes() as u64 {
            return Err(invalid("data length does not match shape and dtype"));
        }
        Ok(TensorBuf {
            name: name.to_string(),
            dtype,
            shape,
            data,
        })
    }

    /// FP32 tensor from values; the usual way master weights are built.
    pub fn from_f32(name: &str, shape: Vec<u64>, values: &[f32]) -> Result<Self> {
        let mut data = Vec::with_capacity(values.len() * 4);
        for v in values {
            data.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        TensorBuf::new(name, DType::Fp32, shape, data)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn shape(&self) -> &[u64] {
        &self.shape
    }

    pub fn numel(&self) -> u64 {
        self.shape.iter().product()
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    /// Replace the packed bytes wholesale; length must be unchanged.
    pub(crate) fn replace_data(&mut self, data: Vec<u8>) {
        debug_assert_eq!(data.len(), self.data.len());
        self.data = data;
    }

    pub fn element_bits(&self, i: u64) -> u32 {
        dtype::read_element_bits(&self.data, self.dtype, i as usize)
    }

    /// FP32 view of an FP32 tensor's elements.
    pub fn f32_values(&self) -> Result<Vec<f32>> {
        if self.dtype != DType::Fp32 {
            return Err(Error::DTypeMismatch {
                name: self.name.clone(),
            });
        }
        Ok(self
            .data
            .chunks_exact(4)
            .map(|c| f32::from_bits(u32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect())
    }

    /// Per-element cast of an FP32 tensor to `target`.
    pub fn cast_to(&self, target: DType) -> Result<TensorBuf> {
        let values = self.f32_values()?;
        Ok(TensorBuf {
            name: self.name.clone(),
            dtype: target,
            shape: self.shape.clone(),
            data: dtype::cast_f32_slice(&values, target),
        })
    }
}

/// Tensors keyed by name, iterated in insertion order. Broadcast record
/// order and checkpoint layout both follow this order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TensorMap {
    items: Vec<TensorBuf>,
    index: BTreeMap<String, usize>,
}

impl TensorMap {
    pub fn new() -> Self {
        TensorMap::default()
    }

    pub fn insert(&mut self, tensor: TensorBuf) -> Result<()> {
        if self.index.contains_key(tensor.name()) {
            return Err(Error::InvalidTensor {
                name: tensor.name().to_string(),
                reason: "duplicate tensor name".to_string(),
            });
        }
        self.index
            .insert(tensor.name().to_string(), self.items.len());
        self.items.push(tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&TensorBuf> {
        self.index.get(name).map(|&i| &self.items[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut TensorBuf> {
        self.index.get(name).map(|&i| &mut self.items[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &TensorBuf> {
        self.items.iter()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn total_elements(&self) -> u64 {
        self.items.iter().map(TensorBuf::numel).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.items.iter().map(|t| t.data().len() as u64).sum()
    }
}

impl FromIterator<TensorBuf> for Result<TensorMap> {
    fn from_iter<I: IntoIterator<Item = TensorBuf>>(iter: I) -> Self {
        let mut map = TensorMap::new();
        for t in iter {
            map.insert(t)?;
        }
        Ok(map)
    }
}
