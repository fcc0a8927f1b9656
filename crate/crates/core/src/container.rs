//! The `SRLT` checkpoint container: a flat, byte-exact snapshot of named
//! tensors.
//!
//! Layout (integers little-endian):
//!
//! ```text
//! "SRLT" version:u16 tensor_count:u32
//! per tensor: name_len:u16 name dtype:u8 ndim:u8 dims:u64* data_len:u64 data
//! ```
//!
//! Encoding preserves insertion order, and decode(encode(x)) reproduces both
//! the bytes and the tensors exactly.

use alloc::string::ToString;
use alloc::vec::Vec;

use crate::dtype::DType;
use crate::error::{Error, Result};
use crate::tensor::{TensorBuf, TensorMap};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SRLT";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn encode_checkpoint(tensors: &TensorMap) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors.iter() {
        out.extend_from_slice(&(t.name().len() as u16).to_le_bytes());
        out.extend_from_slice(t.name().as_bytes());
        out.push(t.dtype().code());
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&(t.data().len() as u64).to_le_bytes());
        out.extend_from_slice(t.data());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<TensorMap> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if bytes.len() - *pos < n {
            return Err(Error::Truncated);
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };

    if take(&mut pos, 4)? != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic);
    }
    let version = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionUnsupported { found: version });
    }
    let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());

    let mut map = TensorMap::new();
    for _ in 0..count {
        let name_len = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap()) as usize;
        let name = core::str::from_utf8(take(&mut pos, name_len)?)
            .map_err(|_| Error::Corrupt("tensor name is not UTF-8"))?
            .to_string();
        let dtype = DType::from_code(take(&mut pos, 1)?[0])?;
        let ndim = take(&mut pos, 1)?[0] as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()));
        }
        let data_len = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
        if data_len > bytes.len() as u64 {
            return Err(Error::Truncated);
        }
        let data = take(&mut pos, data_len as usize)?.to_vec();
        // TensorBuf::new revalidates shape/dtype/length consistency.
        map.insert(
            TensorBuf::new(&name, dtype, dims, data).map_err(|e| match e {
                Error::InvalidTensor { .. } => Error::Corrupt("tensor record is inconsistent"),
                other => other,
            })?,
        )
        .map_err(|_| Error::Corrupt("duplicate tensor name"))?;
    }
    if pos != bytes.len() {
        return Err(Error::Corrupt("trailing bytes after tensors"));
    }
    Ok(map)
}
