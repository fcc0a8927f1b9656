//! Lossless encodings for sparse update payloads and the `SRLS` sync-message
//! wire format.
//!
//! Index streams are sorted, so they ship as 16-bit first-differences when
//! every gap (including the first index, read as a delta from zero) fits
//! below 2^15, and as 32-bit absolutes otherwise. Value streams are split
//! into byte planes and range-coded per plane; whenever that does not win,
//! the raw bytes ship instead, so neither encoding ever expands.
//!
//! Wire layout (all integers little-endian):
//!
//! ```text
//! message  = "SRLS" version:u16 flags:u16 record_count:u32 crc32:u32 record*
//! record   = name_len:u16 name dtype:u8 path:u8 ndim:u8 dims:u64*
//!            SPARSE: nnz:u64 index_mode:u8 index_payload
//!                    value_scheme:u8 [payload_len:u32] value_payload
//!            FULL:   raw data (numel * width bytes)
//! ```
//!
//! The CRC32 (IEEE) covers every byte after the 16-byte header. Index and
//! raw-value payload lengths are implied by `nnz`, the mode, and the dtype;
//! only range-coded value payloads carry an explicit length.
//!
//! Changed-index sets overlap heavily between consecutive sync events, so a
//! cross-epoch dictionary for index streams is a natural extension; every
//! encoding here is stateless per message, deliberately.

pub mod range;

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::dtype::DType;
use crate::error::{Error, Result};
use crate::tensor::MAX_ELEMENTS;

pub const MESSAGE_MAGIC: [u8; 4] = *b"SRLS";
pub const MESSAGE_VERSION: u16 = 1;
/// Fixed message header: magic, version, flags, record count, CRC32.
pub const MESSAGE_HEADER_BYTES: usize = 16;

/// Gaps must stay below this for the 16-bit delta encoding.
pub const DELTA16_GAP_LIMIT: u32 = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexMode {
    Abs32,
    Delta16,
}

impl IndexMode {
    fn code(self) -> u8 {
        match self {
            IndexMode::Abs32 => 0,
            IndexMode::Delta16 => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(IndexMode::Abs32),
            1 => Ok(IndexMode::Delta16),
            _ => Err(Error::Corrupt("unknown index mode")),
        }
    }

    pub fn bytes_per_index(self) -> usize {
        match self {
            IndexMode::Abs32 => 4,
            IndexMode::Delta16 => 2,
        }
    }
}

/// Encoded sorted index stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEncoding {
    pub mode: IndexMode,
    pub count: usize,
    pub payload: Vec<u8>,
}

/// Delta-encode when every first-difference fits, else fall back to 32-bit
/// absolutes. Decoding inverts exactly.
pub fn encode_indices(indices: &[u32]) -> Result<IndexEncoding> {
    let mut prev = 0u32;
    let mut delta_ok = true;
    for (k, &idx) in indices.iter().enumerate() {
        if idx as u64 >= MAX_ELEMENTS {
            return Err(Error::IndexOverflow { index: idx as u64 });
        }
        if k > 0 && idx <= prev {
            return Err(Error::NotSorted);
        }
        // The first element is itself a delta from the prepended zero.
        if idx - prev >= DELTA16_GAP_LIMIT {
            delta_ok = false;
        }
        prev = idx;
    }
    if delta_ok {
        let mut payload = Vec::with_capacity(indices.len() * 2);
        let mut prev = 0u32;
        for &idx in indices {
            payload.extend_from_slice(&((idx - prev) as u16).to_le_bytes());
            prev = idx;
        }
        Ok(IndexEncoding {
            mode: IndexMode::Delta16,
            count: indices.len(),
            payload,
        })
    } else {
        let mut payload = Vec::with_capacity(indices.len() * 4);
        for &idx in indices {
            payload.extend_from_slice(&idx.to_le_bytes());
        }
        Ok(IndexEncoding {
            mode: IndexMode::Abs32,
            count: indices.len(),
            payload,
        })
    }
}

pub fn decode_indices(enc: &IndexEncoding) -> Result<Vec<u32>> {
    if enc.payload.len() != enc.count * enc.mode.bytes_per_index() {
        return Err(Error::Corrupt("index payload length mismatch"));
    }
    let mut out = Vec::with_capacity(enc.count);
    match enc.mode {
        IndexMode::Delta16 => {
            let mut cur = 0u64;
            for (k, ch) in enc.payload.chunks_exact(2).enumerate() {
                let delta = u16::from_le_bytes([ch[0], ch[1]]) as u64;
                if k > 0 && delta == 0 {
                    return Err(Error::Corrupt("non-increasing index reconstruction"));
                }
                cur += delta;
                if cur >= MAX_ELEMENTS {
                    return Err(Error::Corrupt("decoded index exceeds 31-bit range"));
                }
                out.push(cur as u32);
            }
        }
        IndexMode::Abs32 => {
            let mut prev = None;
            for ch in enc.payload.chunks_exact(4) {
                let idx = u32::from_le_bytes([ch[0], ch[1], ch[2], ch[3]]);
                if idx as u64 >= MAX_ELEMENTS {
                    return Err(Error::Corrupt("decoded index exceeds 31-bit range"));
                }
                if let Some(p) = prev {
                    if idx <= p {
                        return Err(Error::Corrupt("non-increasing index reconstruction"));
                    }
                }
                prev = Some(idx);
                out.push(idx);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueScheme {
    Raw,
    SplitRange,
}

impl ValueScheme {
    fn code(self) -> u8 {
        match self {
            ValueScheme::Raw => 0,
            ValueScheme::SplitRange => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(ValueScheme::Raw),
            1 => Ok(ValueScheme::SplitRange),
            _ => Err(Error::Corrupt("unknown value scheme")),
        }
    }
}

/// Encoded value stream; decompressing reproduces the input bytes exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueEncoding {
    pub scheme: ValueScheme,
    pub dtype: DType,
    pub count: usize,
    pub payload: Vec<u8>,
}

impl ValueEncoding {
    pub fn raw(values: &[u8], dtype: DType) -> Self {
        debug_assert_eq!(values.len() % dtype.width_bytes(), 0);
        ValueEncoding {
            scheme: ValueScheme::Raw,
            dtype,
            count: values.len() / dtype.width_bytes(),
            payload: values.to_vec(),
        }
    }
}

/// Split the packed stream into byte planes and range-code each plane; keep
/// the raw bytes whenever that is not smaller. `values.len()` must be a
/// multiple of the dtype width.
pub fn compress_values(values: &[u8], dtype: DType) -> ValueEncoding {
    let width = dtype.width_bytes();
    assert_eq!(
        values.len() % width,
        0,
        "value stream not a whole number of elements"
    );
    let count = values.len() / width;
    if count == 0 {
        return ValueEncoding {
            scheme: ValueScheme::Raw,
            dtype,
            count: 0,
            payload: Vec::new(),
        };
    }

    let mut payload = Vec::new();
    for plane_at in 0..width {
        let plane: Vec<u8> = values
            .iter()
            .skip(plane_at)
            .step_by(width)
            .copied()
            .collect();
        let stream = range::compress_plane(&plane);
        payload.extend_from_slice(&(stream.len() as u32).to_le_bytes());
        payload.extend_from_slice(&stream);
    }
    if payload.len() >= values.len() {
        return ValueEncoding::raw(values, dtype);
    }
    ValueEncoding {
        scheme: ValueScheme::SplitRange,
        dtype,
        count,
        payload,
    }
}

pub fn decompress_values(enc: &ValueEncoding) -> Result<Vec<u8>> {
    let width = enc.dtype.width_bytes();
    let raw_len = enc.count * width;
    match enc.scheme {
        ValueScheme::Raw => {
            if enc.payload.len() != raw_len {
                return Err(Error::Corrupt("raw value payload length mismatch"));
            }
            Ok(enc.payload.clone())
        }
        ValueScheme::SplitRange => {
            let mut out = alloc::vec![0u8; raw_len];
            let mut at = 0usize;
            for plane_at in 0..width {
                if enc.payload.len() < at + 4 {
                    return Err(Error::Corrupt("value plane header truncated"));
                }
                let len = u32::from_le_bytes(enc.payload[at..at + 4].try_into().unwrap()) as usize;
                at += 4;
                if enc.payload.len() < at + len {
                    return Err(Error::Corrupt("value plane truncated"));
                }
                let plane = range::decompress_plane(&enc.payload[at..at + len], enc.count);
                at += len;
                for (i, b) in plane.into_iter().enumerate() {
                    out[i * width + plane_at] = b;
                }
            }
            if at != enc.payload.len() {
                return Err(Error::Corrupt("trailing bytes after value planes"));
            }
            Ok(out)
        }
    }
}

/// Whether a tensor ships its changed elements or the whole buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum UpdatePath {
    Sparse,
    Full,
}

impl UpdatePath {
    fn code(self) -> u8 {
        match self {
            UpdatePath::Sparse => 0,
            UpdatePath::Full => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecordPayload {
    Sparse {
        nnz: u64,
        indices: IndexEncoding,
        values: ValueEncoding,
    },
    Full {
        data: Vec<u8>,
    },
}

/// One tensor's update inside a sync message.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub dtype: DType,
    pub dims: Vec<u64>,
    pub payload: RecordPayload,
}

impl TensorRecord {
    pub fn numel(&self) -> u64 {
        self.dims.iter().product()
    }

    pub fn path(&self) -> UpdatePath {
        match self.payload {
            RecordPayload::Sparse { .. } => UpdatePath::Sparse,
            RecordPayload::Full { .. } => UpdatePath::Full,
        }
    }
}

/// Self-describing payload of per-tensor update records: the on-wire object
/// of one synchronization event.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SyncMessage {
    pub records: Vec<TensorRecord>,
}

fn serialize_record(rec: &TensorRecord) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(rec.name.len() as u16).to_le_bytes());
    out.extend_from_slice(rec.name.as_bytes());
    out.push(rec.dtype.code());
    out.push(rec.path().code());
    out.push(rec.dims.len() as u8);
    for &d in &rec.dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    match &rec.payload {
        RecordPayload::Sparse {
            nnz,
            indices,
            values,
        } => {
            out.extend_from_slice(&nnz.to_le_bytes());
            out.push(indices.mode.code());
            out.extend_from_slice(&indices.payload);
            out.push(values.scheme.code());
            match values.scheme {
                ValueScheme::Raw => out.extend_from_slice(&values.payload),
                ValueScheme::SplitRange => {
                    out.extend_from_slice(&(values.payload.len() as u32).to_le_bytes());
                    out.extend_from_slice(&values.payload);
                }
            }
        }
        RecordPayload::Full { data } => out.extend_from_slice(data),
    }
    out
}

/// Header plus each record's bytes, the unit the bucketizer splits on.
/// Concatenating the parts yields exactly [`serialize_message`]'s output.
pub fn serialize_message_parts(msg: &SyncMessage) -> (Vec<u8>, Vec<Vec<u8>>) {
    let records: Vec<Vec<u8>> = msg.records.iter().map(serialize_record).collect();
    let mut crc = crc32fast::Hasher::new();
    for r in &records {
        crc.update(r);
    }
    let mut header = Vec::with_capacity(MESSAGE_HEADER_BYTES);
    header.extend_from_slice(&MESSAGE_MAGIC);
    header.extend_from_slice(&MESSAGE_VERSION.to_le_bytes());
    header.extend_from_slice(&0u16.to_le_bytes()); // flags, reserved
    header.extend_from_slice(&(msg.records.len() as u32).to_le_bytes());
    header.extend_from_slice(&crc.finalize().to_le_bytes());
    (header, records)
}

pub fn serialize_message(msg: &SyncMessage) -> Vec<u8> {
    let (header, records) = serialize_message_parts(msg);
    let mut out = header;
    for r in records {
        out.extend_from_slice(&r);
    }
    out
}

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Verify magic, version, flags, and payload CRC32, then parse records.
pub fn deserialize_message(bytes: &[u8]) -> Result<SyncMessage> {
    let mut r = ByteReader { buf: bytes, pos: 0 };
    if r.take(4)? != MESSAGE_MAGIC {
        return Err(Error::BadMagic);
    }
    let version = r.u16()?;
    if version != MESSAGE_VERSION {
        return Err(Error::VersionUnsupported { found: version });
    }
    if r.u16()? != 0 {
        return Err(Error::Corrupt("reserved flags set"));
    }
    let record_count = r.u32()?;
    let crc_stored = r.u32()?;
    if crc32fast::hash(&bytes[MESSAGE_HEADER_BYTES..]) != crc_stored {
        return Err(Error::CrcMismatch);
    }

    let mut records = Vec::with_capacity(record_count.min(4096) as usize);
    for _ in 0..record_count {
        records.push(read_record(&mut r)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Corrupt("trailing bytes after records"));
    }
    Ok(SyncMessage { records })
}

fn read_record(r: &mut ByteReader<'_>) -> Result<TensorRecord> {
    let name_len = r.u16()? as usize;
    let name = core::str::from_utf8(r.take(name_len)?)
        .map_err(|_| Error::Corrupt("tensor name is not UTF-8"))?
        .to_string();
    let dtype = DType::from_code(r.u8()?)?;
    let path = r.u8()?;
    let ndim = r.u8()? as usize;
    let mut dims = Vec::with_capacity(ndim);
    let mut numel: u64 = 1;
    for _ in 0..ndim {
        let d = r.u64()?;
        if d == 0 {
            return Err(Error::Corrupt("zero dimension"));
        }
        numel = numel
            .checked_mul(d)
            .ok_or(Error::Corrupt("shape overflows"))?;
        if numel >= MAX_ELEMENTS {
            return Err(Error::Corrupt("record exceeds 31-bit element range"));
        }
        dims.push(d);
    }
    let width = dtype.width_bytes();

    let payload = match path {
        0 => {
            let nnz = r.u64()?;
            if nnz > numel {
                return Err(Error::Corrupt("nnz exceeds element count"));
            }
            let mode = IndexMode::from_code(r.u8()?)?;
            let idx_payload = r.take(nnz as usize * mode.bytes_per_index())?.to_vec();
            let scheme = ValueScheme::from_code(r.u8()?)?;
            let val_payload = match scheme {
                ValueScheme::Raw => r.take(nnz as usize * width)?.to_vec(),
                ValueScheme::SplitRange => {
                    let len = r.u32()? as usize;
                    r.take(len)?.to_vec()
                }
            };
            RecordPayload::Sparse {
                nnz,
                indices: IndexEncoding {
                    mode,
                    count: nnz as usize,
                    payload: idx_payload,
                },
                values: ValueEncoding {
                    scheme,
                    dtype,
                    count: nnz as usize,
                    payload: val_payload,
                },
            }
        }
        1 => RecordPayload::Full {
            data: r.take(numel as usize * width)?.to_vec(),
        },
        _ => return Err(Error::Corrupt("unknown update path")),
    };
    Ok(TensorRecord {
        name,
        dtype,
        dims,
        payload,
    })
}
