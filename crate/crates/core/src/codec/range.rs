//! Order-0 adaptive binary range coder.
//!
//! Carry-free binary arithmetic coder over 60-bit integer ranges, paired
//! with per-plane bit-tree models: each byte is coded as eight binary
//! decisions whose contexts are the bits already seen within the byte.
//! Counts adapt as symbols are coded, so encoder and decoder stay in
//! lockstep without any side table. The output is a deterministic function
//! of the input bytes.

use alloc::vec::Vec;

/// Total state bits; the range never exceeds 2^(B-1).
const B: u32 = 60;
const HALF: u64 = 1 << (B - 1);
const QUARTER: u64 = 1 << (B - 2);

/// Keep per-context counts below this; halving preserves the ratio.
const COUNT_LIMIT: u32 = 1 << 16;

struct BitSink {
    out: Vec<u8>,
    buf: u8,
    nbits: u32,
    pending: u64,
}

impl BitSink {
    fn push(&mut self, bit: u32) {
        self.buf = (self.buf << 1) | bit as u8;
        self.nbits += 1;
        if self.nbits == 8 {
            self.out.push(self.buf);
            self.buf = 0;
            self.nbits = 0;
        }
    }

    fn emit_with_pending(&mut self, bit: u32) {
        self.push(bit);
        while self.pending > 0 {
            self.push(1 - bit);
            self.pending -= 1;
        }
    }

    fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            self.buf <<= 8 - self.nbits;
            self.out.push(self.buf);
        }
        self.out
    }
}

pub struct Encoder {
    sink: BitSink,
    low: u64,
    range: u64,
}

impl Default for Encoder {
    fn default() -> Self {
        Encoder::new()
    }
}

impl Encoder {
    pub fn new() -> Self {
        Encoder {
            sink: BitSink {
                out: Vec::new(),
                buf: 0,
                nbits: 0,
                pending: 0,
            },
            low: 0,
            range: HALF,
        }
    }

    /// Encode one bit under counts `c0`/`c1` (both >= 1).
    pub fn encode(&mut self, bit: u32, c0: u32, c1: u32) {
        debug_assert!(bit <= 1 && c0 >= 1 && c1 >= 1);
        let (lps, c_lps) = if c0 < c1 { (0, c0) } else { (1, c1) };
        let r = self.range / (c0 + c1) as u64;
        let r_lps = r * c_lps as u64;
        if bit == lps {
            self.low += self.range - r_lps;
            self.range = r_lps;
        } else {
            self.range -= r_lps;
        }
        while self.range <= QUARTER {
            if self.low + self.range <= HALF {
                self.sink.emit_with_pending(0);
            } else if self.low >= HALF {
                self.sink.emit_with_pending(1);
                self.low -= HALF;
            } else {
                self.sink.pending += 1;
                self.low -= QUARTER;
            }
            self.low *= 2;
            self.range *= 2;
        }
    }

    /// Flush the interval state; the returned bytes fully determine the
    /// stream for a decoder primed with [`Decoder::new`].
    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..B {
            let bit = ((self.low >> (B - 1)) & 1) as u32;
            self.sink.emit_with_pending(bit);
            self.low = (self.low << 1) & ((1 << B) - 1);
        }
        // Two trailing zeros keep the decoder's lookahead in bounds.
        self.sink.emit_with_pending(0);
        self.sink.emit_with_pending(0);
        self.sink.finish()
    }
}

pub struct Decoder<'a> {
    input: &'a [u8],
    byte_pos: usize,
    bit_pos: u32,
    code: u64,
    range: u64,
}

impl<'a> Decoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        let mut d = Decoder {
            input,
            byte_pos: 0,
            bit_pos: 0,
            code: 0,
            range: HALF,
        };
        for _ in 0..B {
            d.code = (d.code << 1) | d.next_bit();
        }
        d
    }

    /// Bits past the end of the stream read as zero; structural validation
    /// happens above this layer.
    fn next_bit(&mut self) -> u64 {
        let bit = match self.input.get(self.byte_pos) {
            Some(&b) => ((b >> (7 - self.bit_pos)) & 1) as u64,
            None => 0,
        };
        self.bit_pos += 1;
        if self.bit_pos == 8 {
            self.bit_pos = 0;
            self.byte_pos += 1;
        }
        bit
    }

    pub fn decode(&mut self, c0: u32, c1: u32) -> u32 {
        debug_assert!(c0 >= 1 && c1 >= 1);
        let (lps, c_lps) = if c0 < c1 { (0, c0) } else { (1, c1) };
        let r = self.range / (c0 + c1) as u64;
        let r_lps = r * c_lps as u64;
        let bit;
        if self.code >= self.range - r_lps {
            bit = lps;
            self.code -= self.range - r_lps;
            self.range = r_lps;
        } else {
            bit = 1 - lps;
            self.range -= r_lps;
        }
        while self.range <= QUARTER {
            self.range *= 2;
            self.code = (self.code << 1) | self.next_bit();
        }
        bit
    }
}

/// Adaptive order-0 byte model: a 255-node binary context tree, one node per
/// bit prefix within the byte.
pub struct ByteModel {
    counts: [(u32, u32); 256],
}

impl Default for ByteModel {
    fn default() -> Self {
        ByteModel::new()
    }
}

impl ByteModel {
    pub fn new() -> Self {
        ByteModel {
            counts: [(1, 1); 256],
        }
    }

    fn bump(&mut self, ctx: usize, bit: u32) {
        let node = &mut self.counts[ctx];
        if bit == 0 {
            node.0 += 1;
        } else {
            node.1 += 1;
        }
        if node.0 + node.1 >= COUNT_LIMIT {
            node.0 = node.0.div_ceil(2);
            node.1 = node.1.div_ceil(2);
        }
    }

    pub fn encode_byte(&mut self, enc: &mut Encoder, byte: u8) {
        let mut ctx = 1usize;
        for k in (0..8).rev() {
            let bit = ((byte >> k) & 1) as u32;
            let (c0, c1) = self.counts[ctx];
            enc.encode(bit, c0, c1);
            self.bump(ctx, bit);
            ctx = (ctx << 1) | bit as usize;
        }
    }

    pub fn decode_byte(&mut self, dec: &mut Decoder) -> u8 {
        let mut ctx = 1usize;
        for _ in 0..8 {
            let (c0, c1) = self.counts[ctx];
            let bit = dec.decode(c0, c1);
            self.bump(ctx, bit);
            ctx = (ctx << 1) | bit as usize;
        }
        (ctx & 0xFF) as u8
    }
}

/// Compress a byte plane with a fresh adaptive model.
pub fn compress_plane(plane: &[u8]) -> Vec<u8> {
    let mut enc = Encoder::new();
    let mut model = ByteModel::new();
    for &b in plane {
        model.encode_byte(&mut enc, b);
    }
    enc.finish()
}

/// Inverse of [`compress_plane`] for a plane of known length.
pub fn decompress_plane(stream: &[u8], len: usize) -> Vec<u8> {
    let mut dec = Decoder::new(stream);
    let mut model = ByteModel::new();
    (0..len).map(|_| model.decode_byte(&mut dec)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_plane() {
        let enc = compress_plane(&[]);
        assert_eq!(decompress_plane(&enc, 0), Vec::<u8>::new());
    }

    #[test]
    fn roundtrip_all_byte_values() {
        let plane: Vec<u8> = (0..=255u8).cycle().take(4096).collect();
        let enc = compress_plane(&plane);
        assert_eq!(decompress_plane(&enc, plane.len()), plane);
    }

    #[test]
    fn constant_plane_compresses_hard() {
        let plane = vec![0xA7u8; 10_000];
        let enc = compress_plane(&plane);
        assert!(enc.len() < 100, "constant plane took {} bytes", enc.len());
        assert_eq!(decompress_plane(&enc, plane.len()), plane);
    }

    #[test]
    fn roundtrip_random_streams() {
        let mut state = 0x853C49E6748FEA9Bu64;
        for round in 0..200 {
            let len = (state % 600) as usize;
            let plane: Vec<u8> = (0..len)
                .map(|_| {
                    state = state
                        .wrapping_mul(6364136223846793005)
                        .wrapping_add(1442695040888963407);
                    (state >> 33) as u8
                })
                .collect();
            let enc = compress_plane(&plane);
            assert_eq!(decompress_plane(&enc, len), plane, "round {round}");
        }
    }

    #[test]
    fn skewed_stream_beats_raw() {
        // 95% zeros: order-0 entropy ~0.29 bits/byte.
        let mut state = 0x2545F4914F6CDD1Du64;
        let plane: Vec<u8> = (0..20_000)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                if state % 100 < 95 {
                    0
                } else {
                    (state >> 24) as u8
                }
            })
            .collect();
        let enc = compress_plane(&plane);
        assert!(
            enc.len() * 2 < plane.len(),
            "{} vs {}",
            enc.len(),
            plane.len()
        );
        assert_eq!(decompress_plane(&enc, plane.len()), plane);
    }
}
