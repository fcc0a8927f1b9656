//! Analytic payload-size and wall-clock estimators for full vs sparse weight
//! synchronization.
//!
//! A full broadcast of `N` elements at `b_v` bytes each costs `N * b_v`
//! bytes. A sparse update at density `rho` carries `rho * N` (index, value)
//! pairs, so it costs `rho * N * (b_v + b_i) + S_meta` raw, and
//! `rho * N * (b_i + alpha * b_v)` once the value stream entropy-codes to an
//! `alpha` fraction of its raw size. Ratios divide the full payload by those.
//! Transfer time is payload over bandwidth, with no protocol overhead
//! modeled.

use crate::error::{Error, Result};

/// Symbols of the sparse-payload cost model.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CostParams {
    /// Total element count N.
    pub elements: u64,
    /// Update density rho in [0, 1].
    pub density: f64,
    /// Bytes per value, b_v.
    pub value_bytes: u32,
    /// Bytes per index, b_i (2 for delta-encoded, 4 for absolute).
    pub index_bytes: u32,
    /// Value-compression factor alpha in (0, 1]; 1 means uncompressed.
    pub alpha: f64,
    /// Constant metadata overhead S_meta in bytes.
    pub meta_bytes: f64,
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.density) {
            return Err(Error::Corrupt("density must lie in [0, 1]"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Corrupt("alpha must lie in (0, 1]"));
        }
        if self.value_bytes == 0 {
            return Err(Error::Corrupt("value bytes must be positive"));
        }
        if self.index_bytes != 2 && self.index_bytes != 4 {
            return Err(Error::Corrupt("index bytes must be 2 or 4"));
        }
        if self.meta_bytes.is_nan() || self.meta_bytes < 0.0 {
            return Err(Error::Corrupt("metadata bytes must be non-negative"));
        }
        Ok(())
    }
}

/// Full working-precision broadcast size: `N * b_v`.
pub fn full_payload_bytes(elements: u64, value_bytes: u32) -> f64 {
    elements as f64 * value_bytes as f64
}

/// Raw sparse payload: `rho * N * (b_v + b_i) + S_meta`.
pub fn sparse_payload_bytes(p: &CostParams) -> f64 {
    p.density * p.elements as f64 * (p.value_bytes + p.index_bytes) as f64 + p.meta_bytes
}

/// Raw compression ratio `b_v / (rho * (b_v + b_i))`, metadata ignored.
pub fn raw_ratio(density: f64, value_bytes: u32, index_bytes: u32) -> f64 {
    value_bytes as f64 / (density * (value_bytes + index_bytes) as f64)
}

/// Sparse payload after value entropy coding: `rho * N * (b_i + alpha * b_v)`.
pub fn compressed_payload_bytes(p: &CostParams) -> f64 {
    p.density * p.elements as f64 * (p.index_bytes as f64 + p.alpha * p.value_bytes as f64)
}

/// Combined ratio `b_v / (rho * (b_i + alpha * b_v))`.
pub fn compressed_ratio(p: &CostParams) -> f64 {
    p.value_bytes as f64 / (p.density * (p.index_bytes as f64 + p.alpha * p.value_bytes as f64))
}

/// Density at which the raw sparse payload equals the full payload.
pub fn break_even_density(value_bytes: u32, index_bytes: u32) -> f64 {
    value_bytes as f64 / (value_bytes + index_bytes) as f64
}

/// Transfer seconds for a payload at a bandwidth; zero payload is free.
pub fn estimate_sync_seconds(payload_bytes: f64, bandwidth_bytes_per_s: f64) -> f64 {
    if payload_bytes == 0.0 {
        return 0.0;
    }
    payload_bytes / bandwidth_bytes_per_s
}

/// Exact SRLS accounting for the metadata term: fixed message header plus
/// the per-record bytes ahead of a sparse record's index/value payloads.
pub fn record_overhead_bytes(name_len: usize, ndim: usize) -> u64 {
    // name_len:u16 name dtype:u8 path:u8 ndim:u8 dims nnz:u64 mode:u8 scheme:u8
    2 + name_len as u64 + 1 + 1 + 1 + 8 * ndim as u64 + 8 + 1 + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    const GB: f64 = 1e9;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn full_payload_anchors() {
        assert_eq!(full_payload_bytes(0, 2), 0.0);
        assert_eq!(full_payload_bytes(671_000_000_000, 2), 1342.0 * GB);
        assert_eq!(full_payload_bytes(1_000_000, 2), 2e6);
    }

    #[test]
    fn sparse_payload_anchors() {
        let p = CostParams {
            elements: 671_000_000_000,
            density: 0.0077,
            value_bytes: 2,
            index_bytes: 4,
            alpha: 1.0,
            meta_bytes: 0.0,
        };
        p.validate().unwrap();
        assert!(close(sparse_payload_bytes(&p), 31.0002 * GB, 1e-9));
        let two_byte = CostParams {
            index_bytes: 2,
            ..p
        };
        assert!(close(sparse_payload_bytes(&two_byte), 20.6668 * GB, 1e-4));

        let empty = CostParams {
            density: 0.0,
            meta_bytes: 123.0,
            ..p
        };
        assert_eq!(sparse_payload_bytes(&empty), 123.0);

        // Density 1 with 4-byte indices costs three full payloads.
        let dense = CostParams {
            density: 1.0,
            meta_bytes: 0.0,
            ..p
        };
        assert_eq!(
            sparse_payload_bytes(&dense),
            3.0 * full_payload_bytes(p.elements, 2)
        );
    }

    #[test]
    fn ratio_anchors() {
        assert!(close(raw_ratio(0.01, 2, 4), 33.333333333, 1e-9));
        // Exact break-even: fl(1/3) * 6 rounds to exactly 2.0.
        assert_eq!(raw_ratio(break_even_density(2, 4), 2, 4), 1.0);
        assert_eq!(break_even_density(2, 4), 1.0 / 3.0);

        let worked = CostParams {
            elements: 1,
            density: 0.0062,
            value_bytes: 2,
            index_bytes: 2,
            alpha: 0.60,
            meta_bytes: 0.0,
        };
        assert!(close(compressed_ratio(&worked), 100.80645161290323, 1e-12));
        assert!((compressed_ratio(&worked) - 100.0).abs() <= 1.0);
        // Per changed element: b_i + alpha * b_v = 3.2 bytes on the wire.
        assert!(close(
            compressed_payload_bytes(&worked) / (worked.density * 1.0),
            3.2,
            1e-12
        ));

        let low = CostParams {
            density: 0.011,
            alpha: 0.70,
            ..worked
        };
        assert!(close(compressed_ratio(&low), 53.475935828, 1e-9));

        // alpha = 1 with 4-byte indices degenerates to the raw ratio.
        let degenerate = CostParams {
            alpha: 1.0,
            index_bytes: 4,
            ..worked
        };
        assert!(close(
            compressed_ratio(&degenerate),
            raw_ratio(0.0062, 2, 4),
            1e-12
        ));
    }

    #[test]
    fn seconds_anchors() {
        assert_eq!(estimate_sync_seconds(0.0, 280.0 * GB), 0.0);
        assert!(close(
            estimate_sync_seconds(1342.0 * GB, 280.0 * GB),
            4.7928,
            1e-4
        ));
        assert!(close(
            estimate_sync_seconds(1342.0 * GB, 22.7 * GB),
            59.118,
            1e-4
        ));
    }

    #[test]
    fn validation_rejects_bad_params() {
        let good = CostParams {
            elements: 10,
            density: 0.5,
            value_bytes: 2,
            index_bytes: 4,
            alpha: 0.6,
            meta_bytes: 0.0,
        };
        good.validate().unwrap();
        assert!(CostParams {
            density: -0.1,
            ..good
        }
        .validate()
        .is_err());
        assert!(CostParams {
            density: 1.5,
            ..good
        }
        .validate()
        .is_err());
        assert!(CostParams { alpha: 0.0, ..good }.validate().is_err());
        assert!(CostParams { alpha: 1.2, ..good }.validate().is_err());
        assert!(CostParams {
            index_bytes: 3,
            ..good
        }
        .validate()
        .is_err());
        assert!(CostParams {
            value_bytes: 0,
            ..good
        }
        .validate()
        .is_err());
        assert!(CostParams {
            meta_bytes: f64::NAN,
            ..good
        }
        .validate()
        .is_err());
    }

    #[test]
    fn payloads_monotone_ratios_antitone() {
        let mut state = 0x1F83D9ABFB41BD6Bu64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..500 {
            let base = CostParams {
                elements: (next() * 1e9) as u64 + 1,
                density: next().max(1e-6),
                value_bytes: if next() < 0.5 { 1 } else { 2 },
                index_bytes: if next() < 0.5 { 2 } else { 4 },
                alpha: 0.2 + 0.8 * next(),
                meta_bytes: next() * 100.0,
            };
            let denser = CostParams {
                density: (base.density * (1.0 + next())).min(1.0),
                ..base
            };
            assert!(sparse_payload_bytes(&denser) >= sparse_payload_bytes(&base));
            assert!(compressed_payload_bytes(&denser) >= compressed_payload_bytes(&base));
            assert!(
                raw_ratio(denser.density, base.value_bytes, base.index_bytes)
                    <= raw_ratio(base.density, base.value_bytes, base.index_bytes)
            );
            assert!(compressed_ratio(&denser) <= compressed_ratio(&base));

            let bigger = CostParams {
                elements: base.elements * 2,
                ..base
            };
            assert!(sparse_payload_bytes(&bigger) >= sparse_payload_bytes(&base));
            assert!(full_payload_bytes(bigger.elements, 2) >= full_payload_bytes(base.elements, 2));

            let wider_alpha = CostParams {
                alpha: (base.alpha * 1.1).min(1.0),
                ..base
            };
            assert!(compressed_payload_bytes(&wider_alpha) >= compressed_payload_bytes(&base));

            // Compressed payload never beats raw in the wrong direction when
            // its parameters reflect an actual (never-expanding) encoding.
            if base.index_bytes <= 4 {
                let raw_equiv = CostParams {
                    alpha: 1.0,
                    index_bytes: 4,
                    meta_bytes: 0.0,
                    ..base
                };
                assert!(compressed_payload_bytes(&base) <= sparse_payload_bytes(&raw_equiv) + 1e-6);
            }
        }
    }
}
