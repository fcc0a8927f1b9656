//! Property tests over the codec: round-trip identities and the never-expand
//! guarantee, across index streams, value streams, and whole messages.

use proptest::collection::vec;
use proptest::prelude::*;

use sparsesync_core::codec::{
    compress_values, decode_indices, decompress_values, deserialize_message, encode_indices,
    serialize_message, IndexMode, RecordPayload, SyncMessage, TensorRecord, ValueEncoding,
};
use sparsesync_core::DType;

fn sorted_indices() -> impl Strategy<Value = Vec<u32>> {
    vec(0u32..2_000_000_000, 0..300).prop_map(|mut v| {
        v.sort_unstable();
        v.dedup();
        v
    })
}

fn arb_dtype() -> impl Strategy<Value = DType> {
    prop_oneof![
        Just(DType::Fp32),
        Just(DType::Bf16),
        Just(DType::Fp16),
        Just(DType::Fp8E4M3)
    ]
}

proptest! {
    #[test]
    fn index_roundtrip(idx in sorted_indices()) {
        let enc = encode_indices(&idx).unwrap();
        prop_assert!(enc.payload.len() <= idx.len() * 4, "index encoding expanded");
        prop_assert_eq!(decode_indices(&enc).unwrap(), idx);
    }

    #[test]
    fn dense_index_streams_pick_delta16(start in 0u32..30_000, gaps in vec(1u32..200, 1..200)) {
        let mut idx = vec![start];
        for g in gaps {
            idx.push(idx.last().unwrap() + g);
        }
        let enc = encode_indices(&idx).unwrap();
        prop_assert_eq!(enc.mode, IndexMode::Delta16);
        prop_assert_eq!(decode_indices(&enc).unwrap(), idx);
    }

    #[test]
    fn value_roundtrip(words in vec(any::<u8>(), 0..600), dtype in arb_dtype()) {
        let width = dtype.width_bytes();
        let bytes = &words[..words.len() / width * width];
        let enc = compress_values(bytes, dtype);
        prop_assert!(enc.payload.len() <= bytes.len());
        prop_assert_eq!(decompress_values(&enc).unwrap(), bytes);
    }

    #[test]
    fn clustered_value_roundtrip(seed_vals in vec(-4.0f32..4.0, 1..6), n in 1usize..400) {
        // Streams drawn from a few repeated values, the compressible case.
        let vals: Vec<f32> = (0..n).map(|i| seed_vals[i % seed_vals.len()]).collect();
        let bytes = sparsesync_core::cast_f32_slice(&vals, DType::Bf16);
        let enc = compress_values(&bytes, DType::Bf16);
        prop_assert!(enc.payload.len() <= bytes.len());
        prop_assert_eq!(decompress_values(&enc).unwrap(), bytes);
    }

    #[test]
    fn message_roundtrip(
        names in vec("[a-z][a-z0-9._]{0,20}", 0..5),
        raw in vec(any::<u8>(), 0..200),
        compress in any::<bool>(),
    ) {
        let mut records = Vec::new();
        let mut used = std::collections::BTreeSet::new();
        for (k, name) in names.into_iter().enumerate() {
            if !used.insert(name.clone()) {
                continue;
            }
            let numel = 64u64 + k as u64;
            if k % 2 == 0 {
                let idx: Vec<u32> = (0..raw.len().min(20) as u32).map(|i| i * 3).collect();
                let bytes: Vec<u8> = raw.iter().cycle().take(idx.len() * 2).copied().collect();
                let values = if compress {
                    compress_values(&bytes, DType::Bf16)
                } else {
                    ValueEncoding::raw(&bytes, DType::Bf16)
                };
                records.push(TensorRecord {
                    name,
                    dtype: DType::Bf16,
                    dims: vec![numel],
                    payload: RecordPayload::Sparse {
                        nnz: idx.len() as u64,
                        indices: encode_indices(&idx).unwrap(),
                        values,
                    },
                });
            } else {
                let data: Vec<u8> = if raw.is_empty() {
                    vec![7u8; numel as usize * 2]
                } else {
                    raw.iter().cycle().take(numel as usize * 2).copied().collect()
                };
                records.push(TensorRecord {
                    name,
                    dtype: DType::Bf16,
                    dims: vec![numel],
                    payload: RecordPayload::Full { data },
                });
            }
        }
        let msg = SyncMessage { records };
        let bytes = serialize_message(&msg);
        prop_assert_eq!(deserialize_message(&bytes).unwrap(), msg);
    }
}
