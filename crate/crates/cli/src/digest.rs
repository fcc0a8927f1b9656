//! Per-tensor digests for bit-exact verification across the wire.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};
use sparsesync_core::{TensorBuf, TensorMap};

pub type TensorDigest = [u8; 32];

/// SHA-256 of the raw packed bytes.
pub fn tensor_digest(t: &TensorBuf) -> TensorDigest {
    Sha256::digest(t.data()).into()
}

pub fn digest_map(m: &TensorMap) -> BTreeMap<String, TensorDigest> {
    m.iter()
        .map(|t| (t.name().to_string(), tensor_digest(t)))
        .collect()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest_hex_map(m: &TensorMap) -> BTreeMap<String, String> {
    m.iter()
        .map(|t| (t.name().to_string(), hex(&tensor_digest(t))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use sparsesync_core::DType;

    #[test]
    fn digest_tracks_bytes_not_names() {
        let a = TensorBuf::from_f32("a", vec![2], &[1.0, 2.0]).unwrap();
        let b = TensorBuf::from_f32("b", vec![2], &[1.0, 2.0]).unwrap();
        let c = TensorBuf::from_f32("c", vec![2], &[1.0, 2.5]).unwrap();
        assert_eq!(tensor_digest(&a), tensor_digest(&b));
        assert_ne!(tensor_digest(&a), tensor_digest(&c));
        let bf = a.cast_to(DType::Bf16).unwrap();
        assert_ne!(tensor_digest(&a), tensor_digest(&bf));
        assert_eq!(hex(&[0xDE, 0xAD]), "dead");
    }
}
