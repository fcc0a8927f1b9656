//! File handling for `SRLT` checkpoints and `SRLS` update messages.
//!
//! All writes go through a temp file in the destination directory followed
//! by an atomic rename, so a failing command never leaves a partial output.

use std::path::Path;

use anyhow::{Context, Result};
use sparsesync_core::codec::{deserialize_message, serialize_message, SyncMessage};
use sparsesync_core::container::{decode_checkpoint, encode_checkpoint};
use sparsesync_core::TensorMap;

pub fn read_checkpoint(path: &Path) -> Result<TensorMap> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    decode_checkpoint(&bytes).with_context(|| format!("decoding checkpoint {}", path.display()))
}

pub fn write_checkpoint(path: &Path, tensors: &TensorMap) -> Result<()> {
    write_atomic(path, &encode_checkpoint(tensors))
}

pub fn read_message(path: &Path) -> Result<SyncMessage> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading update {}", path.display()))?;
    deserialize_message(&bytes).with_context(|| format!("decoding update {}", path.display()))
}

pub fn write_message(path: &Path, msg: &SyncMessage) -> Result<()> {
    write_atomic(path, &serialize_message(msg))
}

/// Write-to-temp then rename within the destination directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    let tmp = dir.join(format!(
        ".{}.tmp-{}-{stamp}",
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        std::process::id(),
    ));
    let finish = (|| -> std::io::Result<()> {
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, path)
    })();
    if finish.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    finish.with_context(|| format!("writing {}", path.display()))
}

/// Parse whitespace/comment-tolerant hex dumps (the fixture format).
pub fn parse_hex_dump(text: &str) -> Result<Vec<u8>> {
    text.lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(str::split_whitespace)
        .map(|tok| u8::from_str_radix(tok, 16).with_context(|| format!("bad hex byte `{tok}`")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use sparsesync_core::TensorBuf;

    #[test]
    fn checkpoint_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.srlt");
        let mut m = TensorMap::new();
        m.insert(TensorBuf::from_f32("w", vec![3], &[1.0, 2.0, 3.0]).unwrap())
            .unwrap();
        write_checkpoint(&path, &m).unwrap();
        assert_eq!(read_checkpoint(&path).unwrap(), m);
        // No temp droppings left behind.
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn hex_dump_parsing() {
        assert_eq!(
            parse_hex_dump("# comment\n53 52\n4c").unwrap(),
            vec![0x53, 0x52, 0x4C]
        );
        assert!(parse_hex_dump("zz").is_err());
    }

    #[test]
    fn read_errors_name_the_path() {
        let err = read_checkpoint(Path::new("/nonexistent/x.srlt")).unwrap_err();
        assert!(err.to_string().contains("x.srlt"));
    }
}
