//! IO, simulation harness, and operator surface for the sparse
//! weight-synchronization toolkit.
//!
//! The algorithmic core lives in `sparsesync-core`; this crate adds file
//! handling for the `SRLT`/`SRLS` formats, a loopback trainer-to-rollout
//! broadcast harness with bandwidth throttling and bit-exact verification,
//! and the `sparsesync` CLI.

pub mod digest;
pub mod harness;
pub mod io;
pub mod presets;
pub mod util;

use std::net::SocketAddr;

/// Errors raised by the harness and transport layers.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid model or driver spec: {0}")]
    SpecInvalid(String),
    #[error("core error: {0}")]
    Core(#[from] sparsesync_core::Error),
    #[error("endpoint {addr} unreachable: {source}")]
    EndpointUnreachable {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("connection to rank {rank} lost at bucket {seq}: {source}")]
    ConnectionLost {
        rank: usize,
        seq: u32,
        source: std::io::Error,
    },
    #[error("rank {rank} rejected epoch {epoch}: {message}")]
    SyncRejected {
        rank: usize,
        epoch: u64,
        message: String,
    },
    #[error("rank {rank} digest mismatch on `{tensor}`")]
    DigestMismatch { rank: usize, tensor: String },
    #[error("malformed frame: {0}")]
    Frame(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Log verbosity from `SPARSESYNC_LOG` (`quiet`, `info`, or `debug`).
pub fn log_level() -> u8 {
    use std::sync::OnceLock;
    static LEVEL: OnceLock<u8> = OnceLock::new();
    *LEVEL.get_or_init(|| match std::env::var("SPARSESYNC_LOG").as_deref() {
        Ok("debug") | Ok("2") => 2,
        Ok("info") | Ok("1") => 1,
        _ => 0,
    })
}

#[macro_export]
macro_rules! vlog {
    ($lvl:expr, $($arg:tt)*) => {
        if $crate::log_level() >= $lvl {
            eprintln!($($arg)*);
        }
    };
}
