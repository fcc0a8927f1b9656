//! Lossless sparse weight synchronization primitives.
//!
//! A trainer that keeps FP32 master weights and casts them to a reduced
//! working precision (BF16/FP16/FP8) after every optimizer step only makes a
//! small fraction of elements visibly change per step: most updates are
//! absorbed by the cast. This crate provides everything needed to exploit
//! that, losslessly:
//!
//! - [`dtype`]: bit-exact round-to-nearest-even casts between FP32 and the
//!   synchronization precisions, the gate at which sparsity emerges.
//! - [`tracking`]: master/working weight state, per-element bitwise change
//!   detection at the cast boundary, and cumulative changed-index sets.
//! - [`codec`]: delta encoding of sorted index streams, byte-plane range
//!   coding of value streams, and the `SRLS` sync-message wire format.
//! - [`updater`]: per-tensor sparse/full routing, packing changed elements
//!   into messages, and in-place application on a receiver. Applying a packed
//!   update reproduces the sender's working weights byte for byte.
//! - [`costmodel`]: analytic payload-size and wall-clock estimators.
//! - [`analysis`]: sparsity, inactive-tensor, precision-visibility, and
//!   temporal-locality statistics over snapshot sequences.
//! - [`container`]: the `SRLT` checkpoint container.
//!
//! The crate is `no_std` (with `alloc`); IO, networking, and the CLI live in
//! the companion `sparsesync` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod codec;
pub mod container;
pub mod costmodel;
pub mod dtype;
mod error;
pub mod tensor;
pub mod tracking;
pub mod updater;

pub use dtype::{cast_f32_slice, cast_scalar, decode_scalar, DType, ScalarBits};
pub use error::{Error, Result};
pub use tensor::{TensorBuf, TensorMap};
pub use tracking::{accumulate, diff_changed, ChangedIndexSet, ModelState};
