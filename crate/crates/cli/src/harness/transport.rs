//! Length-prefixed framing over loopback TCP, the rollout receiver loop,
//! and the fan-out broadcaster.
//!
//! Frame layout: `len:u32le` then `type:u8` then body, where `len` counts
//! the type byte plus the body. One connection per rank; all frames share
//! the framing.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::thread::JoinHandle;
use std::time::Instant;

use sparsesync_core::codec::deserialize_message;
use sparsesync_core::updater::apply_update;
use sparsesync_core::TensorMap;

use super::{Bucket, Throttle};
use crate::digest::{digest_map, TensorDigest};
use crate::HarnessError;

const FRAME_DATA: u8 = 0;
const FRAME_VERIFY: u8 = 1;
const FRAME_DIGEST: u8 = 2;
const FRAME_NACK: u8 = 3;
const FRAME_EPOCH: u8 = 4;

/// Hard sanity cap on frame bodies; desk-scale payloads sit far below it.
const MAX_FRAME_BODY: usize = 1 << 31;

/// Sender writes in chunks of this size so throttling stays smooth.
const CHUNK: usize = 256 << 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    EpochBegin { epoch: u64, buckets: u32 },
    Data { seq: u32, payload: Vec<u8> },
    EpochEnd { epoch: u64 },
    Verify,
    Digest(Vec<(String, TensorDigest)>),
    Nack { epoch: u64, message: String },
}

impl Frame {
    fn encode(&self) -> Vec<u8> {
        let mut body = Vec::new();
        let ty = match self {
            Frame::Data { seq, payload } => {
                body.extend_from_slice(&seq.to_le_bytes());
                body.extend_from_slice(payload);
                FRAME_DATA
            }
            Frame::Verify => FRAME_VERIFY,
            Frame::Digest(entries) => {
                body.extend_from_slice(&(entries.len() as u32).to_le_bytes());
                for (name, digest) in entries {
                    body.extend_from_slice(&(name.len() as u16).to_le_bytes());
                    body.extend_from_slice(name.as_bytes());
                    body.extend_from_slice(digest);
                }
                FRAME_DIGEST
            }
            Frame::Nack { epoch, message } => {
                body.extend_from_slice(&epoch.to_le_bytes());
                body.extend_from_slice(&(message.len() as u32).to_le_bytes());
                body.extend_from_slice(message.as_bytes());
                FRAME_NACK
            }
            Frame::EpochBegin { epoch, buckets } => {
                body.push(0);
                body.extend_from_slice(&epoch.to_le_bytes());
                body.extend_from_slice(&buckets.to_le_bytes());
                FRAME_EPOCH
            }
            Frame::EpochEnd { epoch } => {
                body.push(1);
                body.extend_from_slice(&epoch.to_le_bytes());
                FRAME_EPOCH
            }
        };
        let mut out = Vec::with_capacity(5 + body.len());
        out.extend_from_slice(&(1 + body.len() as u32).to_le_bytes());
        out.push(ty);
        out.extend_from_slice(&body);
        out
    }

    fn decode(ty: u8, body: &[u8]) -> Result<Frame, HarnessError> {
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8], HarnessError> {
            if body.len() - *pos < n {
                return Err(HarnessError::Frame("frame body truncated"));
            }
            let s = &body[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        let frame = match ty {
            FRAME_DATA => {
                let seq = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
                Frame::Data {
                    seq,
                    payload: body[pos..].to_vec(),
                }
            }
            FRAME_VERIFY => Frame::Verify,
            FRAME_DIGEST => {
                let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
                let mut entries = Vec::with_capacity(count.min(65_536) as usize);
                for _ in 0..count {
                    let len = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap()) as usize;
                    let name = String::from_utf8(take(&mut pos, len)?.to_vec())
                        .map_err(|_| HarnessError::Frame("digest name is not UTF-8"))?;
                    let digest: TensorDigest = take(&mut pos, 32)?.try_into().unwrap();
                    entries.push((name, digest));
                }
                if pos != body.len() {
                    return Err(HarnessError::Frame("trailing digest bytes"));
                }
                Frame::Digest(entries)
            }
            FRAME_NACK => {
                let epoch = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
                let len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
                let message = String::from_utf8(take(&mut pos, len)?.to_vec())
                    .map_err(|_| HarnessError::Frame("NACK message is not UTF-8"))?;
                Frame::Nack { epoch, message }
            }
            FRAME_EPOCH => {
                let marker = take(&mut pos, 1)?[0];
                let epoch = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
                match marker {
                    0 => {
                        let buckets = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
                        Frame::EpochBegin { epoch, buckets }
                    }
                    1 => Frame::EpochEnd { epoch },
                    _ => return Err(HarnessError::Frame("unknown epoch marker")),
                }
            }
            _ => return Err(HarnessError::Frame("unknown frame type")),
        };
        Ok(frame)
    }
}

/// Write one frame, pacing all its bytes through the throttle when present.
pub fn write_frame(
    w: &mut impl Write,
    frame: &Frame,
    throttle: &mut Option<Throttle>,
) -> std::io::Result<()> {
    let bytes = frame.encode();
    for chunk in bytes.chunks(CHUNK) {
        if let Some(t) = throttle.as_mut() {
            t.acquire(chunk.len());
        }
        w.write_all(chunk)?;
    }
    Ok(())
}

/// Read one frame; `Ok(None)` is a clean shutdown at a frame boundary.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Frame>, HarnessError> {
    let mut len_buf = [0u8; 4];
    match r.read_exact(&mut len_buf) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_le_bytes(len_buf) as usize;
    if len == 0 || len > MAX_FRAME_BODY {
        return Err(HarnessError::Frame("implausible frame length"));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Frame::decode(buf[0], &buf[1..]).map(Some)
}

/// A spawned rollout receiver serving one connection.
pub struct RolloutHandle {
    pub addr: SocketAddr,
    join: JoinHandle<Result<TensorMap, HarnessError>>,
}

impl RolloutHandle {
    /// Wait for the serving loop to end (sender closed the connection) and
    /// take the final weights.
    pub fn join(self) -> Result<TensorMap, HarnessError> {
        match self.join.join() {
            Ok(r) => r,
            Err(_) => Err(HarnessError::Frame("rollout endpoint panicked")),
        }
    }
}

/// Bind an ephemeral loopback port and serve sync epochs against `initial`
/// weights. Each reassembled message is applied in place; a VERIFY frame is
/// answered with per-tensor digests; any codec or apply error NACKs the
/// epoch and the loop keeps serving.
pub fn spawn_rollout_endpoint(initial: TensorMap) -> Result<RolloutHandle, HarnessError> {
    let listener = TcpListener::bind(("127.0.0.1", 0))?;
    let addr = listener.local_addr()?;
    let join = std::thread::spawn(move || serve(listener, initial));
    Ok(RolloutHandle { addr, join })
}

struct EpochAssembly {
    epoch: u64,
    expected: u32,
    payloads: Vec<Vec<u8>>,
}

fn serve(listener: TcpListener, mut weights: TensorMap) -> Result<TensorMap, HarnessError> {
    let (mut stream, _) = listener.accept()?;
    let mut pending: Option<EpochAssembly> = None;
    loop {
        let frame = match read_frame(&mut stream)? {
            Some(f) => f,
            None => return Ok(weights),
        };
        match frame {
            Frame::EpochBegin { epoch, buckets } => {
                pending = Some(EpochAssembly {
                    epoch,
                    expected: buckets,
                    payloads: Vec::new(),
                });
            }
            Frame::Data { seq, payload } => match pending.as_mut() {
                Some(a) if seq as usize == a.payloads.len() => a.payloads.push(payload),
                _ => {
                    let epoch = pending.take().map_or(0, |a| a.epoch);
                    nack(
                        &mut stream,
                        epoch,
                        "bucket outside an epoch or out of order",
                    )?;
                }
            },
            Frame::EpochEnd { epoch } => {
                let Some(assembly) = pending.take() else {
                    nack(&mut stream, epoch, "epoch end without begin")?;
                    continue;
                };
                if assembly.epoch != epoch || assembly.payloads.len() != assembly.expected as usize
                {
                    nack(&mut stream, epoch, "epoch bucket count mismatch")?;
                    continue;
                }
                if assembly.expected == 0 {
                    // An epoch announcing no buckets carries no message.
                    continue;
                }
                let bytes: Vec<u8> = assembly.payloads.concat();
                let result =
                    deserialize_message(&bytes).and_then(|msg| apply_update(&mut weights, &msg));
                if let Err(e) = result {
                    nack(&mut stream, epoch, &e.to_string())?;
                }
            }
            Frame::Verify => {
                let entries: Vec<(String, TensorDigest)> =
                    digest_map(&weights).into_iter().collect();
                write_frame(&mut stream, &Frame::Digest(entries), &mut None)?;
            }
            Frame::Digest(_) | Frame::Nack { .. } => {
                return Err(HarnessError::Frame("unexpected frame on receiver"));
            }
        }
    }
}

fn nack(stream: &mut TcpStream, epoch: u64, message: &str) -> std::io::Result<()> {
    write_frame(
        stream,
        &Frame::Nack {
            epoch,
            message: message.to_string(),
        },
        &mut None,
    )?;
    Ok(())
}

/// Per-endpoint delivery stats for one sync event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndpointStats {
    /// Bucket payload bytes delivered (framing and control excluded).
    pub bytes: u64,
    /// Throttled transfer time, excluding verification.
    pub seconds: f64,
    pub verified: bool,
}

/// Fan-out sender: one connection per rank, one independent throttle per
/// rank, concurrent sends with a completion barrier per sync event.
pub struct Broadcaster {
    streams: Vec<TcpStream>,
    bandwidth: Option<f64>,
}

impl Broadcaster {
    pub fn connect(endpoints: &[SocketAddr], bandwidth: Option<f64>) -> Result<Self, HarnessError> {
        let mut streams = Vec::with_capacity(endpoints.len());
        for &addr in endpoints {
            let stream = TcpStream::connect(addr)
                .map_err(|source| HarnessError::EndpointUnreachable { addr, source })?;
            stream.set_nodelay(true).ok();
            streams.push(stream);
        }
        Ok(Broadcaster { streams, bandwidth })
    }

    pub fn ranks(&self) -> usize {
        self.streams.len()
    }

    /// Send every bucket to every rank, then verify per-tensor digests
    /// against `expected`. Returns per-rank stats in rank order; transfer
    /// seconds cover the throttled send, not verification.
    pub fn broadcast_sync(
        &mut self,
        epoch: u64,
        buckets: &[Bucket],
        expected: &BTreeMap<String, TensorDigest>,
    ) -> Result<Vec<EndpointStats>, HarnessError> {
        let bandwidth = self.bandwidth;
        let results: Vec<Result<EndpointStats, HarnessError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = self
                .streams
                .iter_mut()
                .enumerate()
                .map(|(rank, stream)| {
                    scope.spawn(move || send_one(rank, stream, epoch, buckets, bandwidth, expected))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sender thread panicked"))
                .collect()
        });
        results.into_iter().collect()
    }
}

fn send_one(
    rank: usize,
    stream: &mut TcpStream,
    epoch: u64,
    buckets: &[Bucket],
    bandwidth: Option<f64>,
    expected: &BTreeMap<String, TensorDigest>,
) -> Result<EndpointStats, HarnessError> {
    let mut throttle = bandwidth.map(Throttle::new);
    let mut bytes = 0u64;
    let started = Instant::now();
    let lost =
        |seq: u32| move |source: std::io::Error| HarnessError::ConnectionLost { rank, seq, source };
    write_frame(
        stream,
        &Frame::EpochBegin {
            epoch,
            buckets: buckets.len() as u32,
        },
        &mut throttle,
    )
    .map_err(lost(0))?;
    for b in buckets {
        write_frame(
            stream,
            &Frame::Data {
                seq: b.seq,
                payload: b.payload.clone(),
            },
            &mut throttle,
        )
        .map_err(lost(b.seq))?;
        bytes += b.payload.len() as u64;
    }
    write_frame(stream, &Frame::EpochEnd { epoch }, &mut throttle)
        .map_err(lost(buckets.len() as u32))?;
    if let Some(t) = throttle.as_mut() {
        t.drain();
    }
    let seconds = started.elapsed().as_secs_f64();

    write_frame(stream, &Frame::Verify, &mut None).map_err(lost(u32::MAX))?;
    let verified = match read_frame(stream)? {
        Some(Frame::Digest(entries)) => {
            if entries.len() != expected.len() {
                false
            } else {
                for (name, digest) in &entries {
                    if expected.get(name) != Some(digest) {
                        return Err(HarnessError::DigestMismatch {
                            rank,
                            tensor: name.clone(),
                        });
                    }
                }
                true
            }
        }
        Some(Frame::Nack { epoch, message }) => {
            return Err(HarnessError::SyncRejected {
                rank,
                epoch,
                message,
            });
        }
        Some(_) => return Err(HarnessError::Frame("unexpected reply to VERIFY")),
        None => {
            return Err(HarnessError::ConnectionLost {
                rank,
                seq: u32::MAX,
                source: std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "closed"),
            })
        }
    };
    Ok(EndpointStats {
        bytes,
        seconds,
        verified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use sparsesync_core::updater::pack_full;
    use sparsesync_core::{DType, TensorBuf};

    fn tiny_weights() -> TensorMap {
        let mut m = TensorMap::new();
        m.insert(
            TensorBuf::from_f32("w", vec![8], &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8])
                .unwrap()
                .cast_to(DType::Bf16)
                .unwrap(),
        )
        .unwrap();
        m
    }

    #[test]
    fn frame_encode_decode_roundtrip() {
        let frames = [
            Frame::EpochBegin {
                epoch: 7,
                buckets: 3,
            },
            Frame::Data {
                seq: 2,
                payload: vec![1, 2, 3],
            },
            Frame::EpochEnd { epoch: 7 },
            Frame::Verify,
            Frame::Digest(vec![("w".into(), [9u8; 32])]),
            Frame::Nack {
                epoch: 7,
                message: "bad".into(),
            },
        ];
        for f in frames {
            let bytes = f.encode();
            let mut cursor = std::io::Cursor::new(bytes);
            assert_eq!(read_frame(&mut cursor).unwrap().unwrap(), f);
        }
        let mut empty = std::io::Cursor::new(Vec::<u8>::new());
        assert!(read_frame(&mut empty).unwrap().is_none());
    }

    #[test]
    fn endpoint_applies_and_verifies() {
        let weights = tiny_weights();
        let endpoint = spawn_rollout_endpoint(weights.clone()).unwrap();
        let mut donor = tiny_weights();
        let msg = pack_full(&donor);
        sparsesync_core::updater::apply_update(&mut donor, &msg).unwrap();

        let mut bc = Broadcaster::connect(&[endpoint.addr], None).unwrap();
        let buckets = super::super::bucketize(&msg, 64);
        let stats = bc.broadcast_sync(1, &buckets, &digest_map(&donor)).unwrap();
        assert!(stats[0].verified);
        assert_eq!(
            stats[0].bytes as usize,
            buckets.iter().map(|b| b.payload.len()).sum::<usize>()
        );

        // Duplicate delivery is idempotent.
        let stats = bc.broadcast_sync(2, &buckets, &digest_map(&donor)).unwrap();
        assert!(stats[0].verified);

        drop(bc);
        let final_weights = endpoint.join().unwrap();
        assert_eq!(final_weights, donor);
    }

    #[test]
    fn every_endpoint_reports_identical_byte_totals() {
        let endpoints: Vec<_> = (0..4)
            .map(|_| spawn_rollout_endpoint(tiny_weights()).unwrap())
            .collect();
        let addrs: Vec<_> = endpoints.iter().map(|e| e.addr).collect();
        let mut bc = Broadcaster::connect(&addrs, None).unwrap();

        // No buckets: every endpoint sees zero payload bytes.
        let stats = bc
            .broadcast_sync(1, &[], &digest_map(&tiny_weights()))
            .unwrap();
        assert!(stats.iter().all(|s| s.bytes == 0 && s.verified));

        let mut donor = tiny_weights();
        for extra in ["u", "v", "x"] {
            donor
                .insert(
                    TensorBuf::from_f32(extra, vec![4], &[0.1, 0.2, 0.3, 0.4])
                        .unwrap()
                        .cast_to(DType::Bf16)
                        .unwrap(),
                )
                .unwrap();
        }
        let endpoints: Vec<_> = (0..4)
            .map(|_| spawn_rollout_endpoint(donor.clone()).unwrap())
            .collect();
        let addrs: Vec<_> = endpoints.iter().map(|e| e.addr).collect();
        let mut bc = Broadcaster::connect(&addrs, None).unwrap();
        let msg = pack_full(&donor);
        let buckets = super::super::bucketize(&msg, 48);
        assert!(buckets.len() >= 3);
        let stats = bc.broadcast_sync(2, &buckets, &digest_map(&donor)).unwrap();
        let total = buckets.iter().map(|b| b.payload.len() as u64).sum::<u64>();
        assert!(stats.iter().all(|s| s.bytes == total && s.verified));
    }

    #[test]
    fn corrupted_bucket_nacks_with_crc_mismatch() {
        let endpoint = spawn_rollout_endpoint(tiny_weights()).unwrap();
        let msg = pack_full(&tiny_weights());
        let mut buckets = super::super::bucketize(&msg, 1 << 20);
        // Flip one payload byte past the message header.
        buckets[0].payload[20] ^= 0x40;
        let mut bc = Broadcaster::connect(&[endpoint.addr], None).unwrap();
        let err = bc
            .broadcast_sync(1, &buckets, &BTreeMap::new())
            .unwrap_err();
        match err {
            HarnessError::SyncRejected { epoch, message, .. } => {
                assert_eq!(epoch, 1);
                assert!(message.contains("CRC"), "NACK said: {message}");
            }
            other => panic!("expected SyncRejected, got {other}"),
        }
        // The endpoint keeps serving after a NACK.
        let good = super::super::bucketize(&msg, 1 << 20);
        let stats = bc
            .broadcast_sync(2, &good, &digest_map(&tiny_weights()))
            .unwrap();
        assert!(stats[0].verified);
    }

    #[test]
    fn unreachable_endpoint_reports_address() {
        let addr: SocketAddr = "127.0.0.1:1".parse().unwrap();
        match Broadcaster::connect(&[addr], None) {
            Err(HarnessError::EndpointUnreachable { addr: got, .. }) => assert_eq!(got, addr),
            Err(other) => panic!("expected EndpointUnreachable, got {other}"),
            Ok(_) => panic!("connect to a closed port succeeded"),
        }
    }

    #[test]
    fn throttled_send_obeys_rate_floor() {
        let endpoint = spawn_rollout_endpoint(tiny_weights()).unwrap();
        let msg = pack_full(&tiny_weights());
        let buckets = super::super::bucketize(&msg, 1 << 20);
        let payload: usize = buckets.iter().map(|b| b.payload.len()).sum();
        let rate = 4000.0; // bytes/s, so ~tens of ms for this payload
        let mut bc = Broadcaster::connect(&[endpoint.addr], Some(rate)).unwrap();
        let stats = bc
            .broadcast_sync(1, &buckets, &digest_map(&tiny_weights()))
            .unwrap();
        let floor = payload as f64 / rate;
        assert!(stats[0].seconds >= floor, "{} < {floor}", stats[0].seconds);
        assert!(
            stats[0].seconds <= floor * 1.1 + 0.05,
            "{} too slow",
            stats[0].seconds
        );
    }
}
