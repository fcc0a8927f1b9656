//! Full trainer-to-rollout experiments: synthetic training, periodic sync in
//! sparse or full mode, per-sync verification, and paired-run comparison.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sparsesync_core::codec::serialize_message;
use sparsesync_core::updater::{pack_full, pack_updates, RoutingPolicy};
use sparsesync_core::{accumulate, ChangedIndexSet, ModelState};

use super::{
    bucketize, inject_redundant, Broadcaster, ModelSpec, RegimePreset, UpdateDriverConfig,
};
use crate::digest::{digest_hex_map, digest_map};
use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyncMode {
    Sparse,
    Full,
}

impl SyncMode {
    pub fn name(self) -> &'static str {
        match self {
            SyncMode::Sparse => "sparse",
            SyncMode::Full => "full",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub spec: ModelSpec,
    pub driver: UpdateDriverConfig,
    pub steps: u64,
    pub sync_every: u64,
    pub mode: SyncMode,
    pub ranks: usize,
    pub regime: RegimePreset,
    pub bucket_limit: usize,
    pub compress: bool,
    /// Extra in-range indices injected before each sparse pack, as a
    /// fraction of each tensor's nnz.
    pub redundant_fraction: f64,
    pub policy: RoutingPolicy,
}

impl ExperimentConfig {
    pub fn new(spec: ModelSpec, mode: SyncMode, ranks: usize) -> Self {
        ExperimentConfig {
            spec,
            driver: UpdateDriverConfig::default(),
            steps: 10,
            sync_every: 2,
            mode,
            ranks,
            regime: RegimePreset::unlimited(),
            bucket_limit: super::DESK_BUCKET_LIMIT,
            compress: false,
            redundant_fraction: 0.0,
            policy: RoutingPolicy::default(),
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        self.spec.validate()?;
        self.driver.validate()?;
        if self.ranks == 0 {
            return Err(HarnessError::SpecInvalid("ranks must be at least 1".into()));
        }
        if self.steps == 0 || self.sync_every == 0 {
            return Err(HarnessError::SpecInvalid(
                "steps and sync_every must be positive".into(),
            ));
        }
        if !(0.0..=10.0).contains(&self.redundant_fraction) {
            return Err(HarnessError::SpecInvalid(
                "redundant_fraction out of range".into(),
            ));
        }
        if self.bucket_limit == 0 {
            return Err(HarnessError::SpecInvalid(
                "bucket limit must be positive".into(),
            ));
        }
        if let Some(bw) = self.regime.bandwidth_bytes_per_s {
            if bw.is_nan() || bw <= 0.0 {
                return Err(HarnessError::SpecInvalid(
                    "regime bandwidth must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One synchronization event's measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncStats {
    pub step: u64,
    pub records: usize,
    /// Cumulative changed elements at this sync (before any injection).
    pub nnz: u64,
    /// nnz over total model elements.
    pub density: f64,
    /// Serialized message bytes (headers and payloads).
    pub wire_bytes: u64,
    /// Slowest rank's throttled transfer time.
    pub broadcast_seconds: f64,
    /// Every rank's post-apply digests matched the trainer's.
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub mode: String,
    pub ranks: usize,
    pub steps: u64,
    pub sync_every: u64,
    pub regime: String,
    pub bandwidth_bytes_per_s: Option<f64>,
    pub bucket_limit: usize,
    pub compress: bool,
    pub model_seed: u64,
    pub driver_seed: u64,
    pub total_elements: u64,
    pub syncs: Vec<SyncStats>,
    pub total_wire_bytes: u64,
    pub total_broadcast_seconds: f64,
    pub all_verified: bool,
    /// Trainer-side working-weight digests after the final step.
    pub final_digests: BTreeMap<String, String>,
}

/// Run training with periodic synchronization to `ranks` loopback rollout
/// endpoints, verifying bit-exactness at every sync. Deterministic wire
/// bytes and digests given equal seeds.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let master = cfg.spec.build_master()?;
    let mut state = ModelState::new(master, cfg.spec.working_dtype)?;

    let endpoints: Vec<_> = (0..cfg.ranks)
        .map(|_| super::spawn_rollout_endpoint(state.snapshot_working()))
        .collect::<Result<_, _>>()?;
    let addrs: Vec<_> = endpoints.iter().map(|e| e.addr).collect();
    let mut broadcaster = Broadcaster::connect(&addrs, cfg.regime.bandwidth_bytes_per_s)?;

    let mut driver_rng = ChaCha8Rng::seed_from_u64(cfg.driver.seed);
    // Injection draws from its own stream so training stays identical with
    // and without it.
    let mut inject_rng = ChaCha8Rng::seed_from_u64(cfg.driver.seed ^ 0x5EED_1D1C_E11A_B1E5);

    let mut cum = ChangedIndexSet::new();
    let mut syncs = Vec::new();
    let mut epoch = 0u64;
    for step in 1..=cfg.steps {
        let update = cfg.driver.step_deltas(state.master(), &mut driver_rng);
        let step_set = state.apply_master_update_and_track(&update)?;
        cum = accumulate(&cum, &step_set);
        if step % cfg.sync_every != 0 {
            continue;
        }
        epoch += 1;
        let nnz = cum.nnz_total();
        let msg = match cfg.mode {
            SyncMode::Sparse => {
                let pack_set = if cfg.redundant_fraction > 0.0 {
                    inject_redundant(
                        &cum,
                        cfg.redundant_fraction,
                        state.working(),
                        &mut inject_rng,
                    )?
                } else {
                    cum.clone()
                };
                pack_updates(state.working(), &pack_set, &cfg.policy, cfg.compress)?
            }
            SyncMode::Full => pack_full(state.working()),
        };
        let wire_bytes = serialize_message(&msg).len() as u64;
        let buckets = bucketize(&msg, cfg.bucket_limit);
        let expected = digest_map(state.working());
        let stats = broadcaster.broadcast_sync(epoch, &buckets, &expected)?;
        syncs.push(SyncStats {
            step,
            records: msg.records.len(),
            nnz,
            density: nnz as f64 / cfg.spec.total_elements() as f64,
            wire_bytes,
            broadcast_seconds: stats.iter().map(|s| s.seconds).fold(0.0, f64::max),
            verified: stats.iter().all(|s| s.verified),
        });
        // Epoch boundary: the packed set has been delivered.
        cum.clear();
    }

    drop(broadcaster);
    let mut all_verified = syncs.iter().all(|s| s.verified);
    // When the run ends on a sync boundary, every rank's final weights must
    // equal the trainer's working weights byte for byte.
    let ends_on_sync = !syncs.is_empty() && cfg.steps.is_multiple_of(cfg.sync_every);
    for endpoint in endpoints {
        let final_weights = endpoint.join()?;
        if ends_on_sync {
            for t in state.working().iter() {
                if final_weights
                    .get(t.name())
                    .is_none_or(|g| g.data() != t.data())
                {
                    all_verified = false;
                }
            }
        }
    }

    Ok(ExperimentReport {
        mode: cfg.mode.name().to_string(),
        ranks: cfg.ranks,
        steps: cfg.steps,
        sync_every: cfg.sync_every,
        regime: cfg.regime.name.clone(),
        bandwidth_bytes_per_s: cfg.regime.bandwidth_bytes_per_s,
        bucket_limit: cfg.bucket_limit,
        compress: cfg.compress,
        model_seed: cfg.spec.seed,
        driver_seed: cfg.driver.seed,
        total_elements: cfg.spec.total_elements(),
        total_wire_bytes: syncs.iter().map(|s| s.wire_bytes).sum(),
        total_broadcast_seconds: syncs.iter().map(|s| s.broadcast_seconds).sum(),
        all_verified,
        final_digests: digest_hex_map(state.working()),
        syncs,
    })
}

/// Paired full-vs-sparse comparison from identical seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedReport {
    pub sparse: ExperimentReport,
    pub full: ExperimentReport,
    /// Full over sparse total wire bytes.
    pub wire_byte_ratio: f64,
    /// Full over sparse total broadcast seconds.
    pub wall_speedup: f64,
    pub final_digests_match: bool,
}

pub fn run_paired(cfg: &ExperimentConfig) -> Result<PairedReport, HarnessError> {
    let full = run_experiment(&ExperimentConfig {
        mode: SyncMode::Full,
        ..cfg.clone()
    })?;
    let sparse = run_experiment(&ExperimentConfig {
        mode: SyncMode::Sparse,
        ..cfg.clone()
    })?;
    let final_digests_match = sparse.final_digests == full.final_digests;
    Ok(PairedReport {
        wire_byte_ratio: full.total_wire_bytes as f64 / sparse.total_wire_bytes.max(1) as f64,
        wall_speedup: full.total_broadcast_seconds / sparse.total_broadcast_seconds.max(1e-12),
        final_digests_match,
        sparse,
        full,
    })
}
