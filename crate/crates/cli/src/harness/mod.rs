//! End-to-end simulation: a synthetic trainer driving index tracking, a
//! bucketizing broadcaster over loopback TCP, rollout receiver endpoints,
//! and bandwidth throttling.

mod experiment;
mod throttle;
mod transport;

pub use experiment::{
    run_experiment, run_paired, ExperimentConfig, ExperimentReport, PairedReport, SyncMode,
    SyncStats,
};
pub use throttle::Throttle;
pub use transport::{
    read_frame, spawn_rollout_endpoint, write_frame, Broadcaster, EndpointStats, Frame,
    RolloutHandle,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sparsesync_core::codec::{serialize_message_parts, SyncMessage};
use sparsesync_core::tracking::UpdateMap;
use sparsesync_core::{ChangedIndexSet, DType, ModelState, TensorBuf, TensorMap};

use crate::HarnessError;

/// One synthetic tensor: gaussian init around `init_mean` with spread
/// `init_std`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<u64>,
    #[serde(default)]
    pub init_mean: f64,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
}

fn default_init_std() -> f64 {
    0.02
}

/// Desk-scale stand-in for a model: tensor layout, working precision, and
/// the init seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub tensors: Vec<TensorSpec>,
    pub working_dtype: DType,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.tensors.is_empty() {
            return Err(HarnessError::SpecInvalid("model has no tensors".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for t in &self.tensors {
            if !names.insert(&t.name) {
                return Err(HarnessError::SpecInvalid(format!(
                    "duplicate tensor `{}`",
                    t.name
                )));
            }
            if t.shape.is_empty() || t.shape.contains(&0) {
                return Err(HarnessError::SpecInvalid(format!(
                    "`{}` has an empty dim",
                    t.name
                )));
            }
            let numel: u64 = t.shape.iter().product();
            if numel >= 1 << 31 {
                return Err(HarnessError::SpecInvalid(format!(
                    "`{}` exceeds 2^31 elements",
                    t.name
                )));
            }
            if t.init_std.is_nan() || t.init_std <= 0.0 {
                return Err(HarnessError::SpecInvalid(format!(
                    "`{}` needs init_std > 0",
                    t.name
                )));
            }
        }
        Ok(())
    }

    /// Evenly split `total_elements` over `tensors` 2-D weight matrices.
    pub fn generate(tensors: usize, total_elements: u64, seed: u64) -> Self {
        let per = (total_elements / tensors.max(1) as u64).max(1);
        let cols = 64u64.min(per);
        let rows = (per / cols).max(1);
        let specs = (0..tensors)
            .map(|i| TensorSpec {
                name: format!("layer{i:02}.weight"),
                shape: vec![rows, cols],
                init_mean: 0.0,
                init_std: 0.02,
            })
            .collect();
        ModelSpec {
            tensors: specs,
            working_dtype: DType::Bf16,
            seed,
        }
    }

    /// Materialize the FP32 master weights deterministically from the seed.
    pub fn build_master(&self) -> Result<TensorMap, HarnessError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut map = TensorMap::new();
        for spec in &self.tensors {
            let numel: u64 = spec.shape.iter().product();
            let vals: Vec<f32> = (0..numel)
                .map(|_| (spec.init_mean + spec.init_std * gaussian(&mut rng)) as f32)
                .collect();
            map.insert(TensorBuf::from_f32(&spec.name, spec.shape.clone(), &vals)?)?;
        }
        Ok(map)
    }

    pub fn total_elements(&self) -> u64 {
        self.tensors
            .iter()
            .map(|t| t.shape.iter().product::<u64>())
            .sum()
    }
}

/// Box-Muller standard normal from a uniform source.
fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = loop {
        let u = rng.random::<f64>();
        if u > 0.0 {
            break u;
        }
    };
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateDist {
    Normal,
    Uniform,
}

/// Synthetic per-step update distribution: each touched element moves by
/// `eta * |w| * sample`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpdateDriverConfig {
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_touched")]
    pub touched_fraction: f64,
    #[serde(default = "default_dist")]
    pub dist: UpdateDist,
    #[serde(default)]
    pub seed: u64,
}

fn default_eta() -> f64 {
    3e-5
}

fn default_touched() -> f64 {
    1.0
}

fn default_dist() -> UpdateDist {
    UpdateDist::Normal
}

impl Default for UpdateDriverConfig {
    fn default() -> Self {
        UpdateDriverConfig {
            eta: default_eta(),
            touched_fraction: default_touched(),
            dist: default_dist(),
            seed: 0,
        }
    }
}

impl UpdateDriverConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.eta.is_nan() || self.eta < 0.0 {
            return Err(HarnessError::SpecInvalid("eta must be >= 0".into()));
        }
        if !(self.touched_fraction > 0.0 && self.touched_fraction <= 1.0) {
            return Err(HarnessError::SpecInvalid(
                "touched_fraction must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Deltas for one step, drawn from `rng` in model iteration order.
    pub fn step_deltas(&self, master: &TensorMap, rng: &mut ChaCha8Rng) -> UpdateMap {
        let mut update = UpdateMap::new();
        for t in master.iter() {
            let vals = t.f32_values().expect("master weights are FP32");
            let deltas: Vec<f32> = vals
                .iter()
                .map(|w| {
                    if self.touched_fraction < 1.0 && rng.random::<f64>() >= self.touched_fraction {
                        return 0.0;
                    }
                    let sample = match self.dist {
                        UpdateDist::Normal => gaussian(rng),
                        UpdateDist::Uniform => rng.random::<f64>() * 2.0 - 1.0,
                    };
                    (self.eta * w.abs() as f64 * sample) as f32
                })
                .collect();
            update.insert(t.name().to_string(), deltas);
        }
        update
    }
}

/// Deltas that flip exactly `round(density * numel)` working-precision
/// elements per tensor: each chosen element moves by a far-above-ULP amount.
/// Used to calibrate wire measurements against the cost model.
pub fn exact_density_deltas(master: &TensorMap, density: f64, rng: &mut ChaCha8Rng) -> UpdateMap {
    let mut update = UpdateMap::new();
    for t in master.iter() {
        let numel = t.numel() as usize;
        let k = ((density * numel as f64).round() as usize).min(numel);
        let mut chosen = std::collections::BTreeSet::new();
        while chosen.len() < k {
            chosen.insert(rng.random_range(0..numel));
        }
        let vals = t.f32_values().expect("master weights are FP32");
        let mut deltas = vec![0.0f32; numel];
        for &i in &chosen {
            // 10% relative (plus an absolute floor) clears every format's ULP.
            deltas[i] = (0.1 * vals[i].abs()).max(0.01);
        }
        update.insert(t.name().to_string(), deltas);
    }
    update
}

/// Add `fraction * nnz` extra in-range indices per tensor: redundant entries
/// that exercise the superset-harmlessness path.
pub fn inject_redundant(
    cum: &ChangedIndexSet,
    fraction: f64,
    working: &TensorMap,
    rng: &mut ChaCha8Rng,
) -> Result<ChangedIndexSet, HarnessError> {
    let mut out = ChangedIndexSet::new();
    for (name, idx) in cum.iter() {
        let numel = working
            .get(name)
            .ok_or_else(|| HarnessError::SpecInvalid(format!("unknown tensor `{name}`")))?
            .numel() as u32;
        let want = (fraction * idx.len() as f64).round() as usize;
        let budget = (numel as usize).saturating_sub(idx.len()).min(want);
        let mut extra = std::collections::BTreeSet::new();
        while extra.len() < budget {
            let cand = rng.random_range(0..numel);
            if idx.binary_search(&cand).is_err() {
                extra.insert(cand);
            }
        }
        let mut merged: Vec<u32> = idx.iter().copied().chain(extra).collect();
        merged.sort_unstable();
        out.insert_tensor(name, merged)?;
    }
    Ok(out)
}

/// Outcome of a synthetic training run.
pub struct TrainingRun {
    pub state: ModelState,
    /// Per-step changed-index sets I_t, in step order.
    pub per_step: Vec<ChangedIndexSet>,
    /// Cumulative union over all steps.
    pub cumulative: ChangedIndexSet,
    /// Working-precision snapshots (before step 1, then after each step),
    /// kept only on request.
    pub snapshots: Option<Vec<TensorMap>>,
}

/// Drive `steps` optimizer steps with tracking; deterministic given the
/// spec and driver seeds.
pub fn run_synthetic_training(
    spec: &ModelSpec,
    driver: &UpdateDriverConfig,
    steps: u64,
    keep_snapshots: bool,
) -> Result<TrainingRun, HarnessError> {
    driver.validate()?;
    let master = spec.build_master()?;
    let mut state = ModelState::new(master, spec.working_dtype)?;
    let mut rng = ChaCha8Rng::seed_from_u64(driver.seed);
    let mut per_step = Vec::with_capacity(steps as usize);
    let mut cumulative = ChangedIndexSet::new();
    let mut snapshots = keep_snapshots.then(|| vec![state.snapshot_working()]);
    for _ in 0..steps {
        let update = driver.step_deltas(state.master(), &mut rng);
        let step_set = state.apply_master_update_and_track(&update)?;
        cumulative = sparsesync_core::accumulate(&cumulative, &step_set);
        per_step.push(step_set);
        if let Some(s) = snapshots.as_mut() {
            s.push(state.snapshot_working());
        }
    }
    Ok(TrainingRun {
        state,
        per_step,
        cumulative,
        snapshots,
    })
}

/// A size-bounded fragment of a serialized sync message holding whole
/// records; the unit of broadcast.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bucket {
    pub seq: u32,
    pub payload: Vec<u8>,
    pub limit: usize,
}

pub const DEFAULT_BUCKET_LIMIT: usize = 128 << 20;
/// Desk-scale runs use a smaller bucket so multi-bucket paths get exercised.
pub const DESK_BUCKET_LIMIT: usize = 1 << 20;

/// Split a message at record boundaries into buckets of at most `limit`
/// bytes; a record larger than the limit gets a bucket of its own.
/// Concatenating the payloads in sequence order reproduces the serialized
/// message exactly.
pub fn bucketize(msg: &SyncMessage, limit: usize) -> Vec<Bucket> {
    assert!(limit > 0, "bucket limit must be positive");
    let (header, records) = serialize_message_parts(msg);
    let mut buckets = Vec::new();
    let mut current = header; // bucket 0 always opens with the header
    let mut records_in_current = 0usize;
    for rec in records {
        if records_in_current > 0 && current.len() + rec.len() > limit {
            buckets.push(std::mem::take(&mut current));
            records_in_current = 0;
        }
        current.extend_from_slice(&rec);
        records_in_current += 1;
        if current.len() > limit {
            // A record above the limit travels whole in its own bucket.
            buckets.push(std::mem::take(&mut current));
            records_in_current = 0;
        }
    }
    if !current.is_empty() {
        buckets.push(current);
    }
    buckets
        .into_iter()
        .enumerate()
        .map(|(seq, payload)| Bucket {
            seq: seq as u32,
            payload,
            limit,
        })
        .collect()
}

/// Concatenate bucket payloads, checking the sequence numbering.
pub fn reassemble(buckets: &[Bucket]) -> Result<Vec<u8>, HarnessError> {
    let mut out = Vec::with_capacity(buckets.iter().map(|b| b.payload.len()).sum());
    for (i, b) in buckets.iter().enumerate() {
        if b.seq != i as u32 {
            return Err(HarnessError::Frame("bucket sequence gap"));
        }
        out.extend_from_slice(&b.payload);
    }
    Ok(out)
}

/// Named per-endpoint bandwidth preset; `None` means unthrottled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimePreset {
    pub name: String,
    pub bandwidth_bytes_per_s: Option<f64>,
}

impl RegimePreset {
    pub fn unlimited() -> Self {
        RegimePreset {
            name: "unlimited".into(),
            bandwidth_bytes_per_s: None,
        }
    }

    pub fn throttled(name: &str, bandwidth: f64) -> Self {
        RegimePreset {
            name: name.into(),
            bandwidth_bytes_per_s: Some(bandwidth),
        }
    }

    /// Loopback-scaled stand-ins for RDMA-class vs TCP-fallback networks.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "unlimited" => Some(Self::unlimited()),
            "ib-on" => Some(Self::throttled("ib-on", 80e6)),
            "ib-off" => Some(Self::throttled("ib-off", 8e6)),
            _ => None,
        }
    }
}
