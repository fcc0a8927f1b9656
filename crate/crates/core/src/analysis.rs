//! Sparsity, inactive-tensor, precision-visibility, and temporal-locality
//! measurements over snapshot sequences.
//!
//! All statistics come from bitwise comparison of packed buffers, so they
//! agree exactly with what the tracking and packing paths see.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::dtype::DType;
use crate::error::{Error, Result};
use crate::tensor::TensorMap;
use crate::tracking::{diff_changed, ChangedIndexSet};

/// One tensor's changed-element count between two snapshots.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TensorChange {
    pub name: String,
    pub numel: u64,
    pub changed: u64,
    pub changed_fraction: f64,
}

/// Element-level change statistics for one snapshot pair.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ElementSparsity {
    pub per_tensor: Vec<TensorChange>,
    pub total_elements: u64,
    pub total_changed: u64,
    /// Aggregate changed fraction, weighted by element count.
    pub changed_fraction: f64,
    /// Complement of the changed fraction.
    pub sparsity: f64,
}

fn check_schema(prev: &TensorMap, curr: &TensorMap) -> Result<()> {
    if prev.len() != curr.len() {
        return Err(Error::SchemaMismatch("tensor counts differ".to_string()));
    }
    for t in prev.iter() {
        match curr.get(t.name()) {
            None => {
                return Err(Error::SchemaMismatch(alloc::format!(
                    "`{}` missing",
                    t.name()
                )))
            }
            Some(c) => {
                if c.shape() != t.shape() || c.dtype() != t.dtype() {
                    return Err(Error::SchemaMismatch(alloc::format!(
                        "`{}` differs",
                        t.name()
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Per-tensor and aggregate changed fractions between two equal-schema
/// snapshots; the aggregate is total changed over total elements.
pub fn element_sparsity(prev: &TensorMap, curr: &TensorMap) -> Result<ElementSparsity> {
    check_schema(prev, curr)?;
    let mut per_tensor = Vec::with_capacity(prev.len());
    let mut total_elements = 0u64;
    let mut total_changed = 0u64;
    for p in prev.iter() {
        let c = curr.get(p.name()).expect("schema checked");
        let changed = diff_changed(p, c)?.len() as u64;
        let numel = p.numel();
        total_elements += numel;
        total_changed += changed;
        per_tensor.push(TensorChange {
            name: p.name().to_string(),
            numel,
            changed,
            changed_fraction: if numel == 0 {
                0.0
            } else {
                changed as f64 / numel as f64
            },
        });
    }
    let changed_fraction = if total_elements == 0 {
        0.0
    } else {
        total_changed as f64 / total_elements as f64
    };
    Ok(ElementSparsity {
        per_tensor,
        total_elements,
        total_changed,
        changed_fraction,
        sparsity: 1.0 - changed_fraction,
    })
}

/// Fraction of tensors with zero changed elements.
pub fn inactive_tensor_ratio(prev: &TensorMap, curr: &TensorMap) -> Result<f64> {
    let stats = element_sparsity(prev, curr)?;
    if stats.per_tensor.is_empty() {
        return Ok(0.0);
    }
    let inactive = stats.per_tensor.iter().filter(|t| t.changed == 0).count();
    Ok(inactive as f64 / stats.per_tensor.len() as f64)
}

/// Changed fraction each synchronization precision would expose for the same
/// FP32 master transition.
pub fn precision_visibility(
    master_prev: &TensorMap,
    master_curr: &TensorMap,
    formats: &[DType],
) -> Result<Vec<(DType, f64)>> {
    check_schema(master_prev, master_curr)?;
    for t in master_prev.iter() {
        if t.dtype() != DType::Fp32 {
            return Err(Error::SchemaMismatch(
                "master snapshots must be FP32".to_string(),
            ));
        }
    }
    let mut out = Vec::with_capacity(formats.len());
    for &fmt in formats {
        let mut total = 0u64;
        let mut changed = 0u64;
        for p in master_prev.iter() {
            let c = master_curr.get(p.name()).expect("schema checked");
            let a = p.cast_to(fmt)?;
            let b = c.cast_to(fmt)?;
            total += p.numel();
            changed += diff_changed(&a, &b)?.len() as u64;
        }
        out.push((
            fmt,
            if total == 0 {
                0.0
            } else {
                changed as f64 / total as f64
            },
        ));
    }
    Ok(out)
}

/// Quantiles of the per-tensor locality ratio at one step.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LocalityStep {
    /// 1-based step index; step t compares against the union of steps < t.
    pub step: usize,
    pub p25: f64,
    pub p50: f64,
    pub p90: f64,
    /// Tensors with at least one changed index at this step.
    pub population: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LocalityReport {
    pub steps: Vec<LocalityStep>,
}

/// Nearest-rank quantile of an ascending population.
fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    // ceil(p * n) without std float math.
    let scaled = p * sorted.len() as f64;
    let mut rank = scaled as usize;
    if (rank as f64) < scaled {
        rank += 1;
    }
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn intersection_count(a: &[u32], b: &[u32]) -> u64 {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// For each step t >= 1, quantiles over tensors of the fraction of step-t
/// changed indices already seen in any earlier step. Tensors with no changes
/// at step t are excluded from that step's population.
pub fn temporal_locality(history: &[ChangedIndexSet]) -> Result<LocalityReport> {
    if history.len() < 2 {
        return Err(Error::TooFewSteps);
    }
    let mut seen = history[0].clone();
    let mut steps = Vec::with_capacity(history.len() - 1);
    for (t, step_set) in history.iter().enumerate().skip(1) {
        let mut ratios: Vec<f64> = step_set
            .iter()
            .filter(|(_, idx)| !idx.is_empty())
            .map(|(name, idx)| {
                let prior = seen.indices(name).unwrap_or(&[]);
                intersection_count(idx, prior) as f64 / idx.len() as f64
            })
            .collect();
        ratios.sort_by(f64::total_cmp);
        if !ratios.is_empty() {
            steps.push(LocalityStep {
                step: t,
                p25: nearest_rank(&ratios, 0.25),
                p50: nearest_rank(&ratios, 0.50),
                p90: nearest_rank(&ratios, 0.90),
                population: ratios.len(),
            });
        }
        seen = crate::tracking::accumulate(&seen, step_set);
    }
    Ok(LocalityReport { steps })
}

/// Per-step changed-index sets reconstructed from a snapshot series, the
/// input shape temporal locality wants.
pub fn changed_sets_from_snapshots(snapshots: &[TensorMap]) -> Result<Vec<ChangedIndexSet>> {
    if snapshots.len() < 2 {
        return Err(Error::TooFewSteps);
    }
    let mut out = Vec::with_capacity(snapshots.len() - 1);
    for t in 1..snapshots.len() {
        check_schema(&snapshots[t - 1], &snapshots[t])?;
        let mut set = ChangedIndexSet::new();
        for p in snapshots[t - 1].iter() {
            let c = snapshots[t].get(p.name()).expect("schema checked");
            set.insert_tensor(p.name(), diff_changed(p, c)?)?;
        }
        out.push(set);
    }
    Ok(out)
}

/// Per-step entry of a run-level sparsity report.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepSparsity {
    pub step: u64,
    pub changed_fraction: f64,
    pub sparsity: f64,
    /// Changed fraction of the FP32 masters over the same step, when master
    /// snapshots are available.
    pub fp32_changed_fraction: Option<f64>,
    pub inactive_tensor_fraction: f64,
}

/// Run-level aggregates plus per-tensor breakdown over a snapshot series.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SparsityReport {
    pub steps: Vec<StepSparsity>,
    pub per_tensor: Vec<TensorChange>,
    pub mean_changed_fraction: f64,
    pub mean_sparsity: f64,
    pub mean_inactive_fraction: f64,
}

/// Build a report from consecutive snapshot pairs; `masters`, when present,
/// must parallel `snapshots` and supplies the FP32 change column.
pub fn build_sparsity_report(
    snapshots: &[TensorMap],
    masters: Option<&[TensorMap]>,
) -> Result<SparsityReport> {
    if snapshots.len() < 2 {
        return Err(Error::TooFewSteps);
    }
    if let Some(m) = masters {
        if m.len() != snapshots.len() {
            return Err(Error::SchemaMismatch(
                "master series length differs".to_string(),
            ));
        }
    }
    let mut steps = Vec::with_capacity(snapshots.len() - 1);
    let mut cum_changed: alloc::collections::BTreeMap<String, (u64, u64)> = Default::default();
    for t in 1..snapshots.len() {
        let stats = element_sparsity(&snapshots[t - 1], &snapshots[t])?;
        for tc in &stats.per_tensor {
            let entry = cum_changed.entry(tc.name.clone()).or_insert((0, tc.numel));
            entry.0 += tc.changed;
        }
        let fp32 = match masters {
            Some(m) => Some(element_sparsity(&m[t - 1], &m[t])?.changed_fraction),
            None => None,
        };
        steps.push(StepSparsity {
            step: t as u64,
            changed_fraction: stats.changed_fraction,
            sparsity: stats.sparsity,
            fp32_changed_fraction: fp32,
            inactive_tensor_fraction: inactive_tensor_ratio(&snapshots[t - 1], &snapshots[t])?,
        });
    }
    let n = steps.len() as f64;
    let mean_changed = steps.iter().map(|s| s.changed_fraction).sum::<f64>() / n;
    let mean_inactive = steps
        .iter()
        .map(|s| s.inactive_tensor_fraction)
        .sum::<f64>()
        / n;
    let pairs = (snapshots.len() - 1) as u64;
    let per_tensor = cum_changed
        .into_iter()
        .map(|(name, (changed, numel))| TensorChange {
            name,
            numel,
            changed,
            changed_fraction: changed as f64 / (numel * pairs) as f64,
        })
        .collect();
    Ok(SparsityReport {
        steps,
        per_tensor,
        mean_changed_fraction: mean_changed,
        mean_sparsity: 1.0 - mean_changed,
        mean_inactive_fraction: mean_inactive,
    })
}
