//! `sparsesync`: pack, apply, analyze, estimate, and simulate sparse weight
//! synchronization.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sparsesync::harness::{
    run_experiment, run_paired, ExperimentConfig, ModelSpec, RegimePreset, SyncMode,
    UpdateDriverConfig, DESK_BUCKET_LIMIT,
};
use sparsesync::{io, presets, util, vlog};
use sparsesync_core::codec::serialize_message;
use sparsesync_core::updater::{pack_full, pack_updates, RoutingPolicy};
use sparsesync_core::{analysis, costmodel, ChangedIndexSet, DType, TensorMap};

#[derive(Parser)]
#[command(
    name = "sparsesync",
    version,
    about = "Lossless sparse weight-synchronization toolkit",
    after_help = "Set SPARSESYNC_LOG=info|debug for progress output on stderr.\n\
                  Sizes accept decimal (KB/MB/GB = powers of 1000) and binary\n\
                  (KiB/MiB/GiB = powers of 1024) suffixes; bandwidths may end in /s."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sparsity and locality statistics over checkpoint snapshots.
    Analyze(AnalyzeArgs),
    /// Diff two checkpoints into a sparse SRLS update file.
    Pack(PackArgs),
    /// Apply an SRLS update to a checkpoint.
    Apply(ApplyArgs),
    /// Analytic payload sizes, ratios, and transfer times.
    Estimate(EstimateArgs),
    /// Loopback trainer-to-rollout broadcast simulation.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Snapshot before the update (pairs with --after).
    #[arg(long, requires = "after", conflicts_with = "series")]
    before: Option<PathBuf>,
    /// Snapshot after the update.
    #[arg(long, requires = "before")]
    after: Option<PathBuf>,
    /// Directory of .srlt snapshots, ordered by filename.
    #[arg(long)]
    series: Option<PathBuf>,
    /// Comma-separated precisions for visibility analysis (FP32 inputs only).
    #[arg(long, value_delimiter = ',')]
    formats: Vec<String>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Also write a per-step CSV time series.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct PackArgs {
    #[arg(long)]
    before: PathBuf,
    #[arg(long)]
    after: PathBuf,
    /// Output SRLS path.
    #[arg(long)]
    out: PathBuf,
    /// Entropy-code the value streams.
    #[arg(long)]
    compress: bool,
    /// Density above which a tensor ships whole.
    #[arg(long, default_value_t = 1.0 / 3.0)]
    threshold: f64,
    /// Glob patterns of tensors that always ship whole.
    #[arg(long, value_delimiter = ',')]
    force_full: Vec<String>,
}

#[derive(Args)]
struct ApplyArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    update: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    /// Preset name, or `all` for every builtin preset.
    #[arg(long, conflicts_with = "params")]
    preset: Option<String>,
    /// Explicit element count (accepts 671e9 style).
    #[arg(long, value_parser = util::parse_count)]
    params: Option<u64>,
    /// Preset file overriding the builtin table.
    #[arg(long)]
    preset_file: Option<PathBuf>,
    /// Value dtype carried on the wire.
    #[arg(long, default_value = "bf16")]
    dtype: String,
    /// Update density rho.
    #[arg(long, default_value_t = 0.01)]
    rho: f64,
    /// Value-stream compression factor alpha.
    #[arg(long, default_value_t = 0.6)]
    alpha: f64,
    /// Bytes per index (2 = delta-encoded, 4 = absolute).
    #[arg(long, default_value_t = 4)]
    index_bytes: u32,
    /// Metadata bytes added to the raw sparse payload.
    #[arg(long, default_value_t = 0.0)]
    meta: f64,
    /// Bandwidths for transfer-time columns, e.g. 280GB/s,22.7GB/s.
    #[arg(long, value_delimiter = ',')]
    bandwidth: Vec<String>,
    /// Emit CSV instead of the table.
    #[arg(long)]
    csv: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Sparse,
    Full,
    Paired,
}

#[derive(Args)]
struct SimulateArgs {
    /// Model spec JSON ({tensors: [{name, shape, init_mean, init_std}], working_dtype, seed}).
    #[arg(long, conflicts_with_all = ["tensors", "elements"])]
    spec: Option<PathBuf>,
    /// Generate a synthetic model with this many tensors.
    #[arg(long, default_value_t = 20)]
    tensors: usize,
    /// Total elements across the generated model.
    #[arg(long, default_value = "2000000", value_parser = util::parse_count)]
    elements: u64,
    /// Driver config JSON ({eta, touched_fraction, dist, seed}).
    #[arg(long)]
    driver: Option<PathBuf>,
    /// Relative per-element step scale.
    #[arg(long, default_value_t = 3e-5)]
    eta: f64,
    /// Fraction of elements touched per step.
    #[arg(long, default_value_t = 1.0)]
    touched: f64,
    #[arg(long, default_value_t = 4)]
    ranks: usize,
    #[arg(long, default_value_t = 10)]
    steps: u64,
    #[arg(long, default_value_t = 2)]
    sync_every: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Paired)]
    mode: ModeArg,
    /// Bandwidth regime preset: unlimited, ib-on, or ib-off.
    #[arg(long, default_value = "unlimited", conflicts_with = "bandwidth")]
    regime: String,
    /// Explicit per-rank bandwidth (e.g. 8MB/s) instead of a preset.
    #[arg(long)]
    bandwidth: Option<String>,
    /// Bucket size limit.
    #[arg(long, default_value = "1MiB")]
    bucket: String,
    /// Seed for both the model init and the update driver.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    compress: bool,
    /// Redundant-index injection fraction (sparse mode).
    #[arg(long, default_value_t = 0.0)]
    redundant: f64,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    threshold: f64,
    #[arg(long, value_delimiter = ',')]
    force_full: Vec<String>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Analyze(a) => cmd_analyze(a),
        Cmd::Pack(a) => cmd_pack(a),
        Cmd::Apply(a) => cmd_apply(a),
        Cmd::Estimate(a) => cmd_estimate(a),
        Cmd::Simulate(a) => cmd_simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("{} does not exist or is not a file", path.display());
    }
    Ok(())
}

fn parse_dtype(s: &str) -> Result<DType> {
    s.parse::<DType>()
        .map_err(|_| anyhow::anyhow!("unknown dtype `{s}` (fp32|bf16|fp16|fp8e4m3)"))
}

#[derive(Serialize)]
struct AnalyzeReport {
    sparsity: analysis::SparsityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    locality: Option<analysis::LocalityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    precision_visibility: Option<Vec<PrecisionRow>>,
}

#[derive(Serialize)]
struct PrecisionRow {
    dtype: String,
    changed_fraction: f64,
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let snapshots: Vec<TensorMap> = if let Some(series) = &args.series {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(series)
            .with_context(|| format!("reading {}", series.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "srlt"))
            .collect();
        paths.sort();
        if paths.len() < 2 {
            bail!(
                "{} holds {} .srlt snapshots; need at least 2",
                series.display(),
                paths.len()
            );
        }
        paths
            .iter()
            .map(|p| io::read_checkpoint(p))
            .collect::<Result<_>>()?
    } else {
        let (Some(before), Some(after)) = (&args.before, &args.after) else {
            bail!("pass either --before and --after, or --series DIR");
        };
        require_file(before)?;
        require_file(after)?;
        vec![io::read_checkpoint(before)?, io::read_checkpoint(after)?]
    };

    let sparsity = analysis::build_sparsity_report(&snapshots, None)?;
    let locality = if snapshots.len() >= 3 {
        let sets = analysis::changed_sets_from_snapshots(&snapshots)?;
        Some(analysis::temporal_locality(&sets)?)
    } else {
        None
    };

    let precision_visibility = if args.formats.is_empty() {
        None
    } else {
        let formats: Vec<DType> = args
            .formats
            .iter()
            .map(|s| parse_dtype(s))
            .collect::<Result<_>>()?;
        let mut rows = Vec::new();
        for pair in snapshots.windows(2) {
            let vis = analysis::precision_visibility(&pair[0], &pair[1], &formats)
                .context("--formats needs FP32 snapshots")?;
            rows.push(vis);
        }
        // Average the per-step fractions per format.
        Some(
            formats
                .iter()
                .enumerate()
                .map(|(i, f)| PrecisionRow {
                    dtype: f.name().to_string(),
                    changed_fraction: rows.iter().map(|r| r[i].1).sum::<f64>() / rows.len() as f64,
                })
                .collect(),
        )
    };

    if let Some(csv_path) = &args.csv {
        let mut csv = String::from(
            "step,changed_fraction,sparsity,fp32_changed_fraction,inactive_tensor_fraction,p25,p50,p90\n",
        );
        for s in &sparsity.steps {
            let loc = locality
                .as_ref()
                .and_then(|l| l.steps.iter().find(|x| x.step as u64 == s.step));
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                s.step,
                s.changed_fraction,
                s.sparsity,
                s.fp32_changed_fraction
                    .map(|x| x.to_string())
                    .unwrap_or_default(),
                s.inactive_tensor_fraction,
                loc.map(|l| l.p25.to_string()).unwrap_or_default(),
                loc.map(|l| l.p50.to_string()).unwrap_or_default(),
                loc.map(|l| l.p90.to_string()).unwrap_or_default(),
            ));
        }
        io::write_atomic(csv_path, csv.as_bytes())?;
    }

    let report = AnalyzeReport {
        sparsity,
        locality,
        precision_visibility,
    };
    emit_json(&report, args.json.as_deref())
}

fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => io::write_atomic(p, json.as_bytes())?,
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_pack(args: PackArgs) -> Result<()> {
    require_file(&args.before)?;
    require_file(&args.after)?;
    let before = io::read_checkpoint(&args.before)?;
    let after = io::read_checkpoint(&args.after)?;
    let stats = analysis::element_sparsity(&before, &after)?;

    let mut cum = ChangedIndexSet::new();
    for t in before.iter() {
        let curr = after
            .get(t.name())
            .expect("schema checked by element_sparsity");
        cum.insert_tensor(t.name(), sparsesync_core::diff_changed(t, curr)?)?;
    }
    let policy = RoutingPolicy {
        density_threshold: args.threshold,
        force_full: args.force_full,
    };
    let msg = pack_updates(&after, &cum, &policy, args.compress)?;
    let wire = serialize_message(&msg);
    io::write_atomic(&args.out, &wire)?;

    let full_bytes = serialize_message(&pack_full(&after)).len();
    println!(
        "packed {} records, nnz {} ({:.4}% density), {} on the wire, {:.2}x vs full",
        msg.records.len(),
        stats.total_changed,
        stats.changed_fraction * 100.0,
        util::format_bytes(wire.len() as f64),
        full_bytes as f64 / wire.len() as f64,
    );
    Ok(())
}

fn cmd_apply(args: ApplyArgs) -> Result<()> {
    require_file(&args.weights)?;
    require_file(&args.update)?;
    let mut weights = io::read_checkpoint(&args.weights)?;
    let msg = io::read_message(&args.update)?;
    sparsesync_core::updater::apply_update(&mut weights, &msg)?;
    io::write_checkpoint(&args.out, &weights)?;
    vlog!(
        1,
        "applied {} records onto {}",
        msg.records.len(),
        args.weights.display()
    );
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let dtype = parse_dtype(&args.dtype)?;
    let value_bytes = dtype.width_bytes() as u32;
    let presets = match &args.preset_file {
        Some(p) => presets::parse_presets(
            &std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )?,
        None => presets::builtin_presets(),
    };
    let targets: Vec<(String, u64)> = match (&args.preset, args.params) {
        (None, Some(n)) => vec![("custom".to_string(), n)],
        (Some(name), None) if name == "all" => presets,
        (Some(name), None) => {
            let n = presets::lookup(&presets, name).ok_or_else(|| {
                anyhow::anyhow!(
                    "unknown preset `{name}`; known: {}",
                    presets
                        .iter()
                        .map(|(n, _)| n.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                )
            })?;
            vec![(name.clone(), n)]
        }
        (None, None) => bail!("pass --preset NAME (or `all`) or --params N"),
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };
    let bandwidths: Vec<f64> = args
        .bandwidth
        .iter()
        .map(|s| util::parse_size_bytes(s))
        .collect::<Result<_>>()?;

    let break_even = costmodel::break_even_density(value_bytes, args.index_bytes);
    let mut rows = Vec::new();
    for (name, elements) in &targets {
        let p = costmodel::CostParams {
            elements: *elements,
            density: args.rho,
            value_bytes,
            index_bytes: args.index_bytes,
            alpha: args.alpha,
            meta_bytes: args.meta,
        };
        p.validate()?;
        let full = costmodel::full_payload_bytes(*elements, value_bytes);
        let sparse = costmodel::sparse_payload_bytes(&p);
        let compressed = costmodel::compressed_payload_bytes(&p);
        let raw_ratio = costmodel::raw_ratio(args.rho, value_bytes, args.index_bytes);
        let comp_ratio = costmodel::compressed_ratio(&p);
        let bws: Vec<Option<f64>> = if bandwidths.is_empty() {
            vec![None]
        } else {
            bandwidths.iter().copied().map(Some).collect()
        };
        for bw in bws {
            rows.push((
                name.clone(),
                *elements,
                full,
                sparse,
                raw_ratio,
                compressed,
                comp_ratio,
                bw,
            ));
        }
    }

    if args.csv {
        println!(
            "model,params,dtype,rho,alpha,index_bytes,meta_bytes,break_even_density,\
             full_bytes,sparse_raw_bytes,raw_ratio,compressed_bytes,compressed_ratio,\
             bandwidth_bytes_per_s,full_seconds,sparse_raw_seconds,compressed_seconds"
        );
        for (name, elements, full, sparse, raw_ratio, compressed, comp_ratio, bw) in &rows {
            let (bw_s, tf, ts, tc) = match bw {
                Some(b) => (
                    b.to_string(),
                    costmodel::estimate_sync_seconds(*full, *b).to_string(),
                    costmodel::estimate_sync_seconds(*sparse, *b).to_string(),
                    costmodel::estimate_sync_seconds(*compressed, *b).to_string(),
                ),
                None => (String::new(), String::new(), String::new(), String::new()),
            };
            println!(
                "{name},{elements},{},{},{},{},{},{break_even},{full},{sparse},{raw_ratio},\
                 {compressed},{comp_ratio},{bw_s},{tf},{ts},{tc}",
                dtype.name(),
                args.rho,
                args.alpha,
                args.index_bytes,
                args.meta,
            );
        }
    } else {
        println!(
            "dtype {} | rho {} | alpha {} | b_i {} | break-even density {break_even:.6}",
            dtype.name(),
            args.rho,
            args.alpha,
            args.index_bytes
        );
        for (name, elements, full, sparse, raw_ratio, compressed, comp_ratio, bw) in &rows {
            let mut line = format!(
                "{name:<22} {elements:>16} params | full {:>12} | sparse {:>12} ({raw_ratio:.1}x) | compressed {:>12} ({comp_ratio:.1}x)",
                util::format_bytes(*full),
                util::format_bytes(*sparse),
                util::format_bytes(*compressed),
            );
            if let Some(b) = bw {
                line.push_str(&format!(
                    " | @{}: full {:.2}s sparse {:.3}s compressed {:.3}s",
                    util::format_bytes(*b),
                    costmodel::estimate_sync_seconds(*full, *b),
                    costmodel::estimate_sync_seconds(*sparse, *b),
                    costmodel::estimate_sync_seconds(*compressed, *b),
                ));
            }
            println!("{line}");
        }
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let spec: ModelSpec = match &args.spec {
        Some(path) => {
            require_file(path)?;
            serde_json::from_str(&std::fs::read_to_string(path)?)
                .with_context(|| format!("parsing model spec {}", path.display()))?
        }
        None => {
            let mut spec = ModelSpec::generate(args.tensors, args.elements, args.seed);
            spec.seed = args.seed;
            spec
        }
    };
    let driver: UpdateDriverConfig = match &args.driver {
        Some(path) => {
            require_file(path)?;
            serde_json::from_str(&std::fs::read_to_string(path)?)
                .with_context(|| format!("parsing driver config {}", path.display()))?
        }
        None => UpdateDriverConfig {
            eta: args.eta,
            touched_fraction: args.touched,
            seed: args.seed,
            ..Default::default()
        },
    };
    let regime = match &args.bandwidth {
        Some(bw) => RegimePreset::throttled("custom", util::parse_size_bytes(bw)?),
        None => RegimePreset::by_name(&args.regime).ok_or_else(|| {
            anyhow::anyhow!("unknown regime `{}` (unlimited|ib-on|ib-off)", args.regime)
        })?,
    };
    let bucket_limit = util::parse_size_bytes(&args.bucket)? as usize;
    let cfg = ExperimentConfig {
        spec,
        driver,
        steps: args.steps,
        sync_every: args.sync_every,
        mode: SyncMode::Sparse,
        ranks: args.ranks,
        regime,
        bucket_limit: if bucket_limit == 0 {
            DESK_BUCKET_LIMIT
        } else {
            bucket_limit
        },
        compress: args.compress,
        redundant_fraction: args.redundant,
        policy: RoutingPolicy {
            density_threshold: args.threshold,
            force_full: args.force_full.clone(),
        },
    };

    vlog!(
        1,
        "simulate: {} tensors, {} elements, {} ranks, regime {}",
        cfg.spec.tensors.len(),
        cfg.spec.total_elements(),
        cfg.ranks,
        cfg.regime.name
    );
    match args.mode {
        ModeArg::Paired => {
            let report = run_paired(&cfg).map_err(anyhow::Error::from)?;
            summarize(&report.full);
            summarize(&report.sparse);
            eprintln_summary(&format!(
                "paired: byte ratio {:.2}x, wall speedup {:.2}x, digests match: {}",
                report.wire_byte_ratio, report.wall_speedup, report.final_digests_match
            ));
            emit_json(&report, args.out.as_deref())
        }
        ModeArg::Sparse | ModeArg::Full => {
            let mode = if args.mode == ModeArg::Sparse {
                SyncMode::Sparse
            } else {
                SyncMode::Full
            };
            let report = run_experiment(&ExperimentConfig { mode, ..cfg })?;
            summarize(&report);
            emit_json(&report, args.out.as_deref())
        }
    }
}

fn summarize(report: &sparsesync::harness::ExperimentReport) {
    eprintln_summary(&format!(
        "{}: {} syncs, {} total, {:.3}s broadcast, verified: {}",
        report.mode,
        report.syncs.len(),
        util::format_bytes(report.total_wire_bytes as f64),
        report.total_broadcast_seconds,
        report.all_verified
    ));
}

fn eprintln_summary(line: &str) {
    eprintln!("{line}");
}
