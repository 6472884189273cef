//! `vesselseg`: pulmonary vessel segmentation pipeline tools.
//!
//! One subcommand per pipeline stage. Every subcommand prints its effective
//! configuration so runs can be reproduced from logs, never mutates its
//! inputs, and produces deterministic output for fixed inputs and flags.
//! Exit codes: 0 success, 1 validation error (bad flags, missing or
//! mismatched inputs), 2 runtime error.

mod manifest;

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use vesselseg_core::error::Error as CoreError;
use vesselseg_core::io;
use vesselseg_core::metrics::evaluate;
use vesselseg_core::postprocess::{repair, RepairConfig};
use vesselseg_core::preprocess::{
    crop_label, crop_to_lung_bbox, mask_bounding_box, percentile_clip, resample_nearest,
    resample_trilinear,
};
use vesselseg_core::skeleton::{skeleton_of_class, skeletonize};
use vesselseg_core::synth::{generate_tree, PhantomSpec};
use vesselseg_core::vlsom::{
    build_weight_map, composite_loss, GtSkeletons, LossKind, WeightConfig,
};
use vesselseg_core::volume::VesselClass;

use manifest::RunManifest;

/// Errors carry their exit class so `main` can map them to exit codes.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            // Problems with what the user handed us.
            CoreError::Format { .. }
            | CoreError::UnsupportedDatatype { .. }
            | CoreError::InvalidLabel { .. }
            | CoreError::GeometryMismatch(_)
            | CoreError::EmptyMask(_)
            | CoreError::Config(_)
            | CoreError::InvalidMask(_)
            | CoreError::InconsistentSkeleton(_)
            | CoreError::Domain(_) => CliError::Validation(e.to_string()),
            // Everything else went wrong while working.
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

type CliResult = Result<(), CliError>;

#[derive(Parser)]
#[command(name = "vesselseg", version, about = "Pulmonary vessel segmentation toolkit")]
struct Cli {
    /// Worker threads for batch subcommands (0 = rayon default).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Crop to the lung bounding box, resample, and percentile-clip a volume.
    Preprocess(PreprocessArgs),
    /// Extract the centerline of a mask (or of one class of a label volume).
    Skeletonize(SkeletonizeArgs),
    /// Build a centerline-derived loss weight map.
    Weights(WeightsArgs),
    /// Evaluate the composite loss of a probability volume against GT.
    Loss(LossArgs),
    /// Compute Dice/Recall/clDice/clRecall per vessel class.
    Metrics(MetricsArgs),
    /// Remove outliers and reconnect small artery/vein components.
    Repair(RepairArgs),
    /// Generate a synthetic vascular phantom.
    Synth(SynthArgs),
    /// Repair then evaluate every case of a manifest.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    /// Input CT volume.
    #[arg(long)]
    image: PathBuf,
    /// Lung mask sharing the image grid.
    #[arg(long)]
    lung: PathBuf,
    /// Output path for the preprocessed image.
    #[arg(long)]
    out_image: PathBuf,
    /// Optional output path for the matching cropped+resampled lung mask.
    #[arg(long)]
    out_lung: Option<PathBuf>,
    /// Crop margin in voxels around the lung bounding box.
    #[arg(long, default_value_t = 0)]
    margin: usize,
    /// Target spacing in mm as `x,y,z`.
    #[arg(long, value_delimiter = ',', default_values_t = [0.726, 0.726, 0.8])]
    spacing: Vec<f64>,
    /// Lower clipping percentile of the foreground intensities.
    #[arg(long, default_value_t = 0.5)]
    p_lo: f64,
    /// Upper clipping percentile of the foreground intensities.
    #[arg(long, default_value_t = 99.5)]
    p_hi: f64,
}

#[derive(Args)]
struct SkeletonizeArgs {
    /// Input label volume (binary, or 3-class with --class).
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Output path for the skeleton (binary label volume).
    #[arg(long)]
    out: PathBuf,
    /// Vessel class to skeletonize; omit for an already-binary mask.
    #[arg(long, value_parser = parse_class)]
    class: Option<VesselClass>,
}

#[derive(Args)]
struct WeightsArgs {
    /// Ground-truth label volume.
    #[arg(long)]
    gt: PathBuf,
    /// Lung mask.
    #[arg(long)]
    lung: PathBuf,
    /// Which loss term the map feeds: ce, dice or cldice.
    #[arg(long, value_parser = parse_kind)]
    kind: LossKind,
    /// Output path (float32 volume).
    #[arg(long)]
    out: PathBuf,
    /// Weight of vessel voxels off the centerline.
    #[arg(long, default_value_t = 3.0)]
    w_class: f64,
    /// Weight of centerline voxels.
    #[arg(long, default_value_t = 15.0)]
    w_cl: f64,
}

#[derive(Args)]
struct LossArgs {
    /// Predicted probability volume (3 channels).
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth label volume.
    #[arg(long)]
    gt: PathBuf,
    /// Lung mask.
    #[arg(long)]
    lung: PathBuf,
    #[arg(long, default_value_t = 3.0)]
    w_class: f64,
    #[arg(long, default_value_t = 15.0)]
    w_cl: f64,
    /// Coefficient of the clDice term.
    #[arg(long, default_value_t = 0.5)]
    lambda_cldice: f64,
    /// Soft-skeletonization rounds.
    #[arg(long, default_value_t = 10)]
    soft_skel_iters: usize,
}

#[derive(Args)]
struct MetricsArgs {
    /// Predicted label volume (single-case mode).
    #[arg(long, conflicts_with = "manifest", requires = "gt")]
    pred: Option<PathBuf>,
    /// Ground-truth label volume (single-case mode).
    #[arg(long, conflicts_with = "manifest")]
    gt: Option<PathBuf>,
    /// Case id used in single-case records.
    #[arg(long, default_value = "case")]
    case: String,
    /// Manifest of cases: `case_id pred gt [lung]` per line.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Write the TSV report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RepairArgs {
    /// Input label volume.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Lung mask.
    #[arg(long)]
    lung: PathBuf,
    /// Output path for the repaired label volume.
    #[arg(long)]
    out: PathBuf,
    /// Components smaller than this many voxels may be reclassified.
    #[arg(long, default_value_t = 800)]
    threshold: usize,
    /// Safety cap on merge iterations.
    #[arg(long, default_value_t = 64)]
    max_iterations: u32,
    /// Drop small components that never merge into either largest component.
    #[arg(long)]
    drop_unmerged: bool,
    /// Write the repair log here instead of stdout.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Phantom description (`PHANTOM 1` text document).
    #[arg(long)]
    spec: PathBuf,
    /// Override the seed in the spec file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    /// Manifest of cases: `case_id pred gt lung` per line (lung required).
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 800)]
    threshold: usize,
    #[arg(long, default_value_t = 64)]
    max_iterations: u32,
    #[arg(long)]
    drop_unmerged: bool,
}

fn parse_class(s: &str) -> Result<VesselClass, String> {
    match s {
        "artery" | "1" => Ok(VesselClass::Artery),
        "vein" | "2" => Ok(VesselClass::Vein),
        other => Err(format!("unknown class `{other}` (expected artery or vein)")),
    }
}

fn parse_kind(s: &str) -> Result<LossKind, String> {
    match s {
        "ce" => Ok(LossKind::Ce),
        "dice" => Ok(LossKind::Dice),
        "cldice" => Ok(LossKind::ClDice),
        other => Err(format!("unknown kind `{other}` (expected ce, dice or cldice)")),
    }
}

fn require_file(path: &Path, what: &str) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "{what} not found: {}",
            path.display()
        )))
    }
}

fn write_text(path: &Path, text: &str) -> CliResult {
    std::fs::write(path, text).map_err(|e| {
        CliError::Runtime(format!("cannot write {}: {e}", path.display()))
    })
}

fn triple(v: &[f64]) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

fn run_preprocess(args: &PreprocessArgs) -> CliResult {
    require_file(&args.image, "image")?;
    require_file(&args.lung, "lung mask")?;
    if args.spacing.len() != 3 {
        return Err(CliError::Validation(format!(
            "--spacing needs 3 comma-separated values, got {}",
            args.spacing.len()
        )));
    }
    let spacing = triple(&args.spacing);
    println!(
        "config: margin={} spacing={},{},{} p_lo={} p_hi={}",
        args.margin, spacing[0], spacing[1], spacing[2], args.p_lo, args.p_hi
    );

    let image = io::read_scalar(&args.image)?;
    let lung = io::read_label(&args.lung)?;
    let (cropped, offset) = crop_to_lung_bbox(&image, &lung, args.margin)?;
    let (bbox_lower, bbox_dims) = mask_bounding_box(&lung, args.margin)?;
    let lung_cropped = crop_label(&lung, bbox_lower, bbox_dims)?;

    let resampled = resample_trilinear(&cropped, spacing)?;
    let lung_resampled = resample_nearest(&lung_cropped, spacing)?;
    let (clipped, clip) = percentile_clip(&resampled, &lung_resampled, args.p_lo, args.p_hi)?;

    io::write_scalar(&clipped, &args.out_image)?;
    if let Some(out_lung) = &args.out_lung {
        io::write_label(&lung_resampled, out_lung)?;
    }

    let dims = clipped.geometry().dims();
    println!("bbox_offset = {} {} {}", offset[0], offset[1], offset[2]);
    println!("bbox_dims = {} {} {}", bbox_dims[0], bbox_dims[1], bbox_dims[2]);
    println!("clip_lo = {}", clip.lo);
    println!("clip_hi = {}", clip.hi);
    println!("foreground_voxels = {}", clip.foreground_voxels);
    println!("output_dims = {} {} {}", dims[0], dims[1], dims[2]);
    Ok(())
}

fn run_skeletonize(args: &SkeletonizeArgs) -> CliResult {
    require_file(&args.input, "input volume")?;
    let class_name = args.class.map_or("binary", |c| c.name());
    println!("config: class={class_name}");
    let labels = io::read_label(&args.input)?;
    let skel = match args.class {
        Some(class) => skeleton_of_class(&labels, class)?,
        None => skeletonize(&labels)?,
    };
    io::write_label(&skel.to_label_volume(), &args.out)?;
    println!("skeleton_voxels = {}", skel.count());
    Ok(())
}

fn run_weights(args: &WeightsArgs) -> CliResult {
    require_file(&args.gt, "gt volume")?;
    require_file(&args.lung, "lung mask")?;
    println!(
        "config: kind={} w_class={} w_cl={}",
        args.kind.name(),
        args.w_class,
        args.w_cl
    );
    let cfg = WeightConfig {
        w_class: args.w_class,
        w_cl: args.w_cl,
        ..Default::default()
    };
    let gt = io::read_label(&args.gt)?;
    let lung = io::read_label(&args.lung)?;
    let skeletons = GtSkeletons::from_labels(&gt)?;
    let map = build_weight_map(&gt, &skeletons, &lung, &cfg, args.kind)?;
    let (mut n_cl, mut n_class, mut n_one) = (0usize, 0usize, 0usize);
    for &w in map.data() {
        if w == cfg.w_cl {
            n_cl += 1;
        } else if w == cfg.w_class {
            n_class += 1;
        } else {
            n_one += 1;
        }
    }
    io::write_scalar(&map.to_scalar_volume(), &args.out)?;
    println!("voxels_w_cl = {n_cl}");
    println!("voxels_w_class = {n_class}");
    println!("voxels_w_one = {n_one}");
    Ok(())
}

fn run_loss(args: &LossArgs) -> CliResult {
    require_file(&args.pred, "prediction volume")?;
    require_file(&args.gt, "gt volume")?;
    require_file(&args.lung, "lung mask")?;
    println!(
        "config: w_class={} w_cl={} lambda_cldice={} soft_skel_iters={}",
        args.w_class, args.w_cl, args.lambda_cldice, args.soft_skel_iters
    );
    let cfg = WeightConfig {
        w_class: args.w_class,
        w_cl: args.w_cl,
        lambda_cldice: args.lambda_cldice,
        soft_skel_iters: args.soft_skel_iters,
    };
    let pred = io::read_prob(&args.pred)?;
    let gt = io::read_label(&args.gt)?;
    let lung = io::read_label(&args.lung)?;
    let skeletons = GtSkeletons::from_labels(&gt)?;
    let (breakdown, _gradient) = composite_loss(&pred, &gt, &skeletons, &lung, &cfg)?;
    print!("{breakdown}");
    Ok(())
}

fn run_metrics(args: &MetricsArgs) -> CliResult {
    let mut records = vec!["case\tclass\tmetric\tvalue".to_string()];
    match (&args.manifest, &args.pred, &args.gt) {
        (Some(manifest_path), None, None) => {
            require_file(manifest_path, "manifest")?;
            println!("config: manifest={}", manifest_path.display());
            let m = RunManifest::load(manifest_path)?;
            let results: Vec<Result<Vec<String>, CliError>> = m
                .entries
                .par_iter()
                .map(|entry| {
                    let pred = io::read_label(&entry.pred)?;
                    let gt = io::read_label(&entry.gt)?;
                    let report = evaluate(&pred, &gt)?;
                    Ok(report.tsv_records(&entry.case_id))
                })
                .collect();
            for r in results {
                records.extend(r?);
            }
        }
        (None, Some(pred_path), Some(gt_path)) => {
            require_file(pred_path, "prediction volume")?;
            require_file(gt_path, "gt volume")?;
            println!("config: case={}", args.case);
            let pred = io::read_label(pred_path)?;
            let gt = io::read_label(gt_path)?;
            let report = evaluate(&pred, &gt)?;
            records.extend(report.tsv_records(&args.case));
        }
        _ => {
            return Err(CliError::Validation(
                "metrics needs either --manifest or both --pred and --gt".into(),
            ))
        }
    }
    let body = records.join("\n") + "\n";
    match &args.out {
        Some(path) => write_text(path, &body)?,
        None => print!("{body}"),
    }
    Ok(())
}

fn repair_config(threshold: usize, max_iterations: u32, drop_unmerged: bool) -> RepairConfig {
    RepairConfig {
        size_threshold: threshold,
        max_iterations,
        keep_unmerged_small: !drop_unmerged,
    }
}

fn run_repair(args: &RepairArgs) -> CliResult {
    require_file(&args.input, "input volume")?;
    require_file(&args.lung, "lung mask")?;
    let cfg = repair_config(args.threshold, args.max_iterations, args.drop_unmerged);
    println!(
        "config: threshold={} max_iterations={} keep_unmerged={}",
        cfg.size_threshold, cfg.max_iterations, cfg.keep_unmerged_small
    );
    let labels = io::read_label(&args.input)?;
    let lung = io::read_label(&args.lung)?;
    let (repaired, log) = repair(&labels, &lung, &cfg)?;
    io::write_label(&repaired, &args.out)?;
    match &args.log {
        Some(path) => write_text(path, &log.to_string())?,
        None => print!("{log}"),
    }
    Ok(())
}

fn run_synth(args: &SynthArgs) -> CliResult {
    require_file(&args.spec, "phantom spec")?;
    let text = std::fs::read_to_string(&args.spec).map_err(|e| {
        CliError::Validation(format!("cannot read {}: {e}", args.spec.display()))
    })?;
    let mut spec = PhantomSpec::from_text(&text)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    println!(
        "config: seed={} dims={},{},{} generations={} radius_decay={}",
        spec.seed,
        spec.dims[0],
        spec.dims[1],
        spec.dims[2],
        spec.generations,
        spec.radius_decay
    );
    std::fs::create_dir_all(&args.out_dir).map_err(|e| {
        CliError::Runtime(format!("cannot create {}: {e}", args.out_dir.display()))
    })?;
    let phantom = generate_tree(&spec)?;
    io::write_label(&phantom.labels, args.out_dir.join("labels.nii"))?;
    io::write_label(
        &phantom.centerlines[0].to_label_volume(),
        args.out_dir.join("centerline_artery.nii"),
    )?;
    io::write_label(
        &phantom.centerlines[1].to_label_volume(),
        args.out_dir.join("centerline_vein.nii"),
    )?;
    io::write_label(&phantom.lung_mask, args.out_dir.join("lung.nii"))?;
    write_text(&args.out_dir.join("phantom_spec.txt"), &spec.to_text())?;
    println!("artery_voxels = {}", phantom.labels.voxel_count(1));
    println!("vein_voxels = {}", phantom.labels.voxel_count(2));
    Ok(())
}

fn run_pipeline(args: &PipelineArgs) -> CliResult {
    require_file(&args.manifest, "manifest")?;
    let cfg = repair_config(args.threshold, args.max_iterations, args.drop_unmerged);
    println!(
        "config: threshold={} max_iterations={} keep_unmerged={}",
        cfg.size_threshold, cfg.max_iterations, cfg.keep_unmerged_small
    );
    let m = RunManifest::load(&args.manifest)?;
    for entry in &m.entries {
        if entry.lung.is_none() {
            return Err(CliError::Validation(format!(
                "pipeline case `{}`: repair needs a lung mask (4th manifest field)",
                entry.case_id
            )));
        }
    }
    std::fs::create_dir_all(&args.out_dir).map_err(|e| {
        CliError::Runtime(format!("cannot create {}: {e}", args.out_dir.display()))
    })?;

    struct CaseOutput {
        records: Vec<String>,
        log_line: String,
    }
    let results: Vec<Result<CaseOutput, CliError>> = m
        .entries
        .par_iter()
        .map(|entry| {
            let pred = io::read_label(&entry.pred)?;
            let gt = io::read_label(&entry.gt)?;
            let lung = io::read_label(entry.lung.as_ref().unwrap())?;
            let (repaired, log) = repair(&pred, &lung, &cfg)?;
            let repaired_path = args.out_dir.join(format!("{}_repaired.nii", entry.case_id));
            io::write_label(&repaired, &repaired_path)?;
            let log_path = args.out_dir.join(format!("{}_repair.log", entry.case_id));
            write_text(&log_path, &log.to_string())?;
            let report = evaluate(&repaired, &gt)?;
            Ok(CaseOutput {
                records: report.tsv_records(&entry.case_id),
                log_line: format!(
                    "case {} repaired: {} events, converged={}",
                    entry.case_id,
                    log.events.len(),
                    log.converged
                ),
            })
        })
        .collect();

    let mut records = vec!["case\tclass\tmetric\tvalue".to_string()];
    for r in results {
        let out = r?;
        println!("{}", out.log_line);
        records.extend(out.records);
    }
    let body = records.join("\n") + "\n";
    write_text(&args.out_dir.join("metrics.tsv"), &body)?;
    print!("{body}");
    Ok(())
}

fn run(cli: &Cli) -> CliResult {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("cannot configure thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Preprocess(args) => run_preprocess(args),
        Command::Skeletonize(args) => run_skeletonize(args),
        Command::Weights(args) => run_weights(args),
        Command::Loss(args) => run_loss(args),
        Command::Metrics(args) => run_metrics(args),
        Command::Repair(args) => run_repair(args),
        Command::Synth(args) => run_synth(args),
        Command::Pipeline(args) => run_pipeline(args),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            eprintln!("{e}");
            std::process::exit(1);
        }
    };
    match run(&cli) {
        Ok(()) => {}
        Err(CliError::Validation(m)) => {
            eprintln!("error: {m}");
            std::process::exit(1);
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            std::process::exit(2);
        }
    }
}
