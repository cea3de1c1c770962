use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spraykit::baseline::ThresholdSpec;
use spraykit::exec;
use spraykit::io::{self, DatasetManifest, GenerateConfig, SegmentBaselineOptions};
use spraykit::segpost::TilingSpec;

#[derive(Parser)]
#[command(name = "spraykit", version, about = "synthetic spray imaging toolkit")]
struct Cli {
    /// worker threads (0 = all cores); output is identical either way
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a labeled dataset from a TOML config, or re-render one from a
    /// manifest
    Generate(GenerateArgs),
    /// Run the classical threshold baseline over a dataset
    SegmentBaseline(SegmentArgs),
    /// Score segmentation maps against a dataset's ground truth
    EvalSeg(EvalSegArgs),
    /// Score detection annotations against ground-truth annotations
    EvalDet(EvalDetArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// generation config (TOML); mutually exclusive with --from-manifest
    #[arg(long, conflicts_with = "from_manifest")]
    config: Option<PathBuf>,
    /// re-render an existing dataset byte-identically from its manifest
    #[arg(long)]
    from_manifest: Option<PathBuf>,
    /// override the master seed from the config
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SegmentArgs {
    /// dataset manifest (manifest.json)
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// threshold as a fraction of the image median
    #[arg(long, default_value_t = 0.8)]
    threshold_fraction: f64,
    /// segment per tile of this size instead of whole images
    #[arg(long)]
    tile_size: Option<usize>,
    /// overlap margin for tiled segmentation
    #[arg(long, default_value_t = 32)]
    tile_overlap: usize,
}

#[derive(Args)]
struct EvalSegArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// directory holding seg_<image_id>.png prediction maps
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// diameter histogram bin width in micrometres
    #[arg(long, default_value_t = 2.0)]
    bin_um: f64,
}

#[derive(Args)]
struct EvalDetArgs {
    /// ground-truth annotation CSV
    #[arg(long)]
    gt: PathBuf,
    /// prediction annotation CSV (confidence column filled in)
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    iou_threshold: f64,
    /// require matched boxes to share a class
    #[arg(long, default_value_t = true)]
    class_aware: bool,
    /// write the full report as JSON here in addition to the summary table
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    exec::configure_threads(cli.threads);
    match cli.command {
        Command::Generate(args) => {
            let manifest = match (&args.config, &args.from_manifest) {
                (Some(config_path), None) => {
                    let config = GenerateConfig::load(config_path)?;
                    io::generate(&config, &args.out, args.seed)?
                }
                (None, Some(manifest_path)) => {
                    let manifest = DatasetManifest::load(manifest_path)?;
                    io::regenerate(&manifest, &args.out)?
                }
                _ => anyhow::bail!("exactly one of --config or --from-manifest is required"),
            };
            println!(
                "generated {} images into {}",
                manifest.images.len(),
                args.out.display()
            );
        }
        Command::SegmentBaseline(args) => {
            let manifest = DatasetManifest::load(&args.manifest)?;
            let base_dir = manifest_dir(&args.manifest);
            let options = SegmentBaselineOptions {
                threshold: ThresholdSpec {
                    fraction_of_median: args.threshold_fraction,
                },
                tiling: args.tile_size.map(|tile_size| TilingSpec {
                    tile_size,
                    overlap_margin: args.tile_overlap,
                }),
            };
            if let Some(t) = &options.tiling {
                t.validate()?;
            }
            let n = io::segment_baseline(&manifest, &base_dir, &args.out, &options)?;
            if n == 0 {
                eprintln!("warning: manifest lists no images; nothing to do");
            }
            println!("segmented {} images into {}", n, args.out.display());
        }
        Command::EvalSeg(args) => {
            let manifest = DatasetManifest::load(&args.manifest)?;
            let base_dir = manifest_dir(&args.manifest);
            let summary =
                io::eval_seg(&manifest, &base_dir, &args.pred, &args.out, args.bin_um)?;
            println!(
                "images {}  droplets gt/pred {}/{} (ratio {:.3})  SMD gt/pred {:.2}/{:.2} um (dev {:+.2}%)",
                summary.images,
                summary.gt.droplet_count,
                summary.predicted.droplet_count,
                summary.count_ratio,
                summary.gt.smd_um,
                summary.predicted.smd_um,
                summary.smd_deviation_pct,
            );
        }
        Command::EvalDet(args) => {
            let report = io::eval_det(&args.gt, &args.pred, args.iou_threshold, args.class_aware)?;
            print!("{}", report.summary_table("overall"));
            if let Some(out) = &args.out {
                std::fs::write(out, serde_json::to_string_pretty(&report)?)?;
            }
        }
    }
    Ok(())
}

fn manifest_dir(manifest_path: &std::path::Path) -> PathBuf {
    manifest_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
