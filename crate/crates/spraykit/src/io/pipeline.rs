//! Batch drivers behind the CLI subcommands: dataset generation, baseline
//! segmentation, segmentation scoring, and detection scoring.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baseline::{threshold_segment, ThresholdSpec};
use crate::degrade::apply_degradation;
use crate::deteval::{match_annotations, Annotation, EvalError, EvalReport};
use crate::exec;
use crate::scene::{rasterize, sample, CalibrationPool, RasterBundle, SceneSpec};
use crate::segpost::{
    binarize, connected_components, split_stitch_segment, DropletRecord, SprayStats, TilingSpec,
};

use super::annotations::{read_annotation_file, write_annotation_file};
use super::config::GenerateConfig;
use super::manifest::{DatasetManifest, ImageRecord, MANIFEST_SCHEMA_VERSION};
use super::raster_files::{load_gray8, load_instance16, load_segmap, save_gray8, save_instance16, save_segmap};
use super::IoError;

fn image_id(index: usize) -> String {
    format!("img_{index:05}")
}

fn render_one(
    spec: &SceneSpec,
    pool: Option<&CalibrationPool>,
    id: &str,
    degrade_seed: u64,
) -> Result<RasterBundle, IoError> {
    let scene = sample(spec, pool)?;
    let mut bundle = rasterize(&scene)?;
    for a in &mut bundle.annotations {
        a.image_id = id.to_string();
    }
    Ok(apply_degradation(&bundle, &spec.degradation, degrade_seed))
}

fn write_image_files(
    out_dir: &Path,
    rec: &ImageRecord,
    bundle: &RasterBundle,
) -> Result<(), IoError> {
    save_gray8(&bundle.image, &out_dir.join(&rec.image_path))?;
    save_instance16(&bundle.instance_map, &out_dir.join(&rec.instance_map_path))?;
    write_annotation_file(&out_dir.join(&rec.annotation_path), &bundle.annotations)
}

fn generate_records(
    records: Vec<ImageRecord>,
    pool: Option<&CalibrationPool>,
    out_dir: &Path,
    scale: f64,
) -> Result<DatasetManifest, IoError> {
    std::fs::create_dir_all(out_dir).map_err(|e| IoError::file(out_dir, e))?;
    // all randomness flows from the per-record seeds, so images can be
    // rendered in parallel and written to their unique paths
    let results = exec::map_indexed(records.len(), |i| {
        let rec = &records[i];
        let bundle = render_one(&rec.scene, pool, &rec.image_id, rec.degrade_seed)?;
        write_image_files(out_dir, rec, &bundle)?;
        Ok::<Vec<Annotation>, IoError>(bundle.annotations)
    });
    let mut all_annotations = Vec::new();
    for r in results {
        all_annotations.extend(r?);
    }
    write_annotation_file(&out_dir.join("annotations.csv"), &all_annotations)?;
    let manifest = DatasetManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        scale_um_per_px: scale,
        pool: pool.cloned(),
        images: records,
    };
    // written last: its presence marks a complete dataset
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Generate a dataset from a config. Fully reproducible: each image's scene
/// seed and degradation seed are derived from the master seed and recorded
/// in the manifest.
pub fn generate(
    config: &GenerateConfig,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<DatasetManifest, IoError> {
    let master = seed_override.unwrap_or(config.scene.seed);
    let records: Vec<ImageRecord> = (0..config.count)
        .map(|i| {
            let id = image_id(i);
            let seed = exec::derive_seed(master, 2 * i as u64);
            let degrade_seed = exec::derive_seed(master, 2 * i as u64 + 1);
            let mut scene = config.scene.clone();
            scene.seed = seed;
            ImageRecord {
                image_path: format!("{id}.png"),
                instance_map_path: format!("{id}_instances.png"),
                annotation_path: format!("{id}.csv"),
                image_id: id,
                degradation: scene.degradation.clone(),
                scene,
                seed,
                degrade_seed,
            }
        })
        .collect();
    generate_records(records, config.pool.as_ref(), out_dir, config.scene.scale_um_per_px)
}

/// Re-render a dataset from its manifest; output is byte-identical to the
/// original regardless of thread count.
pub fn regenerate(manifest: &DatasetManifest, out_dir: &Path) -> Result<DatasetManifest, IoError> {
    generate_records(
        manifest.images.clone(),
        manifest.pool.as_ref(),
        out_dir,
        manifest.scale_um_per_px,
    )
}

#[derive(Debug, Clone, Default)]
pub struct SegmentBaselineOptions {
    pub threshold: ThresholdSpec,
    /// when set, the baseline runs per tile (per-tile median) and the
    /// results are stitched
    pub tiling: Option<TilingSpec>,
}

/// Run the classical threshold baseline over every image in the manifest,
/// writing one segmentation map per image into `pred_dir`. Returns the
/// number of images processed.
pub fn segment_baseline(
    manifest: &DatasetManifest,
    base_dir: &Path,
    pred_dir: &Path,
    options: &SegmentBaselineOptions,
) -> Result<usize, IoError> {
    std::fs::create_dir_all(pred_dir).map_err(|e| IoError::file(pred_dir, e))?;
    let results = exec::map_indexed(manifest.images.len(), |i| {
        let rec = &manifest.images[i];
        let img = load_gray8(&base_dir.join(&rec.image_path))?;
        let seg = match &options.tiling {
            Some(tiling) => split_stitch_segment(
                &img,
                |tile| threshold_segment(tile, &options.threshold),
                tiling,
            )?,
            None => threshold_segment(&img, &options.threshold),
        };
        save_segmap(&seg, &pred_dir.join(format!("seg_{}.png", rec.image_id)))
    });
    for r in results {
        r?;
    }
    Ok(manifest.images.len())
}

/// Per-dataset segmentation scoring: predicted maps vs ground-truth masks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegEvalSummary {
    pub images: usize,
    pub gt: SprayStats,
    pub predicted: SprayStats,
    /// predicted droplet count over ground-truth droplet count
    pub count_ratio: f64,
    /// (SMD_pred - SMD_gt) / SMD_gt, percent
    pub smd_deviation_pct: f64,
}

/// Score segmentation predictions against the manifest's ground truth.
/// Emits per-image droplet records (`droplets_gt.csv`, `droplets_pred.csv`)
/// and an aggregate `spray_stats.json` into `out_dir`.
pub fn eval_seg(
    manifest: &DatasetManifest,
    base_dir: &Path,
    pred_dir: &Path,
    out_dir: &Path,
    histogram_bin_um: f64,
) -> Result<SegEvalSummary, IoError> {
    std::fs::create_dir_all(out_dir).map_err(|e| IoError::file(out_dir, e))?;
    let scale = manifest.scale_um_per_px;
    let results = exec::map_indexed(manifest.images.len(), |i| {
        let rec = &manifest.images[i];
        let inst = load_instance16(&base_dir.join(&rec.instance_map_path))?;
        let pred_path = pred_dir.join(format!("seg_{}.png", rec.image_id));
        let pred = load_segmap(&pred_path)?;
        if pred.width() != inst.width() || pred.height() != inst.height() {
            return Err(IoError::ShapeMismatch {
                image_id: rec.image_id.clone(),
                got_w: pred.width(),
                got_h: pred.height(),
                want_w: inst.width(),
                want_h: inst.height(),
            });
        }
        let gt_mask = inst.map(|id| u8::from(id > 0));
        let gt_records = connected_components(&gt_mask, scale);
        let pred_records = connected_components(&binarize(&pred, 0.5), scale);
        Ok::<_, IoError>((gt_records, pred_records))
    });
    let mut gt_all: Vec<(String, DropletRecord)> = Vec::new();
    let mut pred_all: Vec<(String, DropletRecord)> = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        let (gt, pred) = r?;
        let id = &manifest.images[i].image_id;
        gt_all.extend(gt.into_iter().map(|d| (id.clone(), d)));
        pred_all.extend(pred.into_iter().map(|d| (id.clone(), d)));
    }
    write_droplet_csv(&out_dir.join("droplets_gt.csv"), &gt_all)?;
    write_droplet_csv(&out_dir.join("droplets_pred.csv"), &pred_all)?;

    let gt_records: Vec<DropletRecord> = gt_all.into_iter().map(|(_, d)| d).collect();
    let pred_records: Vec<DropletRecord> = pred_all.into_iter().map(|(_, d)| d).collect();
    let gt = SprayStats::compute(&gt_records, histogram_bin_um)?;
    let predicted = SprayStats::compute(&pred_records, histogram_bin_um)?;
    let summary = SegEvalSummary {
        images: manifest.images.len(),
        count_ratio: predicted.droplet_count as f64 / gt.droplet_count as f64,
        smd_deviation_pct: (predicted.smd_um - gt.smd_um) / gt.smd_um * 100.0,
        gt,
        predicted,
    };
    let json = serde_json::to_string_pretty(&summary)?;
    let stats_path = out_dir.join("spray_stats.json");
    std::fs::write(&stats_path, json).map_err(|e| IoError::file(&stats_path, e))?;
    Ok(summary)
}

fn write_droplet_csv(path: &Path, records: &[(String, DropletRecord)]) -> Result<(), IoError> {
    let mut out =
        String::from("image_id,id,area_px,diameter_px,diameter_um,centroid_x,centroid_y,touches_border\n");
    for (id, d) in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            id,
            d.id,
            d.area_px,
            d.diameter_px,
            d.diameter_um,
            d.centroid.0,
            d.centroid.1,
            d.touches_border
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| IoError::file(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| IoError::file(path, e))
}

/// Match prediction annotations against ground truth and build the full
/// evaluation report.
pub fn eval_det(
    gt_path: &Path,
    pred_path: &Path,
    iou_threshold: f64,
    class_aware: bool,
) -> Result<EvalReport, IoError> {
    let gt = read_annotation_file(gt_path)?;
    let pred = read_annotation_file(pred_path)?;
    let mut by_image: BTreeMap<String, (Vec<Annotation>, Vec<Annotation>)> = BTreeMap::new();
    for a in gt {
        by_image.entry(a.image_id.clone()).or_default().0.push(a);
    }
    let mut missing_gt = Vec::new();
    for a in pred {
        match by_image.get_mut(&a.image_id) {
            Some(entry) => entry.1.push(a),
            None => missing_gt.push(a.image_id.clone()),
        }
    }
    if !missing_gt.is_empty() {
        missing_gt.sort_unstable();
        missing_gt.dedup();
        return Err(IoError::Eval(EvalError::ImageIdMismatch {
            missing_pred: Vec::new(),
            missing_gt,
        }));
    }
    let images: Vec<&(Vec<Annotation>, Vec<Annotation>)> = by_image.values().collect();
    let results = exec::map_indexed(images.len(), |i| {
        let (gt, pred) = images[i];
        match_annotations(gt, pred, iou_threshold, class_aware)
    });
    let mut matches = Vec::with_capacity(results.len());
    let mut confidences = Vec::with_capacity(results.len());
    for (r, (_, pred)) in results.into_iter().zip(images.iter()) {
        matches.push(r?);
        confidences.push(pred.iter().map(|a| a.confidence.unwrap_or(1.0)).collect());
    }
    Ok(EvalReport::from_matches(
        &matches,
        &confidences,
        iou_threshold,
        class_aware,
    )?)
}
