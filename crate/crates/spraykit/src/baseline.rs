//! Classical segmentation baseline: global median thresholding (dark on
//! light) and a Sobel gradient-magnitude reference.

use serde::{Deserialize, Serialize};

use crate::raster::{median, Grid, RasterImage, SegmentationMap};

/// Threshold at a fraction of the global image median (dark structures on a
/// light background).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdSpec {
    pub fraction_of_median: f64,
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        Self {
            fraction_of_median: 0.8,
        }
    }
}

/// Binary segmentation: foreground where pixel < fraction * median(image).
/// A constant image yields an empty foreground.
pub fn threshold_segment(image: &RasterImage, spec: &ThresholdSpec) -> SegmentationMap {
    let cut = spec.fraction_of_median as f32 * median(image);
    image.map(|v| if v < cut { 1.0 } else { 0.0 })
}

/// 3x3 Sobel gradient magnitude, normalized to [0, 1] by the maximum
/// attainable response on unit-range images (4 sqrt(2)).
pub fn gradient_magnitude(image: &RasterImage) -> Grid<f32> {
    let (w, h) = (image.width() as i64, image.height() as i64);
    let clampget = |x: i64, y: i64| {
        image.get(
            x.clamp(0, w - 1) as usize,
            y.clamp(0, h - 1) as usize,
        )
    };
    let norm = (4.0 * std::f64::consts::SQRT_2) as f32;
    let mut out = Grid::new(image.width(), image.height(), 0.0f32);
    for y in 0..h {
        for x in 0..w {
            let p = |dx: i64, dy: i64| clampget(x + dx, y + dy);
            let gx = -p(-1, -1) - 2.0 * p(-1, 0) - p(-1, 1) + p(1, -1) + 2.0 * p(1, 0) + p(1, 1);
            let gy = -p(-1, -1) - 2.0 * p(0, -1) - p(1, -1) + p(-1, 1) + 2.0 * p(0, 1) + p(1, 1);
            out.set(x as usize, y as usize, (gx * gx + gy * gy).sqrt() / norm);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{
        rasterize, sample_scene, OverlapPolicy, SceneKind, SceneSpec,
    };

    #[test]
    fn exact_masks_on_clean_background() {
        let spec = SceneSpec {
            width: 256,
            height: 256,
            kind: SceneKind::Ellipses,
            count_range: [8, 8],
            overlap: OverlapPolicy::Forbid { max_pair_iou: 0.0 },
            seed: 21,
            ..SceneSpec::default()
        };
        let bundle = rasterize(&sample_scene(&spec).unwrap()).unwrap();
        let seg = threshold_segment(&bundle.image, &ThresholdSpec::default());
        let agree = seg
            .data()
            .iter()
            .zip(bundle.semantic_mask.data())
            .filter(|(&s, &m)| (s >= 0.5) == (m > 0))
            .count();
        let frac = agree as f64 / seg.data().len() as f64;
        assert!(frac >= 0.99, "agreement {frac}");
    }

    #[test]
    fn all_above_threshold_is_empty() {
        let img = Grid::new(16, 16, 0.9f32);
        let seg = threshold_segment(&img, &ThresholdSpec::default());
        assert!(seg.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invariant_under_global_intensity_scaling() {
        let spec = SceneSpec {
            width: 128,
            height: 128,
            count_range: [5, 5],
            seed: 8,
            ..SceneSpec::default()
        };
        let bundle = rasterize(&sample_scene(&spec).unwrap()).unwrap();
        let seg1 = threshold_segment(&bundle.image, &ThresholdSpec::default());
        let scaled = bundle.image.map(|v| 0.5 * v);
        let seg2 = threshold_segment(&scaled, &ThresholdSpec::default());
        assert_eq!(seg1, seg2);
    }

    #[test]
    fn gradient_of_constant_image_is_zero() {
        let img = Grid::new(20, 20, 0.37f32);
        let g = gradient_magnitude(&img);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn step_edge_peaks_on_edge_column() {
        let mut img = Grid::new(32, 8, 1.0f32);
        for y in 0..8 {
            for x in 16..32 {
                img.set(x, y, 0.0);
            }
        }
        let g = gradient_magnitude(&img);
        let edge = g.get(16, 4).max(g.get(15, 4));
        for x in 0..32usize {
            if (x as i64 - 16).abs() > 2 {
                assert!(g.get(x, 4) < edge);
            }
        }
    }

    #[test]
    fn disk_rim_ring_response() {
        // top-decile response pixels lie within 2 px of the analytic circle
        let (cx, cy, r) = (32.0f64, 32.0, 12.0);
        let mut img = Grid::new(64, 64, 1.0f32);
        for y in 0..64 {
            for x in 0..64 {
                let d = ((x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2)).sqrt();
                if d <= r {
                    img.set(x, y, 0.0);
                }
            }
        }
        let g = gradient_magnitude(&img);
        let mut vals: Vec<f32> = g.data().to_vec();
        vals.sort_by(|a, b| b.total_cmp(a));
        let cutoff = vals[vals.len() / 10];
        for y in 0..64 {
            for x in 0..64 {
                if g.get(x, y) > cutoff && g.get(x, y) > 0.0 {
                    let d = ((x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2)).sqrt();
                    assert!((d - r).abs() <= 2.0, "strong response off-rim at ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn luminosity_gradient_spreads_measured_diameters() {
        // identical disks whose blurred contours sit on a luminosity ramp:
        // the thresholded diameter varies with position while the ground-truth
        // masks stay position-independent
        use crate::degrade::{apply_degradation, DegradeSpec};
        use crate::scene::{DiskShape, Scene, Shape};
        use crate::segpost::{binarize, connected_components};
        let spec = SceneSpec {
            width: 512,
            height: 128,
            kind: SceneKind::Droplets,
            count_range: [4, 4],
            scale_um_per_px: 1.0,
            ..SceneSpec::default()
        };
        let shapes: Vec<Shape> = (0..4)
            .map(|i| {
                Shape::Disk(DiskShape {
                    center_x: 64.0 + 128.0 * i as f64,
                    center_y: 64.0,
                    diameter_um: 30.0,
                    focal_offset_um: 0.0,
                })
            })
            .collect();
        let bundle = rasterize(&Scene { shapes, spec }).unwrap();
        let degraded = apply_degradation(
            &bundle,
            &DegradeSpec {
                blur_sigma: 2.0,
                luminosity_gradient: (0.3, 0.0),
                ..DegradeSpec::default()
            },
            0,
        );
        let seg = threshold_segment(&degraded.image, &ThresholdSpec::default());
        let recs = connected_components(&binarize(&seg, 0.5), 1.0);
        assert_eq!(recs.len(), 4);
        let diams: Vec<f64> = recs.iter().map(|r| r.diameter_px).collect();
        let spread = diams.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - diams.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread > 1.0, "expected > 1 px spread, got {spread}");

        let gt = degraded.semantic_mask.map(|v| v as f32);
        let gt_recs = connected_components(&binarize(&gt, 0.5), 1.0);
        let gt_diams: Vec<f64> = gt_recs.iter().map(|r| r.diameter_px).collect();
        let gt_spread = gt_diams.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - gt_diams.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(gt_spread <= 1.0, "ground truth spread {gt_spread}");
    }
}
