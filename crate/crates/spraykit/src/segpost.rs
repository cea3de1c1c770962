//! Segmentation post-processing: binarization, connected components, tile
//! split/stitch, and spray statistics (SMD, volume PDF, diameter histograms).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::equivalent_diameter;
use crate::raster::{Grid, RasterImage, SegmentationMap};

#[derive(Debug, Error)]
pub enum SegError {
    #[error("diameter list is empty")]
    EmptyDiameters,
    #[error("diameters must be > 0 (got {0})")]
    NonPositiveDiameter(f64),
    #[error("invalid tiling: overlap margin {margin} must be < tile_size/2 = {half}")]
    InvalidTiling { margin: usize, half: usize },
    #[error("segmenter returned a {got_w}x{got_h} map for a {want_w}x{want_h} tile")]
    SegmenterShape {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("internal stitch gap at pixel ({x}, {y})")]
    StitchGap { x: usize, y: usize },
}

/// One segmented droplet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropletRecord {
    /// 1-based label in scan order
    pub id: u32,
    pub area_px: f64,
    pub diameter_px: f64,
    pub diameter_um: f64,
    pub centroid: (f64, f64),
    pub touches_border: bool,
}

/// Tile size and overlap margin for split/stitch processing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TilingSpec {
    pub tile_size: usize,
    pub overlap_margin: usize,
}

impl Default for TilingSpec {
    fn default() -> Self {
        Self {
            tile_size: 256,
            overlap_margin: 32,
        }
    }
}

impl TilingSpec {
    pub fn validate(&self) -> Result<(), SegError> {
        if self.overlap_margin >= self.tile_size.div_ceil(2) {
            return Err(SegError::InvalidTiling {
                margin: self.overlap_margin,
                half: self.tile_size / 2,
            });
        }
        Ok(())
    }
}

/// Foreground where value >= threshold.
pub fn binarize(map: &SegmentationMap, threshold: f32) -> Grid<u8> {
    map.map(|v| u8::from(v >= threshold))
}

/// 8-connected component labeling with per-component area, centroid,
/// equivalent diameter and border flag. `scale_um_per_px` converts the
/// equivalent diameter to physical units.
pub fn connected_components(binary: &Grid<u8>, scale_um_per_px: f64) -> Vec<DropletRecord> {
    let (w, h) = (binary.width(), binary.height());
    let mut labels: Grid<u32> = Grid::new(w, h, 0);
    let mut records = Vec::new();
    let mut stack: Vec<(usize, usize)> = Vec::new();
    let mut next = 0u32;
    for y0 in 0..h {
        for x0 in 0..w {
            if binary.get(x0, y0) == 0 || labels.get(x0, y0) != 0 {
                continue;
            }
            next += 1;
            let mut area = 0u64;
            let mut sx = 0.0f64;
            let mut sy = 0.0f64;
            let mut touches = false;
            stack.push((x0, y0));
            labels.set(x0, y0, next);
            while let Some((x, y)) = stack.pop() {
                area += 1;
                sx += x as f64 + 0.5;
                sy += y as f64 + 0.5;
                if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                    touches = true;
                }
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let nx = x as i64 + dx;
                        let ny = y as i64 + dy;
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        if binary.get(nx, ny) != 0 && labels.get(nx, ny) == 0 {
                            labels.set(nx, ny, next);
                            stack.push((nx, ny));
                        }
                    }
                }
            }
            let area = area as f64;
            let diameter_px = equivalent_diameter(area).expect("area >= 1");
            records.push(DropletRecord {
                id: next,
                area_px: area,
                diameter_px,
                diameter_um: diameter_px * scale_um_per_px,
                centroid: (sx / area, sy / area),
                touches_border: touches,
            });
        }
    }
    records
}

/// Run a black-box segmenter tile by tile and stitch the results.
///
/// Tiles carry `overlap_margin` extra context on every interior edge; only
/// each tile's center region is written to the output, so every output pixel
/// is produced exactly once and tile-boundary artifacts in the segmenter's
/// output are cropped away.
pub fn split_stitch_segment<F>(
    image: &RasterImage,
    segmenter: F,
    tiling: &TilingSpec,
) -> Result<SegmentationMap, SegError>
where
    F: Fn(&RasterImage) -> SegmentationMap,
{
    tiling.validate()?;
    let (w, h) = (image.width(), image.height());
    if w <= tiling.tile_size && h <= tiling.tile_size {
        let out = segmenter(image);
        check_shape(&out, w, h)?;
        return Ok(out);
    }
    let stride = tiling.tile_size - 2 * tiling.overlap_margin;
    let m = tiling.overlap_margin;
    let mut out: SegmentationMap = Grid::new(w, h, f32::NAN);
    let mut y0 = 0usize;
    while y0 < h {
        let cy1 = (y0 + stride).min(h);
        let ty0 = y0.saturating_sub(m);
        let ty1 = (cy1 + m).min(h);
        let mut x0 = 0usize;
        while x0 < w {
            let cx1 = (x0 + stride).min(w);
            let tx0 = x0.saturating_sub(m);
            let tx1 = (cx1 + m).min(w);
            let tile = image.crop(tx0, ty0, tx1, ty1);
            let seg = segmenter(&tile);
            check_shape(&seg, tx1 - tx0, ty1 - ty0)?;
            let core = seg.crop(x0 - tx0, y0 - ty0, cx1 - tx0, cy1 - ty0);
            out.paste(&core, x0, y0);
            x0 = cx1;
        }
        y0 = cy1;
    }
    for y in 0..h {
        for x in 0..w {
            if out.get(x, y).is_nan() {
                return Err(SegError::StitchGap { x, y });
            }
        }
    }
    Ok(out)
}

fn check_shape(map: &SegmentationMap, w: usize, h: usize) -> Result<(), SegError> {
    if map.width() != w || map.height() != h {
        return Err(SegError::SegmenterShape {
            got_w: map.width(),
            got_h: map.height(),
            want_w: w,
            want_h: h,
        });
    }
    Ok(())
}

/// Sauter Mean Diameter, D32 = sum(d^3) / sum(d^2).
pub fn smd(diameters: &[f64]) -> Result<f64, SegError> {
    if diameters.is_empty() {
        return Err(SegError::EmptyDiameters);
    }
    if let Some(&bad) = diameters.iter().find(|&&d| d <= 0.0) {
        return Err(SegError::NonPositiveDiameter(bad));
    }
    let d3: f64 = diameters.iter().map(|d| d.powi(3)).sum();
    let d2: f64 = diameters.iter().map(|d| d.powi(2)).sum();
    Ok(d3 / d2)
}

/// Count histogram with fixed-width half-open bins [lo, lo+width).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Droplet-volume-weighted diameter density; integrates to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumePdf {
    pub bin_edges: Vec<f64>,
    pub density: Vec<f64>,
}

fn bin_layout(diameters: &[f64], bin_width: f64) -> (f64, usize) {
    let min = diameters.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = diameters.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = (min / bin_width).floor() * bin_width;
    let n = (((max - lo) / bin_width).floor() as usize) + 1;
    (lo, n)
}

/// Diameter histogram weighted by d^3, normalized so that
/// sum(density * bin_width) = 1.
pub fn volume_pdf(diameters: &[f64], bin_width: f64) -> Result<VolumePdf, SegError> {
    if diameters.is_empty() {
        return Err(SegError::EmptyDiameters);
    }
    let (lo, n) = bin_layout(diameters, bin_width);
    let mut volume = vec![0.0f64; n];
    for &d in diameters {
        let i = (((d - lo) / bin_width).floor() as usize).min(n - 1);
        volume[i] += d.powi(3);
    }
    let total: f64 = volume.iter().sum();
    let density: Vec<f64> = volume.iter().map(|v| v / (total * bin_width)).collect();
    let bin_edges = (0..=n).map(|i| lo + i as f64 * bin_width).collect();
    Ok(VolumePdf { bin_edges, density })
}

/// Count histogram over equivalent diameters (um); border-touching records
/// are excluded when `exclude_border` is set.
pub fn diameter_histogram(
    records: &[DropletRecord],
    bin_width: f64,
    exclude_border: bool,
) -> Histogram {
    let diameters: Vec<f64> = records
        .iter()
        .filter(|r| !(exclude_border && r.touches_border))
        .map(|r| r.diameter_um)
        .collect();
    if diameters.is_empty() {
        return Histogram {
            bin_edges: vec![0.0, bin_width],
            counts: vec![0],
        };
    }
    let (lo, n) = bin_layout(&diameters, bin_width);
    let mut counts = vec![0u64; n];
    for &d in &diameters {
        let i = (((d - lo) / bin_width).floor() as usize).min(n - 1);
        counts[i] += 1;
    }
    Histogram {
        bin_edges: (0..=n).map(|i| lo + i as f64 * bin_width).collect(),
        counts,
    }
}

/// Aggregate spray statistics for a set of droplet records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SprayStats {
    pub droplet_count: usize,
    pub smd_um: f64,
    pub histogram: Histogram,
    pub volume_pdf: VolumePdf,
}

impl SprayStats {
    /// Default 1 um histogram bins; border-touching components excluded.
    pub fn compute(records: &[DropletRecord], bin_width_um: f64) -> Result<Self, SegError> {
        let diameters: Vec<f64> = records
            .iter()
            .filter(|r| !r.touches_border)
            .map(|r| r.diameter_um)
            .collect();
        Ok(Self {
            droplet_count: diameters.len(),
            smd_um: smd(&diameters)?,
            histogram: diameter_histogram(records, bin_width_um, true),
            volume_pdf: volume_pdf(&diameters, bin_width_um)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg_from(rows: &[&[u8]]) -> SegmentationMap {
        let h = rows.len();
        let w = rows[0].len();
        let mut g = Grid::new(w, h, 0.0f32);
        for (y, row) in rows.iter().enumerate() {
            for (x, &v) in row.iter().enumerate() {
                g.set(x, y, v as f32);
            }
        }
        g
    }

    #[test]
    fn binarize_thresholds() {
        let m = Grid::new(4, 4, 0.6f32);
        assert!(binarize(&m, 0.5).data().iter().all(|&v| v == 1));
        let z = Grid::new(4, 4, 0.0f32);
        assert!(binarize(&z, 0.5).data().iter().all(|&v| v == 0));
    }

    #[test]
    fn binarize_threshold_invariant_on_binary_maps() {
        let m = seg_from(&[&[0, 1, 0], &[1, 1, 0]]);
        let base = binarize(&m, 0.5);
        for thr in [0.05f32, 0.3, 0.7, 1.0] {
            assert_eq!(binarize(&m, thr), base);
        }
    }

    #[test]
    fn diagonal_pixels_are_one_component() {
        let m = seg_from(&[&[1, 0, 0], &[0, 1, 0], &[0, 0, 0]]);
        let recs = connected_components(&binarize(&m, 0.5), 1.0);
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].area_px, 2.0);
    }

    #[test]
    fn empty_grid_no_components() {
        let g: Grid<u8> = Grid::new(10, 10, 0);
        assert!(connected_components(&g, 1.0).is_empty());
    }

    #[test]
    fn disk_component_diameter_near_analytic() {
        // oracle: the generator's analytic diameter (20 px)
        let mut g: Grid<u8> = Grid::new(64, 64, 0);
        for y in 0..64 {
            for x in 0..64 {
                let d = ((x as f64 + 0.5 - 32.0).powi(2) + (y as f64 + 0.5 - 32.0).powi(2)).sqrt();
                if d <= 10.0 {
                    g.set(x, y, 1);
                }
            }
        }
        let recs = connected_components(&g, 0.75);
        assert_eq!(recs.len(), 1);
        assert!((recs[0].diameter_px - 20.0).abs() <= 1.0);
        assert!((recs[0].diameter_um - recs[0].diameter_px * 0.75).abs() < 1e-9);
        assert!(!recs[0].touches_border);
        assert!((recs[0].centroid.0 - 32.0).abs() < 0.1);
    }

    #[test]
    fn border_flag_set() {
        let mut g: Grid<u8> = Grid::new(8, 8, 0);
        g.set(0, 3, 1);
        let recs = connected_components(&g, 1.0);
        assert!(recs[0].touches_border);
    }

    #[test]
    fn smd_constant_set() {
        assert_eq!(smd(&[10.0, 10.0, 10.0]).unwrap(), 10.0);
    }

    #[test]
    fn smd_arithmetic() {
        assert!((smd(&[1.0, 2.0]).unwrap() - 1.8).abs() < 1e-12);
    }

    #[test]
    fn smd_reference_diameter_set() {
        // brute-force sum over the 15 calibration diameters, equal counts
        let d = [
            60.0, 40.0, 30.0, 25.0, 20.0, 18.0, 16.0, 14.0, 12.0, 10.0, 8.0, 6.0, 4.0, 2.0, 1.0,
        ];
        let mut num = 0.0;
        let mut den = 0.0;
        for &x in &d {
            num += x * x * x;
            den += x * x;
        }
        let expected = num / den;
        assert!((smd(&d).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 41.96).abs() < 0.01);
    }

    #[test]
    fn smd_empty_errors() {
        assert!(matches!(smd(&[]), Err(SegError::EmptyDiameters)));
    }

    #[test]
    fn volume_pdf_single_diameter() {
        let pdf = volume_pdf(&[12.0], 1.0).unwrap();
        let nonzero: Vec<&f64> = pdf.density.iter().filter(|&&d| d > 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert!((nonzero[0] - &1.0).abs() < 1e-12);
    }

    #[test]
    fn volume_pdf_cube_law() {
        let pdf = volume_pdf(&[10.0, 20.0], 1.0).unwrap();
        let lo = pdf.density[((10.0 - pdf.bin_edges[0]) / 1.0) as usize];
        let hi = pdf.density[((20.0 - pdf.bin_edges[0]) / 1.0) as usize];
        assert!((hi / lo - 8.0).abs() < 1e-9);
    }

    #[test]
    fn histogram_bin_edge_convention() {
        // records straddling a bin edge go to the lower-inclusive bin
        let rec = |d: f64| DropletRecord {
            id: 1,
            area_px: 1.0,
            diameter_px: d,
            diameter_um: d,
            centroid: (0.0, 0.0),
            touches_border: false,
        };
        let h = diameter_histogram(&[rec(10.0), rec(10.5), rec(11.0)], 1.0, true);
        assert_eq!(h.bin_edges[0], 10.0);
        assert_eq!(h.counts, vec![2, 1]);
    }

    #[test]
    fn histogram_excludes_border_records() {
        let mut rec = DropletRecord {
            id: 1,
            area_px: 1.0,
            diameter_px: 5.0,
            diameter_um: 5.0,
            centroid: (0.0, 0.0),
            touches_border: true,
        };
        let h = diameter_histogram(std::slice::from_ref(&rec), 1.0, true);
        assert_eq!(h.counts.iter().sum::<u64>(), 0);
        rec.touches_border = false;
        let h = diameter_histogram(&[rec], 1.0, true);
        assert_eq!(h.counts.iter().sum::<u64>(), 1);
    }

    #[test]
    fn stitch_identity_segmenter_is_transparent() {
        let mut img: RasterImage = Grid::new(600, 500, 1.0f32);
        for y in 100..140 {
            for x in 250..290 {
                img.set(x, y, 0.0);
            }
        }
        let tiling = TilingSpec::default();
        let out = split_stitch_segment(&img, |t| t.map(|v| if v < 0.5 { 1.0 } else { 0.0 }), &tiling)
            .unwrap();
        let whole = img.map(|v| if v < 0.5 { 1.0f32 } else { 0.0 });
        assert_eq!(out, whole);
    }

    /// Segmenter that thresholds but zeroes the outermost 2 px of its tile,
    /// mimicking a model that degrades near tile boundaries.
    fn border_eroding_segmenter(tile: &RasterImage) -> SegmentationMap {
        let mut seg = tile.map(|v| if v < 0.5 { 1.0f32 } else { 0.0 });
        let (w, h) = (seg.width(), seg.height());
        for y in 0..h {
            for x in 0..w {
                if x < 2 || y < 2 || x >= w - 2 || y >= h - 2 {
                    seg.set(x, y, 0.0);
                }
            }
        }
        seg
    }

    #[test]
    fn margin_zero_reproduces_boundary_artifact() {
        // disk straddling x = 256 splits in two without overlap and stays
        // whole with a 32 px margin
        let mut img: RasterImage = Grid::new(512, 300, 1.0f32);
        for y in 0..300 {
            for x in 0..512 {
                let d = ((x as f64 + 0.5 - 256.0).powi(2) + (y as f64 + 0.5 - 150.0).powi(2)).sqrt();
                if d <= 15.0 {
                    img.set(x, y, 0.0);
                }
            }
        }
        let no_overlap = TilingSpec {
            tile_size: 256,
            overlap_margin: 0,
        };
        let out = split_stitch_segment(&img, border_eroding_segmenter, &no_overlap).unwrap();
        let recs = connected_components(&binarize(&out, 0.5), 1.0);
        assert_eq!(recs.len(), 2, "expected the split artifact");

        let with_overlap = TilingSpec {
            tile_size: 256,
            overlap_margin: 32,
        };
        let out = split_stitch_segment(&img, border_eroding_segmenter, &with_overlap).unwrap();
        let recs = connected_components(&binarize(&out, 0.5), 1.0);
        assert_eq!(recs.len(), 1, "margin must remove the artifact");
    }

    #[test]
    fn tiling_validation() {
        assert!(TilingSpec {
            tile_size: 256,
            overlap_margin: 128
        }
        .validate()
        .is_err());
        assert!(TilingSpec::default().validate().is_ok());
    }

    #[test]
    fn small_image_single_pass() {
        let img: RasterImage = Grid::new(100, 80, 1.0f32);
        let out = split_stitch_segment(&img, |t| t.map(|_| 0.25f32), &TilingSpec::default()).unwrap();
        assert_eq!((out.width(), out.height()), (100, 80));
        assert!(out.data().iter().all(|&v| v == 0.25));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn volume_pdf_integrates_to_one(
                diameters in proptest::collection::vec(0.5..200.0f64, 1..200),
                bin_width in 0.25..5.0f64,
            ) {
                let pdf = volume_pdf(&diameters, bin_width).unwrap();
                let integral: f64 = pdf.density.iter().map(|d| d * bin_width).sum();
                prop_assert!((integral - 1.0).abs() < 1e-9);
            }

            #[test]
            fn smd_bounds_and_permutation(
                mut diameters in proptest::collection::vec(0.5..200.0f64, 1..100),
            ) {
                let s = smd(&diameters).unwrap();
                let min = diameters.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = diameters.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(s >= min - 1e-9 && s <= max + 1e-9);
                diameters.reverse();
                let s2 = smd(&diameters).unwrap();
                prop_assert!((s - s2).abs() < 1e-9);
            }
        }
    }
}
