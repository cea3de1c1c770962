//! Scene sampling and rasterization: seeded random fields of overlapping
//! ellipses or calibration droplets, rendered to a grayscale image with
//! aligned ground truth (instance map + annotations).

use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{threshold_segment, ThresholdSpec};
use crate::degrade::{defocus_psf, DefocusModel, DegradeSpec};
use crate::deteval::{Annotation, ObjectClass};
use crate::geometry::{aabb_of_ellipse, iou_aabb, obb_of_ellipse, AxisAlignedBox, EllipseShape};
use crate::raster::{gaussian_blur, Grid, InstanceMap, RasterImage};

/// Supersampling grid per pixel for anti-aliased coverage.
const SUPERSAMPLE: usize = 4;
/// Placement attempts per shape under a forbid overlap policy.
const PLACEMENT_RETRIES: usize = 1000;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("placed only {achieved} of {requested} shapes within the retry budget; canvas too crowded")]
    Placement { achieved: usize, requested: usize },
    #[error("calibration pool is empty")]
    EmptyPool,
    #[error("scene kind is {found:?} but {expected:?} was required")]
    WrongKind { expected: SceneKind, found: SceneKind },
    #[error("failed to load background image {path}: {source}")]
    BackgroundIo {
        path: String,
        source: image::ImageError,
    },
    #[error("background image {path} is {got_w}x{got_h}, smaller than the {want_w}x{want_h} canvas")]
    BackgroundTooSmall {
        path: String,
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    Ellipses,
    Droplets,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum OverlapPolicy {
    Allow,
    Forbid { max_pair_iou: f64 },
}

/// Semi-axis ranges (px) and interior gray level for sampled ellipses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EllipseParams {
    pub semi_major_range: [f64; 2],
    pub semi_minor_range: [f64; 2],
    pub gray_level: f64,
}

impl Default for EllipseParams {
    fn default() -> Self {
        Self {
            semi_major_range: [4.0, 20.0],
            semi_minor_range: [2.0, 12.0],
            gray_level: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BackgroundSpec {
    Uniform {
        level: f64,
    },
    LinearGradient {
        level_lo: f64,
        level_hi: f64,
        direction: f64,
    },
    Imported {
        image_path: String,
        erase_existing_structures: bool,
    },
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        BackgroundSpec::Uniform { level: 1.0 }
    }
}

impl BackgroundSpec {
    pub fn render(&self, width: usize, height: usize) -> Result<RasterImage, SceneError> {
        match self {
            BackgroundSpec::Uniform { level } => {
                Ok(Grid::new(width, height, level.clamp(0.0, 1.0) as f32))
            }
            BackgroundSpec::LinearGradient {
                level_lo,
                level_hi,
                direction,
            } => {
                let mut img = Grid::new(width, height, 0.0f32);
                let (sin, cos) = direction.sin_cos();
                let project = |x: usize, y: usize| (x as f64 + 0.5) * cos + (y as f64 + 0.5) * sin;
                let corners = [
                    project(0, 0),
                    project(width - 1, 0),
                    project(0, height - 1),
                    project(width - 1, height - 1),
                ];
                let pmin = corners.iter().cloned().fold(f64::INFINITY, f64::min);
                let pmax = corners.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let span = (pmax - pmin).max(1e-12);
                for y in 0..height {
                    for x in 0..width {
                        let t = (project(x, y) - pmin) / span;
                        let v = level_lo + (level_hi - level_lo) * t;
                        img.set(x, y, v.clamp(0.0, 1.0) as f32);
                    }
                }
                Ok(img)
            }
            BackgroundSpec::Imported {
                image_path,
                erase_existing_structures,
            } => {
                let img = image::open(image_path)
                    .map_err(|source| SceneError::BackgroundIo {
                        path: image_path.clone(),
                        source,
                    })?
                    .into_luma8();
                let (gw, gh) = (img.width() as usize, img.height() as usize);
                if gw < width || gh < height {
                    return Err(SceneError::BackgroundTooSmall {
                        path: image_path.clone(),
                        got_w: gw,
                        got_h: gh,
                        want_w: width,
                        want_h: height,
                    });
                }
                let mut out = Grid::new(width, height, 0.0f32);
                for y in 0..height {
                    for x in 0..width {
                        out.set(x, y, img.get_pixel(x as u32, y as u32).0[0] as f32 / 255.0);
                    }
                }
                if *erase_existing_structures {
                    erase_dark_structures(&mut out);
                }
                Ok(out)
            }
        }
    }
}

/// Detect dark blobs with the baseline thresholder and fill them with the
/// background median. Leaves the bright "white circle" artifact on purpose.
fn erase_dark_structures(img: &mut RasterImage) {
    let mask = threshold_segment(img, &ThresholdSpec::default());
    let mut bg: Vec<f32> = img
        .data()
        .iter()
        .zip(mask.data())
        .filter(|(_, &m)| m < 0.5)
        .map(|(&v, _)| v)
        .collect();
    if bg.is_empty() {
        return;
    }
    let mid = bg.len() / 2;
    bg.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let fill = bg[mid];
    for (v, &m) in img.data_mut().iter_mut().zip(mask.data()) {
        if m >= 0.5 {
            *v = fill;
        }
    }
}

/// Pool of calibration droplets: diameters with per-image counts and the
/// focal offsets they were imaged at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationPool {
    pub diameters_um: Vec<f64>,
    /// sampling weight per diameter (elements per diameter per image)
    pub counts_per_image: Vec<u32>,
    pub focal_offsets_um: Vec<f64>,
    pub images_per_offset: u32,
}

impl Default for CalibrationPool {
    /// The reference calibration plate: 15 diameters (16 elements per image
    /// for d <= 25 um, 20 otherwise) at 15 focal offsets.
    fn default() -> Self {
        let diameters_um = vec![
            60.0, 40.0, 30.0, 25.0, 20.0, 18.0, 16.0, 14.0, 12.0, 10.0, 8.0, 6.0, 4.0, 2.0, 1.0,
        ];
        let counts_per_image = diameters_um
            .iter()
            .map(|&d| if d <= 25.0 { 16 } else { 20 })
            .collect();
        Self {
            diameters_um,
            counts_per_image,
            focal_offsets_um: vec![
                -200.0, -175.0, -150.0, -100.0, -75.0, -50.0, -25.0, 0.0, 25.0, 50.0, 75.0, 100.0,
                125.0, 150.0, 200.0,
            ],
            images_per_offset: 2,
        }
    }
}

impl CalibrationPool {
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.diameters_um.is_empty() || self.focal_offsets_um.is_empty() {
            return Err(SceneError::EmptyPool);
        }
        if self.diameters_um.len() != self.counts_per_image.len() {
            return Err(SceneError::InvalidSpec(
                "counts_per_image length must match diameters_um".into(),
            ));
        }
        if self.diameters_um.iter().any(|&d| d <= 0.0) {
            return Err(SceneError::InvalidSpec("pool diameters must be > 0".into()));
        }
        Ok(())
    }

    /// Draw a (diameter, focal offset) pair with diameter weighted by the
    /// per-image element counts and offset uniform.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let total: u32 = self.counts_per_image.iter().sum();
        let mut pick = rng.random_range(0..total);
        let mut di = 0;
        for (i, &c) in self.counts_per_image.iter().enumerate() {
            if pick < c {
                di = i;
                break;
            }
            pick -= c;
        }
        let zi = rng.random_range(0..self.focal_offsets_um.len());
        (self.diameters_um[di], self.focal_offsets_um[zi])
    }
}

/// Full description of one synthetic image; a deterministic function of this
/// spec (including its seed) produces the rendered bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub kind: SceneKind,
    pub count_range: [u32; 2],
    pub overlap: OverlapPolicy,
    pub ellipse: EllipseParams,
    pub background: BackgroundSpec,
    pub degradation: DegradeSpec,
    pub defocus: DefocusModel,
    pub seed: u64,
    /// resolution, um per px
    pub scale_um_per_px: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 416,
            height: 416,
            kind: SceneKind::Ellipses,
            count_range: [20, 150],
            overlap: OverlapPolicy::Allow,
            ellipse: EllipseParams::default(),
            background: BackgroundSpec::default(),
            degradation: DegradeSpec::default(),
            defocus: DefocusModel::default(),
            seed: 0,
            scale_um_per_px: 0.75,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.width == 0 || self.height == 0 {
            return Err(SceneError::InvalidSpec("canvas must be nonempty".into()));
        }
        if self.count_range[0] < 1 || self.count_range[0] > self.count_range[1] {
            return Err(SceneError::InvalidSpec(format!(
                "count_range must satisfy 1 <= min <= max (got {:?})",
                self.count_range
            )));
        }
        if self.scale_um_per_px <= 0.0 {
            return Err(SceneError::InvalidSpec("scale must be > 0".into()));
        }
        let [alo, ahi] = self.ellipse.semi_major_range;
        let [blo, bhi] = self.ellipse.semi_minor_range;
        if !(alo > 0.0 && ahi >= alo && blo > 0.0 && bhi >= blo) {
            return Err(SceneError::InvalidSpec("ellipse size ranges invalid".into()));
        }
        Ok(())
    }
}

/// Opaque calibration droplet: a disk of known physical diameter at a signed
/// distance from the focal plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskShape {
    pub center_x: f64,
    pub center_y: f64,
    pub diameter_um: f64,
    pub focal_offset_um: f64,
}

impl DiskShape {
    pub fn radius_px(&self, scale_um_per_px: f64) -> f64 {
        self.diameter_um / (2.0 * scale_um_per_px)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Ellipse(EllipseShape),
    Disk(DiskShape),
}

impl Shape {
    /// Sharp-footprint bounding box in px.
    pub fn aabb(&self, scale_um_per_px: f64) -> AxisAlignedBox {
        match self {
            Shape::Ellipse(e) => aabb_of_ellipse(e),
            Shape::Disk(d) => {
                let r = d.radius_px(scale_um_per_px);
                AxisAlignedBox {
                    x_min: d.center_x - r,
                    y_min: d.center_y - r,
                    x_max: d.center_x + r,
                    y_max: d.center_y + r,
                }
            }
        }
    }

    fn as_ellipse(&self, scale_um_per_px: f64) -> EllipseShape {
        match self {
            Shape::Ellipse(e) => *e,
            Shape::Disk(d) => {
                let r = d.radius_px(scale_um_per_px);
                EllipseShape {
                    center_x: d.center_x,
                    center_y: d.center_y,
                    semi_major: r,
                    semi_minor: r,
                    angle: 0.0,
                    gray_level: 0.0,
                }
            }
        }
    }
}

/// Sampled scene: shapes carry implicit instance IDs 1..=N by position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub shapes: Vec<Shape>,
    pub spec: SceneSpec,
}

/// Rendered scene plus aligned ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterBundle {
    pub image: RasterImage,
    pub semantic_mask: Grid<u8>,
    pub instance_map: InstanceMap,
    pub annotations: Vec<Annotation>,
}

fn place_shapes(
    spec: &SceneSpec,
    rng: &mut ChaCha8Rng,
    mut make: impl FnMut(&mut ChaCha8Rng) -> Shape,
) -> Result<Vec<Shape>, SceneError> {
    fn inflate(b: &AxisAlignedBox, m: f64) -> AxisAlignedBox {
        AxisAlignedBox {
            x_min: b.x_min - m,
            y_min: b.y_min - m,
            x_max: b.x_max + m,
            y_max: b.y_max + m,
        }
    }
    let [lo, hi] = spec.count_range;
    let n = rng.random_range(lo..=hi) as usize;
    let mut shapes: Vec<Shape> = Vec::with_capacity(n);
    let mut boxes: Vec<AxisAlignedBox> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut placed = false;
        for _ in 0..PLACEMENT_RETRIES {
            let cand = make(rng);
            let bbox = cand.aabb(spec.scale_um_per_px);
            let ok = match spec.overlap {
                OverlapPolicy::Allow => true,
                OverlapPolicy::Forbid { max_pair_iou } => {
                    // strict disjointness keeps a guard gap so that sharp
                    // footprints can never become 8-connected across shapes
                    let bbox = if max_pair_iou == 0.0 {
                        inflate(&bbox, 1.5)
                    } else {
                        bbox
                    };
                    boxes.iter().all(|b| {
                        let b = if max_pair_iou == 0.0 {
                            inflate(b, 1.5)
                        } else {
                            *b
                        };
                        iou_aabb(&b, &bbox) <= max_pair_iou
                    })
                }
            };
            if ok {
                shapes.push(cand);
                boxes.push(bbox);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(SceneError::Placement {
                achieved: shapes.len(),
                requested: n,
            });
        }
    }
    Ok(shapes)
}

/// Sample a random ellipse field. Deterministic in (spec, spec.seed).
pub fn sample_scene(spec: &SceneSpec) -> Result<Scene, SceneError> {
    spec.validate()?;
    if spec.kind != SceneKind::Ellipses {
        return Err(SceneError::WrongKind {
            expected: SceneKind::Ellipses,
            found: spec.kind,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let p = spec.ellipse;
    let (w, h) = (spec.width as f64, spec.height as f64);
    let shapes = place_shapes(spec, &mut rng, |rng| {
        let a = rng.random_range(p.semi_major_range[0]..=p.semi_major_range[1]);
        let b = rng
            .random_range(p.semi_minor_range[0]..=p.semi_minor_range[1])
            .min(a);
        let cx = rng.random_range(0.0..w);
        let cy = rng.random_range(0.0..h);
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        Shape::Ellipse(
            EllipseShape::new(cx, cy, a, b, theta, p.gray_level).expect("sampled axes valid"),
        )
    })?;
    Ok(Scene {
        shapes,
        spec: spec.clone(),
    })
}

/// Sample a calibration-droplet field: (diameter, focal offset) pairs drawn
/// from the pool distribution, positions uniform over the canvas.
pub fn sample_droplet_scene(spec: &SceneSpec, pool: &CalibrationPool) -> Result<Scene, SceneError> {
    spec.validate()?;
    pool.validate()?;
    if spec.kind != SceneKind::Droplets {
        return Err(SceneError::WrongKind {
            expected: SceneKind::Droplets,
            found: spec.kind,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = (spec.width as f64, spec.height as f64);
    let shapes = place_shapes(spec, &mut rng, |rng| {
        let (diameter_um, focal_offset_um) = pool.sample(rng);
        Shape::Disk(DiskShape {
            center_x: rng.random_range(0.0..w),
            center_y: rng.random_range(0.0..h),
            diameter_um,
            focal_offset_um,
        })
    })?;
    Ok(Scene {
        shapes,
        spec: spec.clone(),
    })
}

/// Dispatch on the spec's scene kind; droplet scenes need a pool.
pub fn sample(spec: &SceneSpec, pool: Option<&CalibrationPool>) -> Result<Scene, SceneError> {
    match spec.kind {
        SceneKind::Ellipses => sample_scene(spec),
        SceneKind::Droplets => {
            let pool = pool.ok_or(SceneError::EmptyPool)?;
            sample_droplet_scene(spec, pool)
        }
    }
}

struct ShapeLayer {
    /// subgrid origin in canvas coordinates (may be negative)
    x0: i64,
    y0: i64,
    /// sharp anti-aliased coverage in [0, 1]
    coverage: Grid<f32>,
    /// rendered intensity (blurred, attenuated), compositing via min
    layer: Grid<f32>,
}

fn render_shape(shape: &Shape, spec: &SceneSpec) -> ShapeLayer {
    let ellipse = shape.as_ellipse(spec.scale_um_per_px);
    let (sigma, attenuation) = match shape {
        Shape::Disk(d) if d.focal_offset_um != 0.0 || spec.defocus.sigma0_px > 0.0 => {
            let psf = defocus_psf(&spec.defocus, d.focal_offset_um);
            (psf.sigma_px, psf.attenuation)
        }
        _ => (0.0, 1.0),
    };
    let pad = (3.0 * sigma).ceil() as i64 + 1;
    let bbox = aabb_of_ellipse(&ellipse);
    let x0 = bbox.x_min.floor() as i64 - pad;
    let y0 = bbox.y_min.floor() as i64 - pad;
    let x1 = bbox.x_max.ceil() as i64 + pad;
    let y1 = bbox.y_max.ceil() as i64 + pad;
    let (sw, sh) = ((x1 - x0) as usize, (y1 - y0) as usize);
    let mut coverage = Grid::new(sw, sh, 0.0f32);
    let step = 1.0 / SUPERSAMPLE as f64;
    for sy in 0..sh {
        for sx in 0..sw {
            let px = (x0 + sx as i64) as f64;
            let py = (y0 + sy as i64) as f64;
            let mut hits = 0u32;
            for iy in 0..SUPERSAMPLE {
                for ix in 0..SUPERSAMPLE {
                    let x = px + (ix as f64 + 0.5) * step;
                    let y = py + (iy as f64 + 0.5) * step;
                    if ellipse.contains(x, y) {
                        hits += 1;
                    }
                }
            }
            coverage.set(sx, sy, hits as f32 / (SUPERSAMPLE * SUPERSAMPLE) as f32);
        }
    }
    let blurred = if sigma > 0.0 {
        gaussian_blur(&coverage, sigma)
    } else {
        coverage.clone()
    };
    let depth = (attenuation * (1.0 - ellipse.gray_level)) as f32;
    let layer = blurred.map(|c| 1.0 - depth * c);
    ShapeLayer {
        x0,
        y0,
        coverage,
        layer,
    }
}

/// Rasterize a scene: shapes are composited darkest-wins onto the background
/// with 4x4 supersampled anti-aliasing; droplets get their defocus PSF before
/// compositing. The instance map assigns each foreground pixel (>= 50% sharp
/// coverage) to the shape with the greatest coverage, ties to the lower ID.
/// Ground-truth boxes describe the sharp footprint, not the blurred one.
pub fn rasterize(scene: &Scene) -> Result<RasterBundle, SceneError> {
    let spec = &scene.spec;
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut image = spec.background.render(w, h)?;
    let mut best_cov: Grid<f32> = Grid::new(w, h, 0.0);
    let mut instance: InstanceMap = Grid::new(w, h, 0);

    for (i, shape) in scene.shapes.iter().enumerate() {
        let id = (i + 1) as u16;
        let sl = render_shape(shape, spec);
        for sy in 0..sl.layer.height() {
            let y = sl.y0 + sy as i64;
            if y < 0 || y >= h as i64 {
                continue;
            }
            for sx in 0..sl.layer.width() {
                let x = sl.x0 + sx as i64;
                if x < 0 || x >= w as i64 {
                    continue;
                }
                let (xu, yu) = (x as usize, y as usize);
                let v = sl.layer.get(sx, sy);
                if v < image.get(xu, yu) {
                    image.set(xu, yu, v);
                }
                let c = sl.coverage.get(sx, sy);
                if c > best_cov.get(xu, yu) {
                    best_cov.set(xu, yu, c);
                    instance.set(xu, yu, id);
                }
            }
        }
    }
    // foreground requires majority coverage
    for (inst, &cov) in instance.data_mut().iter_mut().zip(best_cov.data()) {
        if cov < 0.5 {
            *inst = 0;
        }
    }
    let semantic_mask = instance.map(|id| u8::from(id > 0));

    let canvas = AxisAlignedBox {
        x_min: 0.0,
        y_min: 0.0,
        x_max: w as f64,
        y_max: h as f64,
    };
    let mut annotations = Vec::new();
    for shape in &scene.shapes {
        let bbox = shape.aabb(spec.scale_um_per_px);
        if bbox.intersection_area(&canvas) <= 0.0 {
            continue;
        }
        let ann = match shape {
            Shape::Ellipse(e) => Annotation {
                image_id: String::new(),
                class: ObjectClass::Ellipse,
                bbox: obb_of_ellipse(e),
                confidence: None,
            },
            Shape::Disk(_) => Annotation {
                image_id: String::new(),
                class: ObjectClass::Droplet,
                bbox: bbox.to_oriented(),
                confidence: None,
            },
        };
        annotations.push(ann);
    }

    Ok(RasterBundle {
        image,
        semantic_mask,
        instance_map: instance,
        annotations,
    })
}
