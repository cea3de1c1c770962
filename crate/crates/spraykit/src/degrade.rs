//! Seeded image-degradation filters: elastic deformation, blur, contrast
//! reduction, luminosity gradient and Gaussian noise, applied consistently to
//! the image and its ground truth.
//!
//! Pipeline order is fixed (elastic -> blur -> contrast -> gradient -> noise)
//! so a corpus is fully reproducible from its spec and seed.

use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::deteval::{Annotation, ObjectClass};
use crate::geometry::min_area_rect;
use crate::raster::{gaussian_blur, gaussian_kernel, sample_bilinear, Grid, RasterImage};
use crate::scene::RasterBundle;

/// Elastic-deformation parameters: per-pixel noise smoothed by a Gaussian of
/// `sigma` px and scaled to `alpha` px peak displacement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticSpec {
    pub alpha: f64,
    pub sigma: f64,
}

/// Degradation pipeline parameters. The default is the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DegradeSpec {
    /// additive Gaussian noise, intensity fraction
    pub gaussian_noise_sigma: f64,
    /// Gaussian blur, px
    pub blur_sigma: f64,
    /// contrast retained around the image mean, in (0, 1]
    pub contrast_scale: f64,
    /// (amplitude fraction, direction radians)
    pub luminosity_gradient: (f64, f64),
    pub elastic: Option<ElasticSpec>,
}

impl Default for DegradeSpec {
    fn default() -> Self {
        Self {
            gaussian_noise_sigma: 0.0,
            blur_sigma: 0.0,
            contrast_scale: 1.0,
            luminosity_gradient: (0.0, 0.0),
            elastic: None,
        }
    }
}

impl DegradeSpec {
    pub fn is_identity(&self) -> bool {
        self.gaussian_noise_sigma == 0.0
            && self.blur_sigma == 0.0
            && self.contrast_scale == 1.0
            && self.luminosity_gradient.0 == 0.0
            && self.elastic.is_none()
    }
}

/// Parametric defocus model: Gaussian PSF whose sigma grows linearly with the
/// focal offset, with a linear contrast loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DefocusModel {
    /// in-focus PSF width, px
    pub sigma0_px: f64,
    /// PSF growth, px per um of focal offset
    pub sigma_per_um: f64,
    /// contrast loss, 1 per um of focal offset
    pub contrast_per_um: f64,
}

impl Default for DefocusModel {
    fn default() -> Self {
        // sigma0 = 0 keeps droplets on the focal plane sharp
        Self {
            sigma0_px: 0.0,
            sigma_per_um: 0.02,
            contrast_per_um: 0.002,
        }
    }
}

/// Blur kernel and contrast attenuation for a structure at focal offset
/// `z_um`.
#[derive(Debug, Clone)]
pub struct DefocusPsf {
    pub sigma_px: f64,
    pub attenuation: f64,
    /// normalized 1-D Gaussian taps (the PSF is separable)
    pub kernel: Vec<f32>,
}

pub fn defocus_psf(model: &DefocusModel, z_um: f64) -> DefocusPsf {
    let sigma_px = model.sigma0_px + model.sigma_per_um * z_um.abs();
    let attenuation = (1.0 - model.contrast_per_um * z_um.abs()).max(0.0);
    DefocusPsf {
        sigma_px,
        attenuation,
        kernel: gaussian_kernel(sigma_px),
    }
}

/// Dense per-pixel displacement, px.
#[derive(Debug, Clone)]
pub struct DisplacementField {
    pub dx: Grid<f32>,
    pub dy: Grid<f32>,
}

impl DisplacementField {
    /// Seeded uniform noise in [-1, 1], Gaussian-smoothed by `sigma` and
    /// scaled by `alpha`.
    pub fn generate(width: usize, height: usize, spec: &ElasticSpec, rng: &mut ChaCha8Rng) -> Self {
        let mut dx = Grid::new(width, height, 0.0f32);
        let mut dy = Grid::new(width, height, 0.0f32);
        for v in dx.data_mut() {
            *v = rng.random_range(-1.0..=1.0);
        }
        for v in dy.data_mut() {
            *v = rng.random_range(-1.0..=1.0);
        }
        let mut dx = gaussian_blur(&dx, spec.sigma);
        let mut dy = gaussian_blur(&dy, spec.sigma);
        let a = spec.alpha as f32;
        dx.data_mut().iter_mut().for_each(|v| *v *= a);
        dy.data_mut().iter_mut().for_each(|v| *v *= a);
        Self { dx, dy }
    }

    /// Backward warp with bilinear interpolation (images).
    pub fn warp_bilinear(&self, src: &Grid<f32>) -> Grid<f32> {
        let mut out = Grid::new(src.width(), src.height(), 0.0f32);
        for y in 0..src.height() {
            for x in 0..src.width() {
                let sx = x as f64 + self.dx.get(x, y) as f64;
                let sy = y as f64 + self.dy.get(x, y) as f64;
                out.set(x, y, sample_bilinear(src, sx, sy));
            }
        }
        out
    }

    /// Backward warp with nearest-neighbor lookup (label maps). Samples
    /// falling outside the grid map to `fill`.
    pub fn warp_nearest<T: Copy>(&self, src: &Grid<T>, fill: T) -> Grid<T> {
        let mut out = Grid::new(src.width(), src.height(), fill);
        let (w, h) = (src.width() as i64, src.height() as i64);
        for y in 0..src.height() {
            for x in 0..src.width() {
                let sx = (x as f64 + self.dx.get(x, y) as f64).round() as i64;
                let sy = (y as f64 + self.dy.get(x, y) as f64).round() as i64;
                if sx >= 0 && sx < w && sy >= 0 && sy < h {
                    out.set(x, y, src.get(sx as usize, sy as usize));
                }
            }
        }
        out
    }
}

/// Contrast scaling about the image mean followed by a linear luminosity
/// ramp: pixel <- mean + scale*(pixel - mean) + amplitude*t, where t is the
/// pixel's projection on `direction` normalized to [-1/2, 1/2].
pub fn contrast_and_gradient(
    image: &RasterImage,
    contrast_scale: f64,
    gradient: (f64, f64),
) -> RasterImage {
    let mut out = image.clone();
    let (amplitude, direction) = gradient;
    if contrast_scale != 1.0 {
        let mean =
            (image.data().iter().map(|&v| v as f64).sum::<f64>() / image.data().len() as f64) as f32;
        let s = contrast_scale as f32;
        for v in out.data_mut() {
            *v = mean + s * (*v - mean);
        }
    }
    if amplitude != 0.0 {
        let (sin, cos) = direction.sin_cos();
        let project = |x: usize, y: usize| (x as f64 + 0.5) * cos + (y as f64 + 0.5) * sin;
        let corners = [
            project(0, 0),
            project(image.width() - 1, 0),
            project(0, image.height() - 1),
            project(image.width() - 1, image.height() - 1),
        ];
        let pmin = corners.iter().cloned().fold(f64::INFINITY, f64::min);
        let pmax = corners.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = (pmax - pmin).max(1e-12);
        for y in 0..image.height() {
            for x in 0..image.width() {
                let t = (project(x, y) - pmin) / span - 0.5;
                let v = out.get(x, y) + (amplitude * t) as f32;
                out.set(x, y, v);
            }
        }
    }
    out
}

/// Run the full degradation pipeline on a bundle. Elastic deformation warps
/// image and ground truth with the same field and the annotations are
/// recomputed from the warped instance map; photometric steps leave the
/// ground truth untouched. The identity spec returns the bundle bit-exactly.
pub fn apply_degradation(bundle: &RasterBundle, spec: &DegradeSpec, seed: u64) -> RasterBundle {
    if spec.is_identity() {
        return bundle.clone();
    }
    let mut out = bundle.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    if let Some(elastic) = &spec.elastic {
        let field =
            DisplacementField::generate(out.image.width(), out.image.height(), elastic, &mut rng);
        out.image = field.warp_bilinear(&out.image);
        out.instance_map = field.warp_nearest(&out.instance_map, 0);
        out.semantic_mask = out.instance_map.map(|id| u8::from(id > 0));
        out.annotations = recompute_annotations(&out);
    }

    if spec.blur_sigma > 0.0 {
        out.image = gaussian_blur(&out.image, spec.blur_sigma);
    }
    if spec.contrast_scale != 1.0 || spec.luminosity_gradient.0 != 0.0 {
        out.image = contrast_and_gradient(&out.image, spec.contrast_scale, spec.luminosity_gradient);
    }
    if spec.gaussian_noise_sigma > 0.0 {
        let normal = Normal::new(0.0f64, spec.gaussian_noise_sigma).expect("sigma > 0");
        for v in out.image.data_mut() {
            *v += normal.sample(&mut rng) as f32;
        }
    }
    for v in out.image.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    out
}

/// Tight boxes from warped instance pixels: min-area rectangle for oriented
/// classes, pixel-extent AABB otherwise. Instances that lost all pixels drop
/// out of the annotation list.
fn recompute_annotations(bundle: &RasterBundle) -> Vec<Annotation> {
    let map = &bundle.instance_map;
    let n = bundle.annotations.len();
    let mut pixels: Vec<Vec<[f64; 2]>> = vec![Vec::new(); n];
    for y in 0..map.height() {
        for x in 0..map.width() {
            let id = map.get(x, y) as usize;
            if id >= 1 && id <= n {
                pixels[id - 1].push([x as f64, y as f64]);
            }
        }
    }
    let mut out = Vec::new();
    for (i, old) in bundle.annotations.iter().enumerate() {
        let px = &pixels[i];
        if px.is_empty() {
            continue;
        }
        let bbox = match old.class {
            ObjectClass::Ellipse => {
                // pixel corners, so the rect covers full pixel footprints
                let mut corners: Vec<[f64; 2]> = Vec::with_capacity(px.len() * 4);
                for &[x, y] in px {
                    corners.push([x, y]);
                    corners.push([x + 1.0, y]);
                    corners.push([x, y + 1.0]);
                    corners.push([x + 1.0, y + 1.0]);
                }
                match min_area_rect(&mut corners) {
                    Some(r) => r,
                    None => pixel_extent_box(px),
                }
            }
            _ => pixel_extent_box(px),
        };
        out.push(Annotation {
            image_id: old.image_id.clone(),
            class: old.class,
            bbox,
            confidence: old.confidence,
        });
    }
    out
}

fn pixel_extent_box(px: &[[f64; 2]]) -> crate::geometry::OrientedBox {
    let xmin = px.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    let xmax = px.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let ymin = px.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    let ymax = px.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max) + 1.0;
    crate::geometry::AxisAlignedBox {
        x_min: xmin,
        y_min: ymin,
        x_max: xmax,
        y_max: ymax,
    }
    .to_oriented()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_image(w: usize, h: usize, v: f32) -> RasterImage {
        Grid::new(w, h, v)
    }

    #[test]
    fn defocus_psf_model() {
        let model = DefocusModel {
            sigma0_px: 0.5,
            sigma_per_um: 0.02,
            contrast_per_um: 0.002,
        };
        let p0 = defocus_psf(&model, 0.0);
        assert_eq!(p0.sigma_px, 0.5);
        assert_eq!(p0.attenuation, 1.0);
        let p200 = defocus_psf(&model, 200.0);
        assert!((p200.sigma_px - 4.5).abs() < 1e-12);
        assert!((p200.attenuation - 0.6).abs() < 1e-12);
        // symmetric and monotone in |z|
        assert_eq!(defocus_psf(&model, -200.0).sigma_px, p200.sigma_px);
        assert!(defocus_psf(&model, 50.0).sigma_px < defocus_psf(&model, 100.0).sigma_px);
    }

    #[test]
    fn contrast_identity() {
        let img = flat_image(8, 8, 0.7);
        assert_eq!(contrast_and_gradient(&img, 1.0, (0.0, 0.0)), img);
    }

    #[test]
    fn contrast_zero_collapses_to_mean() {
        let mut img = flat_image(4, 1, 0.0);
        img.set(0, 0, 1.0);
        let out = contrast_and_gradient(&img, 0.0, (0.0, 0.0));
        for &v in out.data() {
            assert!((v - 0.25).abs() < 1e-6);
        }
    }

    #[test]
    fn gradient_left_to_right() {
        let img = flat_image(32, 4, 0.5);
        let out = contrast_and_gradient(&img, 1.0, (0.4, 0.0));
        let left = out.get(0, 1);
        let right = out.get(31, 1);
        assert!((right - left - 0.4).abs() < 1e-5);
        assert!(left < right);
    }

    #[test]
    fn contrast_half_depth() {
        // background 1.0, one "shape" pixel at 0.0: relative depth halves
        let mut img = flat_image(100, 1, 1.0);
        img.set(0, 0, 0.0);
        let mean = 0.99f32;
        let out = contrast_and_gradient(&img, 0.5, (0.0, 0.0));
        let bg = out.get(50, 0);
        let shape = out.get(0, 0);
        assert!((bg - shape - 0.5).abs() < 1e-5);
        assert!((bg - (mean + 0.5 * (1.0 - mean))).abs() < 1e-5);
    }

    #[test]
    fn displacement_field_dimensions_and_finiteness() {
        let spec = ElasticSpec { alpha: 8.0, sigma: 4.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = DisplacementField::generate(40, 30, &spec, &mut rng);
        assert_eq!((f.dx.width(), f.dx.height()), (40, 30));
        assert_eq!((f.dy.width(), f.dy.height()), (40, 30));
        for &v in f.dx.data().iter().chain(f.dy.data()) {
            assert!(v.is_finite());
            assert!(v.abs() <= 8.0 + 1e-4);
        }
    }

    #[test]
    fn warp_with_zero_field_is_identity_on_labels() {
        let spec = ElasticSpec { alpha: 0.0, sigma: 2.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = DisplacementField::generate(12, 12, &spec, &mut rng);
        let mut src: Grid<u16> = Grid::new(12, 12, 0);
        src.set(5, 6, 7);
        assert_eq!(f.warp_nearest(&src, 0), src);
    }
}
