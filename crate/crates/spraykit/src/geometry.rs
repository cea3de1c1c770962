//! Geometry kernels for ellipses and (rotated) bounding boxes.
//!
//! All angles are in radians with a period of pi: boxes and ellipses are
//! unoriented, so `angle` and `angle + pi` describe the same object.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Clipping tolerance for on-edge points in polygon intersection.
const CLIP_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("ellipse semi-axes must satisfy a >= b > 0 (got a={a}, b={b})")]
    InvalidSemiAxes { a: f64, b: f64 },
    #[error("box extents must be positive (got w={w}, h={h})")]
    InvalidExtents { w: f64, h: f64 },
    #[error("box corners must satisfy min < max")]
    InvalidCorners,
    #[error("coordinates must be finite")]
    NonFinite,
    #[error("empty component: area must be > 0")]
    EmptyArea,
}

/// Normalize an angle to [0, pi).
pub fn normalize_angle(angle: f64) -> f64 {
    let a = angle.rem_euclid(std::f64::consts::PI);
    // rem_euclid can return exactly pi through rounding
    if a >= std::f64::consts::PI {
        0.0
    } else {
        a
    }
}

/// Opaque elliptical structure: the generative ground truth for scenes.
///
/// `gray_level` is the intensity of the shaded interior (0 = fully opaque).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseShape {
    pub center_x: f64,
    pub center_y: f64,
    pub semi_major: f64,
    pub semi_minor: f64,
    pub angle: f64,
    pub gray_level: f64,
}

impl EllipseShape {
    pub fn new(
        center_x: f64,
        center_y: f64,
        semi_major: f64,
        semi_minor: f64,
        angle: f64,
        gray_level: f64,
    ) -> Result<Self, GeometryError> {
        if !(center_x.is_finite() && center_y.is_finite() && angle.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if !(semi_major >= semi_minor && semi_minor > 0.0) {
            return Err(GeometryError::InvalidSemiAxes {
                a: semi_major,
                b: semi_minor,
            });
        }
        // circles get a canonical orientation for equality tests
        let angle = if semi_major == semi_minor {
            0.0
        } else {
            normalize_angle(angle)
        };
        Ok(Self {
            center_x,
            center_y,
            semi_major,
            semi_minor,
            angle,
            gray_level: gray_level.clamp(0.0, 1.0),
        })
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.semi_major * self.semi_minor
    }

    /// True if the point lies inside or on the ellipse boundary.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (sin, cos) = self.angle.sin_cos();
        let dx = x - self.center_x;
        let dy = y - self.center_y;
        let u = dx * cos + dy * sin;
        let v = -dx * sin + dy * cos;
        let a = self.semi_major;
        let b = self.semi_minor;
        (u / a) * (u / a) + (v / b) * (v / b) <= 1.0
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisAlignedBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl AxisAlignedBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        if !(x_min.is_finite() && y_min.is_finite() && x_max.is_finite() && y_max.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if !(x_max > x_min && y_max > y_min) {
            return Err(GeometryError::InvalidCorners);
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn intersection_area(&self, other: &AxisAlignedBox) -> f64 {
        let ix = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let iy = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        ix * iy
    }

    /// Promote to an oriented box with angle 0.
    pub fn to_oriented(&self) -> OrientedBox {
        OrientedBox {
            center_x: 0.5 * (self.x_min + self.x_max),
            center_y: 0.5 * (self.y_min + self.y_max),
            width: self.width(),
            height: self.height(),
            angle: 0.0,
        }
    }
}

/// Rotated rectangle; `angle` lives in [0, pi) since rectangles are unoriented.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center_x: f64,
    pub center_y: f64,
    pub width: f64,
    pub height: f64,
    pub angle: f64,
}

impl OrientedBox {
    pub fn new(
        center_x: f64,
        center_y: f64,
        width: f64,
        height: f64,
        angle: f64,
    ) -> Result<Self, GeometryError> {
        if !(center_x.is_finite() && center_y.is_finite() && angle.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if !(width > 0.0 && height > 0.0) {
            return Err(GeometryError::InvalidExtents {
                w: width,
                h: height,
            });
        }
        Ok(Self {
            center_x,
            center_y,
            width,
            height,
            angle: normalize_angle(angle),
        })
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    /// Corner points in counterclockwise order.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (sin, cos) = self.angle.sin_cos();
        let hw = 0.5 * self.width;
        let hh = 0.5 * self.height;
        let local = [[-hw, -hh], [hw, -hh], [hw, hh], [-hw, hh]];
        local.map(|[u, v]| {
            [
                self.center_x + u * cos - v * sin,
                self.center_y + u * sin + v * cos,
            ]
        })
    }

    /// Axis-aligned box containing this rectangle.
    pub fn aabb(&self) -> AxisAlignedBox {
        let cs = self.corners();
        let x_min = cs.iter().map(|c| c[0]).fold(f64::INFINITY, f64::min);
        let x_max = cs.iter().map(|c| c[0]).fold(f64::NEG_INFINITY, f64::max);
        let y_min = cs.iter().map(|c| c[1]).fold(f64::INFINITY, f64::min);
        let y_max = cs.iter().map(|c| c[1]).fold(f64::NEG_INFINITY, f64::max);
        AxisAlignedBox {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }
}

/// Tightest axis-aligned box containing the ellipse.
///
/// Half-extents are sqrt(a^2 cos^2 t + b^2 sin^2 t) horizontally and
/// sqrt(a^2 sin^2 t + b^2 cos^2 t) vertically.
pub fn aabb_of_ellipse(e: &EllipseShape) -> AxisAlignedBox {
    let (sin, cos) = e.angle.sin_cos();
    let a2 = e.semi_major * e.semi_major;
    let b2 = e.semi_minor * e.semi_minor;
    let hx = (a2 * cos * cos + b2 * sin * sin).sqrt();
    let hy = (a2 * sin * sin + b2 * cos * cos).sqrt();
    AxisAlignedBox {
        x_min: e.center_x - hx,
        y_min: e.center_y - hy,
        x_max: e.center_x + hx,
        y_max: e.center_y + hy,
    }
}

/// Rotated box enclosing the ellipse exactly: width 2a, height 2b, same pose.
pub fn obb_of_ellipse(e: &EllipseShape) -> OrientedBox {
    OrientedBox {
        center_x: e.center_x,
        center_y: e.center_y,
        width: 2.0 * e.semi_major,
        height: 2.0 * e.semi_minor,
        angle: e.angle,
    }
}

/// Intersection over union of two axis-aligned boxes; 0 when disjoint.
pub fn iou_aabb(p: &AxisAlignedBox, q: &AxisAlignedBox) -> f64 {
    let inter = p.intersection_area(q);
    let union = p.area() + q.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Intersection over union of two rotated boxes via exact convex-polygon
/// clipping.
pub fn iou_obb(p: &OrientedBox, q: &OrientedBox) -> f64 {
    if p == q {
        // identical boxes stay exactly 1, free of clipping round-off
        return 1.0;
    }
    let inter = convex_intersection_area(&p.corners(), &q.corners());
    let union = p.area() + q.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Diameter of the disk with the same area: d = 2 sqrt(area / pi).
pub fn equivalent_diameter(area: f64) -> Result<f64, GeometryError> {
    if !(area > 0.0) {
        return Err(GeometryError::EmptyArea);
    }
    Ok(2.0 * (area / std::f64::consts::PI).sqrt())
}

/// Signed area of a polygon (positive for counterclockwise winding).
pub fn polygon_signed_area(pts: &[[f64; 2]]) -> f64 {
    if pts.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..pts.len() {
        let [x0, y0] = pts[i];
        let [x1, y1] = pts[(i + 1) % pts.len()];
        acc += x0 * y1 - x1 * y0;
    }
    0.5 * acc
}

/// Area of the intersection of two convex polygons given in CCW order.
///
/// Sutherland-Hodgman clipping of `subject` against each half-plane of
/// `clipper`, with an epsilon for points lying on a clip edge.
pub fn convex_intersection_area(subject: &[[f64; 2]], clipper: &[[f64; 2]]) -> f64 {
    let mut poly: Vec<[f64; 2]> = subject.to_vec();
    for i in 0..clipper.len() {
        if poly.is_empty() {
            return 0.0;
        }
        let a = clipper[i];
        let b = clipper[(i + 1) % clipper.len()];
        poly = clip_half_plane(&poly, a, b);
    }
    polygon_signed_area(&poly).abs()
}

// Keep the part of `poly` on the left side of the directed edge a->b.
fn clip_half_plane(poly: &[[f64; 2]], a: [f64; 2], b: [f64; 2]) -> Vec<[f64; 2]> {
    let side = |p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let cur = poly[i];
        let next = poly[(i + 1) % poly.len()];
        let sc = side(cur);
        let sn = side(next);
        if sc >= -CLIP_EPS {
            out.push(cur);
        }
        if (sc > CLIP_EPS && sn < -CLIP_EPS) || (sc < -CLIP_EPS && sn > CLIP_EPS) {
            let t = sc / (sc - sn);
            out.push([
                cur[0] + t * (next[0] - cur[0]),
                cur[1] + t * (next[1] - cur[1]),
            ]);
        }
    }
    out
}

/// Convex hull of a point set (Andrew monotone chain), CCW order.
pub fn convex_hull(points: &mut Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    points.sort_by(|p, q| p[0].total_cmp(&q[0]).then(p[1].total_cmp(&q[1])));
    points.dedup();
    let n = points.len();
    if n < 3 {
        return points.clone();
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * n);
    for &p in points.iter() {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in points.iter().rev() {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Minimum-area enclosing rectangle of a point set (rotating calipers over
/// hull edges). Returns `None` for degenerate inputs (all points collinear).
pub fn min_area_rect(points: &mut Vec<[f64; 2]>) -> Option<OrientedBox> {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return None;
    }
    let mut best: Option<(f64, OrientedBox)> = None;
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let ex = b[0] - a[0];
        let ey = b[1] - a[1];
        let len = (ex * ex + ey * ey).sqrt();
        if len < 1e-12 {
            continue;
        }
        let (ux, uy) = (ex / len, ey / len);
        let (mut umin, mut umax) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for &p in &hull {
            let u = p[0] * ux + p[1] * uy;
            let v = -p[0] * uy + p[1] * ux;
            umin = umin.min(u);
            umax = umax.max(u);
            vmin = vmin.min(v);
            vmax = vmax.max(v);
        }
        let w = umax - umin;
        let h = vmax - vmin;
        if w <= 0.0 || h <= 0.0 {
            continue;
        }
        let area = w * h;
        if best.as_ref().map_or(true, |(ba, _)| area < *ba) {
            let uc = 0.5 * (umin + umax);
            let vc = 0.5 * (vmin + vmax);
            let cx = uc * ux - vc * uy;
            let cy = uc * uy + vc * ux;
            let angle = normalize_angle(uy.atan2(ux));
            best = Some((
                area,
                OrientedBox {
                    center_x: cx,
                    center_y: cy,
                    width: w,
                    height: h,
                    angle,
                },
            ));
        }
    }
    best.map(|(_, b)| b)
}
