//! Oriented boxes and the planar polygon routines used by IoU and box fitting.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoxError {
    #[error("box dimensions must be finite and strictly positive, got {0:?}")]
    DegenerateDims([f64; 3]),
    #[error("box center or yaw is not finite")]
    NonFinite,
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_yaw(yaw: f64) -> f64 {
    let mut a = yaw % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Yaw-rotated cuboid in the sensor frame.
///
/// `center` is the geometric center (not the bottom face). `dims` are
/// `(length, width, height)`; length runs along the heading axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox3D {
    center: [f64; 3],
    dims: [f64; 3],
    yaw: f64,
}

impl OrientedBox3D {
    pub fn new(center: [f64; 3], dims: [f64; 3], yaw: f64) -> Result<Self, BoxError> {
        if dims.iter().any(|d| !d.is_finite() || *d <= 0.0) {
            return Err(BoxError::DegenerateDims(dims));
        }
        if center.iter().any(|c| !c.is_finite()) || !yaw.is_finite() {
            return Err(BoxError::NonFinite);
        }
        Ok(Self {
            center,
            dims,
            yaw: normalize_yaw(yaw),
        })
    }

    pub fn center(&self) -> [f64; 3] {
        self.center
    }

    pub fn dims(&self) -> [f64; 3] {
        self.dims
    }

    pub fn length(&self) -> f64 {
        self.dims[0]
    }

    pub fn width(&self) -> f64 {
        self.dims[1]
    }

    pub fn height(&self) -> f64 {
        self.dims[2]
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn volume(&self) -> f64 {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn z_min(&self) -> f64 {
        self.center[2] - 0.5 * self.dims[2]
    }

    pub fn z_max(&self) -> f64 {
        self.center[2] + 0.5 * self.dims[2]
    }

    /// Counter-clockwise BEV footprint corners.
    pub fn footprint(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let hl = 0.5 * self.dims[0];
        let hw = 0.5 * self.dims[1];
        let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
        local.map(|[u, v]| [self.center[0] + c * u - s * v, self.center[1] + s * u + c * v])
    }

    /// The eight corners: bottom face (ccw) then top face (ccw).
    pub fn corners(&self) -> [[f64; 3]; 8] {
        let fp = self.footprint();
        let mut out = [[0.0; 3]; 8];
        for (i, p) in fp.iter().enumerate() {
            out[i] = [p[0], p[1], self.z_min()];
            out[i + 4] = [p[0], p[1], self.z_max()];
        }
        out
    }

    /// Whether a point lies inside or on the box surface.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        let (s, c) = self.yaw.sin_cos();
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        u.abs() <= 0.5 * self.dims[0]
            && v.abs() <= 0.5 * self.dims[1]
            && (p[2] - self.center[2]).abs() <= 0.5 * self.dims[2]
    }
}

/// Signed area by the shoelace formula; positive for counter-clockwise rings.
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        acc += a[0] * b[1] - a[1] * b[0];
    }
    0.5 * acc
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Intersection of two convex polygons, both counter-clockwise
/// (Sutherland-Hodgman clipping of `subject` by each edge of `clip`).
pub fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output: Vec<[f64; 2]> = subject.to_vec();
    let m = clip.len();
    for i in 0..m {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % m];
        let input = std::mem::take(&mut output);
        let n = input.len();
        for j in 0..n {
            let cur = input[j];
            let prev = input[(j + n - 1) % n];
            let cur_in = cross(a, b, cur) >= 0.0;
            let prev_in = cross(a, b, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(line_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

fn line_intersection(p: [f64; 2], q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let d1 = cross(a, b, p);
    let d2 = cross(a, b, q);
    let denom = d1 - d2;
    if denom == 0.0 {
        return q;
    }
    let t = d1 / denom;
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Convex hull by Andrew's monotone chain. Returns a counter-clockwise ring
/// without collinear points; degenerate inputs return fewer than 3 points.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Minimum-area enclosing rectangle of a point set in the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect2 {
    pub center: [f64; 2],
    /// Extent along `angle`; always `>= width`.
    pub length: f64,
    pub width: f64,
    pub angle: f64,
}

/// Minimum-area bounding rectangle. One side of the optimal rectangle is
/// collinear with a hull edge, so every hull edge direction is tried.
pub fn min_area_rect(points: &[[f64; 2]]) -> Option<Rect2> {
    let hull = convex_hull(points);
    let dirs: Vec<f64> = match hull.len() {
        0 => return None,
        1 => vec![0.0],
        2 => vec![(hull[1][1] - hull[0][1]).atan2(hull[1][0] - hull[0][0])],
        n => (0..n)
            .map(|i| {
                let a = hull[i];
                let b = hull[(i + 1) % n];
                (b[1] - a[1]).atan2(b[0] - a[0])
            })
            .collect(),
    };
    let mut best: Option<(f64, Rect2)> = None;
    for theta in dirs {
        let (s, c) = theta.sin_cos();
        let (mut umin, mut umax, mut vmin, mut vmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in &hull {
            let u = c * p[0] + s * p[1];
            let v = -s * p[0] + c * p[1];
            umin = umin.min(u);
            umax = umax.max(u);
            vmin = vmin.min(v);
            vmax = vmax.max(v);
        }
        let area = (umax - umin) * (vmax - vmin);
        if best.as_ref().is_none_or(|(a, _)| area < *a) {
            let uc = 0.5 * (umin + umax);
            let vc = 0.5 * (vmin + vmax);
            let center = [c * uc - s * vc, s * uc + c * vc];
            let (lu, lv) = (umax - umin, vmax - vmin);
            let rect = if lu >= lv {
                Rect2 {
                    center,
                    length: lu,
                    width: lv,
                    angle: theta,
                }
            } else {
                Rect2 {
                    center,
                    length: lv,
                    width: lu,
                    angle: theta + 0.5 * PI,
                }
            };
            best = Some((area, rect));
        }
    }
    best.map(|(_, r)| Rect2 {
        angle: normalize_yaw(r.angle),
        ..r
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn yaw_normalization_range() {
        assert_abs_diff_eq!(normalize_yaw(-PI), PI);
        assert_abs_diff_eq!(normalize_yaw(PI), PI);
        assert_abs_diff_eq!(normalize_yaw(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(normalize_yaw(-0.5 * PI), -0.5 * PI);
        for k in -20..20 {
            let a = normalize_yaw(0.3 + k as f64 * 0.7);
            assert!(a > -PI && a <= PI);
        }
    }

    #[test]
    fn rejects_degenerate_dims() {
        assert!(OrientedBox3D::new([0.0; 3], [1.0, 0.0, 1.0], 0.0).is_err());
        assert!(OrientedBox3D::new([0.0; 3], [1.0, -1.0, 1.0], 0.0).is_err());
        assert!(OrientedBox3D::new([f64::NAN, 0.0, 0.0], [1.0; 3], 0.0).is_err());
    }

    #[test]
    fn footprint_area_matches_dims() {
        let b = OrientedBox3D::new([1.0, 2.0, 0.0], [4.0, 2.0, 1.0], 0.7).unwrap();
        assert_abs_diff_eq!(polygon_area(&b.footprint()), 8.0, epsilon = 1e-12);
    }

    #[test]
    fn clip_of_identical_squares_is_square() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let out = clip_convex(&sq, &sq);
        assert_abs_diff_eq!(polygon_area(&out), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn clip_of_disjoint_squares_is_empty() {
        let a = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let b = a.map(|[x, y]| [x + 5.0, y]);
        assert_abs_diff_eq!(polygon_area(&clip_convex(&a, &b)), 0.0);
    }

    #[test]
    fn hull_drops_interior_and_collinear_points() {
        let pts = [[0.0, 0.0], [2.0, 0.0], [1.0, 0.0], [2.0, 2.0], [0.0, 2.0], [1.0, 1.0]];
        let hull = convex_hull(&pts);
        assert_eq!(hull.len(), 4);
        assert_abs_diff_eq!(polygon_area(&hull), 4.0);
    }

    #[test]
    fn min_area_rect_recovers_rotated_rectangle() {
        let b = OrientedBox3D::new([3.0, -1.0, 0.0], [4.0, 1.5, 1.0], 0.4).unwrap();
        let r = min_area_rect(&b.footprint()).unwrap();
        assert_abs_diff_eq!(r.length, 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.width, 1.5, epsilon = 1e-9);
        assert_abs_diff_eq!(r.center[0], 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.center[1], -1.0, epsilon = 1e-9);
        let d = normalize_yaw(r.angle - 0.4);
        assert!(d.abs() < 1e-9 || (d.abs() - PI).abs() < 1e-9);
    }

    #[test]
    fn contains_respects_rotation() {
        let b = OrientedBox3D::new([0.0; 3], [4.0, 1.0, 1.0], 0.5 * PI).unwrap();
        assert!(b.contains([0.0, 1.9, 0.0]));
        assert!(!b.contains([1.9, 0.0, 0.0]));
    }
}
