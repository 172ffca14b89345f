//! Gravity-aligned oriented boxes: yaw about the vertical axis only.

use std::f64::consts::FRAC_PI_2;

use super::Point3;
use crate::error::{Error, Result};

/// Lower bound applied to every fitted half extent, one voxel.
pub const MIN_HALF_EXTENT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Point3,
    pub half_extents: [f64; 3],
    /// Radians about +z, in [-pi/2, pi/2).
    pub yaw: f64,
}

/// How a box was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxFit {
    Oriented,
    /// Too few points or a collinear footprint; the box is axis-aligned.
    AxisAlignedFallback,
}

impl OrientedBox {
    pub fn axis_aligned(min: Point3, max: Point3) -> Self {
        let mut center = [0.0; 3];
        let mut half = [0.0; 3];
        for k in 0..3 {
            center[k] = 0.5 * (min[k] + max[k]);
            half[k] = (0.5 * (max[k] - min[k])).max(MIN_HALF_EXTENT);
        }
        OrientedBox {
            center,
            half_extents: half,
            yaw: 0.0,
        }
    }

    pub fn volume(&self) -> f64 {
        8.0 * self.half_extents[0] * self.half_extents[1] * self.half_extents[2]
    }

    /// Footprint corners, counter-clockwise.
    pub fn footprint(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let [hx, hy, _] = self.half_extents;
        [(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)].map(|(u, v)| {
            [
                self.center[0] + c * u - s * v,
                self.center[1] + s * u + c * v,
            ]
        })
    }

    /// Coordinates of `p` in the box frame, relative to the center.
    pub fn to_local(&self, p: &Point3) -> Point3 {
        let (s, c) = self.yaw.sin_cos();
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        [c * dx + s * dy, -s * dx + c * dy, p[2] - self.center[2]]
    }

    pub fn contains(&self, p: &Point3) -> bool {
        let l = self.to_local(p);
        (0..3).all(|k| l[k].abs() <= self.half_extents[k])
    }

    fn z_range(&self) -> (f64, f64) {
        (
            self.center[2] - self.half_extents[2],
            self.center[2] + self.half_extents[2],
        )
    }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain; counter-clockwise without collinear points.
fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Wraps an angle into [-pi/4, pi/4); a rectangle is unchanged by quarter turns.
fn canonical_yaw(theta: f64) -> f64 {
    let q = FRAC_PI_2;
    let mut t = (theta + q / 2.0).rem_euclid(q) - q / 2.0;
    if t >= q / 2.0 {
        t -= q;
    }
    t
}

fn frame_extents(pts: &[[f64; 2]], yaw: f64) -> ([f64; 2], [f64; 2]) {
    let (s, c) = yaw.sin_cos();
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in pts {
        let u = c * p[0] + s * p[1];
        let v = -s * p[0] + c * p[1];
        lo[0] = lo[0].min(u);
        hi[0] = hi[0].max(u);
        lo[1] = lo[1].min(v);
        hi[1] = hi[1].max(v);
    }
    (lo, hi)
}

/// Fits a yaw-only box. The footprint is the minimum-area rectangle around the
/// horizontal convex hull; the vertical extent is the raw z range. Extents are
/// clamped to [`MIN_HALF_EXTENT`].
pub fn fit_oriented_box(points: &[Point3]) -> Result<(OrientedBox, BoxFit)> {
    if points.is_empty() {
        return Err(Error::Config("cannot fit a box to zero points".into()));
    }
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for p in points {
        for k in 0..3 {
            min[k] = min[k].min(p[k]);
            max[k] = max[k].max(p[k]);
        }
    }
    let fallback = || (OrientedBox::axis_aligned(min, max), BoxFit::AxisAlignedFallback);
    if points.len() < 4 {
        return Ok(fallback());
    }
    let hull = convex_hull(points.iter().map(|p| [p[0], p[1]]).collect());
    if hull.len() < 3 {
        return Ok(fallback());
    }

    let mut candidates: Vec<f64> = (0..hull.len())
        .map(|i| {
            let a = hull[i];
            let b = hull[(i + 1) % hull.len()];
            canonical_yaw((b[1] - a[1]).atan2(b[0] - a[0]))
        })
        .collect();
    candidates.sort_by(f64::total_cmp);

    let mut best: Option<(f64, f64)> = None;
    for yaw in candidates {
        let (lo, hi) = frame_extents(&hull, yaw);
        let area = (hi[0] - lo[0]) * (hi[1] - lo[1]);
        match best {
            Some((best_area, _)) if area >= best_area * (1.0 - 1e-12) => {}
            _ => best = Some((area, yaw)),
        }
    }
    let (_, yaw) = best.expect("hull has edges");
    let (lo, hi) = frame_extents(&hull, yaw);
    let (s, c) = yaw.sin_cos();
    let uc = 0.5 * (lo[0] + hi[0]);
    let vc = 0.5 * (lo[1] + hi[1]);
    let center = [c * uc - s * vc, s * uc + c * vc, 0.5 * (min[2] + max[2])];
    let half = [
        (0.5 * (hi[0] - lo[0])).max(MIN_HALF_EXTENT),
        (0.5 * (hi[1] - lo[1])).max(MIN_HALF_EXTENT),
        (0.5 * (max[2] - min[2])).max(MIN_HALF_EXTENT),
    ];
    Ok((
        OrientedBox {
            center,
            half_extents: half,
            yaw,
        },
        BoxFit::Oriented,
    ))
}

/// Sutherland-Hodgman clip of a convex polygon against a convex CCW polygon.
fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
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
    let dp = cross(a, b, p);
    let dq = cross(a, b, q);
    let denom = dp - dq;
    if denom == 0.0 {
        return q;
    }
    let t = dp / denom;
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    0.5 * twice.abs()
}

fn footprint_intersection(a: &OrientedBox, b: &OrientedBox) -> f64 {
    if a.yaw == b.yaw {
        // Shared frame: interval overlap, exact for axis-aligned pairs.
        let la = a.to_local(&b.center);
        let ox = (a.half_extents[0] + b.half_extents[0] - la[0].abs())
            .min(2.0 * a.half_extents[0])
            .min(2.0 * b.half_extents[0])
            .max(0.0);
        let oy = (a.half_extents[1] + b.half_extents[1] - la[1].abs())
            .min(2.0 * a.half_extents[1])
            .min(2.0 * b.half_extents[1])
            .max(0.0);
        return ox * oy;
    }
    polygon_area(&clip_convex(&a.footprint(), &b.footprint()))
}

/// Volume IoU of two yaw boxes: clipped footprint area times vertical overlap.
pub fn box_iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let (a0, a1) = a.z_range();
    let (b0, b1) = b.z_range();
    let dz = a1.min(b1) - a0.max(b0);
    if dz <= 0.0 {
        return 0.0;
    }
    let inter = footprint_intersection(a, b) * dz;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.volume() + b.volume() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cube_corners(yaw: f64, offset: Point3) -> Vec<Point3> {
        let (s, c) = yaw.sin_cos();
        let mut out = Vec::new();
        for &x in &[-0.5, 0.5] {
            for &y in &[-0.5, 0.5] {
                for &z in &[-0.5, 0.5] {
                    out.push([c * x - s * y + offset[0], s * x + c * y + offset[1], z + offset[2]]);
                }
            }
        }
        out
    }

    #[test]
    fn axis_aligned_cube() {
        let (b, fit) = fit_oriented_box(&unit_cube_corners(0.0, [0.5, 0.5, 0.5])).unwrap();
        assert_eq!(fit, BoxFit::Oriented);
        assert!(b.yaw.abs() < 1e-12);
        for k in 0..3 {
            assert!((b.center[k] - 0.5).abs() < 1e-12);
            assert!((b.half_extents[k] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn rotated_cube_recovers_yaw() {
        let yaw = 30f64.to_radians();
        let pts = unit_cube_corners(yaw, [1.0, -2.0, 0.3]);
        let (b, _) = fit_oriented_box(&pts).unwrap();
        let diff = canonical_yaw(b.yaw - yaw);
        assert!(diff.abs() < 1e-9, "yaw {}", b.yaw.to_degrees());
        for k in 0..3 {
            assert!((b.half_extents[k] - 0.5).abs() < 1e-6);
        }
        for p in &pts {
            let l = b.to_local(p);
            for k in 0..3 {
                assert!(l[k].abs() <= b.half_extents[k] + 1e-6);
            }
        }
    }

    #[test]
    fn coincident_points_clamp() {
        let pts = vec![[1.0, 1.0, 1.0]; 4];
        let (b, fit) = fit_oriented_box(&pts).unwrap();
        assert_eq!(fit, BoxFit::AxisAlignedFallback);
        assert_eq!(b.half_extents, [MIN_HALF_EXTENT; 3]);
        assert_eq!(b.center, [1.0, 1.0, 1.0]);
        let (_, fit) = fit_oriented_box(&pts[..2]).unwrap();
        assert_eq!(fit, BoxFit::AxisAlignedFallback);
        assert!(fit_oriented_box(&[]).is_err());
    }

    #[test]
    fn canonical_yaw_range() {
        for deg in [-180.0, -135.0, -90.0, -45.0, 0.0, 30.0, 45.0, 120.0, 179.0f64] {
            let t = canonical_yaw(deg.to_radians());
            assert!((-FRAC_PI_2 / 2.0..FRAC_PI_2 / 2.0).contains(&t), "{deg} -> {t}");
        }
    }

    fn cube(center: Point3) -> OrientedBox {
        OrientedBox {
            center,
            half_extents: [0.5; 3],
            yaw: 0.0,
        }
    }

    #[test]
    fn iou_analytic_cases() {
        let a = cube([0.0; 3]);
        assert_eq!(box_iou(&a, &a), 1.0);
        assert_eq!(box_iou(&a, &cube([2.0, 0.0, 0.0])), 0.0);
        assert_eq!(box_iou(&a, &cube([0.0, 0.0, 1.0])), 0.0);
        let shifted = cube([0.5, 0.0, 0.0]);
        assert!((box_iou(&a, &shifted) - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn iou_rotated_general_path() {
        // A square rotated 45 degrees inside a larger square: intersection is
        // the rotated square itself.
        let big = OrientedBox {
            center: [0.0; 3],
            half_extents: [2.0, 2.0, 0.5],
            yaw: 0.0,
        };
        let small = OrientedBox {
            center: [0.0; 3],
            half_extents: [0.5, 0.5, 0.5],
            yaw: std::f64::consts::FRAC_PI_4 - 1e-3,
        };
        let expected = small.volume() / big.volume();
        assert!((box_iou(&big, &small) - expected).abs() < 1e-12);
        assert!((box_iou(&small, &big) - expected).abs() < 1e-12);
    }

    #[test]
    fn quarter_turn_is_same_box() {
        let a = OrientedBox {
            center: [0.0; 3],
            half_extents: [1.0, 0.5, 0.5],
            yaw: 0.2,
        };
        let b = OrientedBox {
            center: [0.0; 3],
            half_extents: [0.5, 1.0, 0.5],
            yaw: 0.2 + FRAC_PI_2 - std::f64::consts::PI,
        };
        assert!((box_iou(&a, &b) - 1.0).abs() < 1e-12);
    }
}
