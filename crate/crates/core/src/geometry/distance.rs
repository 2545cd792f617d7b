//! Closest-distance queries between segments and convex primitives.

use nalgebra::{Matrix3, Vector3};

use crate::kinematics::Segment;

/// Interval width at which the segment/box ternary search stops.
pub const TERNARY_TOLERANCE: f64 = 1e-9;

pub fn point_segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * t)).norm()
}

/// Euclidean distance between two segments.
///
/// Closest points on the supporting lines, clamped to the segments; the result
/// is symmetric in its arguments up to rounding.
pub fn segment_segment_distance(s: &Segment, r: &Segment) -> f64 {
    let d1 = s.end - s.start;
    let d2 = r.end - r.start;
    let w = s.start - r.start;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&w);

    let (sc, tc) = if a <= f64::EPSILON && e <= f64::EPSILON {
        (0.0, 0.0)
    } else if a <= f64::EPSILON {
        (0.0, (f / e).clamp(0.0, 1.0))
    } else {
        let c = d1.dot(&w);
        if e <= f64::EPSILON {
            ((-c / a).clamp(0.0, 1.0), 0.0)
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut sc = if denom > 0.0 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut tc = (b * sc + f) / e;
            if tc < 0.0 {
                tc = 0.0;
                sc = (-c / a).clamp(0.0, 1.0);
            } else if tc > 1.0 {
                tc = 1.0;
                sc = ((b - c) / a).clamp(0.0, 1.0);
            }
            (sc, tc)
        }
    };
    let p = s.start + d1 * sc;
    let q = r.start + d2 * tc;
    (p - q).norm()
}

/// Distance from a point given in the box frame to an origin-centred box; 0 inside.
pub fn point_box_distance_local(p: &Vector3<f64>, half_extents: &Vector3<f64>) -> f64 {
    let outside = Vector3::new(
        (p.x.abs() - half_extents.x).max(0.0),
        (p.y.abs() - half_extents.y).max(0.0),
        (p.z.abs() - half_extents.z).max(0.0),
    );
    outside.norm()
}

/// Distance between a segment and an oriented box whose frame maps world
/// points through `world_to_box` after subtracting `center`.
///
/// The point-to-box distance is convex along the segment, so a ternary search
/// on the segment parameter converges to the minimum.
pub fn segment_box_distance(
    segment: &Segment,
    center: &Vector3<f64>,
    world_to_box: &Matrix3<f64>,
    half_extents: &Vector3<f64>,
) -> f64 {
    let a = world_to_box * (segment.start - center);
    let b = world_to_box * (segment.end - center);
    let d = b - a;
    let f = |t: f64| point_box_distance_local(&(a + d * t), half_extents);

    let fa = f(0.0);
    let fb = f(1.0);
    if fa == 0.0 || fb == 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > TERNARY_TOLERANCE {
        let third = (hi - lo) / 3.0;
        let m1 = lo + third;
        let m2 = hi - third;
        if f(m1) < f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    f(0.5 * (lo + hi)).min(fa).min(fb)
}
