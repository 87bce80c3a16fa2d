//! Planar geometry shared by every stage: points, poses, angle wrapping and
//! the oriented bounding box with its eight reference points.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub type Point2 = [f64; 2];

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Absolute angular difference folded into `[0, π/2]`, treating opposite
/// directions as equivalent.
pub fn fold_heading_deviation(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b).abs();
    if d > PI / 2.0 {
        PI - d
    } else {
        d
    }
}

pub fn dist(a: Point2, b: Point2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub fn add(a: Point2, b: Point2) -> Point2 {
    [a[0] + b[0], a[1] + b[1]]
}

pub fn sub(a: Point2, b: Point2) -> Point2 {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn scale(a: Point2, s: f64) -> Point2 {
    [a[0] * s, a[1] * s]
}

pub fn rotate(p: Point2, angle: f64) -> Point2 {
    let (s, c) = angle.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

/// Unit vector pointing along `heading`.
pub fn unit(heading: f64) -> Point2 {
    let (s, c) = heading.sin_cos();
    [c, s]
}

/// Distance from `p` to the closed segment `a`–`b`.
pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = sub(b, a);
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

/// A 2-D pose: position plus heading.
/// Whether closed segments ab and cd share a point.
pub fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    fn orient(p: Point2, q: Point2, r: Point2) -> f64 {
        (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    }
    fn on_segment(p: Point2, q: Point2, r: Point2) -> bool {
        r[0] >= p[0].min(q[0]) && r[0] <= p[0].max(q[0]) && r[1] >= p[1].min(q[1]) && r[1] <= p[1].max(q[1])
    }
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, phi: f64) -> Self {
        Self { x, y, phi }
    }

    pub fn position(&self) -> Point2 {
        [self.x, self.y]
    }
}

/// Anchor labels on an object's bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefPoint {
    B,
    Bl,
    L,
    Fl,
    F,
    Fr,
    R,
    Br,
}

impl RefPoint {
    pub const ALL: [RefPoint; 8] = [
        RefPoint::B,
        RefPoint::Bl,
        RefPoint::L,
        RefPoint::Fl,
        RefPoint::F,
        RefPoint::Fr,
        RefPoint::R,
        RefPoint::Br,
    ];

    /// Offset of the point from the box center in units of half-length
    /// (longitudinal) and half-width (lateral, left positive).
    fn offsets(self) -> (f64, f64) {
        match self {
            RefPoint::B => (-1.0, 0.0),
            RefPoint::Bl => (-1.0, 1.0),
            RefPoint::L => (0.0, 1.0),
            RefPoint::Fl => (1.0, 1.0),
            RefPoint::F => (1.0, 0.0),
            RefPoint::Fr => (1.0, -1.0),
            RefPoint::R => (0.0, -1.0),
            RefPoint::Br => (-1.0, -1.0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RefPoint::B => "b",
            RefPoint::Bl => "bl",
            RefPoint::L => "l",
            RefPoint::Fl => "fl",
            RefPoint::F => "f",
            RefPoint::Fr => "fr",
            RefPoint::R => "r",
            RefPoint::Br => "br",
        }
    }
}

/// Oriented rectangle stored as its corners `[bl, fl, fr, br]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub corners: [Point2; 4],
}

impl OrientedBox {
    pub fn from_center(center: Point2, heading: f64, length: f64, width: f64) -> Self {
        let u = scale(unit(heading), length / 2.0);
        let n = scale(unit(heading + PI / 2.0), width / 2.0);
        let bl = add(sub(center, u), n);
        let fl = add(add(center, u), n);
        let fr = sub(add(center, u), n);
        let br = sub(sub(center, u), n);
        Self { corners: [bl, fl, fr, br] }
    }

    /// Builds the box whose reference point `label` sits at `point`.
    pub fn from_ref_point(label: RefPoint, point: Point2, heading: f64, length: f64, width: f64) -> Self {
        let (lon, lat) = label.offsets();
        let offset = add(
            scale(unit(heading), lon * length / 2.0),
            scale(unit(heading + PI / 2.0), lat * width / 2.0),
        );
        Self::from_center(sub(point, offset), heading, length, width)
    }

    pub fn center(&self) -> Point2 {
        let c = &self.corners;
        [
            (c[0][0] + c[1][0] + c[2][0] + c[3][0]) / 4.0,
            (c[0][1] + c[1][1] + c[2][1] + c[3][1]) / 4.0,
        ]
    }

    /// Heading of the back-to-front axis.
    pub fn heading(&self) -> f64 {
        let d = sub(self.corners[1], self.corners[0]);
        d[1].atan2(d[0])
    }

    pub fn length(&self) -> f64 {
        dist(self.corners[0], self.corners[1])
    }

    pub fn width(&self) -> f64 {
        dist(self.corners[0], self.corners[3])
    }

    pub fn point(&self, label: RefPoint) -> Point2 {
        let (lon, lat) = label.offsets();
        let u = scale(unit(self.heading()), lon * self.length() / 2.0);
        let n = scale(unit(self.heading() + PI / 2.0), lat * self.width() / 2.0);
        add(add(self.center(), u), n)
    }

    pub fn translated(&self, delta: Point2) -> Self {
        let mut corners = self.corners;
        for c in corners.iter_mut() {
            *c = add(*c, delta);
        }
        Self { corners }
    }

    /// Containment test with tolerance `tol` on every side.
    pub fn contains(&self, p: Point2, tol: f64) -> bool {
        let h = self.heading();
        let local = rotate(sub(p, self.center()), -h);
        local[0].abs() <= self.length() / 2.0 + tol && local[1].abs() <= self.width() / 2.0 + tol
    }

    /// Largest deviation of any corner angle from a right angle (rad).
    pub fn max_corner_skew(&self) -> f64 {
        let c = &self.corners;
        (0..4)
            .map(|i| {
                let a = sub(c[(i + 1) % 4], c[i]);
                let b = sub(c[(i + 3) % 4], c[i]);
                let cos = (a[0] * b[0] + a[1] * b[1]) / (a[0].hypot(a[1]) * b[0].hypot(b[1]));
                (cos.clamp(-1.0, 1.0).acos() - PI / 2.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(0.1 + 4.0 * PI) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn folded_deviation() {
        assert!(fold_heading_deviation(0.0, PI).abs() < 1e-12);
        assert!((fold_heading_deviation(PI / 2.0, 0.0) - PI / 2.0).abs() < 1e-12);
        assert!((fold_heading_deviation(0.1, -0.1) - 0.2).abs() < 1e-12);
        assert!((fold_heading_deviation(PI - 0.1, 0.0) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn box_reference_points() {
        let b = OrientedBox::from_center([1.0, 2.0], 0.0, 4.0, 2.0);
        assert!(dist(b.point(RefPoint::F), [3.0, 2.0]) < 1e-12);
        assert!(dist(b.point(RefPoint::Bl), [-1.0, 3.0]) < 1e-12);
        assert!(dist(b.corners[2], [3.0, 1.0]) < 1e-12);
        assert!((b.length() - 4.0).abs() < 1e-12);
        assert!((b.width() - 2.0).abs() < 1e-12);
        assert!(b.max_corner_skew() < 1e-9);
        for label in RefPoint::ALL {
            let p = b.point(label);
            let rebuilt = OrientedBox::from_ref_point(label, p, 0.0, 4.0, 2.0);
            assert!(dist(rebuilt.center(), b.center()) < 1e-12);
        }
    }

    #[test]
    fn rotated_box_heading() {
        let b = OrientedBox::from_center([0.0, 0.0], 2.0, 4.5, 1.8);
        assert!((b.heading() - 2.0).abs() < 1e-12);
        assert!(b.contains(b.point(RefPoint::Fr), 1e-9));
        assert!(!b.contains([10.0, 0.0], 0.0));
    }
}
