//! Digital map: building footprints, lane reference lines and the oriented
//! rectangles that approximate each lane.
//!
//! Map files are JSON:
//!
//! ```text
//! {"buildings": [{"id": 1, "corners": [[e, n], ...]}],
//!  "lanes":     [{"id": 7, "points":  [[e, n], ...]}]}
//! ```
//!
//! Rectangles are never read from a file; they are derived from the lanes
//! on load with an iterative end-point fit.

use crate::ego::Anchor;
use crate::geometry::{dist, fold_heading_deviation, point_segment_distance, rotate, segments_intersect, sub, wrap_angle, Point2};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("building {0} has fewer than 3 corners")]
    TooFewCorners(u64),
    #[error("building {0} is self-intersecting")]
    SelfIntersecting(u64),
    #[error("lane {0} has fewer than 2 points")]
    TooFewPoints(u64),
    #[error("lane {id} is not equidistant: spacing {spacing} vs median {median}")]
    UnevenSpacing { id: u64, spacing: f64, median: f64 },
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: u64 },
    #[error("max_deviation must be positive")]
    BadDeviation,
    #[error("map is in the {actual:?} frame, expected {expected:?}")]
    FrameMismatch { expected: MapFrame, actual: MapFrame },
    #[error("cannot read map {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse map: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapFrame {
    Global,
    EgoStationary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub id: u64,
    pub corners: Vec<Point2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub id: u64,
    pub points: Vec<Point2>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneRectangle {
    pub id: u64,
    pub lane_id: u64,
    pub center: Point2,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl LaneRectangle {
    /// Coordinates of `p` along and across the rectangle axis.
    fn local(&self, p: Point2) -> Point2 {
        rotate(sub(p, self.center), -self.heading)
    }

    /// Euclidean distance from `p` to the rectangle, zero inside.
    pub fn distance(&self, p: Point2) -> f64 {
        let [along, across] = self.local(p);
        let dx = (along.abs() - self.length / 2.0).max(0.0);
        let dy = (across.abs() - self.width / 2.0).max(0.0);
        dx.hypot(dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapParams {
    pub max_deviation: f64,
    pub default_width: f64,
}

impl Default for MapParams {
    fn default() -> Self {
        Self { max_deviation: 0.3, default_width: 3.5 }
    }
}

/// On-disk map content.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MapFile {
    #[serde(default)]
    pub buildings: Vec<Building>,
    #[serde(default)]
    pub lanes: Vec<Lane>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DigitalMap {
    pub buildings: Vec<Building>,
    pub lanes: Vec<Lane>,
    pub rectangles: Vec<LaneRectangle>,
    pub frame: MapFrame,
}

/// Result of associating a pose with the lane rectangles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectangleMatch {
    pub rectangle: LaneRectangle,
    pub distance: f64,
    pub lateral_offset: f64,
    pub heading_deviation: f64,
}

impl Building {
    pub fn validate(&self) -> Result<(), MapError> {
        let n = self.corners.len();
        if n < 3 {
            return Err(MapError::TooFewCorners(self.id));
        }
        for i in 0..n {
            for j in i + 1..n {
                // adjacent edges share a vertex
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (a, b) = (self.corners[i], self.corners[(i + 1) % n]);
                let (c, d) = (self.corners[j], self.corners[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return Err(MapError::SelfIntersecting(self.id));
                }
            }
        }
        Ok(())
    }

    fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.corners.len();
        (0..n).map(move |i| (self.corners[i], self.corners[(i + 1) % n]))
    }

    /// Distance from `p` to the polygon outline.
    pub fn boundary_distance(&self, p: Point2) -> f64 {
        self.edges().map(|(a, b)| point_segment_distance(p, a, b)).fold(f64::INFINITY, f64::min)
    }

    /// Even-odd containment; points on the outline count as inside.
    pub fn contains(&self, p: Point2) -> bool {
        if self.boundary_distance(p) <= 1e-9 {
            return true;
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Containment in the polygon eroded by `inset`, boundary inclusive.
    pub fn contains_inset(&self, p: Point2, inset: f64) -> bool {
        self.contains(p) && (inset <= 0.0 || self.boundary_distance(p) >= inset)
    }
}

impl Lane {
    pub fn validate(&self) -> Result<(), MapError> {
        if self.points.len() < 2 {
            return Err(MapError::TooFewPoints(self.id));
        }
        let mut spacing: Vec<f64> = self.points.windows(2).map(|w| dist(w[0], w[1])).collect();
        let mut sorted = spacing.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        for s in spacing.drain(..) {
            if !(s > 0.0) || (s - median).abs() > 0.2 * median {
                return Err(MapError::UnevenSpacing { id: self.id, spacing: s, median });
            }
        }
        Ok(())
    }
}

/// Splits `[first, last]` recursively at the farthest point until every
/// intermediate point lies within `max_deviation` of its chord. Returns
/// the kept indices in order.
pub fn end_point_fit(points: &[Point2], max_deviation: f64) -> Vec<usize> {
    if points.len() < 2 {
        return (0..points.len()).collect();
    }
    let mut keep = vec![false; points.len()];
    keep[0] = true;
    keep[points.len() - 1] = true;
    let mut stack = vec![(0usize, points.len() - 1)];
    while let Some((first, last)) = stack.pop() {
        let mut farthest = None;
        let mut max_d = max_deviation;
        for i in first + 1..last {
            let d = point_segment_distance(points[i], points[first], points[last]);
            if d > max_d {
                max_d = d;
                farthest = Some(i);
            }
        }
        if let Some(i) = farthest {
            keep[i] = true;
            stack.push((i, last));
            stack.push((first, i));
        }
    }
    keep.iter().enumerate().filter(|(_, k)| **k).map(|(i, _)| i).collect()
}

/// Approximates a lane by oriented rectangles, one per end-point-fit chord.
/// Rectangle ids start at `first_id`.
pub fn approximate_lane(lane: &Lane, params: &MapParams, first_id: u64) -> Result<Vec<LaneRectangle>, MapError> {
    if lane.points.len() < 2 {
        return Err(MapError::TooFewPoints(lane.id));
    }
    if !(params.max_deviation > 0.0) {
        return Err(MapError::BadDeviation);
    }
    let kept = end_point_fit(&lane.points, params.max_deviation);
    Ok(kept
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let a = lane.points[w[0]];
            let b = lane.points[w[1]];
            let d = sub(b, a);
            LaneRectangle {
                id: first_id + k as u64,
                lane_id: lane.id,
                center: [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0],
                heading: d[1].atan2(d[0]),
                length: d[0].hypot(d[1]),
                width: params.default_width,
            }
        })
        .collect())
}

impl DigitalMap {
    /// Validates the file content and derives the lane rectangles.
    pub fn from_file_content(file: MapFile, params: &MapParams) -> Result<Self, MapError> {
        let mut seen = std::collections::BTreeSet::new();
        for b in &file.buildings {
            b.validate()?;
            if !seen.insert(b.id) {
                return Err(MapError::DuplicateId { kind: "building", id: b.id });
            }
        }
        seen.clear();
        let mut rectangles = Vec::new();
        for lane in &file.lanes {
            lane.validate()?;
            if !seen.insert(lane.id) {
                return Err(MapError::DuplicateId { kind: "lane", id: lane.id });
            }
            let first_id = rectangles.len() as u64;
            rectangles.extend(approximate_lane(lane, params, first_id)?);
        }
        Ok(Self { buildings: file.buildings, lanes: file.lanes, rectangles, frame: MapFrame::Global })
    }

    pub fn load(path: &Path, params: &MapParams) -> Result<Self, MapError> {
        let text = std::fs::read_to_string(path).map_err(|source| MapError::Io { path: path.display().to_string(), source })?;
        Self::from_file_content(serde_json::from_str(&text)?, params)
    }

    pub fn empty(frame: MapFrame) -> Self {
        Self { buildings: Vec::new(), lanes: Vec::new(), rectangles: Vec::new(), frame }
    }

    /// Whether `p` lies inside any building eroded by `inset`.
    pub fn point_in_building(&self, p: Point2, inset: f64) -> bool {
        self.buildings.iter().any(|b| b.contains_inset(p, inset))
    }

    /// Nearest lane rectangle by oriented-box distance, within `gate`.
    /// Ties go to the lower rectangle id.
    pub fn associate_rectangle(&self, p: Point2, heading: f64, gate: f64) -> Option<RectangleMatch> {
        let mut best: Option<(f64, &LaneRectangle)> = None;
        for r in &self.rectangles {
            let d = r.distance(p);
            let better = match best {
                None => true,
                Some((bd, br)) => d < bd || (d == bd && r.id < br.id),
            };
            if better {
                best = Some((d, r));
            }
        }
        let (d, r) = best?;
        if d > gate {
            return None;
        }
        Some(RectangleMatch {
            rectangle: *r,
            distance: d,
            lateral_offset: r.local(p)[1].abs(),
            heading_deviation: fold_heading_deviation(heading, r.heading),
        })
    }

    fn transformed(&self, point: impl Fn(Point2) -> Point2, heading: impl Fn(f64) -> f64, frame: MapFrame) -> Self {
        Self {
            buildings: self
                .buildings
                .iter()
                .map(|b| Building { id: b.id, corners: b.corners.iter().map(|c| point(*c)).collect() })
                .collect(),
            lanes: self
                .lanes
                .iter()
                .map(|l| Lane { id: l.id, points: l.points.iter().map(|c| point(*c)).collect() })
                .collect(),
            rectangles: self
                .rectangles
                .iter()
                .map(|r| LaneRectangle { center: point(r.center), heading: wrap_angle(heading(r.heading)), ..*r })
                .collect(),
            frame,
        }
    }

    /// Rigidly moves the whole map into ego-stationary coordinates.
    pub fn to_ego(&self, anchor: &Anchor) -> Result<Self, MapError> {
        if self.frame != MapFrame::Global {
            return Err(MapError::FrameMismatch { expected: MapFrame::Global, actual: self.frame });
        }
        Ok(self.transformed(
            |p| anchor.global_to_ego_point(p),
            |h| anchor.global_to_ego_heading(h),
            MapFrame::EgoStationary,
        ))
    }

    pub fn to_global(&self, anchor: &Anchor) -> Result<Self, MapError> {
        if self.frame != MapFrame::EgoStationary {
            return Err(MapError::FrameMismatch { expected: MapFrame::EgoStationary, actual: self.frame });
        }
        Ok(self.transformed(|p| anchor.ego_to_global_point(p), |h| anchor.ego_to_global_heading(h), MapFrame::Global))
    }
}
