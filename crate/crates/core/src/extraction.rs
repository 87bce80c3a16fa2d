//! Object extraction from a dynamic occupancy grid.
//!
//! Five stages, each exposed separately:
//!
//! 1. search mask: cells with occupied mass above a floor,
//! 2. density clustering of the search mask on joint position and
//!    velocity neighborhoods,
//! 3. validation mask: cells that are confidently occupied and moving,
//! 4. cluster validation by the fraction of validated member cells,
//! 5. object creation and temporal label assignment.
//!
//! [`GridExtractor`] chains them and owns the label counter.

use crate::assignment::{hungarian_assign, CostMatrix};
use crate::dogma::{CellState, DogmaFrame};
use crate::geometry::{dist, rotate, scale, unit, OrientedBox, Point2, RefPoint};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ExtractionError {
    #[error("cluster has no moving cell; orientation undefined")]
    ZeroVelocityCluster,
    #[error("negative time step {0}")]
    NegativeDt(f64),
}

/// Thresholds of the extraction stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractionConfig {
    /// Search mask: minimum occupied mass (strict).
    pub eps_m_occ: f64,
    /// Validation: minimum occupancy probability.
    pub eps_p_occ: f64,
    /// Validation: minimum cell speed (m/s).
    pub eps_v_c: f64,
    /// Validation: maximum velocity variances.
    pub eps_var_vx: f64,
    pub eps_var_vy: f64,
    /// Validation: minimum Mahalanobis distance from zero velocity.
    pub eps_d0: f64,
    /// Clustering: position neighborhood (m).
    pub eps_pos: f64,
    /// Clustering: velocity neighborhood (m/s).
    pub eps_vel: f64,
    /// Minimum fraction of validated cells per cluster.
    pub eps_ratio: f64,
    /// Core-point threshold, counting the cell itself.
    pub min_cluster_cells: usize,
    /// Label association gate between predicted and current objects (m).
    pub cv_gate: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            eps_m_occ: 0.3,
            eps_p_occ: 0.8,
            eps_v_c: 0.3,
            eps_var_vx: 5.0,
            eps_var_vy: 5.0,
            eps_d0: 9.0,
            eps_pos: 1.2,
            eps_vel: 1.0,
            eps_ratio: 0.1,
            min_cluster_cells: 4,
            cv_gate: 2.0,
        }
    }
}

/// A cluster of search-mask cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCluster {
    /// Frame cell indices, ascending.
    pub member_indices: Vec<usize>,
    /// Members that are also in the validation mask.
    pub validated_count: usize,
}

impl CellCluster {
    pub fn ratio(&self) -> f64 {
        self.validated_count as f64 / self.member_indices.len() as f64
    }
}

/// Object extracted from the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridObject {
    pub ref_pos: Point2,
    pub ref_label: RefPoint,
    pub speed: f64,
    pub orientation: f64,
    pub bbox: OrientedBox,
    /// `None` until labels are assigned.
    pub label: Option<u64>,
    pub timestamp: f64,
    pub cell_count: usize,
}

/// Stage 1: cells with `m_occ > eps_m_occ`, ascending.
pub fn build_search_mask(frame: &DogmaFrame, cfg: &ExtractionConfig) -> Vec<usize> {
    frame
        .cells()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.m_occ > cfg.eps_m_occ)
        .map(|(i, _)| i)
        .collect()
}

/// Per-cell validation predicate. Cells with a singular velocity
/// covariance fail.
pub fn passes_validation(cell: &CellState, cfg: &ExtractionConfig) -> bool {
    cell.occupancy_probability() >= cfg.eps_p_occ
        && cell.speed() >= cfg.eps_v_c
        && cell.vel_cov[0][0] <= cfg.eps_var_vx
        && cell.vel_cov[1][1] <= cfg.eps_var_vy
        && cell.zero_velocity_mahalanobis().is_ok_and(|d0| d0 >= cfg.eps_d0)
}

/// Stage 3: the subset of `search_mask` meeting every validation condition.
pub fn build_validation_mask(frame: &DogmaFrame, search_mask: &[usize], cfg: &ExtractionConfig) -> Vec<usize> {
    search_mask.iter().copied().filter(|&i| passes_validation(frame.cell(i), cfg)).collect()
}

/// Input point for the joint position/velocity density clustering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterPoint {
    pub pos: Point2,
    pub vel: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mark {
    Unvisited,
    Noise,
    Cluster(usize),
}

struct SpatialHash {
    bucket: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl SpatialHash {
    fn new(points: &[ClusterPoint], bucket: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(p.pos, bucket)).or_default().push(i);
        }
        Self { bucket, buckets }
    }

    fn key(p: Point2, bucket: f64) -> (i64, i64) {
        ((p[0] / bucket).floor() as i64, (p[1] / bucket).floor() as i64)
    }

    /// Joint ε-neighbors of point `i` (including itself), ascending.
    fn neighbors(&self, points: &[ClusterPoint], i: usize, eps_pos: f64, eps_vel: f64, out: &mut Vec<usize>) {
        out.clear();
        let p = points[i];
        let (kx, ky) = Self::key(p.pos, self.bucket);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = self.buckets.get(&(kx + dx, ky + dy)) {
                    for &j in ids {
                        let q = points[j];
                        if dist(p.pos, q.pos) <= eps_pos && dist(p.vel, q.vel) <= eps_vel {
                            out.push(j);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
    }
}

/// Density clustering where two points are neighbors iff both their
/// position and velocity distances are within bounds. Points are visited
/// in index order and expanded breadth first in ascending neighbor order,
/// so labels are deterministic. Returns a cluster id per point (`None` for
/// noise), ids numbered in creation order.
pub fn dbscan(points: &[ClusterPoint], eps_pos: f64, eps_vel: f64, min_pts: usize) -> Vec<Option<usize>> {
    let mut marks = vec![Mark::Unvisited; points.len()];
    if points.is_empty() {
        return Vec::new();
    }
    // zero eps_pos would make an empty bucket size; any positive size works
    let hash = SpatialHash::new(points, eps_pos.max(1e-9));
    let mut next = 0usize;
    let mut nb = Vec::new();
    let mut queue = VecDeque::new();
    for i in 0..points.len() {
        if marks[i] != Mark::Unvisited {
            continue;
        }
        hash.neighbors(points, i, eps_pos, eps_vel, &mut nb);
        if nb.len() < min_pts {
            marks[i] = Mark::Noise;
            continue;
        }
        let id = next;
        next += 1;
        marks[i] = Mark::Cluster(id);
        queue.clear();
        queue.extend(nb.iter().copied());
        while let Some(j) = queue.pop_front() {
            match marks[j] {
                Mark::Noise => {
                    marks[j] = Mark::Cluster(id);
                    continue;
                }
                Mark::Cluster(_) => continue,
                Mark::Unvisited => {}
            }
            marks[j] = Mark::Cluster(id);
            hash.neighbors(points, j, eps_pos, eps_vel, &mut nb);
            if nb.len() >= min_pts {
                queue.extend(nb.iter().copied());
            }
        }
    }
    marks
        .into_iter()
        .map(|m| match m {
            Mark::Cluster(id) => Some(id),
            _ => None,
        })
        .collect()
}

/// Stage 2: clusters over the search-mask cells. Noise cells are dropped.
pub fn cluster_cells(frame: &DogmaFrame, search_mask: &[usize], cfg: &ExtractionConfig) -> Vec<CellCluster> {
    let points: Vec<ClusterPoint> = search_mask
        .iter()
        .map(|&i| ClusterPoint { pos: frame.cell_position(i), vel: frame.cell(i).vel })
        .collect();
    let labels = dbscan(&points, cfg.eps_pos, cfg.eps_vel, cfg.min_cluster_cells);
    let count = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut clusters = vec![CellCluster { member_indices: Vec::new(), validated_count: 0 }; count];
    for (k, label) in labels.iter().enumerate() {
        if let Some(id) = label {
            clusters[*id].member_indices.push(search_mask[k]);
        }
    }
    clusters
}

/// Stage 4: counts validated members and keeps clusters whose ratio
/// reaches `eps_ratio`.
pub fn validate_clusters(clusters: Vec<CellCluster>, validation_mask: &[usize], cfg: &ExtractionConfig) -> Vec<CellCluster> {
    clusters
        .into_iter()
        .map(|mut c| {
            c.validated_count = c.member_indices.iter().filter(|i| validation_mask.binary_search(i).is_ok()).count();
            c
        })
        .filter(|c| !c.member_indices.is_empty() && c.ratio() >= cfg.eps_ratio)
        .collect()
}

/// Builds one unlabeled object from a cluster.
///
/// Orientation is the circular mean of the moving member cells, speed the
/// mean cell speed. The box is the tightest rectangle at that orientation
/// around the member cell centers, grown by half a cell on every side. The
/// reference point is the box point nearest to the vehicle.
pub fn create_object(cluster: &CellCluster, frame: &DogmaFrame) -> Result<GridObject, ExtractionError> {
    let mut sum_dir = [0.0, 0.0];
    let mut sum_speed = 0.0;
    for &i in &cluster.member_indices {
        let c = frame.cell(i);
        let s = c.speed();
        sum_speed += s;
        if s > 0.0 {
            sum_dir[0] += c.vel[0] / s;
            sum_dir[1] += c.vel[1] / s;
        }
    }
    if sum_dir == [0.0, 0.0] {
        return Err(ExtractionError::ZeroVelocityCluster);
    }
    let orientation = sum_dir[1].atan2(sum_dir[0]);
    let speed = sum_speed / cluster.member_indices.len() as f64;

    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for &i in &cluster.member_indices {
        let local = rotate(frame.cell_position(i), -orientation);
        for k in 0..2 {
            lo[k] = lo[k].min(local[k]);
            hi[k] = hi[k].max(local[k]);
        }
    }
    let half = frame.cell_size / 2.0;
    let center_local = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let length = hi[0] - lo[0] + 2.0 * half;
    let width = hi[1] - lo[1] + 2.0 * half;
    let bbox = OrientedBox::from_center(rotate(center_local, orientation), orientation, length, width);

    let ego = frame.ego_pose().position();
    let mut ref_label = RefPoint::B;
    let mut best = f64::INFINITY;
    for label in RefPoint::ALL {
        let d = dist(bbox.point(label), ego);
        if d < best {
            best = d;
            ref_label = label;
        }
    }
    Ok(GridObject {
        ref_pos: bbox.point(ref_label),
        ref_label,
        speed,
        orientation,
        bbox,
        label: None,
        timestamp: frame.timestamp,
        cell_count: cluster.member_indices.len(),
    })
}

/// Stage 5a: objects for all clusters; clusters without any moving cell
/// are skipped.
pub fn create_objects(clusters: &[CellCluster], frame: &DogmaFrame) -> Vec<GridObject> {
    clusters
        .iter()
        .filter_map(|c| match create_object(c, frame) {
            Ok(o) => Some(o),
            Err(e) => {
                log::debug!("skipping cluster of {} cells: {e}", c.member_indices.len());
                None
            }
        })
        .collect()
}

/// Constant-velocity prediction of an object's box by `dt`.
pub fn predict_cv(obj: &GridObject, dt: f64) -> OrientedBox {
    obj.bbox.translated(scale(unit(obj.orientation), obj.speed * dt))
}

/// Stage 5b: previous objects are predicted by `dt`, matched to the
/// current ones on reference-point distance, and matched objects inherit
/// the previous label. Unmatched objects draw fresh labels from `counter`.
pub fn assign_labels(
    mut current: Vec<GridObject>,
    previous: &[GridObject],
    dt: f64,
    cfg: &ExtractionConfig,
    counter: &mut u64,
) -> Result<Vec<GridObject>, ExtractionError> {
    if !(dt >= 0.0) {
        return Err(ExtractionError::NegativeDt(dt));
    }
    let predicted: Vec<OrientedBox> = previous.iter().map(|p| predict_cv(p, dt)).collect();
    let m = CostMatrix::gated(
        current.len(),
        previous.len(),
        current
            .iter()
            .flat_map(|c| predicted.iter().map(move |b| dist(c.ref_pos, b.point(c.ref_label))))
            .collect(),
        cfg.cv_gate,
    );
    let assignment = hungarian_assign(&m);
    for (k, obj) in current.iter_mut().enumerate() {
        obj.label = match assignment.col_for_row(k).and_then(|j| previous[j].label) {
            Some(l) => Some(l),
            None => {
                let l = *counter;
                *counter += 1;
                Some(l)
            }
        };
    }
    Ok(current)
}

/// Intermediate products of one extraction pass.
#[derive(Debug, Clone, Default)]
pub struct ExtractionTrace {
    pub search_mask: Vec<usize>,
    pub validation_mask: Vec<usize>,
    pub clusters: Vec<CellCluster>,
    pub kept: Vec<CellCluster>,
}

/// Stateful extractor: keeps the last labeled objects and the label
/// counter. Processes one frame at a time.
#[derive(Debug, Clone)]
pub struct GridExtractor {
    pub cfg: ExtractionConfig,
    next_label: u64,
    previous: Vec<GridObject>,
    previous_time: Option<f64>,
}

impl GridExtractor {
    pub fn new(cfg: ExtractionConfig) -> Self {
        Self { cfg, next_label: 1, previous: Vec::new(), previous_time: None }
    }

    pub fn extract(&mut self, frame: &DogmaFrame) -> Result<Vec<GridObject>, ExtractionError> {
        self.extract_traced(frame).map(|(objs, _)| objs)
    }

    pub fn extract_traced(&mut self, frame: &DogmaFrame) -> Result<(Vec<GridObject>, ExtractionTrace), ExtractionError> {
        let cfg = &self.cfg;
        let search_mask = build_search_mask(frame, cfg);
        let clusters = cluster_cells(frame, &search_mask, cfg);
        let validation_mask = build_validation_mask(frame, &search_mask, cfg);
        let kept = validate_clusters(clusters.clone(), &validation_mask, cfg);
        let objects = create_objects(&kept, frame);
        let dt = self.previous_time.map_or(0.0, |t| frame.timestamp - t);
        let labeled = assign_labels(objects, &self.previous, dt, cfg, &mut self.next_label)?;
        self.previous = labeled.clone();
        self.previous_time = Some(frame.timestamp);
        Ok((labeled, ExtractionTrace { search_mask, validation_mask, clusters, kept }))
    }
}
