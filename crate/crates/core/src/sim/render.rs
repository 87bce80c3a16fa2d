//! Rendering of ground truth into grid frames, track lists and IMU samples.
//!
//! Every output is a pure function of the scenario and the sample index;
//! randomness comes from ChaCha streams keyed by (seed, index, stream).

use super::spec::{GroundTruthObject, ObjectStart, ScenarioSpec};
use super::SimError;
use crate::dogma::{CellState, DogmaFrame};
use crate::ego::{ctra_predict, EgoState, ImuSample};
use crate::fusion::{ObjectClass, TrackState};
use crate::geometry::{dist, segments_intersect, OrientedBox, Point2, Pose2, RefPoint};
use crate::map::{Building, DigitalMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const STREAM_OBSTACLE: u64 = 1 << 8;
const STREAM_FACADE: u64 = 2 << 8;
const STREAM_OBJECT: u64 = 3 << 8;
const STREAM_IMU: u64 = 4 << 8;
const STREAM_TRACK: u64 = 1 << 16;
const STREAM_FALSE: u64 = 2 << 16;

fn rng_for(seed: u64, index: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((index << 24) | stream);
    rng
}

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).map_or(0.0, |n| n.sample(rng))
    } else {
        0.0
    }
}

/// Ground-truth object state at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthState {
    pub id: u64,
    pub class: ObjectClass,
    pub center: Point2,
    pub phi: f64,
    pub v: f64,
    pub bbox: OrientedBox,
    pub ghost: bool,
}

fn start_state(s: &ObjectStart, t: f64) -> EgoState {
    EgoState { x: s.x, y: s.y, v: s.v, a: s.a, phi: s.phi, omega: s.omega, timestamp: t }
}

/// Center state of an object at `t`, or `None` outside its lifetime.
///
/// Segments apply in order from `t_start`, each overriding acceleration
/// and turn rate; the last one persists. Without segments the start
/// values hold.
pub fn truth_at(obj: &GroundTruthObject, t: f64) -> Option<TruthState> {
    if t < obj.t_start || t > obj.t_end {
        return None;
    }
    let mut state = start_state(&obj.start, obj.t_start);
    let mut remaining = t - obj.t_start;
    for (k, seg) in obj.segments.iter().enumerate() {
        state.a = seg.a;
        state.omega = seg.omega;
        let last = k + 1 == obj.segments.len();
        let step = if last { remaining } else { remaining.min(seg.duration) };
        state = ctra_predict(&state, step).ok()?;
        remaining -= step;
        if remaining <= 0.0 {
            break;
        }
    }
    if remaining > 0.0 {
        state = ctra_predict(&state, remaining).ok()?;
    }
    Some(TruthState {
        id: obj.id,
        class: obj.class,
        center: [state.x, state.y],
        phi: state.phi,
        v: state.v,
        bbox: OrientedBox::from_center([state.x, state.y], state.phi, obj.length, obj.width),
        ghost: obj.ghost,
    })
}

/// Vehicle state at `t` in ego-stationary coordinates.
pub fn ego_state_at(spec: &ScenarioSpec, t: f64) -> EgoState {
    let s = EgoState { x: 0.0, y: 0.0, v: spec.ego.v, a: spec.ego.a, phi: 0.0, omega: spec.ego.omega, timestamp: 0.0 };
    ctra_predict(&s, t).unwrap_or(s)
}

pub fn grid_time(spec: &ScenarioSpec, index: usize) -> f64 {
    index as f64 * spec.grid.period
}

pub fn track_time(spec: &ScenarioSpec, index: usize) -> f64 {
    spec.tracks.offset + index as f64 * spec.tracks.period
}

/// Number of track samples within the scenario duration.
pub fn track_frame_count(spec: &ScenarioSpec) -> usize {
    if spec.tracks.offset > spec.duration {
        return 0;
    }
    ((spec.duration - spec.tracks.offset) / spec.tracks.period + 1e-9).floor() as usize + 1
}

fn polygon(corners: &[Point2]) -> Building {
    Building { id: 0, corners: corners.to_vec() }
}

/// Whether the line of sight from `from` to `to` is blocked by an
/// occluding obstacle.
pub fn line_blocked(spec: &ScenarioSpec, from: Point2, to: Point2) -> bool {
    spec.obstacles.iter().filter(|o| o.occludes).any(|o| {
        let n = o.corners.len();
        polygon(&o.corners).contains(to)
            || (0..n).any(|i| segments_intersect(from, to, o.corners[i], o.corners[(i + 1) % n]))
    })
}

/// Per-frame rendering facts used by evaluation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RenderInfo {
    pub timestamp: f64,
    pub ego_pose: Pose2,
    /// Objects present in the frame (not occluded), ghosts included.
    pub truths: Vec<TruthState>,
    /// Rendered cell count per object id.
    pub cell_counts: BTreeMap<u64, usize>,
    /// Centroid of the rendered cells per object id.
    pub visible_centers: BTreeMap<u64, Point2>,
    /// Objects whose footprint crosses the grid border.
    pub clipped: Vec<u64>,
    /// Objects hidden by an occluder.
    pub occluded: Vec<u64>,
}

/// Cell index range (rows, cols) covering an axis-aligned box, clipped.
fn cell_range(frame: &DogmaFrame, lo: Point2, hi: Point2) -> Option<(std::ops::Range<usize>, std::ops::Range<usize>)> {
    let a = frame.cell_size;
    let c0 = ((lo[0] - frame.origin[0]) / a).floor().max(0.0) as usize;
    let r0 = ((lo[1] - frame.origin[1]) / a).floor().max(0.0) as usize;
    let c1 = (((hi[0] - frame.origin[0]) / a).ceil().max(0.0) as usize).min(frame.cols());
    let r1 = (((hi[1] - frame.origin[1]) / a).ceil().max(0.0) as usize).min(frame.rows());
    (c0 < c1 && r0 < r1).then_some((r0..r1, c0..c1))
}

fn bounds(points: &[Point2]) -> (Point2, Point2) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

fn static_cell(rng: &mut ChaCha8Rng, spec: &ScenarioSpec) -> CellState {
    let g = &spec.grid;
    let m = (g.occ_mass + rng.random_range(-1.0..=1.0) * g.occ_mass_noise).clamp(0.0, 1.0);
    CellState {
        m_occ: m,
        m_free: 0.0,
        vel: [gauss(rng, g.static_vel_noise), gauss(rng, g.static_vel_noise)],
        vel_cov: [[g.static_vel_var, 0.0], [0.0, g.static_vel_var]],
    }
}

/// Renders the grid sample with index `index` (time `index · period`).
///
/// Cells near the vehicle start free, static obstacles and building
/// facades become occupied with near-zero velocity and a wide velocity
/// covariance, and visible objects become occupied with their velocity
/// plus noise and a tight covariance. A cell belongs to a footprint when
/// its center lies inside it.
pub fn render_dogma_frame(spec: &ScenarioSpec, map: &DigitalMap, index: usize) -> Result<(DogmaFrame, RenderInfo), SimError> {
    let t = grid_time(spec, index);
    if !(0.0..=spec.duration + 1e-9).contains(&t) {
        return Err(SimError::TimeOutOfRange(t));
    }
    let g = &spec.grid;
    let ego = ego_state_at(spec, t);
    let ego_pos = [ego.x, ego.y];
    let origin = [ego.x - g.width_m / 2.0, ego.y - g.height_m / 2.0];
    let mut frame = DogmaFrame::unknown(g.width_m, g.height_m, g.cell_size, t, origin, Pose2::new(g.width_m / 2.0, g.height_m / 2.0, ego.phi))?;
    let seed = spec.seed;
    let idx = index as u64;

    let free = CellState { m_occ: 0.0, m_free: g.free_mass, vel: [0.0, 0.0], vel_cov: [[g.static_vel_var, 0.0], [0.0, g.static_vel_var]] };
    let r = g.free_radius;
    if let Some((rows, cols)) = cell_range(&frame, [ego.x - r, ego.y - r], [ego.x + r, ego.y + r]) {
        for row in rows {
            for col in cols.clone() {
                let i = frame.index(row, col);
                if dist(frame.cell_position(i), ego_pos) <= r {
                    frame.set_cell(i, free)?;
                }
            }
        }
    }

    let paint_static = |frame: &mut DogmaFrame, stream: u64, inside: &dyn Fn(Point2) -> bool, lo: Point2, hi: Point2| -> Result<(), SimError> {
        let mut rng = rng_for(seed, idx, stream);
        if let Some((rows, cols)) = cell_range(frame, lo, hi) {
            for row in rows {
                for col in cols.clone() {
                    let i = frame.index(row, col);
                    if inside(frame.cell_position(i)) {
                        frame.set_cell(i, static_cell(&mut rng, spec))?;
                    }
                }
            }
        }
        Ok(())
    };
    for (k, o) in spec.obstacles.iter().enumerate() {
        let poly = polygon(&o.corners);
        let (lo, hi) = bounds(&o.corners);
        paint_static(&mut frame, STREAM_OBSTACLE + k as u64, &|p| poly.contains(p), lo, hi)?;
    }
    for (k, b) in map.buildings.iter().enumerate() {
        let (lo, hi) = bounds(&b.corners);
        let th = g.facade_thickness;
        paint_static(&mut frame, STREAM_FACADE + k as u64, &|p| b.contains(p) && b.boundary_distance(p) <= th, lo, hi)?;
    }

    let mut info = RenderInfo { timestamp: t, ego_pose: ego.pose(), ..RenderInfo::default() };
    let (grid_lo, grid_hi) = (origin, [origin[0] + g.width_m, origin[1] + g.height_m]);
    for (k, obj) in spec.objects.iter().enumerate() {
        let Some(truth) = truth_at(obj, t) else { continue };
        if line_blocked(spec, ego_pos, truth.center) {
            info.occluded.push(obj.id);
            continue;
        }
        let corners = truth.bbox.corners;
        if corners.iter().any(|c| c[0] < grid_lo[0] || c[0] > grid_hi[0] || c[1] < grid_lo[1] || c[1] > grid_hi[1]) {
            info.clipped.push(obj.id);
        }
        let vel = [truth.v * truth.phi.cos(), truth.v * truth.phi.sin()];
        let mut rng = rng_for(seed, idx, STREAM_OBJECT + k as u64);
        let (lo, hi) = bounds(&corners);
        let mut count = 0;
        let mut sum = [0.0, 0.0];
        if let Some((rows, cols)) = cell_range(&frame, lo, hi) {
            for row in rows {
                for col in cols.clone() {
                    let i = frame.index(row, col);
                    let p = frame.cell_position(i);
                    if truth.bbox.contains(p, 0.0) {
                        sum = [sum[0] + p[0], sum[1] + p[1]];
                        let m = (g.occ_mass + rng.random_range(-1.0..=1.0) * g.occ_mass_noise).clamp(0.0, 1.0);
                        let cell = CellState {
                            m_occ: m,
                            m_free: 0.0,
                            vel: [vel[0] + gauss(&mut rng, g.vel_noise), vel[1] + gauss(&mut rng, g.vel_noise)],
                            vel_cov: [[g.vel_var, 0.0], [0.0, g.vel_var]],
                        };
                        frame.set_cell(i, cell)?;
                        count += 1;
                    }
                }
            }
        }
        info.cell_counts.insert(obj.id, count);
        if count > 0 {
            info.visible_centers.insert(obj.id, [sum[0] / count as f64, sum[1] / count as f64]);
        }
        info.truths.push(truth);
    }
    Ok((frame, info))
}

/// Facts about one track sample.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackRenderInfo {
    pub timestamp: f64,
    pub ego_pose: Pose2,
    /// Track label to ground-truth id.
    pub truth_of: BTreeMap<u64, u64>,
    /// Labels of injected false tracks present in this sample.
    pub false_labels: Vec<u64>,
    /// Objects hidden by an occluder at this sample.
    pub occluded: Vec<u64>,
    /// Tracks reported from prediction only.
    pub coasting: Vec<u64>,
}

fn nearest_ref(bbox: &OrientedBox, p: Point2) -> RefPoint {
    let mut best = (RefPoint::B, f64::INFINITY);
    for label in RefPoint::ALL {
        let d = dist(bbox.point(label), p);
        if d < best.1 {
            best = (label, d);
        }
    }
    best.0
}

/// Frames a coasting track can survive before its existence drops below
/// the floor.
fn coast_horizon(spec: &ScenarioSpec) -> usize {
    let c = &spec.tracks;
    if !(c.coast_existence_decay < 1.0 && c.coast_existence_decay > 0.0) {
        return 50;
    }
    let n = ((c.existence_floor / c.existence_max).ln() / c.coast_existence_decay.ln()).ceil();
    (n.max(0.0) as usize + 1).min(50)
}

/// Track sample `index`: detected objects in the tracker field of view,
/// coasting tracks for recently lost ones, and injected false tracks.
pub fn render_track_frame(spec: &ScenarioSpec, index: usize) -> Result<(Vec<TrackState>, TrackRenderInfo), SimError> {
    let t = track_time(spec, index);
    if !(0.0..=spec.duration + 1e-9).contains(&t) {
        return Err(SimError::TimeOutOfRange(t));
    }
    let c = &spec.tracks;
    let ego = ego_state_at(spec, t);
    let mut info = TrackRenderInfo { timestamp: t, ego_pose: ego.pose(), ..TrackRenderInfo::default() };
    let mut tracks = Vec::new();

    let observed = |obj: &GroundTruthObject, j: usize| -> Option<TruthState> {
        let tj = track_time(spec, j);
        let truth = truth_at(obj, tj)?;
        let e = ego_state_at(spec, tj);
        if !c.fov.contains(&e.pose(), truth.center) || line_blocked(spec, [e.x, e.y], truth.center) {
            return None;
        }
        let mut rng = rng_for(spec.seed, j as u64, STREAM_TRACK + obj.id * 4);
        rng.random_bool(c.p_detect).then_some(truth)
    };

    let horizon = coast_horizon(spec);
    for obj in spec.objects.iter().filter(|o| !o.ghost) {
        if let Some(truth) = truth_at(obj, t) {
            if line_blocked(spec, [ego.x, ego.y], truth.center) {
                info.occluded.push(obj.id);
            }
        } else {
            continue;
        }
        let Some((k0, seen)) = (0..=horizon.min(index)).find_map(|back| observed(obj, index - back).map(|s| (index - back, s)))
        else {
            continue;
        };
        let mut rng = rng_for(spec.seed, k0 as u64, STREAM_TRACK + obj.id * 4 + 1);
        let r0 = rng.random_range(c.existence_min..=c.existence_max);
        let coasted = (index - k0) as i32;
        let existence = r0 * c.coast_existence_decay.powi(coasted);
        if existence <= c.existence_floor {
            continue;
        }
        let center = [seen.center[0] + gauss(&mut rng, c.pos_sigma), seen.center[1] + gauss(&mut rng, c.pos_sigma)];
        let v = seen.v + gauss(&mut rng, c.vel_sigma);
        let phi = seen.phi + gauss(&mut rng, c.heading_sigma);
        let dt = t - track_time(spec, k0);
        let center = [center[0] + v * phi.cos() * dt, center[1] + v * phi.sin() * dt];
        let growth = c.coast_cov_rate * dt;
        let pv = c.pos_sigma * c.pos_sigma + growth;
        let vv = c.vel_sigma * c.vel_sigma + growth;
        let bbox = OrientedBox::from_center(center, phi, obj.length, obj.width);
        let ref_label = nearest_ref(&bbox, [ego.x, ego.y]);
        let label = c.label_offset + obj.id;
        if coasted > 0 {
            info.coasting.push(label);
        }
        info.truth_of.insert(label, obj.id);
        tracks.push(TrackState {
            ref_pos: bbox.point(ref_label),
            ref_label,
            v,
            a: obj.start.a,
            phi,
            omega: obj.start.omega,
            bbox,
            pos_cov: [[pv, 0.0], [0.0, pv]],
            vel_cov: [[vv, 0.0], [0.0, vv]],
            existence,
            class: obj.class,
            label,
            timestamp: t,
        });
    }

    for (k, f) in spec.false_tracks.iter().enumerate() {
        if t < f.t_start || t > f.t_end {
            continue;
        }
        let s = ctra_predict(&start_state(&f.start, f.t_start), t - f.t_start)?;
        let mut rng = rng_for(spec.seed, index as u64, STREAM_FALSE + k as u64);
        let center = [s.x + gauss(&mut rng, c.pos_sigma), s.y + gauss(&mut rng, c.pos_sigma)];
        let phi = s.phi + gauss(&mut rng, c.heading_sigma);
        let bbox = OrientedBox::from_center(center, phi, f.length, f.width);
        let ref_label = nearest_ref(&bbox, [ego.x, ego.y]);
        let pv = c.pos_sigma * c.pos_sigma;
        let vv = c.vel_sigma * c.vel_sigma;
        info.false_labels.push(f.label);
        tracks.push(TrackState {
            ref_pos: bbox.point(ref_label),
            ref_label,
            v: s.v,
            a: s.a,
            phi,
            omega: s.omega,
            bbox,
            pos_cov: [[pv, 0.0], [0.0, pv]],
            vel_cov: [[vv, 0.0], [0.0, vv]],
            existence: f.existence,
            class: f.class,
            label: f.label,
            timestamp: t,
        });
    }
    Ok((tracks, info))
}

/// Inertial sample at grid index `index`.
pub fn imu_sample(spec: &ScenarioSpec, index: usize) -> ImuSample {
    let t = grid_time(spec, index);
    let s = ego_state_at(spec, t);
    let mut rng = rng_for(spec.seed, index as u64, STREAM_IMU);
    ImuSample {
        accel_meas: s.a + gauss(&mut rng, spec.ego.accel_noise),
        yawrate_meas: s.omega + gauss(&mut rng, spec.ego.yawrate_noise),
        speed_meas: s.v + gauss(&mut rng, spec.ego.speed_noise),
        timestamp: t,
    }
}
