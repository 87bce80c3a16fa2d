//! Scenario description and the canned scenarios.

use super::SimError;
use crate::ego::{Anchor, GlobalEgoState};
use crate::fusion::{FovSector, ObjectClass};
use crate::geometry::Point2;
use crate::map::{Building, DigitalMap, Lane, MapFile, MapFrame, MapParams};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

/// Grid rendering parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSimConfig {
    pub width_m: f64,
    pub height_m: f64,
    pub cell_size: f64,
    /// Grid sample period (s).
    pub period: f64,
    /// Occupied mass of object cells, uniform in `occ_mass ± occ_mass_noise`.
    pub occ_mass: f64,
    pub occ_mass_noise: f64,
    /// Standard deviation of per-cell velocity noise (m/s).
    pub vel_noise: f64,
    /// Reported velocity variance of moving cells.
    pub vel_var: f64,
    /// Reported velocity variance of static cells.
    pub static_vel_var: f64,
    /// Standard deviation of static-cell velocity noise (m/s).
    pub static_vel_noise: f64,
    /// Cells within this distance of the vehicle and not occupied are free.
    pub free_radius: f64,
    pub free_mass: f64,
    /// Building outlines are rendered as static cells of this thickness.
    pub facade_thickness: f64,
}

impl Default for GridSimConfig {
    fn default() -> Self {
        Self {
            width_m: 120.0,
            height_m: 120.0,
            cell_size: 0.15,
            period: 0.1,
            occ_mass: 0.85,
            occ_mass_noise: 0.05,
            vel_noise: 0.15,
            vel_var: 0.04,
            static_vel_var: 25.0,
            static_vel_noise: 0.05,
            free_radius: 40.0,
            free_mass: 0.8,
            facade_thickness: 0.5,
        }
    }
}

/// Tracker output model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackSimConfig {
    pub period: f64,
    /// Time of the first track sample (s).
    pub offset: f64,
    pub pos_sigma: f64,
    pub vel_sigma: f64,
    pub heading_sigma: f64,
    pub p_detect: f64,
    pub existence_min: f64,
    pub existence_max: f64,
    pub fov: FovSector,
    /// Growth of each covariance diagonal entry per second of coasting.
    pub coast_cov_rate: f64,
    /// Existence multiplier per coasted frame.
    pub coast_existence_decay: f64,
    /// Tracks at or below this existence are not reported.
    pub existence_floor: f64,
    /// Track label of an object is `label_offset + id`.
    pub label_offset: u64,
}

impl Default for TrackSimConfig {
    fn default() -> Self {
        Self {
            period: 0.08,
            offset: 0.04,
            pos_sigma: 0.1,
            vel_sigma: 0.1,
            heading_sigma: 0.01,
            p_detect: 0.98,
            existence_min: 0.85,
            existence_max: 0.99,
            fov: FovSector { half_angle_deg: 60.0, max_range: 100.0 },
            coast_cov_rate: 6.0,
            coast_existence_decay: 0.8,
            existence_floor: 0.2,
            label_offset: 100,
        }
    }
}

/// Vehicle motion: constant acceleration and turn rate from the start pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EgoSpec {
    /// Global start state; defines the ego-stationary frame.
    pub start: GlobalEgoState,
    pub v: f64,
    pub a: f64,
    pub omega: f64,
    pub accel_noise: f64,
    pub yawrate_noise: f64,
    pub speed_noise: f64,
}

impl Default for EgoSpec {
    fn default() -> Self {
        Self {
            start: GlobalEgoState { utm_e: 572_000.0, utm_n: 5_362_000.0, phi_gc: 0.3, ..GlobalEgoState::default() },
            v: 0.0,
            a: 0.0,
            omega: 0.0,
            accel_noise: 0.1,
            yawrate_noise: 0.005,
            speed_noise: 0.1,
        }
    }
}

/// One piece of a piecewise CTRA trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionSegment {
    pub duration: f64,
    pub a: f64,
    pub omega: f64,
}

/// Initial center pose and motion of a ground-truth object (ego-stationary).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectStart {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub v: f64,
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthObject {
    pub id: u64,
    pub class: ObjectClass,
    pub length: f64,
    pub width: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub start: ObjectStart,
    /// Applied in order after `t_start`; the last one persists.
    #[serde(default)]
    pub segments: Vec<MotionSegment>,
    /// Grid-only artifact with no physical counterpart.
    #[serde(default)]
    pub ghost: bool,
}

/// Track with no ground-truth twin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FalseTrackSpec {
    pub label: u64,
    pub class: ObjectClass,
    pub length: f64,
    pub width: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub start: ObjectStart,
    pub existence: f64,
}

/// Static polygon rendered into the grid; optionally blocks line of sight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub corners: Vec<Point2>,
    #[serde(default)]
    pub occludes: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSource {
    #[default]
    None,
    /// Map content in global coordinates.
    Inline { content: MapFile },
    /// Path to a map JSON file, relative to the scenario file.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub duration: f64,
    pub seed: u64,
    #[serde(default)]
    pub grid: GridSimConfig,
    #[serde(default)]
    pub tracks: TrackSimConfig,
    #[serde(default)]
    pub ego: EgoSpec,
    #[serde(default)]
    pub map: MapSource,
    #[serde(default)]
    pub map_params: MapParams,
    #[serde(default)]
    pub objects: Vec<GroundTruthObject>,
    #[serde(default)]
    pub false_tracks: Vec<FalseTrackSpec>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |s: String| Err(SimError::Invalid(s));
        if !(self.duration > 0.0) {
            return bad("duration must be positive".into());
        }
        if !(self.grid.period > 0.0 && self.tracks.period > 0.0) {
            return bad("sample periods must be positive".into());
        }
        if !(self.grid.cell_size > 0.0 && self.grid.width_m > 0.0 && self.grid.height_m > 0.0) {
            return bad("grid geometry must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.tracks.p_detect) {
            return bad("p_detect must lie in [0, 1]".into());
        }
        let mut ids = std::collections::BTreeSet::new();
        for o in &self.objects {
            if !(o.length > 0.0 && o.width > 0.0) {
                return bad(format!("object {} has a non-positive extent", o.id));
            }
            if !(o.t_end >= o.t_start) {
                return bad(format!("object {} ends before it starts", o.id));
            }
            if !ids.insert(o.id) {
                return bad(format!("duplicate object id {}", o.id));
            }
            if o.segments.iter().any(|s| !(s.duration >= 0.0)) {
                return bad(format!("object {} has a negative segment duration", o.id));
            }
        }
        for f in &self.false_tracks {
            if !(f.existence > 0.0 && f.existence < 1.0) {
                return bad(format!("false track {} existence must lie in (0, 1)", f.label));
            }
            if self.objects.iter().any(|o| self.tracks.label_offset + o.id == f.label) {
                return bad(format!("false track label {} collides with an object track label", f.label));
            }
        }
        if self.obstacles.iter().any(|o| o.corners.len() < 3) {
            return bad("obstacles need at least three corners".into());
        }
        Ok(())
    }

    pub fn anchor(&self) -> Anchor {
        Anchor::at_start(self.ego.start)
    }

    /// Number of grid frames in the scenario.
    pub fn grid_frame_count(&self) -> usize {
        (self.duration / self.grid.period - 1e-9).floor() as usize + 1
    }

    /// Reads a scenario file. File map references are made absolute.
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Io { path: path.display().to_string(), message: e.to_string() })?;
        let mut spec: ScenarioSpec =
            serde_json::from_str(&text).map_err(|e| SimError::Parse { path: path.display().to_string(), message: e.to_string() })?;
        if let MapSource::File { path: map_path } = &mut spec.map {
            if map_path.is_relative() {
                *map_path = path.parent().unwrap_or(Path::new(".")).join(&*map_path);
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    /// The map in ego-stationary coordinates.
    pub fn build_map(&self) -> Result<DigitalMap, SimError> {
        let global = match &self.map {
            MapSource::None => return Ok(DigitalMap::empty(MapFrame::EgoStationary)),
            MapSource::Inline { content } => DigitalMap::from_file_content(content.clone(), &self.map_params)?,
            MapSource::File { path } => DigitalMap::load(path, &self.map_params)?,
        };
        Ok(global.to_ego(&self.anchor())?)
    }
}

pub const CANNED: [&str; 4] = ["passing_vehicles", "roundabout_false_track", "innercity_ghost_occlusion", "nominal_following"];

/// A shipped scenario by name.
pub fn canned(name: &str) -> Option<ScenarioSpec> {
    match name {
        "passing_vehicles" => Some(passing_vehicles()),
        "roundabout_false_track" => Some(roundabout_false_track()),
        "innercity_ghost_occlusion" => Some(innercity_ghost_occlusion()),
        "nominal_following" => Some(nominal_following()),
        _ => None,
    }
}

fn base(name: &str, duration: f64) -> ScenarioSpec {
    ScenarioSpec {
        name: name.to_string(),
        duration,
        seed: 7,
        grid: GridSimConfig::default(),
        tracks: TrackSimConfig::default(),
        ego: EgoSpec::default(),
        map: MapSource::None,
        map_params: MapParams::default(),
        objects: Vec::new(),
        false_tracks: Vec::new(),
        obstacles: Vec::new(),
    }
}

fn car(id: u64, x: f64, y: f64, phi: f64, v: f64, duration: f64) -> GroundTruthObject {
    GroundTruthObject {
        id,
        class: ObjectClass::Car,
        length: 4.5,
        width: 2.0,
        t_start: 0.0,
        t_end: duration,
        start: ObjectStart { x, y, phi, v, a: 0.0, omega: 0.0 },
        segments: Vec::new(),
        ghost: false,
    }
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point2> {
    vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
}

/// Straight lane through `y` from `x_from` to `x_to`, one point per meter.
fn lane(id: u64, y: f64, x_from: f64, x_to: f64) -> Lane {
    let n = (x_to - x_from).abs().round() as usize;
    let step = (x_to - x_from) / n as f64;
    Lane { id, points: (0..=n).map(|i| [x_from + step * i as f64, y]).collect() }
}

/// Converts map content given in ego-stationary coordinates to the
/// scenario's global frame.
fn globalize(spec: &ScenarioSpec, content: MapFile) -> MapSource {
    let anchor = spec.anchor();
    let g = |p: &Point2| anchor.ego_to_global_point(*p);
    MapSource::Inline {
        content: MapFile {
            buildings: content
                .buildings
                .into_iter()
                .map(|b| Building { id: b.id, corners: b.corners.iter().map(g).collect() })
                .collect(),
            lanes: content.lanes.into_iter().map(|l| Lane { id: l.id, points: l.points.iter().map(g).collect() }).collect(),
        },
    }
}

/// A leading and an oncoming car pass each other in front of a parked
/// vehicle; walls line both road sides.
fn passing_vehicles() -> ScenarioSpec {
    let mut s = base("passing_vehicles", 10.0);
    s.objects = vec![car(1, 8.0, 0.0, 0.0, 6.0, 10.0), car(2, 58.0, 3.5, PI, 8.0, 10.0)];
    s.obstacles = vec![
        Obstacle { corners: rect(-50.0, -3.3, 55.0, -3.0), occludes: false },
        Obstacle { corners: rect(-50.0, 6.5, 55.0, 6.8), occludes: false },
    ];
    let content = MapFile { buildings: vec![], lanes: vec![lane(1, 0.0, -60.0, 70.0), lane(2, 3.5, 70.0, -60.0)] };
    s.map = globalize(&s, content);
    s
}

/// The vehicle drives behind a leading car towards a roundabout entry; a
/// radar ghost track sits on the traffic island across the lanes.
fn roundabout_false_track() -> ScenarioSpec {
    let mut s = base("roundabout_false_track", 6.0);
    s.ego.v = 10.0;
    s.objects = vec![car(1, 15.0, 0.0, 0.0, 10.0, 6.0), car(2, 85.0, 3.5, PI, 10.0, 6.0)];
    s.false_tracks = vec![FalseTrackSpec {
        label: 900,
        class: ObjectClass::Car,
        length: 4.5,
        width: 2.0,
        t_start: 0.0,
        t_end: 6.0,
        start: ObjectStart { x: 45.0, y: 1.75, phi: PI / 2.0, v: 0.3, a: 0.0, omega: 0.0 },
        existence: 0.9,
    }];
    s.obstacles = vec![Obstacle { corners: rect(38.0, 1.5, 52.0, 2.0), occludes: false }];
    s.tracks.p_detect = 1.0;
    let content = MapFile { buildings: vec![], lanes: vec![lane(1, 0.0, -20.0, 160.0), lane(2, 3.5, 160.0, -20.0)] };
    s.map = globalize(&s, content);
    s
}

/// Inner-city crossing: a glass facade produces a grid ghost inside a
/// building, and two cyclists disappear behind a parked truck.
fn innercity_ghost_occlusion() -> ScenarioSpec {
    let mut s = base("innercity_ghost_occlusion", 4.0);
    let cyclist = |id: u64, x: f64| GroundTruthObject {
        id,
        class: ObjectClass::Bicycle,
        length: 1.8,
        width: 0.6,
        t_start: 0.0,
        t_end: 4.0,
        start: ObjectStart { x, y: -6.0, phi: PI / 2.0, v: 4.0, a: 0.0, omega: 0.0 },
        segments: Vec::new(),
        ghost: false,
    };
    s.objects = vec![
        cyclist(1, 20.0),
        cyclist(2, 22.5),
        GroundTruthObject {
            id: 3,
            class: ObjectClass::Unknown,
            length: 4.0,
            width: 1.8,
            t_start: 0.0,
            t_end: 4.0,
            start: ObjectStart { x: -12.0, y: 17.0, phi: 0.0, v: 2.0, a: 0.0, omega: 0.0 },
            segments: Vec::new(),
            ghost: true,
        },
    ];
    // parked truck, perpendicular to the road
    s.obstacles = vec![Obstacle { corners: rect(11.0, 1.5, 13.5, 9.5), occludes: true }];
    let content = MapFile {
        buildings: vec![
            Building { id: 1, corners: rect(25.0, 12.0, 45.0, 24.0) },
            Building { id: 2, corners: rect(-30.0, 12.0, 5.0, 24.0) },
        ],
        lanes: vec![lane(1, 0.0, -60.0, 60.0), lane(2, -3.5, 60.0, -60.0)],
    };
    s.map = globalize(&s, content);
    s
}

/// Plain car following on a straight road with oncoming traffic.
fn nominal_following() -> ScenarioSpec {
    let mut s = base("nominal_following", 8.0);
    s.ego.v = 12.0;
    s.objects = vec![car(1, 20.0, 0.0, 0.0, 12.0, 8.0), car(2, 110.0, 3.5, PI, 10.0, 8.0)];
    let content = MapFile { buildings: vec![], lanes: vec![lane(1, 0.0, -20.0, 160.0), lane(2, 3.5, 160.0, -20.0)] };
    s.map = globalize(&s, content);
    s
}
