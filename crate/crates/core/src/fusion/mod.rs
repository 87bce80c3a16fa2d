//! High-level fusion of grid objects and tracks into meta objects.
//!
//! Envelopes of samples from either module pass through a time-ordered
//! queue. Each candidate is associated to the meta set, scored by the
//! product of a physical, a module and a map factor, and creates or
//! updates a meta object only if that product reaches `eta_min`.

pub mod confidence;
pub mod queue;

pub use confidence::{
    clamp_factor, combined_confidence, map_confidence, module_confidence, physical_confidence, Confirmation,
    MotionPrior, FACTOR_MAX, FACTOR_MIN,
};
pub use queue::EnvelopeQueue;

use crate::assignment::{hungarian_assign, CostMatrix};
use crate::extraction::GridObject;
use crate::geometry::{dist, scale, unit, wrap_angle, OrientedBox, Point2, Pose2, RefPoint};
use crate::map::DigitalMap;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("sample at t={timestamp} is too far behind the watermark {watermark}")]
    OutOfOrder { timestamp: f64, watermark: f64 },
    #[error("non-positive time step {0}")]
    NonPositiveDt(f64),
    #[error("map is not in ego-stationary coordinates")]
    MapFrame,
    #[error("invalid fusion config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Module {
    Grid,
    Tracker,
}

impl Module {
    pub fn other(self) -> Self {
        match self {
            Module::Grid => Module::Tracker,
            Module::Tracker => Module::Grid,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Module::Grid => "grid",
            Module::Tracker => "tracker",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    Car,
    Truck,
    Motorcycle,
    Bicycle,
    Pedestrian,
    #[default]
    Unknown,
}

impl ObjectClass {
    /// Classes that are expected to follow lanes.
    pub fn is_vehicle(self) -> bool {
        matches!(self, ObjectClass::Car | ObjectClass::Truck | ObjectClass::Motorcycle)
    }
}

/// One track of the multi-object tracker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    pub ref_pos: Point2,
    pub ref_label: RefPoint,
    pub v: f64,
    pub a: f64,
    pub phi: f64,
    pub omega: f64,
    pub bbox: OrientedBox,
    pub pos_cov: [[f64; 2]; 2],
    pub vel_cov: [[f64; 2]; 2],
    pub existence: f64,
    pub class: ObjectClass,
    pub label: u64,
    pub timestamp: f64,
}

impl TrackState {
    /// Trace of the position and velocity covariance blocks.
    pub fn cov_trace(&self) -> f64 {
        self.pos_cov[0][0] + self.pos_cov[1][1] + self.vel_cov[0][0] + self.vel_cov[1][1]
    }
}

/// A sample under evaluation, from either module.
#[derive(Debug, Clone, Copy)]
pub enum Candidate<'a> {
    Grid(&'a GridObject),
    Track(&'a TrackState),
}

impl Candidate<'_> {
    pub fn module(&self) -> Module {
        match self {
            Candidate::Grid(_) => Module::Grid,
            Candidate::Track(_) => Module::Tracker,
        }
    }

    pub fn source_label(&self) -> Option<u64> {
        match self {
            Candidate::Grid(g) => g.label,
            Candidate::Track(t) => Some(t.label),
        }
    }

    pub fn ref_pos(&self) -> Point2 {
        match self {
            Candidate::Grid(g) => g.ref_pos,
            Candidate::Track(t) => t.ref_pos,
        }
    }

    pub fn ref_label(&self) -> RefPoint {
        match self {
            Candidate::Grid(g) => g.ref_label,
            Candidate::Track(t) => t.ref_label,
        }
    }

    pub fn bbox(&self) -> &OrientedBox {
        match self {
            Candidate::Grid(g) => &g.bbox,
            Candidate::Track(t) => &t.bbox,
        }
    }

    pub fn speed(&self) -> f64 {
        match self {
            Candidate::Grid(g) => g.speed,
            Candidate::Track(t) => t.v.abs(),
        }
    }

    pub fn heading(&self) -> f64 {
        match self {
            Candidate::Grid(g) => g.orientation,
            Candidate::Track(t) => t.phi,
        }
    }

    pub fn velocity(&self) -> [f64; 2] {
        match self {
            Candidate::Grid(g) => scale(unit(g.orientation), g.speed),
            Candidate::Track(t) => scale(unit(t.phi), t.v),
        }
    }

    pub fn timestamp(&self) -> f64 {
        match self {
            Candidate::Grid(g) => g.timestamp,
            Candidate::Track(t) => t.timestamp,
        }
    }

    pub fn prior(&self) -> MotionPrior {
        MotionPrior { bbox: *self.bbox(), velocity: self.velocity(), timestamp: self.timestamp() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "module", content = "objects", rename_all = "snake_case")]
pub enum Payload {
    Grid(Vec<GridObject>),
    Tracks(Vec<TrackState>),
}

/// A batch of samples from one module at one timestamp, with the vehicle
/// pose at that time (ego-stationary coordinates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEnvelope {
    pub timestamp: f64,
    pub ego_pose: Pose2,
    pub payload: Payload,
}

impl SampleEnvelope {
    pub fn module(&self) -> Module {
        match self.payload {
            Payload::Grid(_) => Module::Grid,
            Payload::Tracks(_) => Module::Tracker,
        }
    }

    pub fn candidates(&self) -> Vec<Candidate<'_>> {
        match &self.payload {
            Payload::Grid(objs) => objs.iter().map(Candidate::Grid).collect(),
            Payload::Tracks(tracks) => tracks.iter().map(Candidate::Track).collect(),
        }
    }
}

/// Sensor coverage sector around the vehicle heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FovSector {
    pub half_angle_deg: f64,
    pub max_range: f64,
}

impl FovSector {
    pub fn contains(&self, ego: &Pose2, p: Point2) -> bool {
        let dx = p[0] - ego.x;
        let dy = p[1] - ego.y;
        if dx.hypot(dy) > self.max_range {
            return false;
        }
        if self.half_angle_deg >= 180.0 {
            return true;
        }
        wrap_angle(dy.atan2(dx) - ego.phi).abs() <= self.half_angle_deg.to_radians()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    /// Creation and update gate on the combined confidence.
    pub eta_min: f64,
    pub max_accel: f64,
    pub max_speed: f64,
    /// Positional slack of the jump term (m).
    pub jump_gate: f64,
    pub stale_timeout: f64,
    /// How far behind the watermark an envelope may arrive (s).
    pub lateness: f64,
    pub confirm_bonus_high: f64,
    pub confirm_bonus_low: f64,
    pub cov_scale: f64,
    pub existence_scale: f64,
    pub building_penalty: f64,
    /// Buildings are eroded by this much before the containment test (m).
    pub building_inset: f64,
    pub heading_sigma_deg: f64,
    pub offset_sigma: f64,
    pub lane_neutral: f64,
    /// Search radius for the lane rectangle of a candidate (m).
    pub rect_gate: f64,
    /// Reference-point association gate between candidates and metas (m).
    pub assoc_gate: f64,
    /// Weight of the candidate extent when smoothing meta extents.
    pub extent_smoothing: f64,
    pub fov_tracker: FovSector,
    pub fov_grid: FovSector,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            eta_min: 0.35,
            max_accel: 6.0,
            max_speed: 60.0,
            jump_gate: 2.0,
            stale_timeout: 0.5,
            lateness: 0.5,
            confirm_bonus_high: 1.5,
            confirm_bonus_low: 0.6,
            cov_scale: 10.0,
            existence_scale: 3.0,
            building_penalty: 0.05,
            building_inset: 0.5,
            heading_sigma_deg: 30.0,
            offset_sigma: 3.0,
            lane_neutral: 0.8,
            rect_gate: 10.0,
            assoc_gate: 3.0,
            extent_smoothing: 0.5,
            fov_tracker: FovSector { half_angle_deg: 60.0, max_range: 100.0 },
            fov_grid: FovSector { half_angle_deg: 180.0, max_range: 60.0 },
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        let err = |s: &str| Err(FusionError::Config(s.to_string()));
        if !(self.eta_min > 0.0 && self.eta_min < 1.0) {
            return err("eta_min must lie in (0, 1)");
        }
        let positive = [
            ("max_accel", self.max_accel),
            ("max_speed", self.max_speed),
            ("jump_gate", self.jump_gate),
            ("stale_timeout", self.stale_timeout),
            ("cov_scale", self.cov_scale),
            ("existence_scale", self.existence_scale),
            ("heading_sigma_deg", self.heading_sigma_deg),
            ("offset_sigma", self.offset_sigma),
            ("assoc_gate", self.assoc_gate),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(FusionError::Config(format!("{name} must be positive")));
            }
        }
        if !(self.lateness >= 0.0 && self.building_inset >= 0.0 && self.rect_gate >= 0.0) {
            return err("lateness, building_inset and rect_gate must be non-negative");
        }
        if !(self.lane_neutral > 0.0 && self.building_penalty > 0.0 && self.confirm_bonus_low > 0.0) {
            return err("lane_neutral, building_penalty and confirm_bonus_low must be positive");
        }
        if !(0.0..=1.0).contains(&self.extent_smoothing) {
            return err("extent_smoothing must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn fov(&self, module: Module) -> &FovSector {
        match module {
            Module::Grid => &self.fov_grid,
            Module::Tracker => &self.fov_tracker,
        }
    }
}

/// Fused object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaObject {
    pub label: u64,
    pub ref_pos: Point2,
    pub ref_label: RefPoint,
    pub v: f64,
    pub phi: f64,
    pub bbox: OrientedBox,
    pub class: ObjectClass,
    /// Confidence of the last accepted sample.
    pub confidence: f64,
    /// Confidence of the last associated sample, accepted or not.
    pub last_candidate_eta: f64,
    pub last_grid: Option<GridObject>,
    pub last_track: Option<TrackState>,
    pub last_update: f64,
    pub grid_hits: u32,
    pub track_hits: u32,
}

impl MetaObject {
    pub fn velocity(&self) -> [f64; 2] {
        scale(unit(self.phi), self.v)
    }

    /// Box moved by constant velocity to time `t`.
    pub fn predicted_bbox(&self, t: f64) -> OrientedBox {
        self.bbox.translated(scale(self.velocity(), t - self.last_update))
    }

    pub fn prior(&self) -> MotionPrior {
        MotionPrior { bbox: self.bbox, velocity: self.velocity(), timestamp: self.last_update }
    }

    fn last_sample_time(&self, module: Module) -> Option<f64> {
        match module {
            Module::Grid => self.last_grid.as_ref().map(|g| g.timestamp),
            Module::Tracker => self.last_track.as_ref().map(|t| t.timestamp),
        }
    }
}

/// Fresh meta object from a candidate.
pub fn create_meta(cand: &Candidate, eta: f64, label: u64, cfg: &FusionConfig) -> Option<MetaObject> {
    if !(eta >= cfg.eta_min) {
        return None;
    }
    let mut meta = MetaObject {
        label,
        ref_pos: cand.ref_pos(),
        ref_label: cand.ref_label(),
        v: cand.speed(),
        phi: cand.heading(),
        bbox: *cand.bbox(),
        class: ObjectClass::Unknown,
        confidence: eta,
        last_candidate_eta: eta,
        last_grid: None,
        last_track: None,
        last_update: cand.timestamp(),
        grid_hits: 0,
        track_hits: 0,
    };
    record_provenance(&mut meta, cand);
    Some(meta)
}

fn record_provenance(meta: &mut MetaObject, cand: &Candidate) {
    match cand {
        Candidate::Grid(g) => {
            meta.last_grid = Some((*g).clone());
            meta.grid_hits += 1;
        }
        Candidate::Track(t) => {
            meta.last_track = Some((*t).clone());
            meta.track_hits += 1;
            meta.class = t.class;
        }
    }
}

/// Applies an accepted candidate to a meta object. Below the gate only
/// `last_candidate_eta` changes.
///
/// Position, speed and heading are overwritten. The extent observable from
/// the candidate's reference point is smoothed: width for b/f, length for
/// l/r, both for corners. The box is rebuilt around the reference point.
pub fn update_meta(meta: &mut MetaObject, cand: &Candidate, eta: f64, cfg: &FusionConfig) {
    meta.last_candidate_eta = eta;
    if !(eta >= cfg.eta_min) {
        return;
    }
    let label = cand.ref_label();
    let (mut length, mut width) = (meta.bbox.length(), meta.bbox.width());
    let w = cfg.extent_smoothing;
    let (update_w, update_l) = match label {
        RefPoint::B | RefPoint::F => (true, false),
        RefPoint::L | RefPoint::R => (false, true),
        _ => (true, true),
    };
    if update_w {
        width = (1.0 - w) * width + w * cand.bbox().width();
    }
    if update_l {
        length = (1.0 - w) * length + w * cand.bbox().length();
    }
    meta.ref_pos = cand.ref_pos();
    meta.ref_label = label;
    meta.v = cand.speed();
    meta.phi = cand.heading();
    meta.bbox = OrientedBox::from_ref_point(label, meta.ref_pos, meta.phi, length, width);
    meta.confidence = eta;
    meta.last_update = cand.timestamp();
    record_provenance(meta, cand);
}

/// Drops metas without a sample for longer than `stale_timeout`.
pub fn prune_stale(metas: Vec<MetaObject>, now: f64, cfg: &FusionConfig) -> Vec<MetaObject> {
    metas.into_iter().filter(|m| !(now - m.last_update > cfg.stale_timeout)).collect()
}

/// Result of [`associate_to_meta`]: per candidate the index of its meta,
/// or `None`.
pub type Association = Vec<Option<usize>>;

/// Associates candidates to metas. Candidates whose source label is bound
/// to a meta go there directly, provided they are within three gates of
/// its prediction; the rest are matched optimally on reference-point
/// distance to the predicted metas, pairs beyond `gate` forbidden. A meta
/// takes at most one candidate. Bound candidates beyond the sanity gate
/// are reported in the second vector.
pub fn associate_to_meta(
    candidates: &[Candidate],
    metas: &[MetaObject],
    bindings: &BTreeMap<(Module, u64), u64>,
    gate: f64,
) -> (Association, Vec<usize>) {
    let mut out = vec![None; candidates.len()];
    let mut too_far = Vec::new();
    let mut taken = vec![false; metas.len()];
    let mut free = Vec::new();
    let cost = |c: &Candidate, m: &MetaObject| dist(c.ref_pos(), m.predicted_bbox(c.timestamp()).point(c.ref_label()));
    for (k, c) in candidates.iter().enumerate() {
        let bound = c
            .source_label()
            .and_then(|l| bindings.get(&(c.module(), l)))
            .and_then(|meta_label| metas.iter().position(|m| m.label == *meta_label));
        match bound {
            Some(mi) if taken[mi] => too_far.push(k),
            Some(mi) if cost(c, &metas[mi]) <= 3.0 * gate => {
                out[k] = Some(mi);
                taken[mi] = true;
            }
            Some(_) => too_far.push(k),
            None => free.push(k),
        }
    }
    let open: Vec<usize> = (0..metas.len()).filter(|&i| !taken[i]).collect();
    if !free.is_empty() && !open.is_empty() {
        let m = CostMatrix::from_fn(free.len(), open.len(), |r, c| {
            let d = cost(&candidates[free[r]], &metas[open[c]]);
            (d <= gate).then_some(d)
        });
        for (r, c) in hungarian_assign(&m).pairs {
            out[free[r]] = Some(open[c]);
        }
    }
    (out, too_far)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Created,
    Updated,
    Rejected,
}

/// Confidence breakdown and outcome for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub t: f64,
    pub module: Module,
    pub source_label: Option<u64>,
    pub meta_label: Option<u64>,
    pub eta_p: f64,
    pub eta_e: f64,
    pub eta_m: f64,
    pub eta: f64,
    pub action: Action,
    pub confirmation: Option<Confirmation>,
    pub center: Point2,
}

#[derive(Debug, Clone)]
struct EnvelopeSummary {
    timestamp: f64,
    ego_pose: Pose2,
    centers: Vec<Point2>,
}

/// Fusion engine owning the meta set.
#[derive(Debug, Clone)]
pub struct Fusion {
    pub cfg: FusionConfig,
    map: DigitalMap,
    metas: Vec<MetaObject>,
    next_label: u64,
    bindings: BTreeMap<(Module, u64), u64>,
    grid_hits: BTreeMap<u64, u32>,
    history: BTreeMap<(Module, u64), MotionPrior>,
    last_envelope: BTreeMap<Module, EnvelopeSummary>,
    queue: EnvelopeQueue,
}

impl Fusion {
    pub fn new(cfg: FusionConfig, map: DigitalMap) -> Result<Self, FusionError> {
        cfg.validate()?;
        if map.frame != crate::map::MapFrame::EgoStationary {
            return Err(FusionError::MapFrame);
        }
        Ok(Self {
            cfg,
            map,
            metas: Vec::new(),
            next_label: 1,
            bindings: BTreeMap::new(),
            grid_hits: BTreeMap::new(),
            history: BTreeMap::new(),
            last_envelope: BTreeMap::new(),
            queue: EnvelopeQueue::new(cfg.lateness),
        })
    }

    pub fn metas(&self) -> &[MetaObject] {
        &self.metas
    }

    pub fn map(&self) -> &DigitalMap {
        &self.map
    }

    pub fn enqueue(&mut self, env: SampleEnvelope) -> Result<(), FusionError> {
        self.queue.push(env)
    }

    /// Processes all queued envelopes with timestamp at most `until`.
    pub fn process_until(&mut self, until: f64) -> Result<Vec<ReportRow>, FusionError> {
        let mut rows = Vec::new();
        while let Some(env) = self.queue.pop_until(until) {
            rows.extend(self.process_envelope(&env)?);
        }
        Ok(rows)
    }

    /// Processes everything in the queue.
    pub fn flush(&mut self) -> Result<Vec<ReportRow>, FusionError> {
        self.process_until(f64::INFINITY)
    }

    fn confirmation(&self, cand: &Candidate, meta: Option<&MetaObject>, ego: &Pose2) -> Confirmation {
        let other = cand.module().other();
        let center = cand.bbox().center();
        if !self.cfg.fov(other).contains(ego, center) {
            return Confirmation::OutsideOtherFov;
        }
        let t = cand.timestamp();
        let recent = |ts: f64| t - ts <= self.cfg.stale_timeout;
        if meta.and_then(|m| m.last_sample_time(other)).is_some_and(recent) {
            return Confirmation::Confirmed;
        }
        if let Some(s) = self.last_envelope.get(&other) {
            if recent(s.timestamp) && s.centers.iter().any(|c| dist(*c, center) <= self.cfg.assoc_gate) {
                return Confirmation::Confirmed;
            }
        }
        Confirmation::Silent
    }

    /// Association, scoring, gated create/update and pruning for one
    /// envelope. Rows come out in payload order.
    pub fn process_envelope(&mut self, env: &SampleEnvelope) -> Result<Vec<ReportRow>, FusionError> {
        let cfg = self.cfg;
        let module = env.module();
        let candidates = env.candidates();

        if module == Module::Grid {
            let continuing = self.last_envelope.contains_key(&Module::Grid);
            let mut hits = BTreeMap::new();
            for c in &candidates {
                if let Some(l) = c.source_label() {
                    let prev = if continuing { self.grid_hits.get(&l).copied().unwrap_or(0) } else { 0 };
                    hits.insert(l, prev + 1);
                }
            }
            self.grid_hits = hits;
        }

        // a source label may appear only once per envelope
        let mut seen = BTreeSet::new();
        let duplicate: Vec<bool> =
            candidates.iter().map(|c| c.source_label().is_some_and(|l| !seen.insert(l))).collect();
        let unique: Vec<usize> = (0..candidates.len()).filter(|&k| !duplicate[k]).collect();
        let unique_cands: Vec<Candidate> = unique.iter().map(|&k| candidates[k]).collect();
        let (assoc, too_far) = associate_to_meta(&unique_cands, &self.metas, &self.bindings, cfg.assoc_gate);
        let mut meta_of = vec![None; candidates.len()];
        let mut rejected = duplicate.clone();
        for (u, &k) in unique.iter().enumerate() {
            meta_of[k] = assoc[u];
        }
        for u in too_far {
            rejected[unique[u]] = true;
        }

        let mut rows = Vec::with_capacity(candidates.len());
        let mut created = Vec::new();
        for (k, cand) in candidates.iter().enumerate() {
            let center = cand.bbox().center();
            let base = ReportRow {
                t: cand.timestamp(),
                module,
                source_label: cand.source_label(),
                meta_label: None,
                eta_p: FACTOR_MIN,
                eta_e: FACTOR_MIN,
                eta_m: FACTOR_MIN,
                eta: combined_confidence(FACTOR_MIN, FACTOR_MIN, FACTOR_MIN),
                action: Action::Rejected,
                confirmation: None,
                center,
            };
            if rejected[k] {
                rows.push(base);
                continue;
            }
            let meta = meta_of[k].map(|i| &self.metas[i]);
            let own_history = cand.source_label().and_then(|l| self.history.get(&(module, l)));
            let prior = own_history.cloned().or_else(|| meta.map(|m| m.prior()));
            let eta_p = match prior {
                Some(p) if cand.timestamp() - p.timestamp <= 0.0 => confidence::NEUTRAL_PHYSICAL,
                p => physical_confidence(cand, p.as_ref(), &cfg)?,
            };
            let confirmation = self.confirmation(cand, meta, &env.ego_pose);
            let hits = cand.source_label().and_then(|l| self.grid_hits.get(&l)).copied().unwrap_or(1);
            let eta_e = module_confidence(cand, hits, confirmation, &cfg);
            let class = match cand {
                Candidate::Track(t) => t.class,
                Candidate::Grid(_) => meta.map_or(ObjectClass::Unknown, |m| m.class),
            };
            let eta_m = map_confidence(center, cand.heading(), class, &self.map, &cfg)?;
            let eta = combined_confidence(eta_p, eta_e, eta_m);
            let mut row = ReportRow { eta_p, eta_e, eta_m, eta, confirmation: Some(confirmation), ..base };

            match meta_of[k] {
                Some(i) => {
                    let m = &mut self.metas[i];
                    update_meta(m, cand, eta, &cfg);
                    row.meta_label = Some(m.label);
                    if eta >= cfg.eta_min {
                        row.action = Action::Updated;
                        if let Some(l) = cand.source_label() {
                            self.bindings.entry((module, l)).or_insert(m.label);
                        }
                    }
                }
                None => {
                    if let Some(m) = create_meta(cand, eta, self.next_label, &cfg) {
                        self.next_label += 1;
                        row.meta_label = Some(m.label);
                        row.action = Action::Created;
                        if let Some(l) = cand.source_label() {
                            self.bindings.insert((module, l), m.label);
                        }
                        created.push(m);
                    }
                }
            }
            rows.push(row);
        }
        self.metas.extend(created);

        for c in &candidates {
            if let Some(l) = c.source_label() {
                self.history.insert((module, l), c.prior());
            }
        }
        let horizon = env.timestamp - 2.0 * cfg.stale_timeout;
        self.history.retain(|_, p| p.timestamp >= horizon);
        self.last_envelope.insert(
            module,
            EnvelopeSummary {
                timestamp: env.timestamp,
                ego_pose: env.ego_pose,
                centers: candidates.iter().map(|c| c.bbox().center()).collect(),
            },
        );

        let metas = std::mem::take(&mut self.metas);
        self.metas = prune_stale(metas, env.timestamp, &cfg);
        let alive: BTreeSet<u64> = self.metas.iter().map(|m| m.label).collect();
        self.bindings.retain(|_, meta| alive.contains(meta));
        Ok(rows)
    }

    /// Vehicle pose of the last envelope from `module`.
    pub fn last_ego_pose(&self, module: Module) -> Option<Pose2> {
        self.last_envelope.get(&module).map(|s| s.ego_pose)
    }
}
