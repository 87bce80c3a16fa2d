//! Scoring of extraction and fusion output against scenario ground truth.

use super::render::{ego_state_at, line_blocked, truth_at, RenderInfo, TrackRenderInfo, TruthState};
use super::spec::ScenarioSpec;
use super::SimError;
use crate::extraction::GridObject;
use crate::fusion::{Action, MetaObject, Module, ReportRow};
use crate::geometry::{dist, Point2};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Matching gate between output and truth centers, meters.
pub const MATCH_GATE: f64 = 2.0;
/// Minimum rendered footprint for a truth to count towards recall.
pub const MIN_RECALL_CELLS: usize = 16;
/// Minimum speed for a truth to count as a mover.
pub const MIN_MOVER_SPEED: f64 = 1.0;

/// Greedy nearest-neighbor matching: pairs are taken in order of
/// increasing distance, ties by index. Returns `(output, truth, distance)`.
pub fn greedy_match(outputs: &[Point2], truths: &[Point2], gate: f64) -> Vec<(usize, usize, f64)> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, o) in outputs.iter().enumerate() {
        for (j, t) in truths.iter().enumerate() {
            let d = dist(*o, *t);
            if d <= gate {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_o = BTreeSet::new();
    let mut used_t = BTreeSet::new();
    let mut out = Vec::new();
    for (d, i, j) in pairs {
        if !used_o.contains(&i) && !used_t.contains(&j) {
            used_o.insert(i);
            used_t.insert(j);
            out.push((i, j, d));
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameCounts {
    pub t: f64,
    pub matched: usize,
    pub missed: usize,
    pub false_count: usize,
}

/// Extraction statistics for one ground-truth object.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TruthExtraction {
    /// Frames where the object moves and is at least [`MIN_RECALL_CELLS`] large.
    pub eligible_frames: usize,
    pub detected_frames: usize,
    pub label_switches: usize,
}

impl TruthExtraction {
    pub fn recall(&self) -> f64 {
        if self.eligible_frames == 0 {
            1.0
        } else {
            self.detected_frames as f64 / self.eligible_frames as f64
        }
    }
}

/// Meta presence for one ground-truth object.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetaPresence {
    pub present_frames: usize,
    /// Frames with exactly one meta object within the gate.
    pub exactly_one_frames: usize,
}

impl MetaPresence {
    pub fn ratio(&self) -> f64 {
        if self.present_frames == 0 {
            1.0
        } else {
            self.exactly_one_frames as f64 / self.present_frames as f64
        }
    }
}

/// One fusion decision joined with what the candidate really was.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionEntry {
    pub t: f64,
    pub module: Module,
    pub source_label: Option<u64>,
    pub eta: f64,
    pub action: Action,
    pub truth: Option<u64>,
    pub false_track: bool,
    pub ghost: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Meta objects against non-ghost truths after each grid frame; only
    /// truths a sensor could see count as missed.
    pub frames: Vec<FrameCounts>,
    pub position_rmse: f64,
    pub label_switches: usize,
    /// Every non-accepted candidate plus every accepted false or ghost one.
    pub rejections: Vec<RejectionEntry>,

    pub extraction: BTreeMap<u64, TruthExtraction>,
    pub extraction_rmse: f64,
    pub extraction_matches: usize,
    /// Grid objects matching neither a truth nor a ghost.
    pub static_objects: usize,
    pub ghost_objects: usize,

    /// Per truth, over frames where a sensor could see it.
    pub meta_presence: BTreeMap<u64, MetaPresence>,
    pub false_presented: usize,
    pub false_accepted: usize,
    pub ghost_presented: usize,
    pub ghost_accepted: usize,
    /// Created or updated decisions with η below the gate.
    pub gate_violations: usize,
    /// Frames with a meta object last fed by an injected false track.
    pub false_meta_frames: usize,
    pub ghost_meta_frames: usize,
    /// Per truth: track samples from occlusion onset until its track
    /// confidence drops below the gate (or the track vanishes).
    pub occlusion_drop_frames: BTreeMap<u64, usize>,
}

impl EvalReport {
    pub fn matched(&self) -> usize {
        self.frames.iter().map(|f| f.matched).sum()
    }

    pub fn missed(&self) -> usize {
        self.frames.iter().map(|f| f.missed).sum()
    }

    pub fn false_count(&self) -> usize {
        self.frames.iter().map(|f| f.false_count).sum()
    }

    /// Flat key/value view for tabular output.
    pub fn metrics(&self) -> Vec<(String, String)> {
        let mut m = vec![
            ("frames".to_string(), self.frames.len().to_string()),
            ("matched".into(), self.matched().to_string()),
            ("missed".into(), self.missed().to_string()),
            ("false".into(), self.false_count().to_string()),
            ("position_rmse".into(), format!("{:.6}", self.position_rmse)),
            ("label_switches".into(), self.label_switches.to_string()),
            ("rejections".into(), self.rejections.iter().filter(|r| r.action == Action::Rejected).count().to_string()),
            ("extraction_rmse".into(), format!("{:.6}", self.extraction_rmse)),
            ("extraction_matches".into(), self.extraction_matches.to_string()),
            ("static_objects".into(), self.static_objects.to_string()),
            ("ghost_objects".into(), self.ghost_objects.to_string()),
            ("false_presented".into(), self.false_presented.to_string()),
            ("false_accepted".into(), self.false_accepted.to_string()),
            ("ghost_presented".into(), self.ghost_presented.to_string()),
            ("ghost_accepted".into(), self.ghost_accepted.to_string()),
            ("gate_violations".into(), self.gate_violations.to_string()),
            ("false_meta_frames".into(), self.false_meta_frames.to_string()),
            ("ghost_meta_frames".into(), self.ghost_meta_frames.to_string()),
        ];
        for (id, e) in &self.extraction {
            m.push((format!("extraction_recall.{id}"), format!("{:.6}", e.recall())));
            m.push((format!("extraction_label_switches.{id}"), e.label_switches.to_string()));
        }
        for (id, p) in &self.meta_presence {
            m.push((format!("meta_exactly_one.{id}"), format!("{:.6}", p.ratio())));
        }
        for (id, n) in &self.occlusion_drop_frames {
            m.push((format!("occlusion_drop_frames.{id}"), n.to_string()));
        }
        m
    }
}

/// Accumulates observations along the scenario timeline.
#[derive(Debug, Clone)]
pub struct Evaluator {
    spec: ScenarioSpec,
    eta_min: f64,
    report: EvalReport,
    grid_t: Option<f64>,
    meta_t: Option<f64>,
    extraction_sq: f64,
    extraction_labels: BTreeMap<u64, u64>,
    meta_sq: f64,
    meta_pairs: usize,
    meta_labels: BTreeMap<u64, u64>,
    track_frames: Vec<TrackRenderInfo>,
    track_rows: BTreeMap<(u64, i64), f64>,
}

fn time_key(t: f64) -> i64 {
    (t * 1e6).round() as i64
}

impl Evaluator {
    pub fn new(spec: &ScenarioSpec, eta_min: f64) -> Self {
        Self {
            spec: spec.clone(),
            eta_min,
            report: EvalReport::default(),
            grid_t: None,
            meta_t: None,
            extraction_sq: 0.0,
            extraction_labels: BTreeMap::new(),
            meta_sq: 0.0,
            meta_pairs: 0,
            meta_labels: BTreeMap::new(),
            track_frames: Vec::new(),
            track_rows: BTreeMap::new(),
        }
    }

    fn advance(last: &mut Option<f64>, t: f64, what: &str) -> Result<(), SimError> {
        if let Some(prev) = *last {
            if t < prev {
                return Err(SimError::Timeline(format!("{what} at {t} after {prev}")));
            }
        }
        *last = Some(t);
        Ok(())
    }

    fn truths(&self, t: f64) -> Vec<TruthState> {
        self.spec.objects.iter().filter_map(|o| truth_at(o, t)).collect()
    }

    /// Whether a truth is within reach of at least one sensor and not
    /// hidden.
    fn observable(&self, s: &TruthState, t: f64) -> bool {
        let e = ego_state_at(&self.spec, t);
        let g = &self.spec.grid;
        let in_grid = (s.center[0] - e.x).abs() <= g.width_m / 2.0 && (s.center[1] - e.y).abs() <= g.height_m / 2.0;
        (in_grid || self.spec.tracks.fov.contains(&e.pose(), s.center)) && !line_blocked(&self.spec, [e.x, e.y], s.center)
    }

    fn near_ghost(&self, t: f64, p: Point2) -> bool {
        self.truths(t).iter().any(|g| g.ghost && (dist(g.center, p) <= MATCH_GATE || g.bbox.contains(p, 0.0)))
    }

    /// Extraction output of one grid frame.
    pub fn observe_grid(&mut self, info: &RenderInfo, objects: &[GridObject]) -> Result<(), SimError> {
        Self::advance(&mut self.grid_t, info.timestamp, "grid frame")?;
        let truths: Vec<&TruthState> = info.truths.iter().filter(|t| !t.ghost).collect();
        let centers: Vec<Point2> = objects.iter().map(|o| o.bbox.center()).collect();
        // a clipped object can only be seen by its visible part
        let truth_centers: Vec<Point2> = truths
            .iter()
            .map(|t| if info.clipped.contains(&t.id) { info.visible_centers.get(&t.id).copied().unwrap_or(t.center) } else { t.center })
            .collect();
        let matches = greedy_match(&centers, &truth_centers, MATCH_GATE);
        let mut matched_objects = BTreeSet::new();
        let mut matched_truths = BTreeMap::new();
        for &(i, j, d) in &matches {
            matched_objects.insert(i);
            matched_truths.insert(truths[j].id, i);
            if !info.clipped.contains(&truths[j].id) {
                self.extraction_sq += d * d;
                self.report.extraction_matches += 1;
            }
        }
        for t in &truths {
            let stats = self.report.extraction.entry(t.id).or_default();
            let cells = info.cell_counts.get(&t.id).copied().unwrap_or(0);
            let eligible = t.v.abs() >= MIN_MOVER_SPEED && cells >= MIN_RECALL_CELLS;
            let hit = matched_truths.get(&t.id);
            if eligible {
                stats.eligible_frames += 1;
                if hit.is_some() {
                    stats.detected_frames += 1;
                }
            }
            if let Some(label) = hit.and_then(|&i| objects[i].label) {
                if let Some(prev) = self.extraction_labels.insert(t.id, label) {
                    if prev != label {
                        stats.label_switches += 1;
                    }
                }
            }
        }
        for (i, c) in centers.iter().enumerate() {
            if matched_objects.contains(&i) {
                continue;
            }
            if self.near_ghost(info.timestamp, *c) {
                self.report.ghost_objects += 1;
            } else {
                self.report.static_objects += 1;
            }
        }
        Ok(())
    }

    /// Facts about one rendered track sample.
    pub fn observe_tracks(&mut self, info: &TrackRenderInfo) -> Result<(), SimError> {
        if let Some(last) = self.track_frames.last() {
            if info.timestamp < last.timestamp {
                return Err(SimError::Timeline(format!("track sample at {} after {}", info.timestamp, last.timestamp)));
            }
        }
        self.track_frames.push(info.clone());
        Ok(())
    }

    /// Fusion report rows.
    pub fn observe_reports(&mut self, rows: &[ReportRow]) {
        let offset = self.spec.tracks.label_offset;
        for row in rows {
            let accepted = row.action != Action::Rejected;
            if accepted && row.eta < self.eta_min {
                self.report.gate_violations += 1;
            }
            let (truth, false_track, ghost) = match row.module {
                Module::Tracker => {
                    let label = row.source_label.unwrap_or(u64::MAX);
                    if let Some(l) = row.source_label {
                        self.track_rows.insert((l, time_key(row.t)), row.eta);
                    }
                    let is_false = self.spec.false_tracks.iter().any(|f| f.label == label);
                    let truth = label
                        .checked_sub(offset)
                        .filter(|id| self.spec.objects.iter().any(|o| o.id == *id && !o.ghost));
                    (truth, is_false, false)
                }
                Module::Grid => {
                    let truths = self.truths(row.t);
                    let ghost = self.near_ghost(row.t, row.center);
                    let truth = truths
                        .iter()
                        .filter(|s| !s.ghost)
                        .map(|s| (dist(s.center, row.center), s.id))
                        .filter(|(d, _)| *d <= MATCH_GATE)
                        .min_by(|a, b| a.0.total_cmp(&b.0))
                        .map(|(_, id)| id);
                    (truth, false, ghost && truth.is_none())
                }
            };
            if false_track {
                self.report.false_presented += 1;
                if accepted {
                    self.report.false_accepted += 1;
                }
            }
            if ghost {
                self.report.ghost_presented += 1;
                if accepted {
                    self.report.ghost_accepted += 1;
                }
            }
            if !accepted || false_track || ghost {
                self.report.rejections.push(RejectionEntry {
                    t: row.t,
                    module: row.module,
                    source_label: row.source_label,
                    eta: row.eta,
                    action: row.action,
                    truth,
                    false_track,
                    ghost,
                });
            }
        }
    }

    /// Meta set snapshot at time `t`.
    pub fn observe_metas(&mut self, t: f64, metas: &[MetaObject]) -> Result<(), SimError> {
        Self::advance(&mut self.meta_t, t, "meta snapshot")?;
        let truths: Vec<TruthState> = self.truths(t).into_iter().filter(|s| !s.ghost).collect();
        let centers: Vec<Point2> = metas.iter().map(|m| m.predicted_bbox(t).center()).collect();
        let truth_centers: Vec<Point2> = truths.iter().map(|s| s.center).collect();
        let matches = greedy_match(&centers, &truth_centers, MATCH_GATE);
        let mut matched_truths = BTreeSet::new();
        for &(i, j, d) in &matches {
            matched_truths.insert(j);
            self.meta_sq += d * d;
            self.meta_pairs += 1;
            if let Some(prev) = self.meta_labels.insert(truths[j].id, metas[i].label) {
                if prev != metas[i].label {
                    self.report.label_switches += 1;
                }
            }
        }
        let observable: Vec<bool> = truths.iter().map(|s| self.observable(s, t)).collect();
        self.report.frames.push(FrameCounts {
            t,
            matched: matches.len(),
            missed: (0..truths.len()).filter(|j| observable[*j] && !matched_truths.contains(j)).count(),
            false_count: metas.len() - matches.len(),
        });
        for (s, _) in truths.iter().zip(&observable).filter(|(_, o)| **o) {
            let near = centers.iter().filter(|c| dist(**c, s.center) <= MATCH_GATE).count();
            let p = self.report.meta_presence.entry(s.id).or_default();
            p.present_frames += 1;
            if near == 1 {
                p.exactly_one_frames += 1;
            }
        }
        let false_labels: BTreeSet<u64> = self.spec.false_tracks.iter().map(|f| f.label).collect();
        if metas.iter().any(|m| m.last_track.as_ref().is_some_and(|tr| false_labels.contains(&tr.label))) {
            self.report.false_meta_frames += 1;
        }
        if centers.iter().any(|c| self.near_ghost(t, *c)) {
            self.report.ghost_meta_frames += 1;
        }
        Ok(())
    }

    pub fn finish(mut self) -> EvalReport {
        let offset = self.spec.tracks.label_offset;
        for obj in self.spec.objects.iter().filter(|o| !o.ghost) {
            let label = offset + obj.id;
            let mut worst: Option<usize> = None;
            let mut k = 1;
            while k < self.track_frames.len() {
                let onset = self.track_frames[k].occluded.contains(&obj.id) && !self.track_frames[k - 1].occluded.contains(&obj.id);
                if !onset {
                    k += 1;
                    continue;
                }
                let mut n = 0;
                for f in &self.track_frames[k..] {
                    n += 1;
                    match self.track_rows.get(&(label, time_key(f.timestamp))) {
                        Some(&eta) if eta >= self.eta_min => {}
                        _ => break,
                    }
                }
                worst = Some(worst.map_or(n, |w| w.max(n)));
                k += 1;
            }
            if let Some(n) = worst {
                self.report.occlusion_drop_frames.insert(obj.id, n);
            }
        }
        let rmse = |sq: f64, n: usize| if n == 0 { 0.0 } else { (sq / n as f64).sqrt() };
        self.report.extraction_rmse = rmse(self.extraction_sq, self.report.extraction_matches);
        self.report.position_rmse = rmse(self.meta_sq, self.meta_pairs);
        self.report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{create_meta, Candidate, FusionConfig, ObjectClass, TrackState};
    use crate::geometry::{OrientedBox, Pose2, RefPoint};
    use crate::sim::spec::canned;
    use proptest::prelude::*;

    fn meta_at(truth: &TruthState, label: u64, t: f64) -> MetaObject {
        let bbox = truth.bbox;
        let track = TrackState {
            ref_pos: bbox.point(RefPoint::B),
            ref_label: RefPoint::B,
            v: truth.v,
            a: 0.0,
            phi: truth.phi,
            omega: 0.0,
            bbox,
            pos_cov: [[0.01, 0.0], [0.0, 0.01]],
            vel_cov: [[0.01, 0.0], [0.0, 0.01]],
            existence: 0.9,
            class: ObjectClass::Car,
            label,
            timestamp: t,
        };
        create_meta(&Candidate::Track(&track), 0.9, label, &FusionConfig::default()).unwrap()
    }

    fn perfect_metas(spec: &ScenarioSpec, t: f64) -> Vec<MetaObject> {
        spec.objects.iter().filter(|o| !o.ghost).filter_map(|o| truth_at(o, t)).map(|s| meta_at(&s, s.id, t)).collect()
    }

    fn row(t: f64, module: Module, label: u64, center: Point2, eta: f64, action: Action) -> ReportRow {
        ReportRow {
            t,
            module,
            source_label: Some(label),
            meta_label: None,
            eta_p: eta,
            eta_e: 1.0,
            eta_m: 1.0,
            eta,
            action,
            confirmation: None,
            center,
        }
    }

    #[test]
    fn perfect_output_scores_clean() {
        let spec = canned("nominal_following").unwrap();
        let mut ev = Evaluator::new(&spec, 0.35);
        for k in 0..30 {
            let t = k as f64 * 0.1;
            ev.observe_metas(t, &perfect_metas(&spec, t)).unwrap();
        }
        let r = ev.finish();
        assert_eq!(r.missed(), 0);
        assert_eq!(r.false_count(), 0);
        assert_eq!(r.matched(), 60);
        assert!(r.position_rmse < 1e-9);
        assert_eq!(r.label_switches, 0);
        assert!(r.meta_presence.values().all(|p| p.ratio() == 1.0));
    }

    #[test]
    fn missing_object_counts_missed_frames() {
        let spec = canned("passing_vehicles").unwrap();
        let mut ev = Evaluator::new(&spec, 0.35);
        for k in 0..30 {
            let t = k as f64 * 0.1;
            let mut metas = perfect_metas(&spec, t);
            if (5..15).contains(&k) {
                metas.retain(|m| m.label != 2);
            }
            ev.observe_metas(t, &metas).unwrap();
        }
        let r = ev.finish();
        assert_eq!(r.missed(), 10);
        assert_eq!(r.meta_presence[&2].present_frames, 30);
        assert_eq!(r.meta_presence[&2].exactly_one_frames, 20);
    }

    #[test]
    fn label_change_counts_as_switch() {
        let spec = canned("nominal_following").unwrap();
        let mut ev = Evaluator::new(&spec, 0.35);
        for k in 0..4 {
            let t = k as f64 * 0.1;
            let mut metas = perfect_metas(&spec, t);
            if k >= 2 {
                metas[0].label = 77;
            }
            ev.observe_metas(t, &metas).unwrap();
        }
        assert_eq!(ev.finish().label_switches, 1);
    }

    #[test]
    fn rejected_false_track_not_accepted() {
        let spec = canned("roundabout_false_track").unwrap();
        let mut ev = Evaluator::new(&spec, 0.35);
        let rows: Vec<_> = (0..10).map(|k| row(0.04 + 0.08 * k as f64, Module::Tracker, 900, [45.0, 1.75], 0.1, Action::Rejected)).collect();
        ev.observe_reports(&rows);
        let r = ev.finish();
        assert_eq!(r.false_presented, 10);
        assert_eq!(r.false_accepted, 0);
        assert_eq!(r.rejections.len(), 10);
        assert!(r.rejections.iter().all(|e| e.false_track && e.truth.is_none()));
    }

    #[test]
    fn accepted_low_confidence_is_a_gate_violation() {
        let spec = canned("nominal_following").unwrap();
        let mut ev = Evaluator::new(&spec, 0.35);
        ev.observe_reports(&[
            row(0.0, Module::Grid, 1, [20.0, 0.0], 0.2, Action::Created),
            row(0.1, Module::Grid, 1, [21.2, 0.0], 0.5, Action::Updated),
        ]);
        let r = ev.finish();
        assert_eq!(r.gate_violations, 1);
        assert_eq!(r.false_presented, 0);
    }

    #[test]
    fn ghost_grid_rows_are_flagged() {
        let spec = canned("innercity_ghost_occlusion").unwrap();
        let ghost = spec.objects.iter().find(|o| o.ghost).unwrap();
        let g = truth_at(ghost, 0.5).unwrap();
        let mut ev = Evaluator::new(&spec, 0.35);
        ev.observe_reports(&[row(0.5, Module::Grid, 4, g.center, 0.01, Action::Rejected)]);
        let r = ev.finish();
        assert_eq!((r.ghost_presented, r.ghost_accepted), (1, 0));
        assert!(r.rejections[0].ghost);
    }

    #[test]
    fn occlusion_drop_counts_track_samples() {
        let spec = canned("innercity_ghost_occlusion").unwrap();
        let mut ev = Evaluator::new(&spec, 0.35);
        let pose = Pose2::default();
        for j in 0..10 {
            let t = 0.04 + 0.08 * j as f64;
            let occluded = if j >= 4 { vec![1] } else { vec![] };
            ev.observe_tracks(&TrackRenderInfo { timestamp: t, ego_pose: pose, occluded, ..Default::default() }).unwrap();
            // confident until two samples after onset
            let eta = if j < 6 { 0.8 } else { 0.2 };
            ev.observe_reports(&[row(t, Module::Tracker, 101, [0.0, 0.0], eta, Action::Updated)]);
        }
        let r = ev.finish();
        assert_eq!(r.occlusion_drop_frames.get(&1), Some(&3));
        assert!(!r.occlusion_drop_frames.contains_key(&2));
    }

    #[test]
    fn extraction_scoring() {
        let spec = canned("passing_vehicles").unwrap();
        let map = spec.build_map().unwrap();
        let mut ev = Evaluator::new(&spec, 0.35);
        for k in 0..3 {
            let (_, info) = crate::sim::render_dogma_frame(&spec, &map, k).unwrap();
            let mut objects: Vec<GridObject> = info
                .truths
                .iter()
                .map(|s| GridObject {
                    ref_pos: s.bbox.point(RefPoint::B),
                    ref_label: RefPoint::B,
                    speed: s.v,
                    orientation: s.phi,
                    bbox: s.bbox.translated([0.1, 0.0]),
                    label: Some(s.id + k as u64 / 2),
                    timestamp: info.timestamp,
                    cell_count: 400,
                })
                .collect();
            let mut stray = objects[0].clone();
            stray.bbox = OrientedBox::from_center([0.0, -3.15], 0.0, 4.0, 0.3);
            objects.push(stray);
            ev.observe_grid(&info, &objects).unwrap();
        }
        let r = ev.finish();
        assert_eq!(r.static_objects, 3);
        assert!((r.extraction_rmse - 0.1).abs() < 1e-9);
        assert!(r.extraction.values().all(|e| e.recall() == 1.0 && e.eligible_frames == 3));
        assert_eq!(r.extraction.values().map(|e| e.label_switches).sum::<usize>(), 2);
    }

    #[test]
    fn timeline_must_not_go_backwards() {
        let spec = canned("nominal_following").unwrap();
        let mut ev = Evaluator::new(&spec, 0.35);
        ev.observe_metas(1.0, &[]).unwrap();
        assert!(matches!(ev.observe_metas(0.5, &[]), Err(SimError::Timeline(_))));
    }

    #[test]
    fn metrics_cover_counts() {
        let spec = canned("nominal_following").unwrap();
        let mut ev = Evaluator::new(&spec, 0.35);
        ev.observe_metas(0.0, &perfect_metas(&spec, 0.0)).unwrap();
        let m: BTreeMap<_, _> = ev.finish().metrics().into_iter().collect();
        assert_eq!(m["matched"], "2");
        assert_eq!(m["false_accepted"], "0");
        assert_eq!(m["meta_exactly_one.1"], "1.000000");
    }

    proptest! {
        #[test]
        fn greedy_match_is_a_gated_partial_matching(
            outs in proptest::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 0..8),
            truths in proptest::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 0..8),
        ) {
            let o: Vec<Point2> = outs.iter().map(|p| [p.0, p.1]).collect();
            let t: Vec<Point2> = truths.iter().map(|p| [p.0, p.1]).collect();
            let m = greedy_match(&o, &t, MATCH_GATE);
            let oi: BTreeSet<_> = m.iter().map(|x| x.0).collect();
            let ti: BTreeSet<_> = m.iter().map(|x| x.1).collect();
            prop_assert_eq!(oi.len(), m.len());
            prop_assert_eq!(ti.len(), m.len());
            for &(i, j, d) in &m {
                prop_assert!(d <= MATCH_GATE);
                prop_assert!((dist(o[i], t[j]) - d).abs() < 1e-12);
            }
            // maximal: no unmatched pair remains within the gate
            for (i, a) in o.iter().enumerate() {
                for (j, b) in t.iter().enumerate() {
                    if !oi.contains(&i) && !ti.contains(&j) {
                        prop_assert!(dist(*a, *b) > MATCH_GATE);
                    }
                }
            }
        }
    }
}
