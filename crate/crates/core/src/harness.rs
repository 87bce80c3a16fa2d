//! End-to-end scenario runs: rendering, extraction, fusion, evaluation and
//! the on-disk artifacts.

use crate::config::{ConfigError, PipelineConfig};
use crate::dogma::DogmaFrame;
use crate::ego::{ctra_predict, DynKalmanState, EgoState, EgoTracker, ImuSample, KalmanNoise};
use crate::extraction::GridExtractor;
use crate::fusion::{Action, Confirmation, Fusion, MetaObject, Module, ObjectClass, Payload, ReportRow, SampleEnvelope, TrackState};
use crate::geometry::RefPoint;
use crate::map::DigitalMap;
use crate::sim::render::{grid_time, track_frame_count, track_time};
use crate::sim::{imu_sample, render_dogma_frame, render_track_frame, truth_at, EvalReport, Evaluator, RenderInfo, ScenarioSpec, SimError, TrackRenderInfo};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::mpsc::sync_channel;
use thiserror::Error;

/// Grid frames rendered ahead of the fusion.
pub const PIPELINE_DEPTH: usize = 4;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("scenario error: {0}")]
    Scenario(#[from] SimError),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
    #[error("frame {index} out of range, the log has {len} frames")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("malformed log {path} line {line}: {message}")]
    Log { path: String, line: usize, message: String },
}

impl HarnessError {
    /// Process exit code: 2 for configuration and path problems, 3 for
    /// scenario problems, 4 for violated internal invariants.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Io { .. } | HarnessError::IndexOutOfRange { .. } | HarnessError::Log { .. } => 2,
            HarnessError::Scenario(_) => 3,
            HarnessError::Invariant(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Io { .. } => "io",
            HarnessError::IndexOutOfRange { .. } => "index",
            HarnessError::Log { .. } => "log",
            HarnessError::Scenario(_) => "scenario",
            HarnessError::Invariant(_) => "invariant",
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io { path: path.display().to_string(), message: e.to_string() }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Jsonl,
    Csv,
    Text,
}

/// Meta object as logged per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaSnapshot {
    pub label: u64,
    pub class: ObjectClass,
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub v: f64,
    pub length: f64,
    pub width: f64,
    pub ref_label: RefPoint,
    pub confidence: f64,
    pub last_candidate_eta: f64,
    pub grid_hits: u32,
    pub track_hits: u32,
    pub last_update: f64,
}

impl MetaSnapshot {
    pub fn of(meta: &MetaObject) -> Self {
        let c = meta.bbox.center();
        Self {
            label: meta.label,
            class: meta.class,
            x: c[0],
            y: c[1],
            phi: meta.phi,
            v: meta.v,
            length: meta.bbox.length(),
            width: meta.bbox.width(),
            ref_label: meta.ref_label,
            confidence: meta.confidence,
            last_candidate_eta: meta.last_candidate_eta,
            grid_hits: meta.grid_hits,
            track_hits: meta.track_hits,
            last_update: meta.last_update,
        }
    }
}

/// One line of `frames.jsonl`: the meta set after a grid frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub t: f64,
    pub metas: Vec<MetaSnapshot>,
}

/// One line of `confidence.jsonl`: a scored candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRecord {
    pub frame: usize,
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
    pub x: f64,
    pub y: f64,
}

impl ConfidenceRecord {
    pub fn of(frame: usize, row: &ReportRow) -> Self {
        Self {
            frame,
            t: row.t,
            module: row.module,
            source_label: row.source_label,
            meta_label: row.meta_label,
            eta_p: row.eta_p,
            eta_e: row.eta_e,
            eta_m: row.eta_m,
            eta: row.eta,
            action: row.action,
            confirmation: row.confirmation,
            x: row.center[0],
            y: row.center[1],
        }
    }
}

/// Row of the flattened `frames.csv`: frame fields followed by the meta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameCsvRow {
    pub frame: usize,
    pub t: f64,
    pub label: u64,
    pub class: ObjectClass,
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub v: f64,
    pub length: f64,
    pub width: f64,
    pub ref_label: RefPoint,
    pub confidence: f64,
    pub last_candidate_eta: f64,
    pub grid_hits: u32,
    pub track_hits: u32,
    pub last_update: f64,
}

impl FrameCsvRow {
    pub fn new(frame: usize, t: f64, m: &MetaSnapshot) -> Self {
        Self {
            frame,
            t,
            label: m.label,
            class: m.class,
            x: m.x,
            y: m.y,
            phi: m.phi,
            v: m.v,
            length: m.length,
            width: m.width,
            ref_label: m.ref_label,
            confidence: m.confidence,
            last_candidate_eta: m.last_candidate_eta,
            grid_hits: m.grid_hits,
            track_hits: m.track_hits,
            last_update: m.last_update,
        }
    }

    pub fn meta(&self) -> MetaSnapshot {
        MetaSnapshot {
            label: self.label,
            class: self.class,
            x: self.x,
            y: self.y,
            phi: self.phi,
            v: self.v,
            length: self.length,
            width: self.width,
            ref_label: self.ref_label,
            confidence: self.confidence,
            last_candidate_eta: self.last_candidate_eta,
            grid_hits: self.grid_hits,
            track_hits: self.track_hits,
            last_update: self.last_update,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TruthCsvRow {
    frame: usize,
    t: f64,
    x: f64,
    y: f64,
    phi: f64,
    v: f64,
    ghost: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MetaTrackCsvRow {
    frame: usize,
    t: f64,
    x: f64,
    y: f64,
    phi: f64,
    v: f64,
    confidence: f64,
}

/// Inputs of one run.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub spec: ScenarioSpec,
    pub config: PipelineConfig,
    /// Limits the number of grid frames.
    pub frames: Option<usize>,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub frames: Vec<FrameRecord>,
    pub confidence: Vec<ConfidenceRecord>,
    pub report: EvalReport,
    /// Ground truth per grid frame, for plotting.
    pub truths: Vec<RenderInfo>,
    pub created_metas: usize,
}

struct Bundle {
    index: usize,
    frame: DogmaFrame,
    info: RenderInfo,
    imu: ImuSample,
    tracks: Vec<(Vec<TrackState>, TrackRenderInfo)>,
}

fn render_bundle(spec: &ScenarioSpec, map: &DigitalMap, index: usize, total: usize) -> Result<Bundle, SimError> {
    let (frame, info) = render_dogma_frame(spec, map, index)?;
    let t0 = grid_time(spec, index);
    let t1 = if index + 1 < total { grid_time(spec, index + 1) } else { f64::INFINITY };
    let mut tracks = Vec::new();
    for j in 0..track_frame_count(spec) {
        let tj = track_time(spec, j);
        if tj >= t0 && tj < t1 {
            tracks.push(render_track_frame(spec, j)?);
        }
    }
    Ok(Bundle { index, frame, info, imu: imu_sample(spec, index), tracks })
}

fn check_rows(rows: &[ReportRow], eta_min: f64) -> Result<(), HarnessError> {
    for r in rows {
        if r.eta != r.eta_p * r.eta_e * r.eta_m {
            return Err(HarnessError::Invariant(format!("eta {} is not the product of its factors at t={}", r.eta, r.t)));
        }
        if r.action != Action::Rejected && !(r.eta >= eta_min) {
            return Err(HarnessError::Invariant(format!("candidate with eta {} accepted below the gate at t={}", r.eta, r.t)));
        }
    }
    Ok(())
}

/// Runs a scenario through extraction, fusion and evaluation. Grid
/// frames are rendered on a producer thread at most
/// [`PIPELINE_DEPTH`] frames ahead.
pub fn run_pipeline(opts: &RunOptions) -> Result<RunOutput, HarnessError> {
    let spec = &opts.spec;
    spec.validate()?;
    opts.config.validate()?;
    let map = spec.build_map()?;
    let total = spec.grid_frame_count();
    let count = opts.frames.map_or(total, |n| n.min(total));
    let cfg = opts.config;

    let mut fusion = Fusion::new(cfg.fusion, map.clone()).map_err(|e| HarnessError::Invariant(e.to_string()))?;
    let mut extractor = GridExtractor::new(cfg.extraction);
    let mut evaluator = Evaluator::new(spec, cfg.fusion.eta_min);
    let start = EgoState { v: spec.ego.v, a: spec.ego.a, omega: spec.ego.omega, ..EgoState::default() };
    let mut ego = EgoTracker::new(0.0, KalmanNoise::default());
    ego.state = start;
    ego.filter = DynKalmanState::new([start.v, start.a, start.omega], [0.1, 0.1, 0.01]);

    let mut out = RunOutput { frames: Vec::new(), confidence: Vec::new(), report: EvalReport::default(), truths: Vec::new(), created_metas: 0 };

    std::thread::scope(|scope| -> Result<(), HarnessError> {
        let (tx, rx) = sync_channel::<Result<Bundle, SimError>>(PIPELINE_DEPTH);
        let map_ref = &map;
        scope.spawn(move || {
            for k in 0..count {
                let b = render_bundle(spec, map_ref, k, total);
                let failed = b.is_err();
                if tx.send(b).is_err() || failed {
                    break;
                }
            }
        });
        for bundle in rx {
            let b = bundle?;
            let ego_state = if b.index == 0 { ego.state } else { ego.ingest(&b.imu).map_err(|e| HarnessError::Invariant(e.to_string()))? };
            let objects = extractor.extract(&b.frame).map_err(|e| HarnessError::Invariant(e.to_string()))?;
            evaluator.observe_grid(&b.info, &objects)?;
            fusion
                .enqueue(SampleEnvelope { timestamp: b.info.timestamp, ego_pose: ego_state.pose(), payload: Payload::Grid(objects) })
                .map_err(|e| HarnessError::Invariant(e.to_string()))?;
            let mut last_t = b.info.timestamp;
            for (tracks, tinfo) in b.tracks {
                evaluator.observe_tracks(&tinfo)?;
                let pose = ctra_predict(&ego_state, tinfo.timestamp - ego_state.timestamp).unwrap_or(ego_state).pose();
                last_t = last_t.max(tinfo.timestamp);
                fusion
                    .enqueue(SampleEnvelope { timestamp: tinfo.timestamp, ego_pose: pose, payload: Payload::Tracks(tracks) })
                    .map_err(|e| HarnessError::Invariant(e.to_string()))?;
            }
            let rows = fusion.flush().map_err(|e| HarnessError::Invariant(e.to_string()))?;
            check_rows(&rows, cfg.fusion.eta_min)?;
            evaluator.observe_reports(&rows);
            out.created_metas += rows.iter().filter(|r| r.action == Action::Created).count();
            out.confidence.extend(rows.iter().map(|r| ConfidenceRecord::of(b.index, r)));
            evaluator.observe_metas(last_t, fusion.metas())?;
            out.frames.push(FrameRecord { frame: b.index, t: last_t, metas: fusion.metas().iter().map(MetaSnapshot::of).collect() });
            out.truths.push(b.info);
        }
        Ok(())
    })?;
    if out.frames.len() != count {
        return Err(HarnessError::Invariant(format!("rendered {} of {count} frames", out.frames.len())));
    }
    out.report = evaluator.finish();
    Ok(out)
}

fn json_lines<T: Serialize>(items: &[T]) -> String {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(it).expect("records serialize"));
        s.push('\n');
    }
    s
}

pub fn frames_jsonl(out: &RunOutput) -> String {
    json_lines(&out.frames)
}

pub fn confidence_jsonl(out: &RunOutput) -> String {
    json_lines(&out.confidence)
}

fn csv_string<T: Serialize>(rows: impl IntoIterator<Item = T>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("records serialize");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
}

fn write(path: &Path, content: &str) -> Result<(), HarnessError> {
    std::fs::write(path, content).map_err(|e| io_err(path, e))
}

/// Writes `frames.jsonl`, `confidence.jsonl`, `metrics.csv` and the
/// per-object `plot/*.csv` files; `Csv` additionally writes CSV copies of
/// the two logs.
pub fn write_artifacts(dir: &Path, out: &RunOutput, format: OutputFormat) -> Result<(), HarnessError> {
    let plot = dir.join("plot");
    std::fs::create_dir_all(&plot).map_err(|e| io_err(&plot, e))?;
    write(&dir.join("frames.jsonl"), &frames_jsonl(out))?;
    write(&dir.join("confidence.jsonl"), &confidence_jsonl(out))?;

    let mut metrics = String::from("metric,value\n");
    for (k, v) in out.report.metrics() {
        let _ = writeln!(metrics, "{k},{v}");
    }
    write(&dir.join("metrics.csv"), &metrics)?;

    let mut metas: BTreeMap<u64, Vec<MetaTrackCsvRow>> = BTreeMap::new();
    for f in &out.frames {
        for m in &f.metas {
            metas.entry(m.label).or_default().push(MetaTrackCsvRow { frame: f.frame, t: f.t, x: m.x, y: m.y, phi: m.phi, v: m.v, confidence: m.confidence });
        }
    }
    for (label, rows) in metas {
        write(&plot.join(format!("meta_{label}.csv")), &csv_string(rows))?;
    }
    let mut truths: BTreeMap<u64, Vec<TruthCsvRow>> = BTreeMap::new();
    for (k, info) in out.truths.iter().enumerate() {
        for s in &info.truths {
            truths.entry(s.id).or_default().push(TruthCsvRow { frame: k, t: info.timestamp, x: s.center[0], y: s.center[1], phi: s.phi, v: s.v, ghost: s.ghost });
        }
    }
    for (id, rows) in truths {
        write(&plot.join(format!("truth_{id}.csv")), &csv_string(rows))?;
    }

    if format == OutputFormat::Csv {
        let rows = out.frames.iter().flat_map(|f| f.metas.iter().map(|m| FrameCsvRow::new(f.frame, f.t, m)));
        write(&dir.join("frames.csv"), &csv_string(rows))?;
        write(&dir.join("confidence.csv"), &csv_string(&out.confidence))?;
    }
    Ok(())
}

/// Ground truth of a scenario without running the pipeline.
pub fn truth_table(spec: &ScenarioSpec) -> Vec<(f64, Vec<crate::sim::TruthState>)> {
    (0..spec.grid_frame_count())
        .map(|k| {
            let t = grid_time(spec, k);
            (t, spec.objects.iter().filter_map(|o| truth_at(o, t)).collect())
        })
        .collect()
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| HarnessError::Log { path: path.display().to_string(), line: i + 1, message: e.to_string() })
        })
        .collect()
}

/// Resolves the frame log path: a run directory or the log file itself.
pub fn frame_log_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("frames.jsonl")
    } else {
        path.to_path_buf()
    }
}

/// Dump of one logged frame: its meta objects and the scored candidates
/// with their confidence factors.
pub fn inspect(path: &Path, index: usize, format: OutputFormat) -> Result<String, HarnessError> {
    let frames_path = frame_log_path(path);
    let frames: Vec<FrameRecord> = read_lines(&frames_path)?;
    let frame = frames.iter().find(|f| f.frame == index).ok_or(HarnessError::IndexOutOfRange { index, len: frames.len() })?;
    let conf_path = frames_path.with_file_name("confidence.jsonl");
    let rows: Vec<ConfidenceRecord> = if conf_path.exists() {
        read_lines::<ConfidenceRecord>(&conf_path)?.into_iter().filter(|r| r.frame == index).collect()
    } else {
        Vec::new()
    };
    Ok(match format {
        OutputFormat::Jsonl => {
            let mut s = serde_json::to_string(frame).expect("records serialize");
            s.push('\n');
            s.push_str(&json_lines(&rows));
            s
        }
        OutputFormat::Csv => {
            let metas = frame.metas.iter().map(|m| FrameCsvRow::new(frame.frame, frame.t, m));
            format!("{}\n{}", csv_string(metas), csv_string(&rows))
        }
        OutputFormat::Text => {
            let mut s = String::new();
            let _ = writeln!(s, "frame {} t={:.3}: {} objects", frame.frame, frame.t, frame.metas.len());
            for m in &frame.metas {
                let _ = writeln!(
                    s,
                    "  meta {} {:?} at ({:.2}, {:.2}) heading {:.3} speed {:.2} size {:.2}x{:.2} confidence {:.4}",
                    m.label, m.class, m.x, m.y, m.phi, m.v, m.length, m.width, m.confidence
                );
            }
            let _ = writeln!(s, "{} candidates", rows.len());
            for r in &rows {
                let label = r.source_label.map_or("-".to_string(), |l| l.to_string());
                let meta = r.meta_label.map_or("-".to_string(), |l| l.to_string());
                let _ = writeln!(
                    s,
                    "  t={:.3} {} {} -> meta {} action={} eta_p={:.4} eta_e={:.4} eta_m={:.4} eta={:.4}",
                    r.t,
                    r.module.as_str(),
                    label,
                    meta,
                    match r.action {
                        Action::Created => "created",
                        Action::Updated => "updated",
                        Action::Rejected => "rejected",
                    },
                    r.eta_p,
                    r.eta_e,
                    r.eta_m,
                    r.eta
                );
            }
            s
        }
    })
}
