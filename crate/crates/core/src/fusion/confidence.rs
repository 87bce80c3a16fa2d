//! The three confidence factors and their product.
//!
//! All factors are clamped to `(FACTOR_MIN, FACTOR_MAX)` so the product
//! stays strictly inside (0, 1).

use super::{Candidate, FusionConfig, FusionError, ObjectClass};
use crate::geometry::{add, dist, scale, OrientedBox, Point2};
use crate::map::{DigitalMap, MapFrame};

pub const FACTOR_MIN: f64 = 1e-6;
pub const FACTOR_MAX: f64 = 1.0 - 1e-6;

/// Neutral physical factor for objects without motion history.
pub const NEUTRAL_PHYSICAL: f64 = 0.5;

pub fn clamp_factor(x: f64) -> f64 {
    if x.is_nan() {
        return FACTOR_MIN;
    }
    x.clamp(FACTOR_MIN, FACTOR_MAX)
}

/// Last known motion state an incoming sample is compared against.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionPrior {
    pub bbox: OrientedBox,
    pub velocity: [f64; 2],
    pub timestamp: f64,
}

/// Physical plausibility of the motion from `prior` to `cand`.
///
/// The implied acceleration and the positional jump beyond the
/// constant-velocity prediction each enter a Gaussian squash. Speeds above
/// `max_speed` give the lower clamp. Without a prior the factor is neutral.
pub fn physical_confidence(cand: &Candidate, prior: Option<&MotionPrior>, cfg: &FusionConfig) -> Result<f64, FusionError> {
    if cand.speed() > cfg.max_speed {
        return Ok(FACTOR_MIN);
    }
    let Some(prior) = prior else {
        return Ok(NEUTRAL_PHYSICAL);
    };
    let dt = cand.timestamp() - prior.timestamp;
    if !(dt > 0.0) {
        return Err(FusionError::NonPositiveDt(dt));
    }
    let accel = dist(cand.velocity(), prior.velocity) / dt;
    let label = cand.ref_label();
    let predicted = add(prior.bbox.point(label), scale(prior.velocity, dt));
    let jump = dist(cand.ref_pos(), predicted);
    let jump_scale = cfg.max_accel * dt * dt / 2.0 + cfg.jump_gate;
    let a = accel / cfg.max_accel;
    let j = jump / jump_scale;
    Ok(clamp_factor((-(a * a)).exp() * (-(j * j)).exp()))
}

/// Cross-module evidence for a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confirmation {
    /// Inside both fields of view and recently seen by the other module.
    Confirmed,
    /// Inside both fields of view, the other module reports nothing there.
    Silent,
    /// Outside the other module's field of view.
    OutsideOtherFov,
}

/// Module-specific confidence. Tracks use existence and covariance, grid
/// objects their persistence over consecutive samples.
pub fn module_confidence(cand: &Candidate, grid_hits: u32, confirmation: Confirmation, cfg: &FusionConfig) -> f64 {
    let base = match cand {
        Candidate::Track(t) => t.existence * (-t.cov_trace() / cfg.cov_scale).exp(),
        Candidate::Grid(_) => 1.0 - (-(grid_hits as f64) / cfg.existence_scale).exp(),
    };
    let bonus = match confirmation {
        Confirmation::Confirmed => cfg.confirm_bonus_high,
        Confirmation::Silent => cfg.confirm_bonus_low,
        Confirmation::OutsideOtherFov => 1.0,
    };
    clamp_factor(base * bonus)
}

/// Digital-map consistency of an object at `center` with `heading`.
pub fn map_confidence(center: Point2, heading: f64, class: ObjectClass, map: &DigitalMap, cfg: &FusionConfig) -> Result<f64, FusionError> {
    if map.frame != MapFrame::EgoStationary {
        return Err(FusionError::MapFrame);
    }
    let building = if map.point_in_building(center, cfg.building_inset) { cfg.building_penalty } else { 1.0 };
    let lane = if class.is_vehicle() {
        match map.associate_rectangle(center, heading, cfg.rect_gate) {
            Some(m) => {
                let h = m.heading_deviation / cfg.heading_sigma_deg.to_radians();
                let o = m.lateral_offset / cfg.offset_sigma;
                (-(h * h) - o * o).exp()
            }
            None => cfg.lane_neutral,
        }
    } else {
        cfg.lane_neutral
    };
    Ok(clamp_factor(building * lane))
}

pub fn combined_confidence(eta_p: f64, eta_e: f64, eta_m: f64) -> f64 {
    eta_p * eta_e * eta_m
}
