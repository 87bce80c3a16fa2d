//! Ego motion: CTRA dead reckoning in the ego-stationary frame, a linear
//! Kalman filter over the dynamic states (v, a, ω), and rigid transforms
//! between global (UTM, treated as planar meters) and ego-stationary
//! coordinates.

use crate::geometry::{rotate, wrap_angle, Point2, Pose2};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Turn rates below this magnitude use the straight-line limit.
pub const OMEGA_EPS: f64 = 1e-6;

/// Below this |ω·dt| the arc integrals are evaluated by their series.
const SERIES_THRESHOLD: f64 = 1e-2;

#[derive(Debug, Error, PartialEq)]
pub enum EgoError {
    #[error("negative time step {0}")]
    NegativeDt(f64),
    #[error("{0} covariance is not positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("IMU timestamps must strictly increase ({prev} then {next})")]
    NonMonotonicSample { prev: f64, next: f64 },
}

/// Ego state in ego-stationary coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EgoState {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub a: f64,
    pub phi: f64,
    pub omega: f64,
    pub timestamp: f64,
}

impl EgoState {
    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.x, self.y, self.phi)
    }
}

/// Ego state in global coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GlobalEgoState {
    pub utm_e: f64,
    pub utm_n: f64,
    pub v: f64,
    pub a: f64,
    pub phi_gc: f64,
    pub omega: f64,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub accel_meas: f64,
    pub yawrate_meas: f64,
    /// Wheel-odometry speed, so that v is observable.
    pub speed_meas: f64,
    pub timestamp: f64,
}

/// Arc integrals of the CTRA model over `[0, dt]`:
/// `(∫cos ωt, ∫sin ωt, ∫t·cos ωt, ∫t·sin ωt)`.
fn arc_integrals(omega: f64, dt: f64) -> (f64, f64, f64, f64) {
    let th = omega * dt;
    if th.abs() < SERIES_THRESHOLD {
        let w2 = omega * omega;
        let t2 = dt * dt;
        let c0 = dt * (1.0 - w2 * t2 / 6.0 + w2 * w2 * t2 * t2 / 120.0);
        let s0 = omega * t2 * (0.5 - w2 * t2 / 24.0 + w2 * w2 * t2 * t2 / 720.0);
        let c1 = t2 * (0.5 - w2 * t2 / 8.0 + w2 * w2 * t2 * t2 / 144.0);
        let s1 = omega * t2 * dt * (1.0 / 3.0 - w2 * t2 / 30.0 + w2 * w2 * t2 * t2 / 840.0);
        (c0, s0, c1, s1)
    } else {
        let (s, c) = th.sin_cos();
        let c0 = s / omega;
        let s0 = (1.0 - c) / omega;
        let c1 = dt * s / omega - (1.0 - c) / (omega * omega);
        let s1 = -dt * c / omega + s / (omega * omega);
        (c0, s0, c1, s1)
    }
}

/// Closed-form CTRA propagation of position, heading and speed.
pub fn ctra_predict(state: &EgoState, dt: f64) -> Result<EgoState, EgoError> {
    if !(dt >= 0.0) {
        return Err(EgoError::NegativeDt(dt));
    }
    let (sin_phi, cos_phi) = state.phi.sin_cos();
    let (dx, dy) = if state.omega.abs() < OMEGA_EPS {
        let s = state.v * dt + 0.5 * state.a * dt * dt;
        (s * cos_phi, s * sin_phi)
    } else {
        let (c0, s0, c1, s1) = arc_integrals(state.omega, dt);
        // ∫(v + a t)·cos(φ + ωt) dt and the matching sine integral
        let ic = cos_phi * c0 - sin_phi * s0;
        let is = sin_phi * c0 + cos_phi * s0;
        let itc = cos_phi * c1 - sin_phi * s1;
        let its = sin_phi * c1 + cos_phi * s1;
        (state.v * ic + state.a * itc, state.v * is + state.a * its)
    };
    Ok(EgoState {
        x: state.x + dx,
        y: state.y + dy,
        v: state.v + state.a * dt,
        a: state.a,
        phi: wrap_angle(state.phi + state.omega * dt),
        omega: state.omega,
        timestamp: state.timestamp + dt,
    })
}

/// Gaussian belief over (v, a, ω).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynKalmanState {
    pub mean: Vector3<f64>,
    pub cov: Matrix3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanNoise {
    /// Diagonal process noise per second for (v, a, ω).
    pub process: [f64; 3],
    /// Diagonal measurement noise variances for (v, a, ω).
    pub measurement: [f64; 3],
}

impl Default for KalmanNoise {
    fn default() -> Self {
        Self { process: [0.5, 0.5, 0.05], measurement: [0.1, 0.2, 0.01] }
    }
}

fn is_positive_definite(m: &Matrix3<f64>) -> bool {
    (m - m.transpose()).abs().max() <= 1e-9 * (1.0 + m.abs().max()) && m.cholesky().is_some()
}

impl DynKalmanState {
    pub fn new(mean: [f64; 3], cov_diag: [f64; 3]) -> Self {
        Self { mean: Vector3::from(mean), cov: Matrix3::from_diagonal(&Vector3::from(cov_diag)) }
    }

    /// One predict/update cycle with direct observation of (v, a, ω).
    pub fn predict_update(&self, sample: &ImuSample, dt: f64, noise: &KalmanNoise) -> Result<Self, EgoError> {
        if !(dt >= 0.0) {
            return Err(EgoError::NegativeDt(dt));
        }
        if !is_positive_definite(&self.cov) {
            return Err(EgoError::NotPositiveDefinite("state"));
        }
        if noise.measurement.iter().any(|&r| !(r > 0.0)) {
            return Err(EgoError::NotPositiveDefinite("measurement"));
        }
        if noise.process.iter().any(|&q| !(q >= 0.0)) {
            return Err(EgoError::NotPositiveDefinite("process"));
        }
        let f = Matrix3::new(1.0, dt, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        let q = Matrix3::from_diagonal(&Vector3::from(noise.process)) * dt;
        let r = Matrix3::from_diagonal(&Vector3::from(noise.measurement));
        let mean_pred = f * self.mean;
        let cov_pred = f * self.cov * f.transpose() + q;

        let z = Vector3::new(sample.speed_meas, sample.accel_meas, sample.yawrate_meas);
        let s = cov_pred + r;
        let s_inv = s.try_inverse().ok_or(EgoError::NotPositiveDefinite("innovation"))?;
        let gain = cov_pred * s_inv;
        let mean = mean_pred + gain * (z - mean_pred);
        // Joseph form keeps the posterior symmetric positive definite
        let i_k = Matrix3::identity() - gain;
        let cov = i_k * cov_pred * i_k.transpose() + gain * r * gain.transpose();
        let cov = (cov + cov.transpose()) * 0.5;
        Ok(Self { mean, cov })
    }
}

/// Dead-reckoning ego tracker: filters IMU samples and integrates CTRA.
#[derive(Debug, Clone)]
pub struct EgoTracker {
    pub state: EgoState,
    pub filter: DynKalmanState,
    pub noise: KalmanNoise,
}

impl EgoTracker {
    /// Starts at the origin of the ego-stationary frame.
    pub fn new(timestamp: f64, noise: KalmanNoise) -> Self {
        Self {
            state: EgoState { timestamp, ..EgoState::default() },
            filter: DynKalmanState::new([0.0, 0.0, 0.0], [10.0, 10.0, 1.0]),
            noise,
        }
    }

    pub fn ingest(&mut self, sample: &ImuSample) -> Result<EgoState, EgoError> {
        if sample.timestamp <= self.state.timestamp {
            return Err(EgoError::NonMonotonicSample { prev: self.state.timestamp, next: sample.timestamp });
        }
        let dt = sample.timestamp - self.state.timestamp;
        let moved = ctra_predict(&self.state, dt)?;
        self.filter = self.filter.predict_update(sample, dt, &self.noise)?;
        self.state = EgoState {
            v: self.filter.mean[0],
            a: self.filter.mean[1],
            omega: self.filter.mean[2],
            ..moved
        };
        Ok(self.state)
    }
}

/// Pairing of the same physical pose in both frames; defines the rigid
/// global → ego-stationary transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub global: GlobalEgoState,
    pub ego: EgoState,
}

impl Anchor {
    /// Anchor for a frame initialized at the ego start pose.
    pub fn at_start(global: GlobalEgoState) -> Self {
        Self { global, ego: EgoState { timestamp: global.timestamp, ..EgoState::default() } }
    }

    fn rotation(&self) -> f64 {
        self.ego.phi - self.global.phi_gc
    }

    pub fn global_to_ego_point(&self, p: Point2) -> Point2 {
        let local = rotate([p[0] - self.global.utm_e, p[1] - self.global.utm_n], self.rotation());
        [local[0] + self.ego.x, local[1] + self.ego.y]
    }

    pub fn ego_to_global_point(&self, p: Point2) -> Point2 {
        let g = rotate([p[0] - self.ego.x, p[1] - self.ego.y], -self.rotation());
        [g[0] + self.global.utm_e, g[1] + self.global.utm_n]
    }

    pub fn global_to_ego_heading(&self, phi_gc: f64) -> f64 {
        wrap_angle(phi_gc + self.rotation())
    }

    pub fn ego_to_global_heading(&self, phi: f64) -> f64 {
        wrap_angle(phi - self.rotation())
    }
}

/// Global pose `(utm_e, utm_n, φ_gc)` to ego-stationary `(x, y, φ)`.
pub fn global_to_ego(p_global: Pose2, anchor: &Anchor) -> Pose2 {
    let [x, y] = anchor.global_to_ego_point([p_global.x, p_global.y]);
    Pose2::new(x, y, anchor.global_to_ego_heading(p_global.phi))
}

/// Inverse of [`global_to_ego`].
pub fn ego_to_global(p_ego: Pose2, anchor: &Anchor) -> Pose2 {
    let [e, n] = anchor.ego_to_global_point([p_ego.x, p_ego.y]);
    Pose2::new(e, n, anchor.ego_to_global_heading(p_ego.phi))
}
