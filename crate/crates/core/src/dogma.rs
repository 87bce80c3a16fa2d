//! Dynamic occupancy grid cell model.
//!
//! A frame stores its cells densely in row-major order. Cell positions are
//! not stored; they follow from the index, the cell size and the frame
//! origin (see [`DogmaFrame::cell_position`]). The origin is the lower-left
//! grid corner expressed in ego-stationary coordinates, so every cell
//! position handed to the extraction stages is already in the common frame.
//!
//! # Line format
//!
//! One JSON object per line:
//!
//! ```text
//! {"timestamp":0.1,"width_m":120.0,"height_m":120.0,"cell_size":0.15,
//!  "origin":[-60.0,-60.0],"ego_pose":{"x":60.0,"y":60.0,"phi":0.0},
//!  "cells":[[index,m_occ,m_free,vx,vy,var_vx,cov_vxvy,var_vy], ...]}
//! ```
//!
//! Only cells that differ from [`CellState::UNKNOWN`] are listed.

use crate::geometry::{Point2, Pose2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Determinant below which a velocity covariance is treated as singular.
pub const COV_DET_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum DogmaError {
    #[error("grid extent {extent} m is not a whole number of {cell_size} m cells")]
    NonIntegralExtent { extent: f64, cell_size: f64 },
    #[error("expected {expected} cells, got {actual}")]
    CellCountMismatch { expected: usize, actual: usize },
    #[error("cell {index} violates the cell invariants: {reason}")]
    InvalidCell { index: usize, reason: &'static str },
    #[error("velocity covariance is singular (det = {det:e})")]
    SingularCovariance { det: f64 },
    #[error("orientation undefined for zero velocity")]
    DegenerateVelocity,
    #[error("malformed frame record: {0}")]
    Format(String),
}

/// State of one grid cell. The position is derived from the cell index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellState {
    pub m_occ: f64,
    pub m_free: f64,
    pub vel: [f64; 2],
    /// Row-major `[[σ²_vx, σ_vxvy], [σ_vyvx, σ²_vy]]`.
    pub vel_cov: [[f64; 2]; 2],
}

impl CellState {
    /// Cell without any evidence: both masses zero.
    pub const UNKNOWN: CellState = CellState {
        m_occ: 0.0,
        m_free: 0.0,
        vel: [0.0, 0.0],
        vel_cov: [[100.0, 0.0], [0.0, 100.0]],
    };

    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.m_occ >= 0.0 && self.m_free >= 0.0) {
            return Err("negative mass");
        }
        if self.m_occ + self.m_free > 1.0 + 1e-12 {
            return Err("masses sum above one");
        }
        let c = &self.vel_cov;
        if c[0][1] != c[1][0] {
            return Err("covariance not symmetric");
        }
        if c[0][0] < 0.0 || c[1][1] < 0.0 || c[0][0] * c[1][1] - c[0][1] * c[1][0] < -1e-12 {
            return Err("covariance not positive semi-definite");
        }
        if !self.vel.iter().all(|v| v.is_finite()) {
            return Err("non-finite velocity");
        }
        Ok(())
    }

    /// Bayesian occupancy probability from the two evidential masses.
    pub fn occupancy_probability(&self) -> f64 {
        0.5 * self.m_occ + 0.5 * (1.0 - self.m_free)
    }

    pub fn speed(&self) -> f64 {
        self.vel[0].hypot(self.vel[1])
    }

    pub fn orientation(&self) -> Result<f64, DogmaError> {
        if self.vel == [0.0, 0.0] {
            return Err(DogmaError::DegenerateVelocity);
        }
        Ok(self.vel[1].atan2(self.vel[0]))
    }

    /// Mahalanobis distance of the cell velocity from zero velocity.
    pub fn zero_velocity_mahalanobis(&self) -> Result<f64, DogmaError> {
        let [[a, b], [c, d]] = self.vel_cov;
        let det = a * d - b * c;
        if !(det >= COV_DET_FLOOR) {
            return Err(DogmaError::SingularCovariance { det });
        }
        let [vx, vy] = self.vel;
        // vᵀ P⁻¹ v with the closed-form 2×2 inverse
        let q = (d * vx * vx - (b + c) * vx * vy + a * vy * vy) / det;
        Ok(q.max(0.0).sqrt())
    }
}

/// One grid sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DogmaFrame {
    pub width_m: f64,
    pub height_m: f64,
    pub cell_size: f64,
    pub timestamp: f64,
    /// Lower-left grid corner in ego-stationary coordinates.
    pub origin: Point2,
    /// Vehicle pose relative to `origin`.
    pub ego_pose_in_grid: Pose2,
    cols: usize,
    rows: usize,
    cells: Vec<CellState>,
}

fn cell_count(extent: f64, cell_size: f64) -> Result<usize, DogmaError> {
    let n = extent / cell_size;
    let rounded = n.round();
    if rounded < 1.0 || (n - rounded).abs() > 1e-6 {
        return Err(DogmaError::NonIntegralExtent { extent, cell_size });
    }
    Ok(rounded as usize)
}

impl DogmaFrame {
    /// Frame filled with unknown cells.
    pub fn unknown(
        width_m: f64,
        height_m: f64,
        cell_size: f64,
        timestamp: f64,
        origin: Point2,
        ego_pose_in_grid: Pose2,
    ) -> Result<Self, DogmaError> {
        let cols = cell_count(width_m, cell_size)?;
        let rows = cell_count(height_m, cell_size)?;
        Ok(Self {
            width_m,
            height_m,
            cell_size,
            timestamp,
            origin,
            ego_pose_in_grid,
            cols,
            rows,
            cells: vec![CellState::UNKNOWN; cols * rows],
        })
    }

    pub fn from_cells(
        width_m: f64,
        height_m: f64,
        cell_size: f64,
        timestamp: f64,
        origin: Point2,
        ego_pose_in_grid: Pose2,
        cells: Vec<CellState>,
    ) -> Result<Self, DogmaError> {
        let mut frame = Self::unknown(width_m, height_m, cell_size, timestamp, origin, ego_pose_in_grid)?;
        if cells.len() != frame.cells.len() {
            return Err(DogmaError::CellCountMismatch { expected: frame.cells.len(), actual: cells.len() });
        }
        for (index, c) in cells.iter().enumerate() {
            c.validate().map_err(|reason| DogmaError::InvalidCell { index, reason })?;
        }
        frame.cells = cells;
        Ok(frame)
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn cell(&self, index: usize) -> &CellState {
        &self.cells[index]
    }

    /// Overwrites one cell after checking its invariants.
    pub fn set_cell(&mut self, index: usize, cell: CellState) -> Result<(), DogmaError> {
        cell.validate().map_err(|reason| DogmaError::InvalidCell { index, reason })?;
        self.cells[index] = cell;
        Ok(())
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    /// Cell center in ego-stationary coordinates.
    pub fn cell_position(&self, index: usize) -> Point2 {
        let row = index / self.cols;
        let col = index % self.cols;
        [
            self.origin[0] + (col as f64 + 0.5) * self.cell_size,
            self.origin[1] + (row as f64 + 0.5) * self.cell_size,
        ]
    }

    /// Index of the cell containing `p`, if inside the grid.
    pub fn cell_at(&self, p: Point2) -> Option<usize> {
        let cx = ((p[0] - self.origin[0]) / self.cell_size).floor();
        let cy = ((p[1] - self.origin[1]) / self.cell_size).floor();
        if cx < 0.0 || cy < 0.0 || cx >= self.cols as f64 || cy >= self.rows as f64 {
            return None;
        }
        Some(self.index(cy as usize, cx as usize))
    }

    /// Vehicle pose in ego-stationary coordinates.
    pub fn ego_pose(&self) -> Pose2 {
        Pose2::new(
            self.origin[0] + self.ego_pose_in_grid.x,
            self.origin[1] + self.ego_pose_in_grid.y,
            self.ego_pose_in_grid.phi,
        )
    }

    pub fn to_record(&self) -> FrameRecord {
        let cells = self
            .cells
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != CellState::UNKNOWN)
            .map(|(i, c)| {
                [
                    i as f64,
                    c.m_occ,
                    c.m_free,
                    c.vel[0],
                    c.vel[1],
                    c.vel_cov[0][0],
                    c.vel_cov[0][1],
                    c.vel_cov[1][1],
                ]
            })
            .collect();
        FrameRecord {
            timestamp: self.timestamp,
            width_m: self.width_m,
            height_m: self.height_m,
            cell_size: self.cell_size,
            origin: self.origin,
            ego_pose: self.ego_pose_in_grid,
            cells,
        }
    }

    pub fn from_record(rec: &FrameRecord) -> Result<Self, DogmaError> {
        let mut frame = Self::unknown(rec.width_m, rec.height_m, rec.cell_size, rec.timestamp, rec.origin, rec.ego_pose)?;
        for c in &rec.cells {
            let index = c[0];
            if index < 0.0 || index.fract() != 0.0 || index as usize >= frame.len() {
                return Err(DogmaError::Format(format!("cell index {index} out of range")));
            }
            let cell = CellState {
                m_occ: c[1],
                m_free: c[2],
                vel: [c[3], c[4]],
                vel_cov: [[c[5], c[6]], [c[6], c[7]]],
            };
            frame.set_cell(index as usize, cell)?;
        }
        Ok(frame)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("frame record serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self, DogmaError> {
        let rec: FrameRecord = serde_json::from_str(line).map_err(|e| DogmaError::Format(e.to_string()))?;
        Self::from_record(&rec)
    }
}

/// Serialized frame: sparse list of non-unknown cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub timestamp: f64,
    pub width_m: f64,
    pub height_m: f64,
    pub cell_size: f64,
    pub origin: Point2,
    pub ego_pose: Pose2,
    pub cells: Vec<[f64; 8]>,
}
