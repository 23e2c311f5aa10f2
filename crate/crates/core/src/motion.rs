//! Constant-velocity Kalman filter over box state.
//!
//! State is `(cx, cy, s, r, vcx, vcy, vs, vr)`: box center, area, aspect ratio
//! `w / h` and their per-frame velocities. Measurements are `(cx, cy, s, r)`.
//! Noise standard deviations scale with the box: positions with its height,
//! area with the area and aspect with the aspect ratio.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::BoundingBox;

pub type StateVector = SVector<f64, 8>;
pub type StateCovariance = SMatrix<f64, 8, 8>;
type Measurement = SVector<f64, 4>;
type MeasurementCovariance = SMatrix<f64, 4, 4>;
type Observation = SMatrix<f64, 4, 8>;

/// 0.95 quantile of the chi-square distribution with 4 degrees of freedom.
pub const CHI2_95_4DOF: f64 = 9.4877;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MotionError {
    #[error("box has no area")]
    DegenerateBox,
    #[error("state is not finite")]
    NonFinite,
    #[error("innovation covariance is singular")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionConfig {
    pub std_weight_position: f64,
    pub std_weight_velocity: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self { std_weight_position: 1.0 / 20.0, std_weight_velocity: 1.0 / 160.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: StateVector,
    pub covariance: StateCovariance,
}

/// `(cx, cy, s, r)` of a box; fails on zero width or height.
pub fn measurement_of(b: &BoundingBox) -> Result<[f64; 4], MotionError> {
    let (w, h) = (b.width(), b.height());
    if ![b.x_min, b.y_min, b.x_max, b.y_max].iter().all(|v| v.is_finite()) {
        return Err(MotionError::NonFinite);
    }
    if w <= 0.0 || h <= 0.0 {
        return Err(MotionError::DegenerateBox);
    }
    let (cx, cy) = b.center();
    Ok([cx, cy, w * h, w / h])
}

impl MotionConfig {
    fn height(s: f64, r: f64) -> f64 {
        libm::sqrt((s / r).max(0.0))
    }

    fn position_std(&self, s: f64, r: f64) -> [f64; 4] {
        let w = self.std_weight_position;
        let h = Self::height(s, r);
        [w * h, w * h, 2.0 * w * s.abs(), 2.0 * w * r.abs()]
    }

    fn velocity_std(&self, s: f64, r: f64) -> [f64; 4] {
        let w = self.std_weight_velocity;
        let h = Self::height(s, r);
        [w * h, w * h, 2.0 * w * s.abs(), 2.0 * w * r.abs()]
    }

    fn measurement_noise(&self, s: f64, r: f64) -> MeasurementCovariance {
        let std = self.position_std(s, r);
        MeasurementCovariance::from_diagonal(&Measurement::from_fn(|i, _| std[i] * std[i]))
    }

    fn process_noise(&self, s: f64, r: f64) -> StateCovariance {
        let pos = self.position_std(s, r);
        let vel = self.velocity_std(s, r);
        StateCovariance::from_diagonal(&StateVector::from_fn(|i, _| {
            let v = if i < 4 { pos[i] } else { vel[i - 4] };
            v * v
        }))
    }
}

fn transition() -> StateCovariance {
    let mut f = StateCovariance::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

fn observation() -> Observation {
    let mut h = Observation::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

fn symmetrize(p: &mut StateCovariance) {
    *p = (*p + p.transpose()) * 0.5;
}

impl KalmanState {
    /// Position from the box, zero velocity, diagonal covariance.
    pub fn new(b: &BoundingBox, cfg: &MotionConfig) -> Result<Self, MotionError> {
        let z = measurement_of(b)?;
        let mut mean = StateVector::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(&Measurement::from(z));
        let pos = cfg.position_std(z[2], z[3]);
        let vel = cfg.velocity_std(z[2], z[3]);
        let covariance = StateCovariance::from_diagonal(&StateVector::from_fn(|i, _| {
            let v = if i < 4 { 2.0 * pos[i] } else { 10.0 * vel[i - 4] };
            v * v
        }));
        Ok(Self { mean, covariance })
    }

    pub fn center(&self) -> (f64, f64) {
        (self.mean[0], self.mean[1])
    }

    /// Current box estimate in the same coordinates as the measurements.
    pub fn to_box(&self) -> BoundingBox {
        let (cx, cy, s, r) = (self.mean[0], self.mean[1], self.mean[2], self.mean[3]);
        let w = libm::sqrt((s * r).max(0.0));
        let h = if w > 0.0 { s / w } else { 0.0 };
        BoundingBox::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    fn check_finite(&self) -> Result<(), MotionError> {
        if self.mean.iter().chain(self.covariance.iter()).all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(MotionError::NonFinite)
        }
    }

    pub fn predict(&self, cfg: &MotionConfig) -> Result<Self, MotionError> {
        self.check_finite()?;
        let mut mean = self.mean;
        // area and aspect must stay positive
        for i in [2, 3] {
            if mean[i] + mean[i + 4] <= 0.0 {
                mean[i + 4] = 0.0;
            }
        }
        let f = transition();
        let mean = f * mean;
        let mut covariance = f * self.covariance * f.transpose() + cfg.process_noise(mean[2], mean[3]);
        symmetrize(&mut covariance);
        Ok(Self { mean, covariance })
    }

    fn innovation(
        &self,
        b: &BoundingBox,
        cfg: &MotionConfig,
    ) -> Result<(Measurement, MeasurementCovariance), MotionError> {
        self.check_finite()?;
        let z = Measurement::from(measurement_of(b)?);
        let h = observation();
        let y = z - h * self.mean;
        let s = h * self.covariance * h.transpose() + cfg.measurement_noise(self.mean[2], self.mean[3]);
        Ok((y, s))
    }

    /// Standard Kalman update with a Joseph-form covariance step.
    pub fn update(&self, b: &BoundingBox, cfg: &MotionConfig) -> Result<Self, MotionError> {
        let (y, s) = self.innovation(b, cfg)?;
        let r = cfg.measurement_noise(self.mean[2], self.mean[3]);
        let h = observation();
        let chol = s.cholesky().ok_or(MotionError::Singular)?;
        // K = P H^T S^-1, solved as S K^T = H P
        let gain = chol.solve(&(h * self.covariance)).transpose();
        let mean = self.mean + gain * y;
        let i_kh = StateCovariance::identity() - gain * h;
        let mut covariance = i_kh * self.covariance * i_kh.transpose() + gain * r * gain.transpose();
        symmetrize(&mut covariance);
        let next = Self { mean, covariance };
        next.check_finite()?;
        Ok(next)
    }

    /// Squared Mahalanobis distance of the box from the predicted measurement.
    pub fn mahalanobis_sq(&self, b: &BoundingBox, cfg: &MotionConfig) -> Result<f64, MotionError> {
        let (y, s) = self.innovation(b, cfg)?;
        let chol = s.cholesky().ok_or(MotionError::Singular)?;
        let d = y.dot(&chol.solve(&y));
        if d.is_finite() {
            Ok(d)
        } else {
            Err(MotionError::Singular)
        }
    }
}

pub fn kf_init(b: &BoundingBox, cfg: &MotionConfig) -> Result<KalmanState, MotionError> {
    KalmanState::new(b, cfg)
}

pub fn kf_predict(state: &KalmanState, cfg: &MotionConfig) -> Result<KalmanState, MotionError> {
    state.predict(cfg)
}

pub fn kf_update(state: &KalmanState, b: &BoundingBox, cfg: &MotionConfig) -> Result<KalmanState, MotionError> {
    state.update(b, cfg)
}

/// Outcome of a gating check; degenerate states never pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateOutcome {
    Pass(f64),
    Fail(f64),
    Degenerate,
}

impl GateOutcome {
    pub fn passed(self) -> bool {
        matches!(self, GateOutcome::Pass(_))
    }
}

pub fn gate_outcome(state: &KalmanState, b: &BoundingBox, threshold: f64, cfg: &MotionConfig) -> GateOutcome {
    match state.mahalanobis_sq(b, cfg) {
        Ok(d) if d <= threshold => GateOutcome::Pass(d),
        Ok(d) => GateOutcome::Fail(d),
        Err(_) => GateOutcome::Degenerate,
    }
}

pub fn gate(state: &KalmanState, b: &BoundingBox, threshold: f64, cfg: &MotionConfig) -> bool {
    gate_outcome(state, b, threshold, cfg).passed()
}
