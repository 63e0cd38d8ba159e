//! Constant-velocity Kalman filter over `(cx, cy, w, h)` and their per-frame velocities.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::BBox;

type Vec8 = SVector<f64, 8>;
type Mat8 = SMatrix<f64, 8, 8>;
type Mat4 = SMatrix<f64, 4, 4>;
type Mat48 = SMatrix<f64, 4, 8>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotionError {
    #[error("non-finite measurement {0:?}")]
    NonFiniteMeasurement(BBox),
    #[error("innovation covariance is singular")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KalmanConfig {
    /// Process noise std for position and size, pixels.
    pub process_pos_std: f64,
    /// Process noise std for velocities, pixels per frame.
    pub process_vel_std: f64,
    pub measurement_std: f64,
    pub init_pos_std: f64,
    pub init_vel_std: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            process_pos_std: 1.0,
            process_vel_std: 0.5,
            measurement_std: 1.0,
            init_pos_std: 2.0,
            init_vel_std: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: Vec8,
    pub covariance: Mat8,
}

impl KalmanState {
    /// Position/size part of the mean as a box; negative extents clamp to 0.
    pub fn predicted_box(&self) -> BBox {
        let m = &self.mean;
        BBox::from_center(m[0], m[1], m[2].max(0.0), m[3].max(0.0))
    }
}

pub fn predicted_box(s: &KalmanState) -> BBox {
    s.predicted_box()
}

/// Filter matrices built once from a [`KalmanConfig`].
#[derive(Debug, Clone)]
pub struct KalmanFilter {
    transition: Mat8,
    process_noise: Mat8,
    observation: Mat48,
    measurement_noise: Mat4,
    init_cov: Mat8,
}

impl KalmanFilter {
    pub fn new(cfg: &KalmanConfig) -> Self {
        let mut transition = Mat8::identity();
        for i in 0..4 {
            transition[(i, i + 4)] = 1.0;
        }
        let mut process_noise = Mat8::zeros();
        let mut init_cov = Mat8::zeros();
        for i in 0..4 {
            process_noise[(i, i)] = cfg.process_pos_std.powi(2);
            process_noise[(i + 4, i + 4)] = cfg.process_vel_std.powi(2);
            init_cov[(i, i)] = cfg.init_pos_std.powi(2);
            init_cov[(i + 4, i + 4)] = cfg.init_vel_std.powi(2);
        }
        let mut observation = Mat48::zeros();
        for i in 0..4 {
            observation[(i, i)] = 1.0;
        }
        Self {
            transition,
            process_noise,
            observation,
            measurement_noise: Mat4::identity() * cfg.measurement_std.powi(2),
            init_cov,
        }
    }

    pub fn init(&self, b: &BBox) -> KalmanState {
        let (cx, cy) = b.center();
        KalmanState {
            mean: Vec8::from_column_slice(&[cx, cy, b.w, b.h, 0.0, 0.0, 0.0, 0.0]),
            covariance: self.init_cov,
        }
    }

    pub fn predict(&self, s: &KalmanState) -> KalmanState {
        let mean = self.transition * s.mean;
        let cov = self.transition * s.covariance * self.transition.transpose() + self.process_noise;
        KalmanState {
            mean,
            covariance: symmetrize(cov),
        }
    }

    /// Measurement update in Joseph form, which keeps the covariance PSD.
    pub fn update(&self, s: &KalmanState, b: &BBox) -> Result<KalmanState, MotionError> {
        if !b.is_valid() {
            return Err(MotionError::NonFiniteMeasurement(*b));
        }
        let (cx, cy) = b.center();
        let z = SVector::<f64, 4>::new(cx, cy, b.w, b.h);
        let h = &self.observation;
        let innovation = z - h * s.mean;
        let s_cov = h * s.covariance * h.transpose() + self.measurement_noise;
        let s_inv = s_cov.try_inverse().ok_or(MotionError::Singular)?;
        let gain = s.covariance * h.transpose() * s_inv;
        let mean = s.mean + gain * innovation;
        let i_kh = Mat8::identity() - gain * h;
        let cov = i_kh * s.covariance * i_kh.transpose()
            + gain * self.measurement_noise * gain.transpose();
        Ok(KalmanState {
            mean,
            covariance: symmetrize(cov),
        })
    }
}

fn symmetrize(m: Mat8) -> Mat8 {
    (m + m.transpose()) * 0.5
}

pub fn kf_init(b: &BBox, cfg: &KalmanConfig) -> KalmanState {
    KalmanFilter::new(cfg).init(b)
}

pub fn kf_predict(s: &KalmanState, cfg: &KalmanConfig) -> KalmanState {
    KalmanFilter::new(cfg).predict(s)
}

pub fn kf_update(s: &KalmanState, b: &BBox, cfg: &KalmanConfig) -> Result<KalmanState, MotionError> {
    KalmanFilter::new(cfg).update(s, b)
}
