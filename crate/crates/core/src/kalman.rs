//! Linear Kalman baselines: constant velocity (order 1) and constant
//! acceleration (order 2) per keypoint.
//!
//! Process noise follows the per-step diagonal "motion noise" convention of
//! common toolbox implementations: one variance per derivative block, added
//! every predict regardless of `dt`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::skeleton::{Frame, Joint, Keypoint, Point3, Skeleton};
use crate::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanConfig {
    /// 1 = constant velocity, 2 = constant acceleration.
    pub order: usize,
    /// Measurement standard deviation per axis, meters.
    pub measurement_std: f64,
    /// Per-step process variance for position, velocity, acceleration. Only
    /// the first `order + 1` entries are used.
    pub motion_noise: [f64; 3],
    /// Initial variance for position, velocity, acceleration.
    pub initial_error: [f64; 3],
}

impl KalmanConfig {
    pub fn constant_velocity() -> Self {
        Self {
            order: 1,
            measurement_std: 0.05,
            motion_noise: [1e-4, 1e-2, 0.0],
            initial_error: [0.05 * 0.05, 1.0, 0.0],
        }
    }

    pub fn constant_acceleration() -> Self {
        Self {
            order: 2,
            measurement_std: 0.05,
            motion_noise: [1e-4, 1e-2, 1.0],
            initial_error: [0.05 * 0.05, 1.0, 10.0],
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.order == 1 || self.order == 2) {
            return Err(ConfigError::invalid("kalman.order", "must be 1 or 2"));
        }
        if !(self.measurement_std > 0.0) {
            return Err(ConfigError::invalid("kalman.measurement_std", "must be > 0"));
        }
        if self
            .motion_noise
            .iter()
            .chain(&self.initial_error)
            .any(|v| !(*v >= 0.0))
        {
            return Err(ConfigError::invalid(
                "kalman.motion_noise/initial_error",
                "must be >= 0",
            ));
        }
        Ok(())
    }

    fn dim(&self) -> usize {
        3 * (self.order + 1)
    }
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self::constant_velocity()
    }
}

/// Mean `[p, v, (a)]` stacked per block of three axes, and its covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub order: usize,
}

/// Flags raised while filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateFlag {
    Ok,
    /// Covariance came out non-symmetric or with a negative diagonal and was
    /// repaired.
    Repaired,
}

impl KalmanState {
    pub fn new(position: Point3, cfg: &KalmanConfig) -> Self {
        let n = cfg.dim();
        let mut mean = DVector::zeros(n);
        mean.rows_mut(0, 3).copy_from(&position);
        let diag = DVector::from_fn(n, |i, _| cfg.initial_error[i / 3]);
        Self {
            mean,
            covariance: DMatrix::from_diagonal(&diag),
            order: cfg.order,
        }
    }

    pub fn position(&self) -> Point3 {
        Point3::new(self.mean[0], self.mean[1], self.mean[2])
    }

    pub fn velocity(&self) -> Point3 {
        Point3::new(self.mean[3], self.mean[4], self.mean[5])
    }

    pub fn acceleration(&self) -> Option<Point3> {
        (self.order == 2).then(|| Point3::new(self.mean[6], self.mean[7], self.mean[8]))
    }

    fn transition(&self, dt: f64) -> DMatrix<f64> {
        let n = 3 * (self.order + 1);
        let mut f = DMatrix::identity(n, n);
        for i in 0..3 {
            f[(i, 3 + i)] = dt;
            if self.order == 2 {
                f[(i, 6 + i)] = 0.5 * dt * dt;
                f[(3 + i, 6 + i)] = dt;
            }
        }
        f
    }

    pub fn predict(&mut self, dt: f64, cfg: &KalmanConfig) {
        debug_assert!(dt > 0.0);
        let f = self.transition(dt);
        let n = f.nrows();
        let q = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| cfg.motion_noise[i / 3]));
        self.mean = &f * &self.mean;
        self.covariance = &f * &self.covariance * f.transpose() + q;
    }

    /// Position-only correction in Joseph form.
    pub fn update(&mut self, measurement: Point3, cfg: &KalmanConfig) -> UpdateFlag {
        let n = self.mean.len();
        let mut h = DMatrix::zeros(3, n);
        for i in 0..3 {
            h[(i, i)] = 1.0;
        }
        let r = DMatrix::identity(3, 3) * cfg.measurement_std.powi(2);
        let innovation = DVector::from_column_slice(measurement.as_slice()) - &h * &self.mean;
        let s = &h * &self.covariance * h.transpose() + &r;
        let Some(s_inv) = s.try_inverse() else {
            return UpdateFlag::Repaired;
        };
        let k = &self.covariance * h.transpose() * s_inv;
        self.mean += &k * innovation;
        let ikh = DMatrix::identity(n, n) - &k * &h;
        let p = &ikh * &self.covariance * ikh.transpose() + &k * r * k.transpose();
        let asym = (&p - p.transpose()).abs().max();
        let negative = p.diagonal().iter().any(|v| *v < 0.0);
        self.covariance = (&p + p.transpose()) * 0.5;
        if asym > 1e-12 || negative {
            for i in 0..n {
                self.covariance[(i, i)] = self.covariance[(i, i)].max(0.0);
            }
            UpdateFlag::Repaired
        } else {
            UpdateFlag::Ok
        }
    }
}

pub fn kf_predict(state: &mut KalmanState, dt: f64, cfg: &KalmanConfig) {
    state.predict(dt, cfg);
}

pub fn kf_update(state: &mut KalmanState, measurement: Point3, cfg: &KalmanConfig) -> UpdateFlag {
    state.update(measurement, cfg)
}

#[derive(Debug, Clone)]
struct JointKalman {
    state: KalmanState,
    time: f64,
}

/// Per-track, per-joint Kalman filters.
#[derive(Debug, Clone)]
pub struct KalmanBank {
    cfg: KalmanConfig,
    tracks: BTreeMap<u64, BTreeMap<Joint, JointKalman>>,
}

impl KalmanBank {
    pub fn new(cfg: KalmanConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            tracks: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &KalmanConfig {
        &self.cfg
    }

    pub fn remove(&mut self, track_id: u64) {
        self.tracks.remove(&track_id);
    }

    /// Updates joints that have a measurement and coasts the rest. Coasting
    /// joints are reported with confidence 0.
    pub fn filter(&mut self, track_id: u64, skeleton: Option<&Skeleton>, timestamp: f64) -> Skeleton {
        let cfg = &self.cfg;
        let joints = self.tracks.entry(track_id).or_default();
        let mut out = Skeleton {
            track_id: Some(track_id),
            assignment_cost: skeleton.and_then(|s| s.assignment_cost),
            estimated_height: skeleton.and_then(|s| s.estimated_height),
            ..Skeleton::default()
        };
        for joint in Joint::ALL {
            let measured = skeleton.and_then(|s| s.get(joint));
            match (joints.get_mut(&joint), measured) {
                (Some(jk), m) => {
                    let dt = timestamp - jk.time;
                    if dt <= 0.0 {
                        continue;
                    }
                    jk.state.predict(dt, cfg);
                    jk.time = timestamp;
                    let confidence = match m {
                        Some(kp) => {
                            jk.state.update(kp.position, cfg);
                            kp.confidence
                        }
                        None => 0.0,
                    };
                    out.insert(joint, Keypoint::new(jk.state.position(), confidence));
                }
                (None, Some(kp)) => {
                    joints.insert(
                        joint,
                        JointKalman {
                            state: KalmanState::new(kp.position, cfg),
                            time: timestamp,
                        },
                    );
                    out.insert(joint, *kp);
                }
                (None, None) => {}
            }
        }
        out
    }
}

/// Runs per-keypoint Kalman filters over an already identity-labeled stream.
/// Skeletons without a track id pass through untouched.
pub fn kf_track_skeletons(stream: &[Frame], cfg: &KalmanConfig) -> Result<Vec<Frame>, ConfigError> {
    let mut bank = KalmanBank::new(cfg.clone())?;
    Ok(stream
        .iter()
        .map(|frame| {
            let skeletons = frame
                .skeletons
                .iter()
                .map(|s| match s.track_id {
                    Some(id) => bank.filter(id, Some(s), frame.timestamp),
                    None => s.clone(),
                })
                .collect();
            Frame::new(frame.timestamp, skeletons)
        })
        .collect())
}
