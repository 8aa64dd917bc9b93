//! Confidence-aware particle filter that keeps estimating keypoints through
//! complete occlusions.
//!
//! Each keypoint owns a particle cloud over its 3D position. Particles move
//! with a constant-velocity model whose velocity is the least-squares slope of
//! the recent trajectory, plus Gaussian process noise `Q`. A measurement with
//! confidence `c >= T` reweights particles with an isotropic Gaussian
//! likelihood of variance `alpha^(c - beta)`, so low confidence widens the
//! search area. Below `T`, or when the keypoint is missing, the output moves
//! from the last accepted measurement along the slope fitted to the last
//! `history_len` accepted measurements, frozen at occlusion onset.

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::skeleton::{Joint, Keypoint, Point3, Skeleton};
use crate::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PermanenceConfig {
    /// Base of the confidence-to-covariance law, in (0, 1).
    pub alpha: f64,
    /// Confidence at which the measurement variance is exactly 1 m^2.
    pub beta: f64,
    /// Occlusion threshold T on measurement confidence.
    pub occlusion_threshold: f64,
    /// Length γ of the trajectory buffer used by the dynamics fit, in frames.
    pub history_len: usize,
    pub particle_count: usize,
    /// Per-step process noise covariance in m^2 (row-major 3x3).
    pub process_noise: [[f64; 3]; 3],
    /// Resample when the effective sample size drops below this fraction of N.
    pub resample_ess_fraction: f64,
    /// Matches costing more than this are treated as occluded for the frame.
    pub assignment_cost_gate: f64,
}

impl Default for PermanenceConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            beta: 0.2,
            occlusion_threshold: 0.4,
            history_len: 50,
            particle_count: 200,
            process_noise: diag3(1e-2),
            resample_ess_fraction: 0.5,
            assignment_cost_gate: 0.5,
        }
    }
}

pub(crate) fn diag3(v: f64) -> [[f64; 3]; 3] {
    [[v, 0.0, 0.0], [0.0, v, 0.0], [0.0, 0.0, v]]
}

impl PermanenceConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ConfigError::invalid("permanence.alpha", "must lie in (0, 1)"));
        }
        if !self.beta.is_finite() {
            return Err(ConfigError::invalid("permanence.beta", "must be finite"));
        }
        if !(self.occlusion_threshold > 0.0 && self.occlusion_threshold < 1.0) {
            return Err(ConfigError::invalid(
                "permanence.occlusion_threshold",
                "must lie in (0, 1)",
            ));
        }
        if self.history_len < 2 {
            return Err(ConfigError::invalid("permanence.history_len", "must be >= 2"));
        }
        if self.particle_count < 2 {
            return Err(ConfigError::invalid("permanence.particle_count", "must be >= 2"));
        }
        if !(self.resample_ess_fraction >= 0.0 && self.resample_ess_fraction <= 1.0) {
            return Err(ConfigError::invalid(
                "permanence.resample_ess_fraction",
                "must lie in [0, 1]",
            ));
        }
        let q = Matrix3::from_row_slice(&self.process_noise.concat());
        if (q - q.transpose()).abs().max() > 1e-12 {
            return Err(ConfigError::invalid("permanence.process_noise", "must be symmetric"));
        }
        if SymmetricEigen::new(q).eigenvalues.min() < -1e-12 {
            return Err(ConfigError::invalid(
                "permanence.process_noise",
                "must be positive semi-definite",
            ));
        }
        Ok(())
    }
}

/// Scalar measurement variance `alpha^(c - beta)` in m^2.
pub fn measurement_variance(confidence: f64, cfg: &PermanenceConfig) -> f64 {
    cfg.alpha.powf(confidence - cfg.beta)
}

/// Isotropic measurement covariance `alpha^(c - beta) * I`.
pub fn measurement_covariance(confidence: f64, cfg: &PermanenceConfig) -> Matrix3<f64> {
    Matrix3::identity() * measurement_variance(confidence, cfg)
}

/// Validated configuration plus precomputed noise factor.
#[derive(Debug, Clone)]
pub struct PermanenceModel {
    cfg: PermanenceConfig,
    /// `L` with `L L^T = Q`.
    noise_factor: Matrix3<f64>,
}

impl PermanenceModel {
    pub fn new(cfg: PermanenceConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let q = Matrix3::from_row_slice(&cfg.process_noise.concat());
        let eig = SymmetricEigen::new(q);
        let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let noise_factor = eig.eigenvectors * Matrix3::from_diagonal(&sqrt);
        Ok(Self { cfg, noise_factor })
    }

    pub fn config(&self) -> &PermanenceConfig {
        &self.cfg
    }
}

/// Least-squares line through timestamped positions, stored in centered form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub time_mean: f64,
    pub position_mean: Point3,
    /// Velocity in m/s.
    pub slope: Point3,
}

impl LineFit {
    pub fn at(&self, t: f64) -> Point3 {
        self.position_mean + self.slope * (t - self.time_mean)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FitError {
    #[error("need at least two samples")]
    TooShort,
    #[error("all timestamps are equal")]
    SingularFit,
}

/// Per-axis ordinary least-squares line over `(t, position)` samples.
pub fn fit_line<'a, I>(samples: I) -> Result<LineFit, FitError>
where
    I: IntoIterator<Item = &'a (f64, Point3)>,
    I::IntoIter: Clone,
{
    let it = samples.into_iter();
    let n = it.clone().count();
    if n < 2 {
        return Err(FitError::TooShort);
    }
    let nf = n as f64;
    let time_mean = it.clone().map(|(t, _)| *t).sum::<f64>() / nf;
    let position_mean = it.clone().map(|(_, p)| *p).sum::<Point3>() / nf;
    let (sxx, sxy) = it.fold((0.0, Point3::zeros()), |(sxx, sxy), (t, p)| {
        let dt = t - time_mean;
        (sxx + dt * dt, sxy + (p - position_mean) * dt)
    });
    if sxx <= 0.0 {
        return Err(FitError::SingularFit);
    }
    Ok(LineFit {
        time_mean,
        position_mean,
        slope: sxy / sxx,
    })
}

/// Velocity of the least-squares line through `history`; zero when fewer than
/// two samples or all timestamps coincide.
pub fn dynamics_fit(history: &VecDeque<(f64, Point3)>) -> Point3 {
    fit_line(history).map(|f| f.slope).unwrap_or_else(|_| Point3::zeros())
}

/// What happened during a measurement update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Weighted {
        resampled: bool,
    },
    /// Every likelihood underflowed; particles were redrawn around the
    /// measurement.
    Reinitialized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub position: Point3,
    pub occluded: bool,
}

/// Filter state of one keypoint of one track.
#[derive(Debug, Clone)]
pub struct KeypointFilterState {
    particles: Vec<Point3>,
    weights: Vec<f64>,
    history: VecDeque<(f64, Point3)>,
    occluded: bool,
    frames_occluded: u32,
    /// Timestamp the particles currently describe.
    time: f64,
    frozen: Option<LineFit>,
    rng: ChaCha8Rng,
}

impl KeypointFilterState {
    /// Spawns particles around a first confident measurement and applies it.
    pub fn new(time: f64, measurement: Point3, confidence: f64, model: &PermanenceModel, rng: ChaCha8Rng) -> Self {
        let n = model.cfg.particle_count;
        let mut state = Self {
            particles: Vec::with_capacity(n),
            weights: vec![1.0 / n as f64; n],
            history: VecDeque::with_capacity(model.cfg.history_len),
            occluded: false,
            frames_occluded: 0,
            time,
            frozen: None,
            rng,
        };
        state.scatter(measurement, measurement_variance(confidence, &model.cfg));
        state.update(measurement, confidence, model);
        state
    }

    /// Builds a state from explicit particles, for tests and tooling.
    pub fn from_particles(time: f64, particles: Vec<Point3>, rng: ChaCha8Rng) -> Self {
        let n = particles.len();
        Self {
            particles,
            weights: vec![1.0 / n as f64; n],
            history: VecDeque::new(),
            occluded: false,
            frames_occluded: 0,
            time,
            frozen: None,
            rng,
        }
    }

    pub fn particles(&self) -> &[Point3] {
        &self.particles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn history(&self) -> &VecDeque<(f64, Point3)> {
        &self.history
    }

    pub fn is_occluded(&self) -> bool {
        self.occluded
    }

    pub fn frames_occluded(&self) -> u32 {
        self.frames_occluded
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Seeds the trajectory buffer, e.g. to resume from a known track.
    pub fn push_history(&mut self, t: f64, position: Point3, capacity: usize) {
        if self.history.len() == capacity {
            self.history.pop_front();
        }
        self.history.push_back((t, position));
    }

    pub fn mean(&self) -> Point3 {
        self.particles.iter().zip(&self.weights).map(|(p, w)| p * *w).sum()
    }

    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    fn scatter(&mut self, center: Point3, variance: f64) {
        let n = self.weights.len();
        let sigma = variance.sqrt();
        self.particles.clear();
        for _ in 0..n {
            let z = self.gaussian3();
            self.particles.push(center + z * sigma);
        }
        self.weights.fill(1.0 / n as f64);
    }

    fn gaussian3(&mut self) -> Point3 {
        Point3::new(
            self.rng.sample(StandardNormal),
            self.rng.sample(StandardNormal),
            self.rng.sample(StandardNormal),
        )
    }

    /// Advances every particle by the fitted velocity times `dt` and adds
    /// process noise. Weights are untouched.
    pub fn predict(&mut self, dt: f64, model: &PermanenceModel) {
        debug_assert!(dt > 0.0);
        let velocity = match (&self.frozen, self.occluded) {
            (Some(line), true) => line.slope,
            _ => dynamics_fit(&self.history),
        };
        let shift = velocity * dt;
        let l = model.noise_factor;
        for i in 0..self.particles.len() {
            let z = self.gaussian3();
            self.particles[i] += shift + l * z;
        }
        self.time += dt;
    }

    /// Reweights particles by the Gaussian likelihood of `measurement`,
    /// resamples if the cloud has degenerated, and records the posterior mean.
    pub fn update(&mut self, measurement: Point3, confidence: f64, model: &PermanenceModel) -> UpdateOutcome {
        let cfg = &model.cfg;
        let variance = measurement_variance(confidence, cfg);
        // log of (2π)^(-p/2) det(R)^(-1/2) with p = 3 and R = variance * I
        let log_norm = -0.5 * 3.0 * (2.0 * PI * variance).ln();
        let log_w: Vec<f64> = self
            .particles
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w.ln() + log_norm - 0.5 * (measurement - p).norm_squared() / variance)
            .collect();
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        let outcome = if !(max >= f64::MIN_POSITIVE.ln()) {
            self.scatter(measurement, variance);
            UpdateOutcome::Reinitialized
        } else {
            for (w, lw) in self.weights.iter_mut().zip(&log_w) {
                *w = (lw - max).exp();
            }
            let total: f64 = self.weights.iter().sum();
            self.weights.iter_mut().for_each(|w| *w /= total);
            let threshold = cfg.resample_ess_fraction * self.weights.len() as f64;
            let resampled = self.effective_sample_size() < threshold;
            if resampled {
                self.resample_systematic();
            }
            UpdateOutcome::Weighted { resampled }
        };

        self.push_history(self.time, measurement, cfg.history_len);
        self.occluded = false;
        self.frames_occluded = 0;
        self.frozen = None;
        outcome
    }

    fn resample_systematic(&mut self) {
        let n = self.particles.len();
        let step = 1.0 / n as f64;
        let start: f64 = self.rng.random::<f64>() * step;
        let mut out = Vec::with_capacity(n);
        let mut cumulative = self.weights[0];
        let mut i = 0;
        for k in 0..n {
            let u = start + k as f64 * step;
            while u > cumulative && i < n - 1 {
                i += 1;
                cumulative += self.weights[i];
            }
            out.push(self.particles[i]);
        }
        self.particles = out;
        self.weights.fill(step);
    }

    fn enter_occlusion(&mut self) {
        if self.occluded {
            return;
        }
        let fallback = || LineFit {
            time_mean: self.time,
            position_mean: self.history.back().map_or_else(|| self.mean(), |(_, p)| *p),
            slope: Point3::zeros(),
        };
        let mut line = fit_line(&self.history).unwrap_or_else(|_| fallback());
        // the fitted slope is kept but the line passes through the last
        // accepted measurement, so a trajectory bending within the window
        // does not jump to the regression endpoint
        if let Some((t, p)) = self.history.back() {
            line.time_mean = *t;
            line.position_mean = *p;
        }
        self.frozen = Some(line);
        self.occluded = true;
    }

    /// One filter tick. A measurement is used only if it is present, at least
    /// as confident as the occlusion threshold, and `accept` holds (the
    /// assignment-cost gate). Otherwise the keypoint is treated as occluded.
    pub fn step(
        &mut self,
        observation: Option<(Point3, f64)>,
        dt: f64,
        accept: bool,
        model: &PermanenceModel,
    ) -> StepOutput {
        match observation {
            Some((y, c)) if accept && c >= model.cfg.occlusion_threshold => {
                self.predict(dt, model);
                self.update(y, c, model);
                StepOutput {
                    position: self.mean(),
                    occluded: false,
                }
            }
            _ => {
                self.enter_occlusion();
                self.predict(dt, model);
                self.frames_occluded += 1;
                let line = self.frozen.expect("frozen at occlusion onset");
                StepOutput {
                    position: line.at(self.time),
                    occluded: true,
                }
            }
        }
    }
}

/// Free-function form of [`KeypointFilterState::step`].
pub fn step_keypoint(
    state: &mut KeypointFilterState,
    observation: Option<(Point3, f64)>,
    dt: f64,
    accept: bool,
    model: &PermanenceModel,
) -> StepOutput {
    state.step(observation, dt, accept, model)
}

/// Per-joint filters of one track.
#[derive(Debug, Clone)]
pub struct TrackFilter {
    track_id: u64,
    seed: u64,
    joints: BTreeMap<Joint, KeypointFilterState>,
}

impl TrackFilter {
    pub fn new(track_id: u64, seed: u64) -> Self {
        Self {
            track_id,
            seed,
            joints: BTreeMap::new(),
        }
    }

    pub fn state(&self, joint: Joint) -> Option<&KeypointFilterState> {
        self.joints.get(&joint)
    }

    fn rng_for(&self, joint: Joint) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.track_id.wrapping_mul(Joint::ALL.len() as u64) + joint.index() as u64);
        rng
    }

    /// Advances every joint to `timestamp` and returns the refined skeleton.
    ///
    /// Visible joints carry their measured confidence; occluded joints carry
    /// confidence 0 and the extrapolated position. Joints never confidently
    /// observed are absent.
    pub fn filter_skeleton(
        &mut self,
        skeleton: Option<&Skeleton>,
        timestamp: f64,
        model: &PermanenceModel,
    ) -> Skeleton {
        let cfg = model.config();
        let accept = skeleton
            .and_then(|s| s.assignment_cost)
            .is_none_or(|cost| cost <= cfg.assignment_cost_gate);
        let mut out = Skeleton {
            track_id: Some(self.track_id),
            assignment_cost: skeleton.and_then(|s| s.assignment_cost),
            estimated_height: skeleton.and_then(|s| s.estimated_height),
            ..Skeleton::default()
        };

        for joint in Joint::ALL {
            let observation = skeleton.and_then(|s| s.get(joint)).map(|k| (k.position, k.confidence));
            match self.joints.get_mut(&joint) {
                Some(state) => {
                    let dt = timestamp - state.time();
                    if dt <= 0.0 {
                        continue;
                    }
                    let step = state.step(observation, dt, accept, model);
                    let confidence = if step.occluded {
                        0.0
                    } else {
                        observation.map_or(0.0, |o| o.1)
                    };
                    out.insert(joint, Keypoint::new(step.position, confidence));
                }
                None => {
                    if let Some((y, c)) = observation.filter(|o| accept && o.1 >= cfg.occlusion_threshold) {
                        let state = KeypointFilterState::new(timestamp, y, c, model, self.rng_for(joint));
                        out.insert(joint, Keypoint::new(state.mean(), c));
                        self.joints.insert(joint, state);
                    }
                }
            }
        }
        out
    }
}

/// Permanence filters for every live track of a stream.
#[derive(Debug, Clone)]
pub struct PermanenceBank {
    model: PermanenceModel,
    seed: u64,
    tracks: BTreeMap<u64, TrackFilter>,
}

impl PermanenceBank {
    pub fn new(model: PermanenceModel, seed: u64) -> Self {
        Self {
            model,
            seed,
            tracks: BTreeMap::new(),
        }
    }

    pub fn model(&self) -> &PermanenceModel {
        &self.model
    }

    pub fn track(&self, id: u64) -> Option<&TrackFilter> {
        self.tracks.get(&id)
    }

    pub fn remove(&mut self, id: u64) {
        self.tracks.remove(&id);
    }

    pub fn filter(&mut self, track_id: u64, skeleton: Option<&Skeleton>, timestamp: f64) -> Skeleton {
        let seed = self.seed;
        self.tracks
            .entry(track_id)
            .or_insert_with(|| TrackFilter::new(track_id, seed))
            .filter_skeleton(skeleton, timestamp, &self.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model_with(q: f64) -> PermanenceModel {
        PermanenceModel::new(PermanenceConfig {
            process_noise: diag3(q),
            ..PermanenceConfig::default()
        })
        .unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn covariance_law() {
        let cfg = PermanenceConfig::default();
        assert_eq!(measurement_variance(0.2, &cfg), 1.0);
        assert!((measurement_variance(1.0, &cfg) - 0.01f64.powf(0.8)).abs() < 1e-15);
        assert!((measurement_variance(1.0, &cfg) - 0.02512).abs() < 1e-5);
        assert!((measurement_variance(0.0, &cfg) - 2.512).abs() < 1e-3);
        let r = measurement_covariance(0.5, &cfg);
        assert_eq!(r[(0, 1)], 0.0);
        assert_eq!(r[(2, 2)], measurement_variance(0.5, &cfg));
    }

    #[test]
    fn predict_without_noise_or_velocity_is_identity() {
        let m = model_with(0.0);
        let pts = vec![Point3::new(0.1, 0.2, 0.3), Point3::new(-1.0, 0.0, 2.0)];
        let mut s = KeypointFilterState::from_particles(0.0, pts.clone(), rng(1));
        s.predict(1.0 / 30.0, &m);
        assert_eq!(s.particles(), &pts[..]);
    }

    #[test]
    fn predict_follows_fitted_velocity() {
        let m = model_with(0.0);
        let mut s = KeypointFilterState::from_particles(1.0, vec![Point3::zeros(); 4], rng(1));
        for k in 0..10 {
            let t = k as f64 * 0.1;
            s.push_history(t, Point3::new(t, 0.0, 0.0), 50);
        }
        s.predict(1.0 / 30.0, &m);
        for p in s.particles() {
            assert!((p - Point3::new(1.0 / 30.0, 0.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn uniform_weights_survive_exact_measurement() {
        let m = model_with(0.0);
        let y = Point3::new(0.3, 0.1, 1.5);
        let mut s = KeypointFilterState::from_particles(0.0, vec![y; 8], rng(2));
        let out = s.update(y, 0.9, &m);
        assert_eq!(out, UpdateOutcome::Weighted { resampled: false });
        for w in s.weights() {
            assert!((w - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn near_particle_dominates() {
        let m = PermanenceModel::new(PermanenceConfig {
            resample_ess_fraction: 0.0,
            ..PermanenceConfig::default()
        })
        .unwrap();
        let c = 0.9;
        let sigma = measurement_variance(c, m.config()).sqrt();
        let y = Point3::new(0.0, 0.0, 2.0);
        let far = y + Point3::new(10.0 * sigma, 0.0, 0.0);
        let mut s = KeypointFilterState::from_particles(0.0, vec![y, far], rng(3));
        s.update(y, c, &m);
        assert!(s.weights()[0] > 0.999);
        // closed form: exp(-50) / (1 + exp(-50))
        assert!((s.weights()[1] - (-50.0f64).exp() / (1.0 + (-50.0f64).exp())).abs() < 1e-30);
    }

    #[test]
    fn underflow_reinitializes_around_measurement() {
        let m = model_with(0.0);
        let mut s = KeypointFilterState::from_particles(0.0, vec![Point3::zeros(); 16], rng(4));
        let y = Point3::new(1e3, 0.0, 0.0);
        assert_eq!(s.update(y, 1.0, &m), UpdateOutcome::Reinitialized);
        assert!((s.mean() - y).norm() < 1.0);
        let sum: f64 = s.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn line_fit_exact_and_degenerate() {
        let h: VecDeque<(f64, Point3)> = (0..20)
            .map(|k| {
                let t = k as f64 / 30.0;
                (t, Point3::new(0.2 + 0.5 * t, 1.0, -2.0))
            })
            .collect();
        assert!((dynamics_fit(&h) - Point3::new(0.5, 0.0, 0.0)).norm() < 1e-12);
        let flat: VecDeque<_> = (0..5).map(|k| (k as f64, Point3::new(1.0, 2.0, 3.0))).collect();
        assert_eq!(dynamics_fit(&flat), Point3::zeros());
        let same_t: VecDeque<_> = (0..5).map(|k| (1.0, Point3::new(k as f64, 0.0, 0.0))).collect();
        assert_eq!(fit_line(&same_t), Err(FitError::SingularFit));
        assert_eq!(dynamics_fit(&same_t), Point3::zeros());
        assert_eq!(dynamics_fit(&VecDeque::new()), Point3::zeros());
    }

    #[test]
    fn sub_threshold_and_missing_take_same_branch() {
        let m = model_with(1e-6);
        let y = Point3::new(0.0, 0.0, 2.0);
        let base = KeypointFilterState::new(0.0, y, 0.95, &m, rng(5));
        let mut a = base.clone();
        let mut b = base.clone();
        let oa = a.step(Some((y, 0.39)), 1.0 / 30.0, true, &m);
        let ob = b.step(None, 1.0 / 30.0, true, &m);
        assert!(oa.occluded && ob.occluded);
        assert_eq!(oa, ob);
        assert_eq!(a.particles(), b.particles());
        assert_eq!(a.frames_occluded(), 1);
        // history is frozen during occlusion
        assert_eq!(a.history().len(), base.history().len());
        // gate rejection also occludes
        let mut g = base.clone();
        assert!(g.step(Some((y, 0.95)), 1.0 / 30.0, false, &m).occluded);
        let mut v = base;
        assert!(!v.step(Some((y, 0.4)), 1.0 / 30.0, true, &m).occluded);
    }

    #[test]
    fn occlusion_continues_from_last_measurement() {
        let m = model_with(1e-2);
        let dt = 1.0 / 30.0;
        // bends halfway through the window: the regression endpoint lags the
        // last measurement, the output must not
        let at = |k: usize| {
            let t = k as f64 * dt;
            Point3::new(0.3 * t, if k > 30 { 0.2 * (t - 1.0) } else { 0.0 }, 1.5)
        };
        let mut s = KeypointFilterState::new(0.0, at(0), 1.0, &m, rng(6));
        for k in 1..=60 {
            s.step(Some((at(k), 1.0)), dt, true, &m);
        }
        let slope = dynamics_fit(s.history());
        for j in 1..=5 {
            let out = s.step(None, dt, true, &m);
            assert!((out.position - (at(60) + slope * (j as f64 * dt))).norm() < 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        assert!(PermanenceConfig::default().validate().is_ok());
        let mut bad = PermanenceConfig::default();
        bad.process_noise[0][0] = -1.0;
        assert!(bad.validate().is_err());
        bad = PermanenceConfig {
            alpha: 1.5,
            ..PermanenceConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn never_seen_joint_is_absent() {
        let m = model_with(1e-6);
        let mut f = TrackFilter::new(0, 7);
        let s = Skeleton::from_keypoints([
            (Joint::Nose, Keypoint::new(Point3::new(0.0, 0.5, 2.0), 0.9)),
            (Joint::LeftWrist, Keypoint::new(Point3::new(0.3, 0.0, 2.0), 0.2)),
        ]);
        let out = f.filter_skeleton(Some(&s), 0.0, &m);
        assert!(out.contains(Joint::Nose));
        assert!(!out.contains(Joint::LeftWrist));
        let out = f.filter_skeleton(None, 1.0 / 30.0, &m);
        assert_eq!(out.get(Joint::Nose).unwrap().confidence, 0.0);
        assert_eq!(out.len(), 1);
    }
}
