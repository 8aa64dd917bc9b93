//! Stage composition: spatial evaluation, tracking, filtering, target
//! selection and the end-effector follower.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kalman::{KalmanBank, KalmanConfig};
use crate::metrics::Trajectory;
use crate::permanence::{PermanenceBank, PermanenceConfig, PermanenceModel};
use crate::skeleton::{default_graph, Frame, Joint, Point3, Skeleton, SkeletonGraph};
use crate::spatial::{evaluate, SpatialConfig};
use crate::tracker::{TrackRegistry, TrackerConfig};
use crate::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    None,
    #[serde(alias = "kf1")]
    Kalman1,
    #[serde(alias = "kf2")]
    Kalman2,
    #[default]
    #[serde(alias = "perm")]
    Permanence,
}

impl FilterKind {
    pub const ALL: [FilterKind; 4] = [
        FilterKind::None,
        FilterKind::Kalman1,
        FilterKind::Kalman2,
        FilterKind::Permanence,
    ];

    /// Short label used on the command line and in reports.
    pub fn label(self) -> &'static str {
        match self {
            FilterKind::None => "none",
            FilterKind::Kalman1 => "kf1",
            FilterKind::Kalman2 => "kf2",
            FilterKind::Permanence => "perm",
        }
    }
}

impl std::str::FromStr for FilterKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(FilterKind::None),
            "kf1" | "kalman1" => Ok(FilterKind::Kalman1),
            "kf2" | "kalman2" => Ok(FilterKind::Kalman2),
            "perm" | "permanence" => Ok(FilterKind::Permanence),
            other => Err(ConfigError::invalid(
                "pipeline.filter",
                format!("unknown filter `{other}`"),
            )),
        }
    }
}

/// Which track drives the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorRule {
    /// Smallest mean root distance to the camera over the warmup window, then
    /// locked until the track is dropped.
    Nearest,
    /// Fixed track id.
    Track(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub spatial: SpatialConfig,
    pub tracker: TrackerConfig,
    pub filter: FilterKind,
    pub permanence: PermanenceConfig,
    pub kalman1: KalmanConfig,
    pub kalman2: KalmanConfig,
    pub target_joint: Joint,
    pub operator: OperatorRule,
    pub warmup_frames: usize,
    pub safety_offset: [f64; 3],
    pub follower_gain: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            spatial: SpatialConfig::default(),
            tracker: TrackerConfig::default(),
            filter: FilterKind::Permanence,
            permanence: PermanenceConfig::default(),
            kalman1: KalmanConfig::constant_velocity(),
            kalman2: KalmanConfig::constant_acceleration(),
            target_joint: Joint::LeftWrist,
            operator: OperatorRule::Nearest,
            warmup_frames: 30,
            safety_offset: [0.150, 0.0, 0.150],
            follower_gain: 5.0,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn with_filter(filter: FilterKind) -> Self {
        Self {
            filter,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.spatial.validate()?;
        self.tracker.validate()?;
        self.permanence.validate()?;
        self.kalman1.validate()?;
        self.kalman2.validate()?;
        if self.kalman1.order != 1 || self.kalman2.order != 2 {
            return Err(ConfigError::invalid(
                "kalman1/kalman2.order",
                "kalman1 must be order 1 and kalman2 order 2",
            ));
        }
        if !self.safety_offset.iter().all(|v| v.is_finite()) {
            return Err(ConfigError::invalid("pipeline.safety_offset", "must be finite"));
        }
        if !(self.follower_gain > 0.0 && self.follower_gain.is_finite()) {
            return Err(ConfigError::invalid("pipeline.follower_gain", "must be > 0"));
        }
        if self.warmup_frames == 0 {
            return Err(ConfigError::invalid("pipeline.warmup_frames", "must be >= 1"));
        }
        Ok(())
    }

    pub fn offset(&self) -> Point3 {
        Point3::from(self.safety_offset)
    }
}

/// End effector driven by the first-order system `ee' = gain * (target - ee)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowerState {
    pub ee_position: Point3,
    pub gain: f64,
}

impl FollowerState {
    pub fn new(ee_position: Point3, gain: f64) -> Self {
        debug_assert!(gain > 0.0);
        Self { ee_position, gain }
    }

    /// One explicit Euler step toward `target`. Contractive for
    /// `gain * dt` in (0, 2).
    pub fn follow(self, target: Point3, dt: f64) -> Self {
        debug_assert!(dt > 0.0);
        Self {
            ee_position: self.ee_position + (target - self.ee_position) * (self.gain * dt),
            ..self
        }
    }
}

/// Free-function form of [`FollowerState::follow`].
pub fn follow(state: FollowerState, target: Point3, dt: f64) -> FollowerState {
    state.follow(target, dt)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("frame at t={got} does not follow t={last}")]
    OutOfOrderFrame { last: f64, got: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub frame: Frame,
    pub target: Option<Point3>,
    pub operator: Option<u64>,
    /// Operator's target joint in the refined frame, without the offset.
    pub operator_joint: Option<Point3>,
}

#[derive(Debug, Clone)]
enum FilterStage {
    None,
    Kalman(KalmanBank),
    Permanence(PermanenceBank),
}

#[derive(Debug, Clone, Default)]
struct OperatorSelector {
    locked: Option<u64>,
    frames: usize,
    // per track: (sum of root distances, samples)
    stats: BTreeMap<u64, (f64, usize)>,
}

impl OperatorSelector {
    fn observe(&mut self, skeletons: &[Skeleton], camera: Point3, warmup: usize) -> Option<u64> {
        if let Some(id) = self.locked {
            return Some(id);
        }
        for s in skeletons {
            if let (Some(id), Some(root)) = (s.track_id, s.position(Joint::Root)) {
                let e = self.stats.entry(id).or_default();
                e.0 += (root - camera).norm();
                e.1 += 1;
            }
        }
        if self.stats.is_empty() {
            return None;
        }
        self.frames += 1;
        let best = self
            .stats
            .iter()
            .map(|(id, (sum, n))| (*id, sum / *n as f64))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(id, _)| id);
        if self.frames >= warmup {
            self.locked = best;
        }
        best
    }

    fn forget(&mut self, dropped: &[u64]) {
        for id in dropped {
            self.stats.remove(id);
            if self.locked == Some(*id) {
                *self = Self::default();
            }
        }
    }
}

/// One stream's filtering state. Frames must arrive in increasing time.
#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: PipelineConfig,
    graph: SkeletonGraph,
    registry: TrackRegistry,
    filter: FilterStage,
    selector: OperatorSelector,
    last_timestamp: Option<f64>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let filter = match cfg.filter {
            FilterKind::None => FilterStage::None,
            FilterKind::Kalman1 => FilterStage::Kalman(KalmanBank::new(cfg.kalman1.clone())?),
            FilterKind::Kalman2 => FilterStage::Kalman(KalmanBank::new(cfg.kalman2.clone())?),
            FilterKind::Permanence => FilterStage::Permanence(PermanenceBank::new(
                PermanenceModel::new(cfg.permanence.clone())?,
                cfg.seed,
            )),
        };
        Ok(Self {
            cfg,
            graph: default_graph(),
            registry: TrackRegistry::new(),
            filter,
            selector: OperatorSelector::default(),
            last_timestamp: None,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn registry(&self) -> &TrackRegistry {
        &self.registry
    }

    /// Spatial evaluation then tracking; rejected skeletons are discarded.
    fn label(&mut self, frame: &Frame) -> (Vec<Skeleton>, Vec<u64>) {
        let accepted: Vec<Skeleton> = frame
            .skeletons
            .iter()
            .filter_map(|s| evaluate(s, &self.graph, &self.cfg.spatial).ok())
            .collect();
        let out = self.registry.track_frame(accepted, &self.cfg.tracker);
        (out.skeletons, out.dropped)
    }

    pub fn process_frame(&mut self, frame: &Frame) -> Result<PipelineOutput, PipelineError> {
        let t = frame.timestamp;
        if let Some(last) = self.last_timestamp {
            if !(t > last) {
                return Err(PipelineError::OutOfOrderFrame { last, got: t });
            }
        }
        self.last_timestamp = Some(t);

        let (labeled, dropped) = self.label(frame);
        let seen: Vec<u64> = labeled.iter().filter_map(|s| s.track_id).collect();
        let unseen: Vec<u64> = self.registry.live_ids().filter(|id| !seen.contains(id)).collect();

        let refined = match &mut self.filter {
            FilterStage::None => labeled.clone(),
            FilterStage::Kalman(bank) => {
                dropped.iter().for_each(|id| bank.remove(*id));
                filter_all(&labeled, &unseen, |id, s| bank.filter(id, s, t))
            }
            FilterStage::Permanence(bank) => {
                dropped.iter().for_each(|id| bank.remove(*id));
                filter_all(&labeled, &unseen, |id, s| bank.filter(id, s, t))
            }
        };

        self.selector.forget(&dropped);
        let operator = match self.cfg.operator {
            OperatorRule::Track(id) => Some(id),
            OperatorRule::Nearest => self
                .selector
                .observe(&labeled, self.cfg.spatial.camera(), self.cfg.warmup_frames),
        };
        let operator_joint = operator.and_then(|id| {
            refined
                .iter()
                .find(|s| s.track_id == Some(id))
                .and_then(|s| s.position(self.cfg.target_joint))
        });
        Ok(PipelineOutput {
            frame: Frame::new(t, refined),
            target: operator_joint.map(|p| p + self.cfg.offset()),
            operator,
            operator_joint,
        })
    }
}

fn filter_all(
    labeled: &[Skeleton],
    unseen: &[u64],
    mut f: impl FnMut(u64, Option<&Skeleton>) -> Skeleton,
) -> Vec<Skeleton> {
    let mut out: Vec<Skeleton> = labeled
        .iter()
        .map(|s| f(s.track_id.expect("tracker labels every skeleton"), Some(s)))
        .collect();
    out.extend(unseen.iter().map(|id| f(*id, None)).filter(|s| !s.is_empty()));
    out
}

/// Everything produced by running a whole stream.
#[derive(Debug, Clone, Default)]
pub struct StreamResult {
    pub frames: Vec<Frame>,
    pub target: Trajectory,
    pub end_effector: Trajectory,
    /// Operator's target joint as seen by the pipeline.
    pub operator_joint: Trajectory,
}

/// Runs a stream through a fresh pipeline. The follower starts at the first
/// target and holds position while no target is available.
pub fn run_stream(frames: &[Frame], cfg: &PipelineConfig) -> Result<StreamResult, RunError> {
    let mut pipeline = Pipeline::new(cfg.clone())?;
    let label = cfg.filter.label();
    let mut result = StreamResult {
        frames: Vec::with_capacity(frames.len()),
        target: Trajectory::empty(format!("{label}/target")),
        end_effector: Trajectory::empty(format!("{label}/ee")),
        operator_joint: Trajectory::empty(label),
    };
    let mut follower: Option<FollowerState> = None;
    let mut last_t: Option<f64> = None;
    for frame in frames {
        let out = pipeline.process_frame(frame)?;
        let t = frame.timestamp;
        if let Some(target) = out.target {
            result.target.push(t, target);
            follower = Some(match (follower, last_t) {
                (Some(f), Some(prev)) => f.follow(target, t - prev),
                _ => FollowerState::new(target, cfg.follower_gain),
            });
        }
        if let Some(f) = follower {
            result.end_effector.push(t, f.ee_position);
        }
        if let Some(p) = out.operator_joint {
            result.operator_joint.push(t, p);
        }
        last_t = Some(t);
        result.frames.push(out.frame);
    }
    Ok(result)
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}
