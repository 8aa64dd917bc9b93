//! Spatial plausibility: distance gating, height estimation from bone lengths
//! and bone-length based confidence reward/penalty.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::skeleton::{synthesize_neck, synthesize_root, Joint, Point3, Skeleton, SkeletonGraph};
use crate::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpatialConfig {
    /// Maximum camera-to-root distance in meters (inclusive).
    pub distance_threshold: f64,
    /// Reward fraction applied per valid bone.
    pub reward: f64,
    /// Penalty fraction applied per invalid bone.
    pub penalty: f64,
    /// Relative tolerance on expected bone length.
    pub proportion_tolerance: f64,
    /// Plausible human heights `[min, max]` in meters.
    pub height_bounds: [f64; 2],
    pub camera_origin: [f64; 3],
}

impl Default for SpatialConfig {
    fn default() -> Self {
        Self {
            distance_threshold: 3.0,
            reward: 0.10,
            penalty: 0.10,
            proportion_tolerance: 0.20,
            height_bounds: [1.0, 2.2],
            camera_origin: [0.0, 0.0, 0.0],
        }
    }
}

impl SpatialConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.distance_threshold > 0.0) {
            return Err(ConfigError::invalid("spatial.distance_threshold", "must be > 0"));
        }
        if !unit(self.reward) || !unit(self.penalty) {
            return Err(ConfigError::invalid("spatial.reward/penalty", "must lie in (0, 1)"));
        }
        if !unit(self.proportion_tolerance) {
            return Err(ConfigError::invalid(
                "spatial.proportion_tolerance",
                "must lie in (0, 1)",
            ));
        }
        if !(self.height_bounds[0] < self.height_bounds[1]) {
            return Err(ConfigError::invalid("spatial.height_bounds", "min must be < max"));
        }
        Ok(())
    }

    pub fn camera(&self) -> Point3 {
        Point3::from(self.camera_origin)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpatialReject {
    #[error("skeleton has no root and one cannot be synthesized")]
    MissingRoot,
    #[error("root is {distance:.3} m from the camera")]
    TooFar { distance: f64 },
}

/// Keep iff the root lies within `distance_threshold` of the camera.
pub fn gate_by_distance(skeleton: &Skeleton, cfg: &SpatialConfig) -> Result<bool, SpatialReject> {
    let root = skeleton.position(Joint::Root).ok_or(SpatialReject::MissingRoot)?;
    Ok((root - cfg.camera()).norm() <= cfg.distance_threshold)
}

/// Averages the per-bone height hypotheses `length / proportion` that fall
/// inside `height_bounds`. `None` when no bone survives.
pub fn estimate_height(skeleton: &Skeleton, graph: &SkeletonGraph, cfg: &SpatialConfig) -> Option<f64> {
    let [lo, hi] = cfg.height_bounds;
    let (sum, n) = graph
        .edges()
        .iter()
        .filter_map(|e| {
            let a = skeleton.position(e.parent)?;
            let b = skeleton.position(e.child)?;
            Some((a - b).norm() / e.proportion)
        })
        .filter(|h| *h >= lo && *h <= hi)
        .fold((0.0, 0usize), |(s, n), h| (s + h, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Bone validity for every edge whose endpoints are both present.
pub fn classify_bones(
    skeleton: &Skeleton,
    graph: &SkeletonGraph,
    height: f64,
    tolerance: f64,
) -> Vec<(Joint, Joint, bool)> {
    graph
        .edges()
        .iter()
        .filter_map(|e| {
            let a = skeleton.position(e.parent)?;
            let b = skeleton.position(e.child)?;
            let expected = e.proportion * height;
            let len = (a - b).norm();
            let valid = len >= (1.0 - tolerance) * expected && len <= (1.0 + tolerance) * expected;
            Some((e.parent, e.child, valid))
        })
        .collect()
}

/// Rewards keypoints on plausible bones and penalizes those on implausible
/// ones. Without a height estimate the skeleton passes through unchanged.
///
/// Per keypoint, over its present incident bones:
/// all valid (at least one) scales by `1 + 2r`; two or more invalid scales by
/// `1 - 2p`; otherwise each valid bone applies `1 + r` and each invalid bone
/// `1 - p`.
pub fn adjust_confidences(skeleton: &Skeleton, graph: &SkeletonGraph, cfg: &SpatialConfig) -> Skeleton {
    let Some(height) = skeleton.estimated_height else {
        return skeleton.clone();
    };
    let bones = classify_bones(skeleton, graph, height, cfg.proportion_tolerance);
    let mut valid = [0u32; 15];
    let mut invalid = [0u32; 15];
    for (a, b, ok) in &bones {
        let counter = if *ok { &mut valid } else { &mut invalid };
        counter[a.index()] += 1;
        counter[b.index()] += 1;
    }
    let (r, p) = (cfg.reward, cfg.penalty);
    let mut out = skeleton.clone();
    for (joint, kp) in out.keypoints.iter_mut() {
        let (v, i) = (valid[joint.index()], invalid[joint.index()]);
        let factor = if i == 0 && v > 0 {
            1.0 + 2.0 * r
        } else if i >= 2 {
            1.0 - 2.0 * p
        } else {
            (1.0 + r).powi(v as i32) * (1.0 - p).powi(i as i32)
        };
        kp.confidence = (kp.confidence * factor).clamp(0.0, 1.0);
    }
    out
}

/// Full spatial node: completes neck/root, gates on distance, estimates the
/// height and adjusts confidences.
pub fn evaluate(skeleton: &Skeleton, graph: &SkeletonGraph, cfg: &SpatialConfig) -> Result<Skeleton, SpatialReject> {
    let completed = synthesize_neck(skeleton);
    let mut s = match synthesize_root(&completed) {
        Ok(s) => s,
        Err(_) if completed.contains(Joint::Root) => completed,
        Err(_) => return Err(SpatialReject::MissingRoot),
    };
    if !gate_by_distance(&s, cfg)? {
        let distance = (s.position(Joint::Root).unwrap_or_default() - cfg.camera()).norm();
        return Err(SpatialReject::TooFar { distance });
    }
    s.estimated_height = estimate_height(&s, graph, cfg);
    Ok(adjust_confidences(&s, graph, cfg))
}
