//! Keypoints, skeletons, frames and the skeleton connectivity graph.
//!
//! Every pipeline stage exchanges these value types. A skeleton is a partial
//! map from [`Joint`] to [`Keypoint`]: a missing joint is simply absent, never
//! encoded with sentinel coordinates.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Cartesian position in meters, camera frame.
pub type Point3 = Vector3<f64>;

/// Internal joint vocabulary: twelve limb joints, nose, neck and the
/// synthesized root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Joint {
    Nose,
    Neck,
    LeftShoulder,
    RightShoulder,
    LeftElbow,
    RightElbow,
    LeftWrist,
    RightWrist,
    LeftHip,
    RightHip,
    LeftKnee,
    RightKnee,
    LeftAnkle,
    RightAnkle,
    Root,
}

impl Joint {
    pub const ALL: [Joint; 15] = [
        Joint::Nose,
        Joint::Neck,
        Joint::LeftShoulder,
        Joint::RightShoulder,
        Joint::LeftElbow,
        Joint::RightElbow,
        Joint::LeftWrist,
        Joint::RightWrist,
        Joint::LeftHip,
        Joint::RightHip,
        Joint::LeftKnee,
        Joint::RightKnee,
        Joint::LeftAnkle,
        Joint::RightAnkle,
        Joint::Root,
    ];

    pub const SHOULDERS: [Joint; 2] = [Joint::LeftShoulder, Joint::RightShoulder];
    pub const HIPS: [Joint; 2] = [Joint::LeftHip, Joint::RightHip];

    pub fn as_str(self) -> &'static str {
        match self {
            Joint::Nose => "nose",
            Joint::Neck => "neck",
            Joint::LeftShoulder => "left_shoulder",
            Joint::RightShoulder => "right_shoulder",
            Joint::LeftElbow => "left_elbow",
            Joint::RightElbow => "right_elbow",
            Joint::LeftWrist => "left_wrist",
            Joint::RightWrist => "right_wrist",
            Joint::LeftHip => "left_hip",
            Joint::RightHip => "right_hip",
            Joint::LeftKnee => "left_knee",
            Joint::RightKnee => "right_knee",
            Joint::LeftAnkle => "left_ankle",
            Joint::RightAnkle => "right_ankle",
            Joint::Root => "root",
        }
    }

    /// Dense index in `0..15`, stable across releases.
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Joint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown joint name `{0}`")]
pub struct UnknownJoint(pub String);

impl FromStr for Joint {
    type Err = UnknownJoint;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Joint::ALL
            .iter()
            .copied()
            .find(|j| j.as_str() == s)
            .ok_or_else(|| UnknownJoint(s.to_owned()))
    }
}

/// One joint measurement: position plus detector confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub position: Point3,
    pub confidence: f64,
}

impl Keypoint {
    /// Builds a keypoint, clamping the confidence into `[0, 1]`.
    pub fn new(position: Point3, confidence: f64) -> Self {
        Self {
            position,
            confidence: clamp_confidence(confidence),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite()) && self.confidence.is_finite()
    }
}

/// Clamps a confidence into `[0, 1]`; NaN maps to 0.
pub fn clamp_confidence(c: f64) -> f64 {
    if c.is_nan() {
        0.0
    } else {
        c.clamp(0.0, 1.0)
    }
}

/// A single person in a single frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Skeleton {
    pub keypoints: BTreeMap<Joint, Keypoint>,
    pub track_id: Option<u64>,
    /// Cost of the identity assignment that produced `track_id` this frame.
    pub assignment_cost: Option<f64>,
    /// Height estimate in meters, set by spatial evaluation.
    pub estimated_height: Option<f64>,
}

impl Skeleton {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_keypoints<I>(keypoints: I) -> Self
    where
        I: IntoIterator<Item = (Joint, Keypoint)>,
    {
        Self {
            keypoints: keypoints.into_iter().collect(),
            ..Self::default()
        }
    }

    pub fn get(&self, joint: Joint) -> Option<&Keypoint> {
        self.keypoints.get(&joint)
    }

    pub fn position(&self, joint: Joint) -> Option<Point3> {
        self.keypoints.get(&joint).map(|k| k.position)
    }

    pub fn insert(&mut self, joint: Joint, keypoint: Keypoint) {
        self.keypoints.insert(joint, keypoint);
    }

    pub fn contains(&self, joint: Joint) -> bool {
        self.keypoints.contains_key(&joint)
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    /// Returns a copy with every position mapped through `f`.
    pub fn map_positions(&self, f: impl Fn(Point3) -> Point3) -> Self {
        let mut out = self.clone();
        for kp in out.keypoints.values_mut() {
            kp.position = f(kp.position);
        }
        out
    }
}

/// One pose-estimator tick.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Frame {
    pub timestamp: f64,
    pub skeletons: Vec<Skeleton>,
}

impl Frame {
    pub fn new(timestamp: f64, skeletons: Vec<Skeleton>) -> Self {
        Self { timestamp, skeletons }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SkeletonError {
    #[error("cannot synthesize {target}: requires at least one shoulder and one hip")]
    MissingJoints { target: Joint },
}

fn mean_keypoint(members: &[&Keypoint]) -> Keypoint {
    let n = members.len() as f64;
    let position = members.iter().map(|k| k.position).sum::<Point3>() / n;
    let confidence = members.iter().map(|k| k.confidence).sum::<f64>() / n;
    Keypoint::new(position, confidence)
}

/// Places the root at the mean of all present shoulders and hips. The root
/// confidence is the mean of the contributing confidences.
///
/// On error the skeleton is returned untouched inside the error path of the
/// caller; this function never modifies its input.
pub fn synthesize_root(skeleton: &Skeleton) -> Result<Skeleton, SkeletonError> {
    let shoulders: Vec<&Keypoint> = Joint::SHOULDERS.iter().filter_map(|j| skeleton.get(*j)).collect();
    let hips: Vec<&Keypoint> = Joint::HIPS.iter().filter_map(|j| skeleton.get(*j)).collect();
    if shoulders.is_empty() || hips.is_empty() {
        return Err(SkeletonError::MissingJoints { target: Joint::Root });
    }
    let members: Vec<&Keypoint> = shoulders.into_iter().chain(hips).collect();
    let mut out = skeleton.clone();
    out.insert(Joint::Root, mean_keypoint(&members));
    Ok(out)
}

/// Fills in a missing neck at the shoulder midpoint. Needs both shoulders;
/// otherwise the skeleton is returned unchanged.
pub fn synthesize_neck(skeleton: &Skeleton) -> Skeleton {
    if skeleton.contains(Joint::Neck) {
        return skeleton.clone();
    }
    match (skeleton.get(Joint::LeftShoulder), skeleton.get(Joint::RightShoulder)) {
        (Some(l), Some(r)) => {
            let mut out = skeleton.clone();
            out.insert(Joint::Neck, mean_keypoint(&[l, r]));
            out
        }
        _ => skeleton.clone(),
    }
}

/// A bone: directed edge of the skeleton tree with its expected length as a
/// fraction of body height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub parent: Joint,
    pub child: Joint,
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("joint {0} has more than one parent")]
    MultipleParents(Joint),
    #[error("graph contains a cycle through {0}")]
    Cycle(Joint),
    #[error("edge {parent}->{child} has proportion outside (0, 0.5)")]
    BadProportion { parent: Joint, child: Joint },
}

/// Skeleton connectivity as a tree rooted at [`Joint::Root`].
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonGraph {
    edges: Vec<Edge>,
}

// Segment length / body height. Limb, shoulder-width and hip-width values
// follow the Drillis-Contini anthropometric table. Trunk edges are derived from
// the same table: shoulder height 0.818, hip height 0.530, so the shoulder/hip
// mean (the root) sits 0.144 below the shoulder line.
const ROOT_NECK: f64 = 0.144;
// nose ~0.903 (between chin 0.870 and eye 0.936) minus shoulder line 0.818
const NECK_NOSE: f64 = 0.085;
// half biacromial width 0.259
const NECK_SHOULDER: f64 = 0.1295;
const UPPER_ARM: f64 = 0.186;
const FOREARM: f64 = 0.146;
// hypot(half hip width 0.0955, 0.144)
const ROOT_HIP: f64 = 0.173;
const THIGH: f64 = 0.245;
const SHANK: f64 = 0.246;

impl SkeletonGraph {
    /// Validates and builds a graph from arbitrary edges.
    pub fn new(edges: Vec<Edge>) -> Result<Self, GraphError> {
        let mut parent_of: BTreeMap<Joint, Joint> = BTreeMap::new();
        for e in &edges {
            if !(e.proportion > 0.0 && e.proportion < 0.5) {
                return Err(GraphError::BadProportion {
                    parent: e.parent,
                    child: e.child,
                });
            }
            if parent_of.insert(e.child, e.parent).is_some() {
                return Err(GraphError::MultipleParents(e.child));
            }
        }
        // walk up from every node; a tree reaches a parentless node within |V| steps
        for &start in parent_of.keys() {
            let mut node = start;
            for _ in 0..=parent_of.len() {
                match parent_of.get(&node) {
                    Some(&p) if p == start => return Err(GraphError::Cycle(start)),
                    Some(&p) => node = p,
                    None => break,
                }
            }
            if parent_of.contains_key(&node) {
                return Err(GraphError::Cycle(start));
            }
        }
        Ok(Self { edges })
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, parent: Joint, child: Joint) -> Option<&Edge> {
        self.edges.iter().find(|e| e.parent == parent && e.child == child)
    }

    pub fn parent(&self, child: Joint) -> Option<Joint> {
        self.edges.iter().find(|e| e.child == child).map(|e| e.parent)
    }

    /// Edges touching `joint`, in either direction.
    pub fn incident(&self, joint: Joint) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter().filter(move |e| e.parent == joint || e.child == joint)
    }

    /// Edges ordered so every parent is visited before its children.
    pub fn topological_order(&self) -> Vec<Edge> {
        let mut out = Vec::with_capacity(self.edges.len());
        let mut frontier = vec![Joint::Root];
        while let Some(j) = frontier.pop() {
            for e in self.edges.iter().filter(|e| e.parent == j) {
                out.push(*e);
                frontier.push(e.child);
            }
        }
        out
    }
}

/// The fixed 15-joint topology with anthropometric segment proportions.
pub fn default_graph() -> SkeletonGraph {
    use Joint::*;
    let e = |parent, child, proportion| Edge {
        parent,
        child,
        proportion,
    };
    let edges = vec![
        e(Root, Neck, ROOT_NECK),
        e(Root, LeftHip, ROOT_HIP),
        e(Root, RightHip, ROOT_HIP),
        e(Neck, Nose, NECK_NOSE),
        e(Neck, LeftShoulder, NECK_SHOULDER),
        e(Neck, RightShoulder, NECK_SHOULDER),
        e(LeftShoulder, LeftElbow, UPPER_ARM),
        e(RightShoulder, RightElbow, UPPER_ARM),
        e(LeftElbow, LeftWrist, FOREARM),
        e(RightElbow, RightWrist, FOREARM),
        e(LeftHip, LeftKnee, THIGH),
        e(RightHip, RightKnee, THIGH),
        e(LeftKnee, LeftAnkle, SHANK),
        e(RightKnee, RightAnkle, SHANK),
    ];
    SkeletonGraph::new(edges).expect("default graph is a valid tree")
}
