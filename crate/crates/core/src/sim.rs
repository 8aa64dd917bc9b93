//! Synthetic scenarios: kinematic skeletons, scripted occlusions and an
//! HPE-like corruption model.
//!
//! World frame: camera at the origin, `y` up, `z` pointing away from the
//! camera. People stand on the floor at `y = -1` facing the camera, so a
//! person's left side is at `+x`. Scripted wrist positions are given relative
//! to the shoulder and reached with a two-link arm.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::Trajectory;
use crate::skeleton::{default_graph, Frame, Joint, Keypoint, Point3, Skeleton};

pub const FLOOR_Y: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Operator's wrist sweeps right to left with a vertical sinusoid.
    T0Sinusoid,
    /// Two people alternately reach to shared table positions.
    T1Interaction,
    /// Two wrists meet closer than 10 cm, repeatedly.
    T2HandoverClose,
    /// Sweeping motion with long total occlusions of the operator's arm.
    T3HeavyOcclusion,
    /// Static people; occlusions come only from the spec.
    Custom,
}

impl Task {
    pub fn label(self) -> &'static str {
        match self {
            Task::T0Sinusoid => "t0",
            Task::T1Interaction => "t1",
            Task::T2HandoverClose => "t2",
            Task::T3HeavyOcclusion => "t3",
            Task::Custom => "custom",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "t0" | "t0_sinusoid" => Ok(Task::T0Sinusoid),
            "t1" | "t1_interaction" => Ok(Task::T1Interaction),
            "t2" | "t2_handover_close" => Ok(Task::T2HandoverClose),
            "t3" | "t3_heavy_occlusion" => Ok(Task::T3HeavyOcclusion),
            "custom" => Ok(Task::Custom),
            other => Err(SimError::InvalidSpec(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
}

/// Confidence ranges `[lo, hi]` drawn uniformly per corruption kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfidenceModel {
    pub clean: [f64; 2],
    pub outlier: [f64; 2],
    pub occluded: [f64; 2],
}

impl Default for ConfidenceModel {
    fn default() -> Self {
        Self {
            clean: [0.7, 1.0],
            outlier: [0.3, 0.7],
            occluded: [0.05, 0.3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Per-axis standard deviation of the clean measurement error, m.
    pub gaussian_sigma: f64,
    /// Probability per keypoint of a gross error.
    pub outlier_rate: f64,
    /// Gross error length, m, in a uniformly random direction.
    pub outlier_magnitude: f64,
    /// Probability per keypoint of being absent.
    pub dropout_rate: f64,
    /// Probability that an occluded keypoint is still reported.
    pub occluded_report_rate: f64,
    /// Displacement of a reported occluded keypoint, m.
    pub occluded_displacement: f64,
    pub confidence: ConfidenceModel,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            gaussian_sigma: 0.02,
            outlier_rate: 0.05,
            outlier_magnitude: 0.5,
            dropout_rate: 0.02,
            occluded_report_rate: 0.8,
            occluded_displacement: 0.35,
            confidence: ConfidenceModel::default(),
        }
    }
}

impl NoiseSpec {
    /// No corruption at all; every keypoint reported exactly with confidence 1.
    pub fn none() -> Self {
        Self {
            gaussian_sigma: 0.0,
            outlier_rate: 0.0,
            outlier_magnitude: 0.0,
            dropout_rate: 0.0,
            occluded_report_rate: 0.0,
            occluded_displacement: 0.0,
            confidence: ConfidenceModel {
                clean: [1.0, 1.0],
                ..ConfidenceModel::default()
            },
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        let prob = |v: f64| (0.0..=1.0).contains(&v);
        if !(prob(self.outlier_rate) && prob(self.dropout_rate) && prob(self.occluded_report_rate)) {
            return Err(SimError::InvalidSpec("probabilities must lie in [0, 1]".into()));
        }
        if !(self.gaussian_sigma >= 0.0 && self.outlier_magnitude >= 0.0 && self.occluded_displacement >= 0.0) {
            return Err(SimError::InvalidSpec("sigmas and magnitudes must be >= 0".into()));
        }
        let c = &self.confidence;
        for [lo, hi] in [c.clean, c.outlier, c.occluded] {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(SimError::InvalidSpec(
                    "confidence ranges must satisfy 0 <= lo <= hi <= 1".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Total occlusion of `joints` of person `track` for `start <= t < end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionWindow {
    pub track: usize,
    pub joints: Vec<Joint>,
    pub start: f64,
    pub end: f64,
}

impl OcclusionWindow {
    pub fn new(track: usize, joints: &[Joint], start: f64, end: f64) -> Self {
        Self {
            track,
            joints: joints.to_vec(),
            start,
            end,
        }
    }

    pub fn covers(&self, track: usize, joint: Joint, t: f64) -> bool {
        self.track == track && self.start <= t && t < self.end && self.joints.contains(&joint)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub task: Task,
    pub duration: f64,
    pub rate: f64,
    pub persons: usize,
    pub noise: NoiseSpec,
    pub occlusions: Vec<OcclusionWindow>,
    pub seed: u64,
    /// Randomize the order of skeletons inside each measurement frame.
    pub shuffle: bool,
}

const LEFT_ARM: [Joint; 2] = [Joint::LeftElbow, Joint::LeftWrist];

impl ScenarioSpec {
    /// Task defaults: 30 Hz, default noise and the task's scripted occlusions
    /// of the operator (person 0).
    pub fn new(task: Task, duration: f64, persons: usize, seed: u64) -> Self {
        let windows: Vec<(f64, f64)> = match task {
            Task::T0Sinusoid => vec![(5.0, 5.5), (12.0, 12.6)],
            Task::T1Interaction => vec![(3.0, 3.4), (7.5, 8.0), (12.0, 12.4), (16.5, 17.0)],
            Task::T2HandoverClose => vec![(6.0, 6.4), (14.0, 14.4)],
            Task::T3HeavyOcclusion => (0..)
                .map(|k| 2.0 + 3.0 * k as f64)
                .take_while(|s| s + 1.0 <= duration)
                .map(|s| (s, s + 1.0))
                .collect(),
            Task::Custom => vec![],
        };
        let occlusions = windows
            .into_iter()
            .filter(|(_, end)| *end <= duration)
            .map(|(s, e)| OcclusionWindow::new(0, &LEFT_ARM, s, e))
            .collect();
        Self {
            task,
            duration,
            rate: 30.0,
            persons,
            noise: NoiseSpec::default(),
            occlusions,
            seed,
            shuffle: true,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(SimError::InvalidSpec("rate must be > 0".into()));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(SimError::InvalidSpec("duration must be > 0".into()));
        }
        if self.persons == 0 {
            return Err(SimError::InvalidSpec("need at least one person".into()));
        }
        let needs_two = matches!(self.task, Task::T1Interaction | Task::T2HandoverClose);
        if needs_two && self.persons < 2 {
            return Err(SimError::InvalidSpec(format!(
                "task {} needs two persons",
                self.task.label()
            )));
        }
        for w in &self.occlusions {
            if !(0.0 <= w.start && w.start < w.end && w.end <= self.duration) {
                return Err(SimError::InvalidSpec(format!(
                    "occlusion window [{}, {}) outside duration",
                    w.start, w.end
                )));
            }
            if w.track >= self.persons {
                return Err(SimError::InvalidSpec(format!(
                    "occlusion refers to missing person {}",
                    w.track
                )));
            }
        }
        self.noise.validate()
    }

    pub fn frame_count(&self) -> usize {
        (self.duration * self.rate).round() as usize
    }

    pub fn is_occluded(&self, track: usize, joint: Joint, t: f64) -> bool {
        self.occlusions.iter().any(|w| w.covers(track, joint, t))
    }
}

/// Generator output. Truth skeletons carry `track_id = person index`,
/// every joint and confidence 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub truth: Vec<Frame>,
    pub measurements: Vec<Frame>,
}

impl SimOutput {
    /// Ground-truth trajectory of one joint of one person.
    pub fn trajectory(&self, person: usize, joint: Joint) -> Trajectory {
        truth_trajectory(&self.truth, person, joint)
    }
}

pub fn truth_trajectory(truth: &[Frame], person: usize, joint: Joint) -> Trajectory {
    let mut traj = Trajectory::empty(format!("truth/{person}/{joint}"));
    for f in truth {
        if let Some(p) = f
            .skeletons
            .iter()
            .find(|s| s.track_id == Some(person as u64))
            .and_then(|s| s.position(joint))
        {
            traj.push(f.timestamp, p);
        }
    }
    traj
}

fn side(joint: Joint) -> f64 {
    match joint {
        Joint::LeftShoulder
        | Joint::LeftElbow
        | Joint::LeftWrist
        | Joint::LeftHip
        | Joint::LeftKnee
        | Joint::LeftAnkle => 1.0,
        _ => -1.0,
    }
}

fn bone_direction(parent: Joint, child: Joint) -> Point3 {
    let up = Point3::new(0.0, 1.0, 0.0);
    match (parent, child) {
        (Joint::Root, Joint::Neck) | (Joint::Neck, Joint::Nose) => up,
        (Joint::Neck, _) => Point3::new(side(child), 0.0, 0.0),
        (Joint::Root, _) => {
            let lateral = (0.173f64.powi(2) - 0.144f64.powi(2)).sqrt();
            Point3::new(side(child) * lateral, -0.144, 0.0) / 0.173
        }
        _ => -up,
    }
}

/// Upright skeleton with the root at the origin, arms hanging, and every bone
/// exactly `proportion * h` long. All confidences are 1.
pub fn body_from_height(h: f64) -> Skeleton {
    let mut s = Skeleton::from_keypoints([(Joint::Root, Keypoint::new(Point3::zeros(), 1.0))]);
    for edge in default_graph().topological_order() {
        let parent = s.position(edge.parent).expect("parents precede children");
        let child = parent + bone_direction(edge.parent, edge.child) * (edge.proportion * h);
        s.insert(edge.child, Keypoint::new(child, 1.0));
    }
    s.estimated_height = Some(h);
    s
}

/// Elbow position of a two-link arm reaching from `shoulder` toward `target`,
/// bending toward `hint`. The target is pulled into the reachable shell and
/// the wrist actually reached is returned alongside the elbow.
pub fn arm_ik(shoulder: Point3, target: Point3, upper: f64, fore: f64, hint: Point3) -> (Point3, Point3) {
    let reach = target - shoulder;
    let d_raw = reach.norm();
    let min = (upper - fore).abs() + 1e-6;
    let max = upper + fore - 1e-6;
    let u = if d_raw > 1e-12 {
        reach / d_raw
    } else {
        Point3::new(0.0, -1.0, 0.0)
    };
    let d = d_raw.clamp(min, max);
    let along = (upper * upper - fore * fore + d * d) / (2.0 * d);
    let across = (upper * upper - along * along).max(0.0).sqrt();
    let mut n = hint - u * hint.dot(&u);
    if n.norm() < 1e-9 {
        n = u.cross(&Point3::new(1.0, 0.0, 0.0));
        if n.norm() < 1e-9 {
            n = u.cross(&Point3::new(0.0, 0.0, 1.0));
        }
    }
    let elbow = shoulder + u * along + n.normalize() * across;
    (elbow, shoulder + u * d)
}

fn min_jerk(tau: f64) -> f64 {
    let s = tau.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

/// Piecewise min-jerk path through `waypoints`, each move taking `move_s`
/// followed by a `hold_s` pause; repeats cyclically.
fn waypoint_path(waypoints: &[Point3], move_s: f64, hold_s: f64, t: f64) -> Point3 {
    let seg = move_s + hold_s;
    let k = (t / seg).floor() as usize;
    let local = t - k as f64 * seg;
    let from = waypoints[k % waypoints.len()];
    let to = waypoints[(k + 1) % waypoints.len()];
    from + (to - from) * min_jerk(local / move_s)
}

struct Person {
    height: f64,
    base: Point3,
    phase: f64,
}

impl Person {
    fn scale(&self) -> f64 {
        self.height / 1.75
    }
}

fn people(n: usize) -> Vec<Person> {
    let heights = [1.75, 1.65, 1.82, 1.70];
    (0..n)
        .map(|i| {
            let h = heights[i % heights.len()];
            let root_y = FLOOR_Y + (0.144 + 0.245 + 0.246) * h;
            let base = match i {
                0 => Point3::new(0.0, root_y, 1.6),
                1 => Point3::new(0.75, root_y, 1.7),
                k => Point3::new(-0.9 + 0.6 * (k - 2) as f64, root_y, 2.6),
            };
            Person {
                height: h,
                base,
                phase: 1.3 * i as f64,
            }
        })
        .collect()
}

/// Wrist goals relative to the shoulders: (left, right).
fn wrist_goals(task: Task, person: usize, p: &Person, t: f64) -> (Point3, Point3) {
    let s = p.scale();
    let idle = |side: f64| Point3::new(0.04 * side, -0.45, -0.12) * s;
    match (task, person) {
        (Task::T0Sinusoid | Task::T3HeavyOcclusion, 0) => {
            let x = -0.10 - 0.20 * (2.0 * PI * t / 8.0).cos();
            let y = -0.22 + 0.08 * (2.0 * PI * 0.4 * t).sin();
            (Point3::new(x, y, -0.35), idle(-1.0))
        }
        (Task::T1Interaction, 0) => {
            let cups = [
                Point3::new(0.10, -0.30, -0.40),
                Point3::new(0.25, -0.22, -0.30),
                Point3::new(0.00, -0.15, -0.42),
                Point3::new(0.20, -0.35, -0.25),
            ];
            (waypoint_path(&cups, 1.5, 0.5, t), idle(-1.0))
        }
        (Task::T1Interaction, 1) => {
            let cups = [
                Point3::new(-0.20, -0.35, -0.25),
                Point3::new(-0.05, -0.30, -0.40),
                Point3::new(-0.25, -0.22, -0.30),
                Point3::new(0.00, -0.15, -0.42),
            ];
            (idle(1.0), waypoint_path(&cups, 1.5, 0.5, t + 1.0))
        }
        (Task::T2HandoverClose, 0 | 1) => {
            // wrists meet 6 cm apart around a fixed world point between the two
            let side = if person == 0 { 1.0 } else { -1.0 };
            let shoulder = p.base + Point3::new(side * 0.1295 * p.height, 0.144 * p.height, 0.0);
            let meet = Point3::new(0.38 - side * 0.03, 0.12, 1.28) - shoulder;
            let rest = Point3::new(0.0, -0.35, -0.25) * s;
            let goal = waypoint_path(&[rest, meet], 1.5, 1.0, t);
            if person == 0 {
                (goal, idle(-1.0))
            } else {
                (idle(1.0), goal)
            }
        }
        _ => (idle(1.0), idle(-1.0)),
    }
}

/// Ground-truth pose of person `i` at time `t`.
fn pose(task: Task, i: usize, p: &Person, t: f64) -> Skeleton {
    let sway = Point3::new(
        0.01 * (2.0 * PI * 0.25 * t + p.phase).sin(),
        0.0,
        0.01 * (2.0 * PI * 0.2 * t + p.phase).cos(),
    );
    let origin = p.base + sway;
    let mut s = body_from_height(p.height).map_positions(|q| q + origin);
    let (left, right) = wrist_goals(task, i, p, t);
    let h = p.height;
    for (shoulder, elbow, wrist, goal) in [
        (Joint::LeftShoulder, Joint::LeftElbow, Joint::LeftWrist, left),
        (Joint::RightShoulder, Joint::RightElbow, Joint::RightWrist, right),
    ] {
        let sp = s.position(shoulder).expect("full body");
        let hint = Point3::new(side(shoulder) * 0.3, -1.0, 0.3);
        let (e, w) = arm_ik(sp, sp + goal, 0.186 * h, 0.146 * h, hint);
        s.insert(elbow, Keypoint::new(e, 1.0));
        s.insert(wrist, Keypoint::new(w, 1.0));
    }
    s.track_id = Some(i as u64);
    s.estimated_height = Some(h);
    s
}

fn random_direction(rng: &mut ChaCha8Rng) -> Point3 {
    loop {
        let v = Point3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

/// Corrupts one truth skeleton. The root is never reported.
fn corrupt(truth: &Skeleton, person: usize, t: f64, spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> Skeleton {
    let noise = &spec.noise;
    let mut out = Skeleton::default();
    for (&joint, kp) in &truth.keypoints {
        if joint == Joint::Root {
            continue;
        }
        // fixed draw count per keypoint keeps streams aligned across settings
        let u_kind: f64 = rng.random();
        let u_drop: f64 = rng.random();
        let gauss = Point3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let dir = random_direction(rng);
        let u_conf: f64 = rng.random();

        let lerp = |[lo, hi]: [f64; 2]| lo + (hi - lo) * u_conf;
        let measured = if spec.is_occluded(person, joint, t) {
            (u_kind < noise.occluded_report_rate).then(|| {
                Keypoint::new(
                    kp.position + dir * noise.occluded_displacement,
                    lerp(noise.confidence.occluded),
                )
            })
        } else if u_drop < noise.dropout_rate {
            None
        } else if u_kind < noise.outlier_rate {
            Some(Keypoint::new(
                kp.position + dir * noise.outlier_magnitude,
                lerp(noise.confidence.outlier),
            ))
        } else {
            Some(Keypoint::new(
                kp.position + gauss * noise.gaussian_sigma,
                lerp(noise.confidence.clean),
            ))
        };
        if let Some(m) = measured {
            out.insert(joint, m);
        }
    }
    out
}

/// Truth and corrupted measurement streams; bit-identical for equal specs.
pub fn generate(spec: &ScenarioSpec) -> Result<SimOutput, SimError> {
    spec.validate()?;
    let persons = people(spec.persons);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.frame_count();
    let mut truth = Vec::with_capacity(n);
    let mut measurements = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 / spec.rate;
        let poses: Vec<Skeleton> = persons
            .iter()
            .enumerate()
            .map(|(i, p)| pose(spec.task, i, p, t))
            .collect();
        let mut observed: Vec<Skeleton> = poses
            .iter()
            .enumerate()
            .map(|(i, s)| corrupt(s, i, t, spec, &mut rng))
            .filter(|s| !s.is_empty())
            .collect();
        if spec.shuffle {
            observed.shuffle(&mut rng);
        }
        truth.push(Frame::new(t, poses));
        measurements.push(Frame::new(t, observed));
    }
    Ok(SimOutput { truth, measurements })
}
