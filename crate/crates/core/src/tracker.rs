//! Identity tracking across frames.
//!
//! Previous and current skeletons are compared joint by joint; the mean
//! position distance `D` and mean confidence difference `C` are combined into
//! `M = D + C + u(D + C - δ)` and solved as a linear assignment.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assignment::{solve_assignment, CostMatrix, MatrixError};
use crate::skeleton::Skeleton;
use crate::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Step constant δ of the unit-step penalty.
    pub step_constant: f64,
    /// Frames a track survives without being matched.
    pub max_track_age: u32,
    /// Fill value when no pair of skeletons shares a joint. The pipeline keeps
    /// it equal to the spatial distance threshold.
    pub empty_cell_fill: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            step_constant: 0.5,
            max_track_age: 90,
            empty_cell_fill: 3.0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.step_constant > 0.0) {
            return Err(ConfigError::invalid("tracker.step_constant", "must be > 0"));
        }
        if self.max_track_age < 1 {
            return Err(ConfigError::invalid("tracker.max_track_age", "must be >= 1"));
        }
        if !(self.empty_cell_fill.is_finite() && self.empty_cell_fill >= 0.0) {
            return Err(ConfigError::invalid(
                "tracker.empty_cell_fill",
                "must be finite and >= 0",
            ));
        }
        Ok(())
    }
}

/// Builds a matrix from a per-pair statistic over common joints. Pairs without
/// common joints get the largest filled value, or `fallback` if none exists.
fn pairwise<F>(prev: &[Skeleton], curr: &[Skeleton], fallback: f64, stat: F) -> CostMatrix
where
    F: Fn(&Skeleton, &Skeleton) -> Option<f64>,
{
    let cells: Vec<Option<f64>> = prev
        .iter()
        .flat_map(|a| curr.iter().map(move |b| (a, b)))
        .map(|(a, b)| stat(a, b))
        .collect();
    let fill = cells.iter().flatten().copied().reduce(f64::max).unwrap_or(fallback);
    let mut m = CostMatrix::filled(prev.len(), curr.len(), fill);
    for (k, cell) in cells.into_iter().enumerate() {
        if let Some(v) = cell {
            m.set(k / curr.len(), k % curr.len(), v);
        }
    }
    m
}

fn mean_over_common(a: &Skeleton, b: &Skeleton, f: impl Fn(&crate::Keypoint, &crate::Keypoint) -> f64) -> Option<f64> {
    let (sum, n) = a
        .keypoints
        .iter()
        .filter_map(|(j, ka)| b.get(*j).map(|kb| f(ka, kb)))
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Mean Euclidean distance over joints present in both skeletons.
pub fn distance_matrix(prev: &[Skeleton], curr: &[Skeleton], fallback: f64) -> CostMatrix {
    pairwise(prev, curr, fallback, |a, b| {
        mean_over_common(a, b, |ka, kb| (ka.position - kb.position).norm())
    })
}

/// Mean absolute confidence difference over joints present in both skeletons.
pub fn confidence_matrix(prev: &[Skeleton], curr: &[Skeleton], fallback: f64) -> CostMatrix {
    pairwise(prev, curr, fallback, |a, b| {
        mean_over_common(a, b, |ka, kb| (ka.confidence - kb.confidence).abs())
    })
}

/// Strict unit step: `u(0) = 0`.
pub fn unit_step(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn combined_cost(
    distance: &CostMatrix,
    confidence: &CostMatrix,
    step_constant: f64,
) -> Result<CostMatrix, MatrixError> {
    distance.zip_with(confidence, |d, c| d + c + unit_step(d + c - step_constant))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    /// Last skeleton assigned to this track.
    pub skeleton: Skeleton,
    pub frames_since_seen: u32,
}

/// Live tracks of one stream. Ids are never reused.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackRegistry {
    tracks: BTreeMap<u64, Track>,
    next_id: u64,
}

/// Result of labeling one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    /// Input skeletons in input order, each carrying its track id.
    pub skeletons: Vec<Skeleton>,
    /// Tracks that expired this frame.
    pub dropped: Vec<u64>,
}

impl TrackRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tracks(&self) -> &BTreeMap<u64, Track> {
        &self.tracks
    }

    pub fn contains(&self, id: u64) -> bool {
        self.tracks.contains_key(&id)
    }

    pub fn live_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.tracks.keys().copied()
    }

    /// Assigns track ids to `skeletons`. Matched skeletons carry the matching
    /// cost; unmatched ones open new tracks; unmatched tracks age and expire
    /// once unseen for more than `max_track_age` frames.
    pub fn track_frame(&mut self, skeletons: Vec<Skeleton>, cfg: &TrackerConfig) -> TrackOutput {
        let ids: Vec<u64> = self.tracks.keys().copied().collect();
        let prev: Vec<Skeleton> = self.tracks.values().map(|t| t.skeleton.clone()).collect();
        let d = distance_matrix(&prev, &skeletons, cfg.empty_cell_fill);
        let c = confidence_matrix(&prev, &skeletons, cfg.empty_cell_fill);
        let m = combined_cost(&d, &c, cfg.step_constant).expect("D and C share a shape");
        let pairs = solve_assignment(&m);

        let mut labeled = skeletons;
        let mut matched_track = vec![false; ids.len()];
        let mut matched_det = vec![false; labeled.len()];
        for &(i, j) in &pairs {
            matched_track[i] = true;
            matched_det[j] = true;
            let s = &mut labeled[j];
            s.track_id = Some(ids[i]);
            s.assignment_cost = Some(m.get(i, j));
            let track = self.tracks.get_mut(&ids[i]).expect("live id");
            track.skeleton = s.clone();
            track.frames_since_seen = 0;
        }

        let mut dropped = Vec::new();
        for (i, id) in ids.iter().enumerate() {
            if matched_track[i] {
                continue;
            }
            let track = self.tracks.get_mut(id).expect("live id");
            track.frames_since_seen += 1;
            if track.frames_since_seen > cfg.max_track_age {
                self.tracks.remove(id);
                dropped.push(*id);
            }
        }

        // births are numbered in a content order so ids do not depend on the
        // order skeletons arrive in
        let mut births: Vec<usize> = (0..labeled.len()).filter(|j| !matched_det[*j]).collect();
        births.sort_by(|a, b| canonical_order(&labeled[*a], &labeled[*b]));
        for j in births {
            let s = &mut labeled[j];
            let id = self.next_id;
            self.next_id += 1;
            s.track_id = Some(id);
            s.assignment_cost = None;
            self.tracks.insert(
                id,
                Track {
                    skeleton: s.clone(),
                    frames_since_seen: 0,
                },
            );
        }

        TrackOutput {
            skeletons: labeled,
            dropped,
        }
    }
}

fn canonical_order(a: &Skeleton, b: &Skeleton) -> Ordering {
    let key = |s: &Skeleton| {
        s.keypoints
            .iter()
            .flat_map(|(j, k)| [j.index() as f64, k.position.x, k.position.y, k.position.z, k.confidence])
            .collect::<Vec<f64>>()
    };
    let (ka, kb) = (key(a), key(b));
    ka.iter()
        .zip(&kb)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| ka.len().cmp(&kb.len()))
}
