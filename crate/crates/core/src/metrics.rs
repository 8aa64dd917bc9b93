//! Trajectory comparison metrics: MAE, STD, ACC and safety-distance spread.
//!
//! Distances are reported in millimeters, accelerations in m/s^2. Standard
//! deviations are population (divide by N).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::skeleton::Point3;

/// Default pairing window: half a frame at 30 Hz.
pub const DEFAULT_MAX_GAP: f64 = 1.0 / 60.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("trajectories share no samples within the pairing window")]
    NoOverlap,
    #[error("need at least {needed} paired samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("trajectory `{0}` has non-increasing timestamps")]
    NonMonotone(String),
}

/// Timestamped 3D samples with strictly increasing timestamps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub label: String,
    samples: Vec<(f64, Point3)>,
}

impl Trajectory {
    pub fn new(label: impl Into<String>, samples: Vec<(f64, Point3)>) -> Result<Self, MetricError> {
        let label = label.into();
        if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(MetricError::NonMonotone(label));
        }
        Ok(Self { label, samples })
    }

    pub fn empty(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            samples: Vec::new(),
        }
    }

    /// Appends a sample; returns false (and drops it) if it is not later than
    /// the last one.
    pub fn push(&mut self, t: f64, p: Point3) -> bool {
        if self.samples.last().is_some_and(|(last, _)| t <= *last) {
            return false;
        }
        self.samples.push((t, p));
        true
    }

    pub fn samples(&self) -> &[(f64, Point3)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn map(&self, f: impl Fn(Point3) -> Point3) -> Self {
        Self {
            label: self.label.clone(),
            samples: self.samples.iter().map(|(t, p)| (*t, f(*p))).collect(),
        }
    }
}

/// Index pairs `(i, j)` matching each sample of `a` to the nearest-in-time
/// sample of `b`, kept when within `max_gap` seconds.
pub fn align_timestamps(a: &Trajectory, b: &Trajectory, max_gap: f64) -> Result<Vec<(usize, usize)>, MetricError> {
    let bs = b.samples();
    let mut pairs = Vec::new();
    for (i, (t, _)) in a.samples().iter().enumerate() {
        let k = bs.partition_point(|(tb, _)| tb < t);
        let nearest = [k.checked_sub(1), (k < bs.len()).then_some(k)]
            .into_iter()
            .flatten()
            .min_by(|x, y| (bs[*x].0 - t).abs().total_cmp(&(bs[*y].0 - t).abs()));
        if let Some(j) = nearest {
            if (bs[j].0 - t).abs() <= max_gap {
                pairs.push((i, j));
            }
        }
    }
    if pairs.is_empty() {
        return Err(MetricError::NoOverlap);
    }
    Ok(pairs)
}

/// Per-pair Euclidean distances in meters.
pub fn paired_distances(a: &Trajectory, b: &Trajectory, max_gap: f64) -> Result<Vec<(f64, f64)>, MetricError> {
    let pairs = align_timestamps(a, b, max_gap)?;
    Ok(pairs
        .into_iter()
        .map(|(i, j)| {
            let (t, pa) = a.samples()[i];
            (t, (pa - b.samples()[j].1).norm())
        })
        .collect())
}

fn mean_and_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean Euclidean distance, mm.
pub fn mae(a: &Trajectory, b: &Trajectory) -> Result<f64, MetricError> {
    let d = paired_distances(a, b, DEFAULT_MAX_GAP)?;
    Ok(mean_and_std(d.iter().map(|x| x.1)).0 * 1e3)
}

/// Population standard deviation of the Euclidean distance, mm.
pub fn std(a: &Trajectory, b: &Trajectory) -> Result<f64, MetricError> {
    let d = paired_distances(a, b, DEFAULT_MAX_GAP)?;
    Ok(mean_and_std(d.iter().map(|x| x.1)).1 * 1e3)
}

/// Second derivative at every interior sample, using the three-point formula
/// for non-uniform spacing. Entry `i` is `None` at the endpoints.
pub fn second_derivatives(traj: &Trajectory) -> Vec<Option<Point3>> {
    let s = traj.samples();
    (0..s.len())
        .map(|i| {
            if i == 0 || i + 1 >= s.len() {
                return None;
            }
            let (t0, p0) = s[i - 1];
            let (t1, p1) = s[i];
            let (t2, p2) = s[i + 1];
            let (h1, h2) = (t1 - t0, t2 - t1);
            Some(((p2 - p1) / h2 - (p1 - p0) / h1) * (2.0 / (h1 + h2)))
        })
        .collect()
}

/// Mean distance between second derivatives of paired samples, m/s^2.
pub fn acc(a: &Trajectory, b: &Trajectory) -> Result<f64, MetricError> {
    let pairs = align_timestamps(a, b, DEFAULT_MAX_GAP)?;
    if pairs.len() < 3 {
        return Err(MetricError::TooShort {
            needed: 3,
            got: pairs.len(),
        });
    }
    let da = second_derivatives(a);
    let db = second_derivatives(b);
    let diffs: Vec<f64> = pairs
        .iter()
        .filter_map(|&(i, j)| Some((da[i]? - db[j]?).norm()))
        .collect();
    if diffs.is_empty() {
        return Err(MetricError::TooShort {
            needed: 3,
            got: pairs.len(),
        });
    }
    Ok(diffs.iter().sum::<f64>() / diffs.len() as f64)
}

/// Population standard deviation of the wrist to end-effector distance, mm.
pub fn safety_std(wrist: &Trajectory, end_effector: &Trajectory) -> Result<f64, MetricError> {
    std(wrist, end_effector)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub label: String,
    pub mae_mm: f64,
    pub std_mm: f64,
    pub acc_ms2: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub safety_std_mm: Option<f64>,
    pub sample_count: usize,
}

impl MetricReport {
    /// Evaluates `pred` against `truth`; `end_effector` adds the safety metric.
    pub fn compute(
        truth: &Trajectory,
        pred: &Trajectory,
        end_effector: Option<&Trajectory>,
    ) -> Result<Self, MetricError> {
        let d = paired_distances(pred, truth, DEFAULT_MAX_GAP)?;
        let (mean, sd) = mean_and_std(d.iter().map(|x| x.1));
        let acc = acc(pred, truth)?;
        let safety_std_mm = end_effector.map(|ee| safety_std(truth, ee)).transpose()?;
        Ok(Self {
            label: pred.label.clone(),
            mae_mm: mean * 1e3,
            std_mm: sd * 1e3,
            acc_ms2: acc,
            safety_std_mm,
            sample_count: d.len(),
        })
    }
}
