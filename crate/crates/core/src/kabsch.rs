//! Least-squares rigid registration of corresponding point sets (Kabsch).

use nalgebra::{Matrix3, Rotation3, SVD};
use thiserror::Error;

use crate::skeleton::Point3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KabschError {
    #[error("point sets differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least three non-collinear correspondences")]
    Degenerate,
}

/// `x -> rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Rotation3<f64>,
    pub translation: Point3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation3::identity(),
            translation: Point3::zeros(),
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }
}

/// Angle of the relative rotation between `a` and `b`, radians.
///
/// Uses `|a - b|_F = 2 sqrt(2) sin(theta / 2)`, which stays accurate near
/// zero where the trace-based `acos` form loses half the digits.
pub fn rotation_angle_between(a: &Rotation3<f64>, b: &Rotation3<f64>) -> f64 {
    let chord = (a.matrix() - b.matrix()).norm() / (2.0 * std::f64::consts::SQRT_2);
    2.0 * chord.min(1.0).asin()
}

/// Root-mean-square distance between corresponding points.
pub fn rmsd(a: &[Point3], b: &[Point3]) -> f64 {
    let sum: f64 = a.iter().zip(b).map(|(p, q)| (p - q).norm_squared()).sum();
    (sum / a.len() as f64).sqrt()
}

fn centroid(points: &[Point3]) -> Point3 {
    points.iter().sum::<Point3>() / points.len() as f64
}

/// Proper rotation and translation minimizing the RMSD from `source` mapped
/// onto `target`.
pub fn kabsch_align(source: &[Point3], target: &[Point3]) -> Result<RigidTransform, KabschError> {
    if source.len() != target.len() {
        return Err(KabschError::LengthMismatch(source.len(), target.len()));
    }
    if source.len() < 3 {
        return Err(KabschError::Degenerate);
    }
    let cs = centroid(source);
    let ct = centroid(target);

    let spread =
        |pts: &[Point3], c: Point3| -> Matrix3<f64> { pts.iter().map(|p| (p - c) * (p - c).transpose()).sum() };
    for (pts, c) in [(source, cs), (target, ct)] {
        let sv = SVD::new(spread(pts, c), false, false).singular_values;
        let (largest, middle) = (sv.max(), {
            let mut v = [sv[0], sv[1], sv[2]];
            v.sort_by(f64::total_cmp);
            v[1]
        });
        if !(largest > 0.0) || middle <= 1e-12 * largest {
            return Err(KabschError::Degenerate);
        }
    }

    let h: Matrix3<f64> = source
        .iter()
        .zip(target)
        .map(|(s, t)| (s - cs) * (t - ct).transpose())
        .sum();
    let svd = SVD::new(h, true, true);
    let u = svd.u.ok_or(KabschError::Degenerate)?;
    let v_t = svd.v_t.ok_or(KabschError::Degenerate)?;
    let v = v_t.transpose();

    // flip the direction with the smallest singular value on reflections
    let d = (v * u.transpose()).determinant().signum();
    let smallest = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(2);
    let mut correction = Matrix3::identity();
    correction[(smallest, smallest)] = d;
    let r = v * correction * u.transpose();

    let rotation = Rotation3::from_matrix_unchecked(r);
    Ok(RigidTransform {
        rotation,
        translation: ct - rotation * cs,
    })
}
