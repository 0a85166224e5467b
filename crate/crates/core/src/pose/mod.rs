//! Absolute-pose machinery for the piecewise-rigidity rule.
//!
//! Poses map world points into the camera frame: `X_cam = R X + t`.

mod p3p;

use nalgebra::{Matrix3, Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use p3p::p3p_solve;

const ROTATION_TOL: f64 = 1e-9;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = CameraIntrinsics { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "invalid intrinsics fx={} fy={} cx={} cy={}",
                self.fx, self.fy, self.cx, self.cy
            )));
        }
        Ok(())
    }

    /// Unit bearing through a pixel.
    pub fn bearing(&self, pixel: &Point2<f64>) -> Vector3<f64> {
        Vector3::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy, 1.0).normalize()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        check_rotation(&rotation)?;
        Ok(Pose {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn transform(&self, x: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * x.coords + self.translation)
    }
}

fn check_rotation(r: &Matrix3<f64>) -> Result<()> {
    let ortho = (r.transpose() * r - Matrix3::identity()).norm();
    let det = r.determinant();
    if !(ortho <= ROTATION_TOL) || !((det - 1.0).abs() <= ROTATION_TOL) {
        return Err(Error::InvalidRotation(ortho.max((det - 1.0).abs())));
    }
    Ok(())
}

/// Angle in `[0, pi]` of the relative rotation `Ra' Rb`.
///
/// Evaluated as `atan2(sin, cos)` from the skew and trace parts, which equals
/// `acos((trace - 1) / 2)` but keeps full precision near 0 and pi.
pub fn rotation_geodesic_distance(ra: &Matrix3<f64>, rb: &Matrix3<f64>) -> Result<f64> {
    check_rotation(ra)?;
    check_rotation(rb)?;
    Ok(relative_angle(ra, rb))
}

fn relative_angle(ra: &Matrix3<f64>, rb: &Matrix3<f64>) -> f64 {
    let rel = ra.transpose() * rb;
    let cos = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let axis = Vector3::new(
        rel[(2, 1)] - rel[(1, 2)],
        rel[(0, 2)] - rel[(2, 0)],
        rel[(1, 0)] - rel[(0, 1)],
    );
    let sin = (axis.norm() / 2.0).min(1.0);
    sin.atan2(cos)
}

/// Agreement of two P3P solution sets: the pair of poses with the smallest
/// rotation distance (then smallest translation gap) must be within `eps1`
/// radians and have an l1 translation gap at most `eps2` times the larger
/// translation norm.
pub fn pose_agreement(poses_a: &[Pose], poses_b: &[Pose], eps1: f64, eps2: f64) -> Result<bool> {
    if poses_a.is_empty() || poses_b.is_empty() {
        return Err(Error::EmptySolutions);
    }
    let mut best: Option<(f64, f64, &Pose, &Pose)> = None;
    for a in poses_a {
        for b in poses_b {
            let angle = relative_angle(&a.rotation, &b.rotation);
            let gap = (a.translation - b.translation).lp_norm(1);
            let better = match best {
                None => true,
                Some((ba, bg, _, _)) => angle < ba || (angle == ba && gap < bg),
            };
            if better {
                best = Some((angle, gap, a, b));
            }
        }
    }
    let (angle, gap, a, b) = best.expect("both sets are non-empty");
    let scale = a.translation.norm().max(b.translation.norm());
    Ok(angle <= eps1 && gap <= eps2 * scale)
}

/// Pinhole projection of `R X + t`.
pub fn project_point(k: &CameraIntrinsics, pose: &Pose, x: &Point3<f64>) -> Result<Point2<f64>> {
    let c = pose.transform(x);
    if !(c.z > 0.0) {
        return Err(Error::BehindCamera { depth: c.z });
    }
    Ok(Point2::new(k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy))
}
