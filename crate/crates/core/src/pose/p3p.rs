//! Perspective-three-point solver in the classical distance-ratio form.
//!
//! With side lengths `a = |X2 X3|`, `b = |X1 X3|`, `c = |X1 X2|`, bearing
//! cosines `cos(alpha) = f2.f3`, `cos(beta) = f1.f3`, `cos(gamma) = f1.f2` and
//! depths `s2 = u s1`, `s3 = v s1`, eliminating `u` from the three law-of-cosines
//! equations leaves a quartic in `v`. Its real roots give the depths, and the
//! pose follows from aligning the world triangle with the camera-frame one.

use nalgebra::{DMatrix, Matrix3, Point3, Vector3};

use super::Pose;
use crate::error::{Error, Result};

const COLLINEAR_TOL: f64 = 1e-9;
const IMAGINARY_TOL: f64 = 1e-6;
const REPROJECTION_TOL: f64 = 1e-6;
const DEDUP_TOL: f64 = 1e-8;

/// All real P3P solutions (at most four) mapping `points` onto `bearings`
/// (`bearing_i ~ R X_i + t`, positive depth). An empty list means no real
/// solution exists.
pub fn p3p_solve(points: &[Point3<f64>; 3], bearings: &[Vector3<f64>; 3]) -> Result<Vec<Pose>> {
    check_points(points)?;
    let f = normalize_bearings(bearings)?;

    let a2 = (points[1] - points[2]).norm_squared();
    let b2 = (points[0] - points[2]).norm_squared();
    let c2 = (points[0] - points[1]).norm_squared();
    let cos_a = f[1].dot(&f[2]);
    let cos_b = f[0].dot(&f[2]);
    let cos_g = f[0].dot(&f[1]);

    let quartic = quartic_coefficients(a2, b2, c2, cos_a, cos_b, cos_g);
    let mut solutions: Vec<Pose> = Vec::with_capacity(4);
    for v in real_roots(&quartic) {
        if v <= 0.0 {
            continue;
        }
        let denom = 1.0 + v * v - 2.0 * v * cos_b;
        if denom <= 0.0 {
            continue;
        }
        let s1 = (b2 / denom).sqrt();
        for u in ratio_candidates(s1, v, a2, c2, cos_a, cos_g) {
            let depths = refine_depths(
                Vector3::new(s1, u * s1, v * s1),
                [a2, b2, c2],
                [cos_a, cos_b, cos_g],
            );
            if depths.iter().any(|&s| !(s > 0.0)) {
                continue;
            }
            let camera = [f[0] * depths[0], f[1] * depths[1], f[2] * depths[2]];
            let Some(pose) = align(points, &camera) else {
                continue;
            };
            if reprojection_error(points, &f, &pose) > REPROJECTION_TOL {
                continue;
            }
            if solutions.iter().any(|p| same_pose(p, &pose)) {
                continue;
            }
            solutions.push(pose);
        }
    }
    solutions.truncate(4);
    Ok(solutions)
}

fn check_points(points: &[Point3<f64>; 3]) -> Result<()> {
    let e01 = points[1] - points[0];
    let e02 = points[2] - points[0];
    let e12 = points[2] - points[1];
    let diameter = e01.norm().max(e02.norm()).max(e12.norm());
    if !diameter.is_finite() || diameter == 0.0 {
        return Err(Error::DegenerateConfiguration("coincident points".into()));
    }
    // smallest altitude is twice the area over the longest side
    let altitude = e01.cross(&e02).norm() / diameter;
    if altitude <= COLLINEAR_TOL * diameter {
        return Err(Error::DegenerateConfiguration("collinear points".into()));
    }
    Ok(())
}

fn normalize_bearings(bearings: &[Vector3<f64>; 3]) -> Result<[Vector3<f64>; 3]> {
    let mut f = [Vector3::zeros(); 3];
    for (out, b) in f.iter_mut().zip(bearings) {
        let norm = b.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::DegenerateConfiguration("zero or non-finite bearing".into()));
        }
        *out = b / norm;
    }
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        if (f[i] - f[j]).norm() <= 1e-12 {
            return Err(Error::DegenerateConfiguration("coincident bearings".into()));
        }
    }
    Ok(f)
}

/// Coefficients `[A0, A1, A2, A3, A4]` of the quartic in `v`.
fn quartic_coefficients(a2: f64, b2: f64, c2: f64, ca: f64, cb: f64, cg: f64) -> [f64; 5] {
    let k1 = (a2 - c2) / b2;
    let k2 = (a2 + c2) / b2;
    let a4 = (k1 - 1.0).powi(2) - 4.0 * c2 / b2 * ca * ca;
    let a3 = 4.0
        * (k1 * (1.0 - k1) * cb - (1.0 - k2) * ca * cg + 2.0 * c2 / b2 * ca * ca * cb);
    let a2c = 2.0
        * (k1 * k1 - 1.0 + 2.0 * k1 * k1 * cb * cb + 2.0 * (b2 - c2) / b2 * ca * ca
            - 4.0 * k2 * ca * cb * cg
            + 2.0 * (b2 - a2) / b2 * cg * cg);
    let a1 = 4.0 * (-k1 * (1.0 + k1) * cb + 2.0 * a2 / b2 * cg * cg * cb - (1.0 - k2) * ca * cg);
    let a0 = (1.0 + k1).powi(2) - 4.0 * a2 / b2 * cg * cg;
    [a0, a1, a2c, a3, a4]
}

fn eval(coeffs: &[f64], x: f64) -> (f64, f64) {
    let mut p = 0.0;
    let mut dp = 0.0;
    for &c in coeffs.iter().rev() {
        dp = dp * x + p;
        p = p * x + c;
    }
    (p, dp)
}

/// Real roots from the companion-matrix eigenvalues, each polished by one
/// Newton step.
fn real_roots(coeffs: &[f64; 5]) -> Vec<f64> {
    let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return Vec::new();
    }
    let c: Vec<f64> = coeffs.iter().map(|x| x / scale).collect();
    let Some(degree) = (1..=4).rev().find(|&d| c[d].abs() > 1e-12) else {
        return Vec::new();
    };
    let lead = c[degree];
    let mut companion = DMatrix::<f64>::zeros(degree, degree);
    for i in 1..degree {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..degree {
        companion[(i, degree - 1)] = -c[i] / lead;
    }
    companion
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= IMAGINARY_TOL * (1.0 + z.re.abs()))
        .map(|z| {
            let (p, dp) = eval(&c[..=degree], z.re);
            if dp.abs() > 1e-14 {
                z.re - p / dp
            } else {
                z.re
            }
        })
        .collect()
}

/// Positive roots of `u^2 - 2 cos(gamma) u + 1 - c^2 / s1^2 = 0` that also
/// nearly satisfy the `a` equation.
fn ratio_candidates(s1: f64, v: f64, a2: f64, c2: f64, ca: f64, cg: f64) -> Vec<f64> {
    let disc = cg * cg - 1.0 + c2 / (s1 * s1);
    if disc < -1e-9 {
        return Vec::new();
    }
    let root = disc.max(0.0).sqrt();
    let mut out: Vec<f64> = Vec::with_capacity(2);
    for u in [cg + root, cg - root] {
        if u <= 0.0 || out.iter().any(|&w| (w - u).abs() <= 1e-12) {
            continue;
        }
        let residual = (s1 * s1 * (u * u + v * v - 2.0 * u * v * ca) - a2).abs() / a2;
        if residual <= 1e-4 {
            out.push(u);
        }
    }
    out
}

/// Gauss-Newton on the three law-of-cosines equations in the depths. Near a
/// double root the Jacobian is close to singular and convergence is only
/// linear, hence the generous iteration cap.
fn refine_depths(mut s: Vector3<f64>, sides: [f64; 3], cosines: [f64; 3]) -> Vector3<f64> {
    let [a2, b2, c2] = sides;
    let [ca, cb, cg] = cosines;
    let residual = |s: &Vector3<f64>| {
        Vector3::new(
            s[1] * s[1] + s[2] * s[2] - 2.0 * s[1] * s[2] * ca - a2,
            s[0] * s[0] + s[2] * s[2] - 2.0 * s[0] * s[2] * cb - b2,
            s[0] * s[0] + s[1] * s[1] - 2.0 * s[0] * s[1] * cg - c2,
        )
    };
    let mut r = residual(&s);
    for _ in 0..60 {
        if r.norm() == 0.0 {
            break;
        }
        #[rustfmt::skip]
        let jac = Matrix3::new(
            0.0, 2.0 * s[1] - 2.0 * s[2] * ca, 2.0 * s[2] - 2.0 * s[1] * ca,
            2.0 * s[0] - 2.0 * s[2] * cb, 0.0, 2.0 * s[2] - 2.0 * s[0] * cb,
            2.0 * s[0] - 2.0 * s[1] * cg, 2.0 * s[1] - 2.0 * s[0] * cg, 0.0,
        );
        let Some(step) = jac.lu().solve(&r) else {
            break;
        };
        let next = s - step;
        let rn = residual(&next);
        if rn.norm() > r.norm() {
            break;
        }
        s = next;
        r = rn;
        if step.norm() <= 1e-15 * s.norm() {
            break;
        }
    }
    s
}

/// Rigid transform taking the world triangle onto the camera-frame triangle,
/// from orthonormal frames built on each.
fn align(world: &[Point3<f64>; 3], camera: &[Vector3<f64>; 3]) -> Option<Pose> {
    let frame = |p0: Vector3<f64>, p1: Vector3<f64>, p2: Vector3<f64>| -> Option<Matrix3<f64>> {
        let e1 = (p1 - p0).try_normalize(0.0)?;
        let e2 = ((p2 - p0) - e1 * e1.dot(&(p2 - p0))).try_normalize(0.0)?;
        let e3 = e1.cross(&e2);
        Some(Matrix3::from_columns(&[e1, e2, e3]))
    };
    let fw = frame(world[0].coords, world[1].coords, world[2].coords)?;
    let fc = frame(camera[0], camera[1], camera[2])?;
    let rotation = fc * fw.transpose();
    let cw = (world[0].coords + world[1].coords + world[2].coords) / 3.0;
    let cc = (camera[0] + camera[1] + camera[2]) / 3.0;
    Some(Pose {
        rotation,
        translation: cc - rotation * cw,
    })
}

fn reprojection_error(points: &[Point3<f64>; 3], f: &[Vector3<f64>; 3], pose: &Pose) -> f64 {
    points
        .iter()
        .zip(f)
        .map(|(x, b)| {
            let c = pose.rotation * x.coords + pose.translation;
            if c.dot(b) <= 0.0 {
                return f64::INFINITY;
            }
            c.cross(b).norm().atan2(c.dot(b))
        })
        .fold(0.0, f64::max)
}

fn same_pose(a: &Pose, b: &Pose) -> bool {
    let scale = 1.0 + a.translation.norm().max(b.translation.norm());
    (a.rotation - b.rotation).norm() <= DEDUP_TOL && (a.translation - b.translation).norm() <= DEDUP_TOL * scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn camera_at_origin_is_a_solution() {
        let pts = [
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(1.0, 0.0, 1.0),
            Point3::new(0.0, 1.0, 1.0),
        ];
        let bearings = [pts[0].coords, pts[1].coords, pts[2].coords];
        let sols = p3p_solve(&pts, &bearings).unwrap();
        assert!(!sols.is_empty() && sols.len() <= 4);
        // this symmetric layout is a double root of the quartic, so only about
        // half the digits survive
        assert!(sols.iter().any(|p| {
            (p.rotation - Matrix3::identity()).norm() < 1e-6 && p.translation.norm() < 1e-6
        }));
    }

    #[test]
    fn recovers_a_generic_pose() {
        let rotation = *nalgebra::Rotation3::from_euler_angles(0.3, -0.2, 0.9).matrix();
        let truth = Pose::new(rotation, Vector3::new(0.2, -0.1, 3.0)).unwrap();
        let pts = [
            Point3::new(0.1, 0.4, -0.3),
            Point3::new(-0.5, 0.2, 0.1),
            Point3::new(0.3, -0.4, 0.2),
        ];
        let bearings = pts.map(|x| truth.transform(&x).coords);
        let sols = p3p_solve(&pts, &bearings).unwrap();
        assert!(sols.len() <= 4);
        assert!(sols.iter().any(|p| {
            (p.rotation - truth.rotation).norm() < 1e-9
                && (p.translation - truth.translation).norm() < 1e-9 * truth.translation.norm()
        }));
    }

    #[test]
    fn collinear_points_are_rejected() {
        let pts = [
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(0.0, 0.0, 2.0),
            Point3::new(0.0, 0.0, 3.0),
        ];
        let bearings = [Vector3::x(), Vector3::y(), Vector3::z()];
        assert!(matches!(p3p_solve(&pts, &bearings), Err(Error::DegenerateConfiguration(_))));
    }

    #[test]
    fn coincident_bearings_are_rejected() {
        let pts = [
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(1.0, 0.0, 1.0),
            Point3::new(0.0, 1.0, 1.0),
        ];
        let bearings = [Vector3::z(), Vector3::z(), Vector3::y()];
        assert!(p3p_solve(&pts, &bearings).is_err());
    }

    #[test]
    fn polynomial_evaluation() {
        // 2 - 3x + x^2 at x = 3: value 2, derivative 3
        assert_eq!(eval(&[2.0, -3.0, 1.0], 3.0), (2.0, 3.0));
        let mut roots = real_roots(&[24.0, -50.0, 35.0, -10.0, 1.0]);
        roots.sort_by(f64::total_cmp);
        for (r, want) in roots.iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert!((r - want).abs() < 1e-9);
        }
    }
}
