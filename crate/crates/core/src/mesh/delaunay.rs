//! Incremental Bowyer-Watson triangulation in the plane.

use std::collections::HashMap;

use nalgebra::{Point2, Point3};

use super::TriMesh;
use crate::error::{Error, Result};

fn orient(a: Point2<f64>, b: Point2<f64>, c: Point2<f64>) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Positive when `d` lies strictly inside the circumcircle of the
/// counter-clockwise triangle `(a, b, c)`.
pub(crate) fn incircle(a: Point2<f64>, b: Point2<f64>, c: Point2<f64>, d: Point2<f64>) -> f64 {
    let (adx, ady) = (a.x - d.x, a.y - d.y);
    let (bdx, bdy) = (b.x - d.x, b.y - d.y);
    let (cdx, cdy) = (c.x - d.x, c.y - d.y);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

/// Delaunay triangulation of planar points, lifted to 3D with the optional
/// `heights` as z (0 otherwise). Points are inserted in input order inside a
/// super-triangle enclosing ten times the bounding box. Cocircular quads are
/// resolved toward the diagonal with the lexicographically smallest index pair.
pub fn delaunay_triangulate_2d(points: &[Point2<f64>], heights: Option<&[f64]>) -> Result<TriMesh> {
    let n = points.len();
    if n < 3 {
        return Err(Error::DegenerateInput(format!("{n} points, need at least 3")));
    }
    if let Some(h) = heights {
        if h.len() != n {
            return Err(Error::LengthMismatch { left: h.len(), right: n });
        }
    }
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::DegenerateInput("non-finite coordinate".into()));
    }

    let (mut lo, mut hi) = (points[0], points[0]);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let extent = (hi - lo).norm();
    if extent == 0.0 {
        return Err(Error::DegenerateInput("all points coincide".into()));
    }
    let area_tol = 1e-12 * extent * extent;
    let non_collinear = points
        .iter()
        .any(|&p| orient(points[0], points[farthest(points, points[0])], p).abs() > area_tol);
    if !non_collinear {
        return Err(Error::DegenerateInput("all points are collinear".into()));
    }
    let mut sorted: Vec<(f64, f64, usize)> = points.iter().enumerate().map(|(i, p)| (p.x, p.y, i)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    if let Some(w) = sorted.windows(2).find(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1) {
        return Err(Error::DegenerateInput(format!(
            "points {} and {} coincide",
            w[0].2, w[1].2
        )));
    }

    // super-triangle circumscribing a disk of radius 10 * extent
    let center = Point2::from((lo.coords + hi.coords) / 2.0);
    let r = 10.0 * extent;
    let mut all: Vec<Point2<f64>> = points.to_vec();
    for k in 0..3 {
        let theta = std::f64::consts::FRAC_PI_2 + k as f64 * 2.0 * std::f64::consts::FRAC_PI_3;
        all.push(center + nalgebra::Vector2::new(theta.cos(), theta.sin()) * 2.0 * r);
    }
    let circle_tol = |t: &[usize; 3]| {
        let scale = (all[t[0]] - all[t[1]])
            .norm_squared()
            .max((all[t[1]] - all[t[2]]).norm_squared())
            .max((all[t[0]] - all[t[2]]).norm_squared());
        1e-12 * scale * scale
    };

    let mut triangles: Vec<[usize; 3]> = vec![[n, n + 1, n + 2]];
    for i in 0..n {
        let p = all[i];
        let (bad, keep): (Vec<[usize; 3]>, Vec<[usize; 3]>) = triangles
            .into_iter()
            .partition(|t| incircle(all[t[0]], all[t[1]], all[t[2]], p) > circle_tol(t));
        triangles = keep;
        // cavity boundary: directed edges of bad triangles without their twin
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &bad {
            for k in 0..3 {
                *directed.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
            }
        }
        for t in &bad {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                if !directed.contains_key(&(b, a)) {
                    triangles.push([a, b, i]);
                }
            }
        }
    }
    triangles.retain(|t| t.iter().all(|&v| v < n));
    flip_cocircular(&all, &mut triangles);

    let vertices = points
        .iter()
        .enumerate()
        .map(|(i, p)| Point3::new(p.x, p.y, heights.map_or(0.0, |h| h[i])))
        .collect();
    TriMesh::new(vertices, triangles)
}

fn farthest(points: &[Point2<f64>], from: Point2<f64>) -> usize {
    (0..points.len())
        .max_by(|&a, &b| {
            (points[a] - from)
                .norm_squared()
                .total_cmp(&(points[b] - from).norm_squared())
        })
        .unwrap_or(0)
}

fn sorted_pair(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Flips every cocircular interior edge to the lexicographically smaller
/// diagonal of its quad, until stable.
fn flip_cocircular(pts: &[Point2<f64>], triangles: &mut [[usize; 3]]) {
    let max_rounds = 4 * triangles.len() + 4;
    for _ in 0..max_rounds {
        let mut owner: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for (ti, t) in triangles.iter().enumerate() {
            for k in 0..3 {
                owner.insert((t[k], t[(k + 1) % 3]), (ti, t[(k + 2) % 3]));
            }
        }
        let mut edges: Vec<(usize, usize)> = owner.keys().copied().filter(|&(a, b)| a < b).collect();
        edges.sort_unstable();
        let mut flipped = false;
        for (u, v) in edges {
            let (Some(&(t1, w)), Some(&(t2, x))) = (owner.get(&(u, v)), owner.get(&(v, u))) else {
                continue;
            };
            let [a, b, c] = triangles[t1];
            let scale = (pts[u] - pts[v]).norm_squared().max((pts[w] - pts[x]).norm_squared());
            let det = incircle(pts[a], pts[b], pts[c], pts[x]);
            if det.abs() > 1e-10 * scale * scale {
                continue;
            }
            if sorted_pair(w, x) >= sorted_pair(u, v) {
                continue;
            }
            // quad u -> x -> v -> w is counter-clockwise; both halves must stay proper
            if orient(pts[u], pts[x], pts[w]) <= 0.0 || orient(pts[x], pts[v], pts[w]) <= 0.0 {
                continue;
            }
            triangles[t1] = [u, x, w];
            triangles[t2] = [x, v, w];
            flipped = true;
            break;
        }
        if !flipped {
            return;
        }
    }
}
