//! Seeded k-means used to split large match sets into spatial clusters.

use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::consensus::ClusterPartition;
use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 100;

/// Lloyd iterations from k-means++ seeding. Deterministic for a fixed seed;
/// ties in assignment go to the lowest cluster id. A cluster left empty takes
/// the point farthest from its own centroid (among clusters with more than
/// one member).
pub fn kmeans_partition(points: &[Point3<f64>], m: usize, seed: u64) -> Result<ClusterPartition> {
    if m == 0 {
        return Err(Error::InvalidArgument("cluster count must be >= 1".into()));
    }
    if m > points.len() {
        return Err(Error::InvalidArgument(format!(
            "{m} clusters requested for {} points",
            points.len()
        )));
    }
    if m == 1 {
        return ClusterPartition::new(vec![0; points.len()], 1);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_plus_plus(points, m, &mut rng);
    let mut assignments = vec![usize::MAX; points.len()];

    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let c = nearest(&centers, p);
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
        }
        repair_empty(points, &mut assignments, m);
        if !changed {
            break;
        }
        centers = centroids(points, &assignments, m);
    }
    repair_empty(points, &mut assignments, m);
    ClusterPartition::new(assignments, m)
}

fn nearest(centers: &[Point3<f64>], p: &Point3<f64>) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let d = (p - center).norm_squared();
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn seed_plus_plus(points: &[Point3<f64>], m: usize, rng: &mut ChaCha8Rng) -> Vec<Point3<f64>> {
    let mut chosen = vec![false; points.len()];
    let first = rng.random_range(0..points.len());
    chosen[first] = true;
    let mut centers = vec![points[first]];
    let mut dist2: Vec<f64> = points.iter().map(|p| (p - points[first]).norm_squared()).collect();

    while centers.len() < m {
        let total: f64 = dist2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in dist2.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                pick = Some(i);
                if target < d {
                    break;
                }
                target -= d;
            }
            pick.expect("positive total weight")
        } else {
            // every remaining point coincides with a center
            chosen.iter().position(|&c| !c).expect("m <= number of points")
        };
        chosen[next] = true;
        centers.push(points[next]);
        for (d, p) in dist2.iter_mut().zip(points) {
            *d = d.min((p - points[next]).norm_squared());
        }
    }
    centers
}

fn centroids(points: &[Point3<f64>], assignments: &[usize], m: usize) -> Vec<Point3<f64>> {
    let mut sums = vec![nalgebra::Vector3::zeros(); m];
    let mut counts = vec![0usize; m];
    for (p, &c) in points.iter().zip(assignments) {
        sums[c] += p.coords;
        counts[c] += 1;
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, n)| Point3::from(s / n.max(1) as f64))
        .collect()
}

fn repair_empty(points: &[Point3<f64>], assignments: &mut [usize], m: usize) {
    loop {
        let mut counts = vec![0usize; m];
        for &c in assignments.iter() {
            counts[c] += 1;
        }
        let Some(empty) = counts.iter().position(|&n| n == 0) else {
            return;
        };
        let current = centroids(points, assignments, m);
        let donor = (0..points.len())
            .filter(|&i| counts[assignments[i]] > 1)
            .max_by(|&i, &j| {
                let di = (points[i] - current[assignments[i]]).norm_squared();
                let dj = (points[j] - current[assignments[j]]).norm_squared();
                // prefer the lower index on ties
                di.total_cmp(&dj).then(j.cmp(&i))
            })
            .expect("m <= number of points leaves a cluster with spare members");
        assignments[donor] = empty;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<Point3<f64>> {
        (0..n).map(|i| Point3::new(i as f64, (i * 7 % 5) as f64, 0.0)).collect()
    }

    #[test]
    fn single_cluster_takes_everything() {
        let p = kmeans_partition(&grid(10), 1, 3).unwrap();
        assert!(p.assignments().iter().all(|&c| c == 0));
    }

    #[test]
    fn one_point_per_cluster() {
        let pts = grid(6);
        let p = kmeans_partition(&pts, 6, 11).unwrap();
        let members = p.members();
        assert!(members.iter().all(|m| m.len() == 1));
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let pts = vec![Point3::origin(); 4];
        let p = kmeans_partition(&pts, 3, 0).unwrap();
        assert_eq!(p.members().iter().filter(|m| !m.is_empty()).count(), 3);
    }

    #[test]
    fn too_many_clusters_is_an_error() {
        assert!(kmeans_partition(&grid(3), 4, 0).is_err());
        assert!(kmeans_partition(&grid(3), 0, 0).is_err());
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let pts = grid(50);
        assert_eq!(
            kmeans_partition(&pts, 4, 9).unwrap(),
            kmeans_partition(&pts, 4, 9).unwrap()
        );
    }
}
