//! Template-to-image outlier removal.
//!
//! Vertices of the agreement graph are triangles of matches, edges join two
//! triangles sharing a side. An edge agrees when the camera poses recovered by
//! P3P from the two triangles are close in rotation and translation.

use std::collections::{BTreeSet, HashMap};

use log::{debug, warn};
use nalgebra::{Point2, Point3, Vector3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::{
    aggregate_labels, build_covering_program, ClusterOutcome, ConsensusGraph, GraphEdge, Label,
    LabelVector, MatchSet, Registration,
};
use crate::error::{Error, Result};
use crate::kmeans::kmeans_partition;
use crate::pose::{p3p_solve, pose_agreement, CameraIntrinsics, Pose};
use crate::solver::{self, Mode, SolverConfig};

const COLLINEAR_TOL: f64 = 1e-6;
const MIN_MATCHES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateMatchConfig {
    /// Rotation threshold in radians.
    pub eps1: f64,
    /// Translation threshold relative to the larger translation norm.
    pub eps2: f64,
    /// Nearest neighbors per template point.
    pub q: usize,
    pub edges_per_point_cap: usize,
    pub clusters: usize,
    /// Local filtering: minimum share of agreeing incident edges.
    pub tau: f64,
    /// Local filtering: matches with fewer incident edges are outliers.
    pub min_incident_edges: usize,
    pub solver: SolverConfig,
    pub mode: Mode,
    pub seed: u64,
}

impl Default for TemplateMatchConfig {
    fn default() -> Self {
        TemplateMatchConfig {
            eps1: 10f64.to_radians(),
            eps2: 0.40,
            q: 15,
            edges_per_point_cap: 30,
            clusters: 1,
            tau: 0.5,
            min_incident_edges: 3,
            solver: SolverConfig::default(),
            mode: Mode::Exact,
            seed: 0,
        }
    }
}

impl TemplateMatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps1 > 0.0 && self.eps1 < std::f64::consts::PI) {
            return Err(Error::InvalidArgument(format!("eps1 {} outside (0, pi)", self.eps1)));
        }
        if !(self.eps2 > 0.0 && self.eps2.is_finite()) {
            return Err(Error::InvalidArgument(format!("eps2 {} must be > 0", self.eps2)));
        }
        if self.q < 4 {
            return Err(Error::InvalidArgument(format!("q {} must be >= 4", self.q)));
        }
        if self.edges_per_point_cap == 0 || self.clusters == 0 {
            return Err(Error::InvalidArgument("edge cap and cluster count must be >= 1".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::InvalidArgument(format!("tau {} outside (0, 1]", self.tau)));
        }
        self.solver.validate()
    }
}

/// Symmetric q-nearest-neighbor adjacency (ties broken by index).
fn neighbor_sets(points: &[Point3<f64>], q: usize) -> Vec<BTreeSet<usize>> {
    let mut adj = vec![BTreeSet::new(); points.len()];
    for (i, p) in points.iter().enumerate() {
        let mut others: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, x)| ((p - x).norm_squared(), j))
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in others.iter().take(q) {
            adj[i].insert(j);
            adj[j].insert(i);
        }
    }
    adj
}

fn is_collinear(points: &[Point3<f64>], t: [usize; 3]) -> bool {
    let [a, b, c] = t.map(|i| points[i]);
    let diameter = (b - a).norm().max((c - a).norm()).max((c - b).norm());
    if diameter == 0.0 {
        return true;
    }
    (b - a).cross(&(c - a)).norm() / diameter < COLLINEAR_TOL * diameter
}

/// Triangles `i < j < l` whose sides are all neighbor pairs, skipping
/// near-collinear ones.
fn triangles(points: &[Point3<f64>], adj: &[BTreeSet<usize>]) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for i in 0..points.len() {
        for &j in adj[i].range(i + 1..) {
            for &l in adj[j].range(j + 1..) {
                if adj[i].contains(&l) && !is_collinear(points, [i, j, l]) {
                    out.push([i, j, l]);
                }
            }
        }
    }
    out
}

/// Triangle pairs sharing one side, shuffled with `seed`, then accepted
/// greedily while each of the four matches stays below `cap` edges.
fn candidate_edges(tris: &[[usize; 3]], num_points: usize, cap: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut by_side: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (t, &[a, b, c]) in tris.iter().enumerate() {
        for side in [(a, b), (a, c), (b, c)] {
            by_side.entry(side).or_default().push(t);
        }
    }
    let mut sides: Vec<_> = by_side.into_iter().collect();
    sides.sort_unstable();
    let mut candidates = Vec::new();
    for (_, ts) in &sides {
        for (x, &t1) in ts.iter().enumerate() {
            for &t2 in &ts[x + 1..] {
                candidates.push((t1, t2));
            }
        }
    }
    candidates.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut load = vec![0usize; num_points];
    let mut accepted = Vec::new();
    for (t1, t2) in candidates {
        let mut quad: Vec<usize> = tris[t1].iter().chain(&tris[t2]).copied().collect();
        quad.sort_unstable();
        quad.dedup();
        if quad.iter().all(|&i| load[i] < cap) {
            for &i in &quad {
                load[i] += 1;
            }
            accepted.push((t1, t2));
        }
    }
    accepted
}

/// Agreement graph of one cluster. `points[i]` and `pixels[i]` belong to match
/// `i`. Triangles whose P3P is degenerate or has no real solution contribute
/// no edge.
pub fn build_triangle_graph(
    points: &[Point3<f64>],
    pixels: &[Point2<f64>],
    k: &CameraIntrinsics,
    config: &TemplateMatchConfig,
) -> Result<ConsensusGraph> {
    if points.len() != pixels.len() {
        return Err(Error::LengthMismatch {
            left: points.len(),
            right: pixels.len(),
        });
    }
    if points.len() < MIN_MATCHES {
        return Err(Error::TooFewMatches { count: points.len() });
    }
    k.validate()?;
    config.validate()?;

    let adj = neighbor_sets(points, config.q);
    let tris = triangles(points, &adj);
    let edges = candidate_edges(&tris, points.len(), config.edges_per_point_cap, config.seed);

    let mut used: Vec<usize> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    used.sort_unstable();
    used.dedup();
    let bearings: Vec<Vector3<f64>> = pixels.iter().map(|u| k.bearing(u)).collect();
    let poses: Vec<Option<Vec<Pose>>> = used
        .par_iter()
        .map(|&t| {
            let [a, b, c] = tris[t];
            p3p_solve(&[points[a], points[b], points[c]], &[bearings[a], bearings[b], bearings[c]])
                .ok()
                .filter(|sols| !sols.is_empty())
        })
        .collect();
    let local: HashMap<usize, usize> = used.iter().enumerate().map(|(v, &t)| (t, v)).collect();

    let graph_edges: Vec<GraphEdge> = edges
        .iter()
        .filter_map(|&(t1, t2)| {
            let (a, b) = (local[&t1], local[&t2]);
            let (pa, pb) = (poses[a].as_ref()?, poses[b].as_ref()?);
            let agree = pose_agreement(pa, pb, config.eps1, config.eps2).ok()?;
            Some(GraphEdge { a, b, agree })
        })
        .collect();
    let vertices = used.iter().map(|&t| tris[t].to_vec()).collect();
    debug!(
        "{} triangles, {} candidate edges kept, {} evaluated",
        tris.len(),
        edges.len(),
        graph_edges.len()
    );
    ConsensusGraph::new(points.len(), 3, vertices, graph_edges)
}

/// Voting baseline: a match is inlier when it has at least `min_incident`
/// incident edges and at least a `tau` share of them agree.
pub fn local_filtering(graph: &ConsensusGraph, tau: f64, min_incident: usize) -> LabelVector {
    let mut total = vec![0usize; graph.num_matches()];
    let mut agree = vec![0usize; graph.num_matches()];
    for e in graph.edges() {
        for i in graph.edge_matches(e) {
            total[i] += 1;
            agree[i] += usize::from(e.agree);
        }
    }
    LabelVector(
        total
            .iter()
            .zip(&agree)
            .map(|(&t, &a)| {
                let inlier = t >= min_incident.max(1) && a as f64 >= tau * t as f64;
                Label::from_z(!inlier)
            })
            .collect(),
    )
}

struct ClusterRun {
    outcome: ClusterOutcome,
    labels: LabelVector,
    untouched: Vec<bool>,
}

fn skipped(members: Vec<usize>) -> ClusterRun {
    let len = members.len();
    ClusterRun {
        outcome: ClusterOutcome {
            members,
            skipped: true,
            num_edges: 0,
            num_constraints: 0,
            result: None,
        },
        labels: LabelVector::all(len, Label::Inlier),
        untouched: vec![true; len],
    }
}

/// Labels every match (source index into `template`, target index into
/// `image`). Clusters with fewer than four matches are skipped with a warning
/// and their matches reported unconstrained.
pub fn template_image_registration(
    template: &[Point3<f64>],
    image: &[Point2<f64>],
    matches: &MatchSet,
    k: &CameraIntrinsics,
    config: &TemplateMatchConfig,
) -> Result<Registration> {
    config.validate()?;
    k.validate()?;
    matches.validate(template.len(), image.len())?;
    let n = matches.len();
    let points: Vec<Point3<f64>> = matches.pairs.iter().map(|c| template[c.source]).collect();
    let pixels: Vec<Point2<f64>> = matches.pairs.iter().map(|c| image[c.target]).collect();

    let partition = kmeans_partition(&points, config.clusters.min(n), config.seed)?;
    let runs: Vec<ClusterRun> = partition
        .members()
        .into_par_iter()
        .enumerate()
        .map(|(cluster, members)| {
            let sub_points: Vec<_> = members.iter().map(|&i| points[i]).collect();
            let sub_pixels: Vec<_> = members.iter().map(|&i| pixels[i]).collect();
            let graph = match build_triangle_graph(&sub_points, &sub_pixels, k, config) {
                Ok(g) => g,
                Err(Error::TooFewMatches { count }) => {
                    warn!("cluster {cluster} skipped: {count} matches");
                    return Ok(skipped(members));
                }
                Err(e) => return Err(e),
            };
            let untouched = graph.touched_matches().iter().map(|t| !t).collect();
            let program = build_covering_program(&graph);
            let (labels, result) = if config.mode == Mode::LocalFilter {
                (local_filtering(&graph, config.tau, config.min_incident_edges), None)
            } else {
                let r = solver::solve(&program, config.mode, &config.solver)?;
                (r.labels.clone(), Some(r))
            };
            Ok(ClusterRun {
                outcome: ClusterOutcome {
                    members,
                    skipped: false,
                    num_edges: graph.edges().len(),
                    num_constraints: program.constraints().len(),
                    result,
                },
                labels,
                untouched,
            })
        })
        .collect::<Result<_>>()?;

    if runs.iter().all(|r| r.outcome.skipped) {
        return Err(Error::AllClustersSkipped);
    }
    let parts: Vec<(&[usize], &LabelVector)> = runs
        .iter()
        .map(|r| (r.outcome.members.as_slice(), &r.labels))
        .collect();
    let labels = aggregate_labels(n, &parts)?;
    let mut unconstrained = vec![false; n];
    for r in &runs {
        for (&global, &u) in r.outcome.members.iter().zip(&r.untouched) {
            unconstrained[global] = u;
        }
    }
    Ok(Registration {
        labels,
        unconstrained,
        clusters: runs.into_iter().map(|r| r.outcome).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::project_point;
    use nalgebra::Rotation3;

    fn camera() -> CameraIntrinsics {
        CameraIntrinsics::new(800.0, 800.0, 320.0, 240.0).unwrap()
    }

    fn rigid_scene(side: usize) -> (Vec<Point3<f64>>, Vec<Point2<f64>>) {
        let pose = Pose::new(
            *Rotation3::from_euler_angles(0.1, -0.2, 0.05).matrix(),
            Vector3::new(0.05, -0.1, 2.5),
        )
        .unwrap();
        let step = 1.0 / (side - 1) as f64;
        let points: Vec<Point3<f64>> = (0..side * side)
            .map(|i| Point3::new((i % side) as f64 * step - 0.5, (i / side) as f64 * step - 0.5, 0.0))
            .collect();
        let pixels = points.iter().map(|x| project_point(&camera(), &pose, x).unwrap()).collect();
        (points, pixels)
    }

    #[test]
    fn rigid_scene_agrees_everywhere() {
        let (points, pixels) = rigid_scene(6);
        let graph = build_triangle_graph(&points, &pixels, &camera(), &TemplateMatchConfig::default()).unwrap();
        assert!(!graph.edges().is_empty());
        assert!(graph.edges().iter().all(|e| e.agree));
        for e in graph.edges() {
            assert_eq!(graph.edge_matches(e).len(), 4);
        }
    }

    #[test]
    fn minimal_configuration() {
        let points = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(1.0, 1.0, 0.1),
        ];
        let pose = Pose::new(nalgebra::Matrix3::identity(), Vector3::new(-0.5, -0.5, 4.0)).unwrap();
        let mut pixels: Vec<Point2<f64>> = points.iter().map(|x| project_point(&camera(), &pose, x).unwrap()).collect();
        pixels[3].x += 60.0;
        let graph = build_triangle_graph(&points, &pixels, &camera(), &TemplateMatchConfig::default()).unwrap();
        let program = build_covering_program(&graph);
        // every triangle pair spans all four matches
        assert!(graph.edges().iter().all(|e| graph.edge_matches(e).len() == 4));
        assert!(graph.edges().iter().any(|e| !e.agree));
        assert_eq!(program.constraints(), &[vec![0, 1, 2, 3]]);
    }

    #[test]
    fn too_few_matches() {
        let points = vec![Point3::origin(); 3];
        let pixels = vec![Point2::origin(); 3];
        assert!(matches!(
            build_triangle_graph(&points, &pixels, &camera(), &TemplateMatchConfig::default()),
            Err(Error::TooFewMatches { count: 3 })
        ));
        let matches = MatchSet::identity(3);
        assert!(matches!(
            template_image_registration(&points, &pixels, &matches, &camera(), &TemplateMatchConfig::default()),
            Err(Error::AllClustersSkipped)
        ));
    }

    #[test]
    fn incident_edges_respect_the_cap() {
        let (points, pixels) = rigid_scene(8);
        let config = TemplateMatchConfig {
            edges_per_point_cap: 5,
            ..TemplateMatchConfig::default()
        };
        let graph = build_triangle_graph(&points, &pixels, &camera(), &config).unwrap();
        let mut load = vec![0; points.len()];
        for e in graph.edges() {
            for i in graph.edge_matches(e) {
                load[i] += 1;
            }
        }
        assert!(load.iter().all(|&l| l <= 5));
    }

    #[test]
    fn clean_grid_is_all_inliers() {
        let (points, pixels) = rigid_scene(15);
        let reg = template_image_registration(
            &points,
            &pixels,
            &MatchSet::identity(points.len()),
            &camera(),
            &TemplateMatchConfig::default(),
        )
        .unwrap();
        assert_eq!(reg.labels.outlier_count(), 0);
        assert_eq!(reg.clusters[0].num_constraints, 0);
    }

    #[test]
    fn local_filtering_examples() {
        let vertices = vec![vec![0, 1, 2], vec![1, 2, 3], vec![0, 1, 3], vec![4, 5, 6], vec![5, 6, 7]];
        let e = |a, b, agree| GraphEdge { a, b, agree };
        let graph = ConsensusGraph::new(
            9,
            3,
            vertices,
            vec![e(0, 1, true), e(0, 2, true), e(1, 2, true), e(3, 4, false)],
        )
        .unwrap();
        let labels = local_filtering(&graph, 0.5, 3);
        // 0..=3 have three agreeing edges; 4..=7 one disagreeing edge; 8 none
        assert_eq!(labels.outliers().collect::<Vec<_>>(), vec![4, 5, 6, 7, 8]);
        assert_eq!(local_filtering(&graph, 0.5, 1).outliers().collect::<Vec<_>>(), vec![4, 5, 6, 7, 8]);
    }

    #[test]
    fn graph_is_deterministic() {
        let (points, mut pixels) = rigid_scene(7);
        pixels[10].x += 40.0;
        let config = TemplateMatchConfig::default();
        let a = build_triangle_graph(&points, &pixels, &camera(), &config).unwrap();
        let b = build_triangle_graph(&points, &pixels, &camera(), &config).unwrap();
        assert_eq!(a, b);
    }
}
