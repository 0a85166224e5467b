//! Shape-to-shape outlier removal under an isometry prior.
//!
//! Matches are clustered on their source coordinates. Inside a cluster every
//! pair of matches is an edge; the pair agrees when the geodesic distance
//! between the two source points is preserved between the two target points.

use std::collections::HashMap;

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::{
    aggregate_labels, build_covering_program, ClusterOutcome, ConsensusGraph, GraphEdge,
    LabelVector, MatchSet, Registration,
};
use crate::error::{Error, Result};
use crate::kmeans::kmeans_partition;
use crate::mesh::{graph_diameter, GeodesicTable, Surface};
use crate::solver::{self, Mode, SolverConfig};

const DIAMETER_SAMPLES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsometryConfig {
    /// Allowed geodesic error relative to the source distance.
    pub eps_rel: f64,
    /// Absolute error floor as a fraction of the source diameter.
    pub eps_abs_frac: f64,
    /// Cluster count; `None` picks 1 below 200 matches and 5 otherwise.
    pub clusters: Option<usize>,
    pub solver: SolverConfig,
    pub mode: Mode,
    pub seed: u64,
}

impl Default for IsometryConfig {
    fn default() -> Self {
        IsometryConfig {
            eps_rel: 0.20,
            eps_abs_frac: 0.01,
            clusters: None,
            solver: SolverConfig::default(),
            mode: Mode::Exact,
            seed: 0,
        }
    }
}

impl IsometryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_rel > 0.0 && self.eps_rel < 1.0) {
            return Err(Error::InvalidArgument(format!("eps_rel {} outside (0, 1)", self.eps_rel)));
        }
        if !(0.0..=0.1).contains(&self.eps_abs_frac) {
            return Err(Error::InvalidArgument(format!(
                "eps_abs_frac {} outside [0, 0.1]",
                self.eps_abs_frac
            )));
        }
        if self.clusters == Some(0) {
            return Err(Error::InvalidArgument("cluster count must be >= 1".into()));
        }
        if self.mode == Mode::LocalFilter {
            return Err(Error::InvalidArgument("local-filter is only defined for template matching".into()));
        }
        self.solver.validate()
    }

    pub fn cluster_count(&self, num_matches: usize) -> usize {
        self.clusters
            .unwrap_or(if num_matches < 200 { 1 } else { 5 })
            .min(num_matches.max(1))
    }
}

/// `|g_source - g_target| <= max(eps_rel * g_source, eps_abs)`.
pub fn isometry_agreement(g_source: f64, g_target: f64, eps_rel: f64, eps_abs: f64) -> bool {
    (g_source - g_target).abs() <= (eps_rel * g_source).max(eps_abs)
}

/// Geodesics between the distinct points referenced by `indices`, with a map
/// from point index to table row.
fn matched_geodesics(surface: &Surface, indices: impl Iterator<Item = usize>) -> Result<(GeodesicTable, HashMap<usize, usize>)> {
    let mut ids: Vec<usize> = indices.collect();
    ids.sort_unstable();
    ids.dedup();
    let rows = ids.iter().enumerate().map(|(row, &id)| (id, row)).collect();
    let table = surface.edge_graph().geodesics(&ids)?;
    Ok((table, rows))
}

/// Builds the fully connected agreement graph of one cluster over singleton
/// vertices. Pairs with a non-finite geodesic on either shape get no edge.
pub fn cluster_graph(
    members: &[usize],
    source_rows: &[usize],
    target_rows: &[usize],
    source: &GeodesicTable,
    target: &GeodesicTable,
    eps_rel: f64,
    eps_abs: f64,
) -> ConsensusGraph {
    let k = members.len();
    let mut edges = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            let gs = source.get(source_rows[members[a]], source_rows[members[b]]);
            let gt = target.get(target_rows[members[a]], target_rows[members[b]]);
            if !gs.is_finite() || !gt.is_finite() {
                continue;
            }
            edges.push(GraphEdge {
                a,
                b,
                agree: isometry_agreement(gs, gt, eps_rel, eps_abs),
            });
        }
    }
    let vertices = (0..k).map(|i| vec![i]).collect();
    ConsensusGraph::new(k, 1, vertices, edges).expect("singleton vertices and pairs are valid by construction")
}

/// True when some pair of cluster members is at finite distance.
fn any_finite_pair(members: &[usize], rows: &[usize], table: &GeodesicTable) -> bool {
    members.iter().enumerate().any(|(a, &i)| {
        members[a + 1..]
            .iter()
            .any(|&j| table.get(rows[i], rows[j]).is_finite())
    })
}

/// Labels every match of `matches` (source index into `source`, target index
/// into `target`) as inlier or outlier.
pub fn shape_registration(
    source: &Surface,
    target: &Surface,
    matches: &MatchSet,
    config: &IsometryConfig,
) -> Result<Registration> {
    config.validate()?;
    matches.validate(source.points().len(), target.points().len())?;
    let n = matches.len();

    let (source_table, source_map) = matched_geodesics(source, matches.pairs.iter().map(|c| c.source))?;
    let (target_table, target_map) = matched_geodesics(target, matches.pairs.iter().map(|c| c.target))?;
    let source_rows: Vec<usize> = matches.pairs.iter().map(|c| source_map[&c.source]).collect();
    let target_rows: Vec<usize> = matches.pairs.iter().map(|c| target_map[&c.target]).collect();

    let diameter = match graph_diameter(&source.edge_graph(), DIAMETER_SAMPLES, config.seed) {
        Ok(d) => d,
        // disconnected source: fall back to the largest finite matched geodesic
        Err(Error::DisconnectedMesh) => (0..source_table.len())
            .flat_map(|a| (0..source_table.len()).map(move |b| (a, b)))
            .map(|(a, b)| source_table.get(a, b))
            .filter(|d| d.is_finite())
            .fold(0.0, f64::max),
        Err(e) => return Err(e),
    };
    let eps_abs = config.eps_abs_frac * diameter;

    let points: Vec<_> = matches.pairs.iter().map(|c| source.points()[c.source]).collect();
    let partition = kmeans_partition(&points, config.cluster_count(n), config.seed)?;
    let clusters = partition.members();

    let outcomes: Vec<(ClusterOutcome, LabelVector, Vec<bool>)> = clusters
        .into_par_iter()
        .enumerate()
        .map(|(cluster, members)| {
            if members.len() >= 2 {
                if !any_finite_pair(&members, &source_rows, &source_table) {
                    return Err(Error::GeodesicFailure { cluster, shape: "source" });
                }
                if !any_finite_pair(&members, &target_rows, &target_table) {
                    return Err(Error::GeodesicFailure { cluster, shape: "target" });
                }
            }
            let graph = cluster_graph(
                &members,
                &source_rows,
                &target_rows,
                &source_table,
                &target_table,
                config.eps_rel,
                eps_abs,
            );
            let program = build_covering_program(&graph);
            let result = solver::solve(&program, config.mode, &config.solver)?;
            debug!(
                "cluster {cluster}: {} matches, {} constraints, objective {}, optimal {}",
                members.len(),
                program.constraints().len(),
                result.objective,
                result.optimal
            );
            let untouched = graph.touched_matches().iter().map(|t| !t).collect();
            Ok((
                ClusterOutcome {
                    skipped: false,
                    num_edges: graph.edges().len(),
                    num_constraints: program.constraints().len(),
                    result: Some(result.clone()),
                    members,
                },
                result.labels,
                untouched,
            ))
        })
        .collect::<Result<_>>()?;

    let parts: Vec<(&[usize], &LabelVector)> = outcomes
        .iter()
        .map(|(o, labels, _)| (o.members.as_slice(), labels))
        .collect();
    let labels = aggregate_labels(n, &parts)?;
    let mut unconstrained = vec![false; n];
    for (o, _, untouched) in &outcomes {
        for (&global, &u) in o.members.iter().zip(untouched) {
            unconstrained[global] = u;
        }
    }
    Ok(Registration {
        labels,
        unconstrained,
        clusters: outcomes.into_iter().map(|(o, _, _)| o).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::{Correspondence, Label};
    use crate::mesh::TriMesh;

    #[test]
    fn agreement_examples() {
        assert!(isometry_agreement(1.0, 1.0, 0.0, 0.0));
        assert!(isometry_agreement(1.0, 1.15, 0.2, 0.0));
        assert!(!isometry_agreement(1.0, 1.30, 0.2, 0.0));
        // absolute floor keeps near-coincident points from being over-strict
        assert!(isometry_agreement(0.0, 0.005, 0.2, 0.01));
    }

    #[test]
    fn identical_shapes_have_no_outliers() {
        let mesh = Surface::Mesh(TriMesh::grid(5, 6, 1.0));
        let reg = shape_registration(&mesh, &mesh, &MatchSet::identity(30), &IsometryConfig::default()).unwrap();
        assert_eq!(reg.labels.outlier_count(), 0);
        assert_eq!(reg.objective(), 0);
        assert!(reg.certified());
        assert!(reg.unconstrained.iter().all(|u| !u));
    }

    #[test]
    fn swapped_far_matches_are_found() {
        let mesh = Surface::Mesh(TriMesh::grid(6, 6, 1.0));
        let mut matches = MatchSet::identity(36);
        // opposite corners exchanged
        matches.pairs[0].target = 35;
        matches.pairs[35].target = 0;
        let reg = shape_registration(&mesh, &mesh, &matches, &IsometryConfig::default()).unwrap();
        assert_eq!(reg.labels.outliers().collect::<Vec<_>>(), vec![0, 35]);
    }

    #[test]
    fn out_of_range_matches_are_rejected() {
        let mesh = Surface::Mesh(TriMesh::grid(3, 3, 1.0));
        let matches = MatchSet::new(vec![Correspondence { source: 0, target: 9 }]);
        assert!(shape_registration(&mesh, &mesh, &matches, &IsometryConfig::default()).is_err());
        assert!(shape_registration(&mesh, &mesh, &MatchSet::default(), &IsometryConfig::default()).is_err());
    }

    #[test]
    fn disconnected_cluster_is_a_geodesic_failure() {
        let v = (0..6).map(|i| nalgebra::Point3::new(i as f64, (i % 2) as f64, 0.0)).collect();
        let torn = Surface::Mesh(TriMesh::new(v, vec![[0, 1, 2], [3, 4, 5]]).unwrap());
        let matches = MatchSet::new(vec![
            Correspondence { source: 0, target: 0 },
            Correspondence { source: 4, target: 4 },
        ]);
        let err = shape_registration(&torn, &torn, &matches, &IsometryConfig::default()).unwrap_err();
        assert!(matches!(err, Error::GeodesicFailure { shape: "source", .. }));
    }

    #[test]
    fn relaxed_mode_and_clusters() {
        let mesh = Surface::Mesh(TriMesh::grid(6, 6, 1.0));
        let config = IsometryConfig {
            mode: Mode::Relaxed,
            clusters: Some(3),
            ..IsometryConfig::default()
        };
        let reg = shape_registration(&mesh, &mesh, &MatchSet::identity(36), &config).unwrap();
        assert_eq!(reg.clusters.len(), 3);
        assert!(reg.labels.iter().all(|&l| l == Label::Inlier));
        let covered: usize = reg.clusters.iter().map(|c| c.members.len()).sum();
        assert_eq!(covered, 36);
    }

    #[test]
    fn config_validation() {
        let bad = IsometryConfig {
            eps_rel: 1.5,
            ..IsometryConfig::default()
        };
        assert!(bad.validate().is_err());
        let local = IsometryConfig {
            mode: Mode::LocalFilter,
            ..IsometryConfig::default()
        };
        assert!(local.validate().is_err());
        assert_eq!(IsometryConfig::default().cluster_count(150), 1);
        assert_eq!(IsometryConfig::default().cluster_count(200), 5);
    }
}
