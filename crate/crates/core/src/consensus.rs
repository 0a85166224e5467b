//! Domain-agnostic consensus machinery: agreement graphs, their compilation into
//! covering constraints, and label bookkeeping across clusters.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::SolverResult;

/// Classification of a single match. `Outlier` corresponds to `z = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Inlier,
    Outlier,
}

impl Label {
    pub fn from_z(z: bool) -> Self {
        if z {
            Label::Outlier
        } else {
            Label::Inlier
        }
    }

    pub fn is_outlier(self) -> bool {
        self == Label::Outlier
    }
}

/// One label per match.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelVector(pub Vec<Label>);

impl LabelVector {
    pub fn all(len: usize, label: Label) -> Self {
        LabelVector(vec![label; len])
    }

    pub fn from_outliers(len: usize, outliers: impl IntoIterator<Item = usize>) -> Self {
        let mut labels = vec![Label::Inlier; len];
        for i in outliers {
            labels[i] = Label::Outlier;
        }
        LabelVector(labels)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn outlier_count(&self) -> usize {
        self.0.iter().filter(|l| l.is_outlier()).count()
    }

    pub fn outliers(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_outlier())
            .map(|(i, _)| i)
    }

    /// The `z` vector, `true` for outliers.
    pub fn as_z(&self) -> Vec<bool> {
        self.0.iter().map(|l| l.is_outlier()).collect()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Label> {
        self.0.iter()
    }
}

impl std::ops::Index<usize> for LabelVector {
    type Output = Label;

    fn index(&self, index: usize) -> &Label {
        &self.0[index]
    }
}

/// A single correspondence, indices into the source and target point lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Correspondence {
    pub source: usize,
    pub target: usize,
}

/// Indexed correspondences between two domains, with optional ground truth.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchSet {
    pub pairs: Vec<Correspondence>,
    pub gt_labels: Option<LabelVector>,
}

impl MatchSet {
    pub fn new(pairs: Vec<Correspondence>) -> Self {
        MatchSet {
            pairs,
            gt_labels: None,
        }
    }

    pub fn identity(n: usize) -> Self {
        MatchSet::new(
            (0..n)
                .map(|i| Correspondence {
                    source: i,
                    target: i,
                })
                .collect(),
        )
    }

    pub fn with_ground_truth(mut self, gt: LabelVector) -> Self {
        self.gt_labels = Some(gt);
        self
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Checks the set is non-empty and every index is within its point list.
    pub fn validate(&self, num_source: usize, num_target: usize) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::EmptyMatches("no correspondences".into()));
        }
        for (k, pair) in self.pairs.iter().enumerate() {
            if pair.source >= num_source || pair.target >= num_target {
                return Err(Error::EmptyMatches(format!(
                    "match {k} ({}, {}) out of range ({num_source} source, {num_target} target points)",
                    pair.source, pair.target
                )));
            }
        }
        if let Some(gt) = &self.gt_labels {
            if gt.len() != self.pairs.len() {
                return Err(Error::LengthMismatch {
                    left: gt.len(),
                    right: self.pairs.len(),
                });
            }
        }
        Ok(())
    }
}

/// An edge of the agreement graph with its binary rule value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphEdge {
    pub a: usize,
    pub b: usize,
    pub agree: bool,
}

/// Graph whose vertices are minimal subsets of match indices and whose edges
/// carry the agreement rule evaluated on the two subsets.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusGraph {
    num_matches: usize,
    subset_size: usize,
    vertices: Vec<Vec<usize>>,
    edges: Vec<GraphEdge>,
}

impl ConsensusGraph {
    /// Builds a graph after checking: every vertex has exactly `subset_size`
    /// distinct indices below `num_matches`, no self-loops, no duplicate
    /// undirected edges.
    pub fn new(
        num_matches: usize,
        subset_size: usize,
        vertices: Vec<Vec<usize>>,
        edges: Vec<GraphEdge>,
    ) -> Result<Self> {
        if subset_size == 0 {
            return Err(Error::InvalidArgument("subset size must be >= 1".into()));
        }
        for (k, v) in vertices.iter().enumerate() {
            let distinct: HashSet<_> = v.iter().collect();
            if v.len() != subset_size || distinct.len() != subset_size {
                return Err(Error::InvalidArgument(format!(
                    "vertex {k} must hold {subset_size} distinct matches"
                )));
            }
            if let Some(&i) = v.iter().find(|&&i| i >= num_matches) {
                return Err(Error::InvalidArgument(format!(
                    "vertex {k} references match {i} >= {num_matches}"
                )));
            }
        }
        let mut seen = HashSet::with_capacity(edges.len());
        for e in &edges {
            if e.a == e.b {
                return Err(Error::InvalidArgument(format!("self-loop on vertex {}", e.a)));
            }
            if e.a >= vertices.len() || e.b >= vertices.len() {
                return Err(Error::InvalidArgument(format!(
                    "edge ({}, {}) references a missing vertex",
                    e.a, e.b
                )));
            }
            if !seen.insert((e.a.min(e.b), e.a.max(e.b))) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate edge ({}, {})",
                    e.a, e.b
                )));
            }
        }
        Ok(ConsensusGraph {
            num_matches,
            subset_size,
            vertices,
            edges,
        })
    }

    pub fn num_matches(&self) -> usize {
        self.num_matches
    }

    pub fn subset_size(&self) -> usize {
        self.subset_size
    }

    pub fn vertices(&self) -> &[Vec<usize>] {
        &self.vertices
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    /// Sorted, deduplicated union of the two vertex subsets of an edge.
    pub fn edge_matches(&self, edge: &GraphEdge) -> Vec<usize> {
        let mut union: Vec<usize> = self.vertices[edge.a]
            .iter()
            .chain(&self.vertices[edge.b])
            .copied()
            .collect();
        union.sort_unstable();
        union.dedup();
        union
    }

    /// Per match, `true` when it belongs to at least one edge.
    pub fn touched_matches(&self) -> Vec<bool> {
        let mut touched = vec![false; self.num_matches];
        for e in &self.edges {
            for &i in self.vertices[e.a].iter().chain(&self.vertices[e.b]) {
                touched[i] = true;
            }
        }
        touched
    }
}

/// `minimize sum z  s.t.  sum_{i in S} z_i >= 1` for every constraint set `S`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoveringProgram {
    num_vars: usize,
    constraints: Vec<Vec<usize>>,
}

impl CoveringProgram {
    /// Each constraint is sorted and deduplicated; duplicate constraints are dropped.
    pub fn new(num_vars: usize, constraints: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(constraints.len());
        let mut out = Vec::with_capacity(constraints.len());
        for (k, mut c) in constraints.into_iter().enumerate() {
            c.sort_unstable();
            c.dedup();
            if c.is_empty() {
                return Err(Error::InvalidArgument(format!("constraint {k} is empty")));
            }
            if let Some(&i) = c.last().filter(|&&i| i >= num_vars) {
                return Err(Error::InvalidArgument(format!(
                    "constraint {k} references variable {i} >= {num_vars}"
                )));
            }
            if seen.insert(c.clone()) {
                out.push(c);
            }
        }
        Ok(CoveringProgram {
            num_vars,
            constraints: out,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn constraints(&self) -> &[Vec<usize>] {
        &self.constraints
    }

    /// Whether the assignment puts at least one outlier in every constraint.
    pub fn is_satisfied_by(&self, labels: &LabelVector) -> bool {
        self.violated_count(labels) == 0
    }

    pub fn violated_count(&self, labels: &LabelVector) -> usize {
        self.constraints
            .iter()
            .filter(|c| !c.iter().any(|&i| labels[i].is_outlier()))
            .count()
    }

    /// Variables that appear in at least one constraint.
    pub fn constrained_vars(&self) -> Vec<bool> {
        let mut used = vec![false; self.num_vars];
        for &i in self.constraints.iter().flatten() {
            used[i] = true;
        }
        used
    }
}

/// One constraint per disagreeing edge, holding the union of its two vertex
/// subsets. Agreeing edges contribute nothing.
pub fn build_covering_program(graph: &ConsensusGraph) -> CoveringProgram {
    let constraints = graph
        .edges()
        .iter()
        .filter(|e| !e.agree)
        .map(|e| graph.edge_matches(e))
        .collect();
    CoveringProgram::new(graph.num_matches(), constraints)
        .expect("a well-formed graph compiles to a valid program")
}

fn binomial(n: u128, k: u128) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// Vertex and edge counts of the agreement graph.
///
/// With `cluster_size == 1` the graph is fully connected over all `s`-subsets and
/// `neighborhood` is ignored. Otherwise the `q`-connectivity counts are used,
/// `floor(p / (s r)) * C(q, s - 1)` vertices.
pub fn estimate_graph_size(
    p: u64,
    neighborhood: Option<u64>,
    cluster_size: u64,
    s: u64,
) -> Result<(u128, u128)> {
    if s == 0 || p < s {
        return Err(Error::InvalidArgument(format!("need p >= s >= 1, got p={p}, s={s}")));
    }
    if cluster_size == 0 {
        return Err(Error::InvalidArgument("cluster size must be >= 1".into()));
    }
    let overflow = || Error::InvalidArgument("graph size overflows u128".into());
    let vertices = if cluster_size == 1 {
        binomial(p as u128, s as u128).ok_or_else(overflow)?
    } else {
        let q = neighborhood
            .ok_or_else(|| Error::InvalidArgument("q-connectivity needs a neighborhood size".into()))?;
        if q + 1 < s {
            return Err(Error::InvalidArgument(format!("need q >= s - 1, got q={q}, s={s}")));
        }
        let groups = (p / (s * cluster_size)) as u128;
        groups
            .checked_mul(binomial(q as u128, (s - 1) as u128).ok_or_else(overflow)?)
            .ok_or_else(overflow)?
    };
    let edges = binomial(vertices, 2).ok_or_else(overflow)?;
    Ok((vertices, edges))
}

/// Disjoint assignment of matches to clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterPartition {
    assignments: Vec<usize>,
    num_clusters: usize,
}

impl ClusterPartition {
    /// Fails unless every id is below `num_clusters` and every cluster is used.
    pub fn new(assignments: Vec<usize>, num_clusters: usize) -> Result<Self> {
        let mut sizes = vec![0usize; num_clusters];
        for (i, &c) in assignments.iter().enumerate() {
            if c >= num_clusters {
                return Err(Error::InvalidArgument(format!(
                    "match {i} assigned to cluster {c} >= {num_clusters}"
                )));
            }
            sizes[c] += 1;
        }
        if let Some(c) = sizes.iter().position(|&n| n == 0) {
            return Err(Error::InvalidArgument(format!("cluster {c} is empty")));
        }
        Ok(ClusterPartition {
            assignments,
            num_clusters,
        })
    }

    pub fn single(len: usize) -> Self {
        ClusterPartition {
            assignments: vec![0; len],
            num_clusters: usize::from(len > 0),
        }
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    /// Sorted member indices of every cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.num_clusters];
        for (i, &c) in self.assignments.iter().enumerate() {
            members[c].push(i);
        }
        members
    }
}

/// Merges per-cluster labels into one global vector of length `total`.
/// `parts` pairs the global indices of each cluster with the cluster-local labels.
pub fn aggregate_labels(total: usize, parts: &[(&[usize], &LabelVector)]) -> Result<LabelVector> {
    let mut merged: Vec<Option<Label>> = vec![None; total];
    for (members, labels) in parts {
        if members.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: members.len(),
                right: labels.len(),
            });
        }
        for (&global, &label) in members.iter().zip(labels.iter()) {
            let slot = merged.get_mut(global).ok_or_else(|| {
                Error::InvalidArgument(format!("match {global} out of range {total}"))
            })?;
            if slot.replace(label).is_some() {
                return Err(Error::OverlappingClusters { index: global });
            }
        }
    }
    merged
        .into_iter()
        .enumerate()
        .map(|(index, l)| l.ok_or(Error::CoverageGap { index }))
        .collect::<Result<Vec<_>>>()
        .map(LabelVector)
}

/// Outcome of one cluster of a registration pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterOutcome {
    /// Global match indices, ascending.
    pub members: Vec<usize>,
    /// Too small to evaluate; every member is labeled inlier and unconstrained.
    pub skipped: bool,
    pub num_edges: usize,
    pub num_constraints: usize,
    /// `None` for skipped clusters and for local filtering.
    pub result: Option<SolverResult>,
}

/// Labels of a whole match set plus per-cluster diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    pub labels: LabelVector,
    /// Matches that no evaluated edge touched; they are labeled inlier.
    pub unconstrained: Vec<bool>,
    pub clusters: Vec<ClusterOutcome>,
}

impl Registration {
    /// True when every solved cluster finished with an optimality certificate.
    pub fn certified(&self) -> bool {
        self.clusters
            .iter()
            .filter_map(|c| c.result.as_ref())
            .all(|r| r.optimal)
    }

    pub fn objective(&self) -> usize {
        self.clusters
            .iter()
            .filter_map(|c| c.result.as_ref())
            .map(|r| r.objective)
            .sum()
    }

    pub fn lower_bound(&self) -> f64 {
        self.clusters
            .iter()
            .filter_map(|c| c.result.as_ref())
            .fold(0.0, |acc, r| acc + r.lower_bound)
    }

    /// False for local filtering, where no program is solved.
    pub fn solved(&self) -> bool {
        self.clusters.iter().any(|c| c.result.is_some())
    }
}
