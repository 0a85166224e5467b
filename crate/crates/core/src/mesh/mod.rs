//! Triangle meshes, their edge graphs, and shortest-path geodesics.

mod delaunay;
mod geodesic;

use std::collections::BTreeSet;

use nalgebra::Point3;

use crate::error::{Error, Result};

pub use delaunay::delaunay_triangulate_2d;
pub use geodesic::{dijkstra, geodesic_distances, mesh_diameter, GeodesicTable};
pub(crate) use geodesic::graph_diameter;

/// Neighbors used for the edge graph of a point cloud without faces.
pub const CLOUD_NEIGHBORS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        for (k, t) in triangles.iter().enumerate() {
            if t.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::InvalidArgument(format!(
                    "triangle {k} references a vertex out of range"
                )));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::InvalidArgument(format!("triangle {k} repeats a vertex")));
            }
        }
        Ok(TriMesh { vertices, triangles })
    }

    /// A `rows x cols` grid with unit spacing in the z = 0 plane, each cell
    /// split along its main diagonal. Vertex `r * cols + c` sits at `(c, r, 0)`.
    pub fn grid(rows: usize, cols: usize, spacing: f64) -> Self {
        let vertices = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| Point3::new(c as f64 * spacing, r as f64 * spacing, 0.0)))
            .collect();
        let mut triangles = Vec::with_capacity(2 * rows.saturating_sub(1) * cols.saturating_sub(1));
        for r in 0..rows.saturating_sub(1) {
            for c in 0..cols.saturating_sub(1) {
                let v = r * cols + c;
                triangles.push([v, v + 1, v + cols + 1]);
                triangles.push([v, v + cols + 1, v + cols]);
            }
        }
        TriMesh { vertices, triangles }
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Unique undirected edges, as sorted index pairs in ascending order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut set = BTreeSet::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                set.insert((a.min(b), a.max(b)));
            }
        }
        set.into_iter().collect()
    }

    pub fn edge_graph(&self) -> EdgeGraph {
        EdgeGraph::from_edges(&self.vertices, self.edges())
    }

    /// Applies `f` to every vertex, keeping connectivity.
    pub fn map_vertices(&self, f: impl Fn(&Point3<f64>) -> Point3<f64>) -> Self {
        TriMesh {
            vertices: self.vertices.iter().map(f).collect(),
            triangles: self.triangles.clone(),
        }
    }
}

/// Either a mesh or a bare point cloud; both induce an edge graph.
#[derive(Debug, Clone, PartialEq)]
pub enum Surface {
    Mesh(TriMesh),
    Cloud(Vec<Point3<f64>>),
}

impl Surface {
    pub fn points(&self) -> &[Point3<f64>] {
        match self {
            Surface::Mesh(m) => m.vertices(),
            Surface::Cloud(p) => p,
        }
    }

    /// Mesh edges, or a symmetric k-nearest-neighbor graph for clouds.
    pub fn edge_graph(&self) -> EdgeGraph {
        match self {
            Surface::Mesh(m) => m.edge_graph(),
            Surface::Cloud(p) => EdgeGraph::knn(p, CLOUD_NEIGHBORS),
        }
    }
}

/// Weighted undirected graph with Euclidean edge lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl EdgeGraph {
    pub fn from_edges(points: &[Point3<f64>], edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adjacency = vec![Vec::new(); points.len()];
        for (a, b) in edges {
            let w = (points[a] - points[b]).norm();
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
        }
        EdgeGraph { adjacency }
    }

    /// Symmetric k-NN graph: `i ~ j` when either is among the other's `k`
    /// nearest points (ties broken by index).
    pub fn knn(points: &[Point3<f64>], k: usize) -> Self {
        let mut edges = BTreeSet::new();
        for (i, p) in points.iter().enumerate() {
            let mut others: Vec<(f64, usize)> = points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, q)| ((p - q).norm_squared(), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(_, j) in others.iter().take(k) {
                edges.insert((i.min(j), i.max(j)));
            }
        }
        EdgeGraph::from_edges(points, edges)
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }

    /// Connected component id of every vertex, numbered in order of first vertex.
    pub fn components(&self) -> Vec<usize> {
        let mut comp = vec![usize::MAX; self.len()];
        let mut next = 0;
        for start in 0..self.len() {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = next;
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                for &(w, _) in &self.adjacency[v] {
                    if comp[w] == usize::MAX {
                        comp[w] = next;
                        stack.push(w);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    pub fn is_connected(&self) -> bool {
        self.components().iter().all(|&c| c == 0)
    }
}
