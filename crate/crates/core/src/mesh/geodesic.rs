use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{EdgeGraph, TriMesh};
use crate::error::{Error, Result};

/// Symmetric table of geodesic distances between selected vertices.
/// Pairs in different components are `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicTable {
    ids: Vec<usize>,
    distances: Vec<f64>,
}

impl GeodesicTable {
    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Distance between the `a`-th and `b`-th query vertices.
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.distances[a * self.ids.len() + b]
    }
}

#[derive(PartialEq)]
struct Candidate {
    dist: f64,
    vertex: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest paths over the edge graph.
pub fn dijkstra(graph: &EdgeGraph, source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; graph.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Candidate {
        dist: 0.0,
        vertex: source,
    });
    while let Some(Candidate { dist: d, vertex }) = heap.pop() {
        if d > dist[vertex] {
            continue;
        }
        for &(next, w) in graph.neighbors(vertex) {
            let nd = d + w;
            if nd < dist[next] {
                dist[next] = nd;
                heap.push(Candidate { dist: nd, vertex: next });
            }
        }
    }
    dist
}

impl EdgeGraph {
    /// Pairwise shortest-path distances between `ids`, one Dijkstra run per id.
    pub fn geodesics(&self, ids: &[usize]) -> Result<GeodesicTable> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidArgument(format!(
                "query vertex {bad} out of range {}",
                self.len()
            )));
        }
        let rows: Vec<Vec<f64>> = ids
            .par_iter()
            .map(|&s| {
                let d = dijkstra(self, s);
                ids.iter().map(|&t| d[t]).collect()
            })
            .collect();
        let k = ids.len();
        let mut distances = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                // symmetrize exactly; both runs agree up to summation order
                distances[a * k + b] = if a == b { 0.0 } else { rows[a][b].min(rows[b][a]) };
            }
        }
        Ok(GeodesicTable {
            ids: ids.to_vec(),
            distances,
        })
    }
}

/// Shortest-path geodesics over the mesh edge graph with Euclidean weights.
pub fn geodesic_distances(mesh: &TriMesh, ids: &[usize]) -> Result<GeodesicTable> {
    mesh.edge_graph().geodesics(ids)
}

/// Largest geodesic distance among a seeded sample of vertices; exact when the
/// sample covers the whole mesh.
pub fn mesh_diameter(mesh: &TriMesh, sample_count: usize, seed: u64) -> Result<f64> {
    graph_diameter(&mesh.edge_graph(), sample_count, seed)
}

pub(crate) fn graph_diameter(graph: &EdgeGraph, sample_count: usize, seed: u64) -> Result<f64> {
    if sample_count < 2 {
        return Err(Error::InvalidArgument("diameter needs at least 2 samples".into()));
    }
    if graph.is_empty() || !graph.is_connected() {
        return Err(Error::DisconnectedMesh);
    }
    let n = graph.len();
    let sample: Vec<usize> = if sample_count >= n {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = rand::seq::index::sample(&mut rng, n, sample_count).into_vec();
        s.sort_unstable();
        s
    };
    let table = graph.geodesics(&sample)?;
    Ok(table.distances.iter().copied().fold(0.0, f64::max))
}
