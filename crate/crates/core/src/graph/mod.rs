//! Directed KNN graph over contour sample points and its fixed-length summary.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::descriptors::{FeatureVector, Modality};
use crate::error::{Error, Result};
use crate::numkit::dot;

pub const DEFAULT_K: usize = 5;
pub const STATS_DIM: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct GraphNode {
    /// `(row, col)` in pixels.
    pub position: (f64, f64),
    pub feature: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeGraph {
    pub nodes: Vec<GraphNode>,
    /// Directed `(from, to)` pairs, grouped by source in node order.
    pub edges: Vec<(usize, usize)>,
    pub k: usize,
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

/// Connects every node to its `min(k, n − 1)` nearest other nodes; equal
/// distances go to the lower index. Exact brute force.
pub fn build_knn_graph(points: &[(f64, f64)], features: &[Vec<f64>], k: usize) -> Result<EdgeGraph> {
    if k == 0 {
        return Err(Error::Invalid("k must be ≥ 1".into()));
    }
    if points.len() != features.len() {
        return Err(Error::shape(format!(
            "{} points but {} feature vectors",
            points.len(),
            features.len()
        )));
    }
    if points.iter().any(|p| !(p.0.is_finite() && p.1.is_finite())) {
        return Err(Error::Numerical("non-finite point coordinate".into()));
    }
    let n = points.len();
    let mut edges = Vec::with_capacity(n * k.min(n.saturating_sub(1)));
    let mut candidates: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        candidates.clear();
        candidates.extend((0..n).filter(|&j| j != i).map(|j| (dist2(points[i], points[j]), j)));
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        edges.extend(candidates.iter().take(k).map(|&(_, j)| (i, j)));
    }
    let nodes = points
        .iter()
        .zip(features)
        .map(|(&position, f)| GraphNode {
            position,
            feature: f.clone(),
        })
        .collect();
    Ok(EdgeGraph { nodes, edges, k })
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (mean, values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

impl EdgeGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for &(_, j) in &self.edges {
            deg[j] += 1;
        }
        deg
    }

    /// Neighbor sets of the undirected projection.
    pub fn undirected_neighbors(&self) -> Vec<BTreeSet<usize>> {
        let mut adj = vec![BTreeSet::new(); self.nodes.len()];
        for &(i, j) in &self.edges {
            adj[i].insert(j);
            adj[j].insert(i);
        }
        adj
    }

    /// Mean local clustering coefficient of the undirected projection;
    /// nodes with fewer than two neighbors contribute zero.
    pub fn mean_clustering(&self) -> f64 {
        if self.nodes.is_empty() {
            return 0.0;
        }
        let adj = self.undirected_neighbors();
        let total: f64 = adj
            .iter()
            .map(|nb| {
                let deg = nb.len();
                if deg < 2 {
                    return 0.0;
                }
                let nbv: Vec<usize> = nb.iter().copied().collect();
                let mut links = 0usize;
                for (a, &u) in nbv.iter().enumerate() {
                    links += nbv[a + 1..].iter().filter(|w| adj[u].contains(w)).count();
                }
                2.0 * links as f64 / (deg * (deg - 1)) as f64
            })
            .sum();
        total / self.nodes.len() as f64
    }

    /// `[nodes, edges, mean in-degree, in-degree variance, mean edge length,
    /// edge-length variance, mean clustering, mean cosine similarity of
    /// features across edges]`; all zeros for the empty graph.
    pub fn summary_stats(&self) -> [f64; STATS_DIM] {
        if self.nodes.is_empty() {
            return [0.0; STATS_DIM];
        }
        let indeg: Vec<f64> = self.in_degrees().into_iter().map(|d| d as f64).collect();
        let (deg_mean, deg_var) = mean_var(&indeg);
        let lengths: Vec<f64> = self
            .edges
            .iter()
            .map(|&(i, j)| dist2(self.nodes[i].position, self.nodes[j].position).sqrt())
            .collect();
        let (len_mean, len_var) = mean_var(&lengths);
        let sims: Vec<f64> = self
            .edges
            .iter()
            .map(|&(i, j)| cosine(&self.nodes[i].feature, &self.nodes[j].feature))
            .collect();
        [
            self.nodes.len() as f64,
            self.edges.len() as f64,
            deg_mean,
            deg_var,
            len_mean,
            len_var,
            self.mean_clustering(),
            mean_var(&sims).0,
        ]
    }

    /// Debug dump: `{nodes: [{pos, feature_dim}], edges: [[i, j]], k}`.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Node {
            pos: [f64; 2],
            feature_dim: usize,
        }
        #[derive(Serialize)]
        struct Dump {
            nodes: Vec<Node>,
            edges: Vec<[usize; 2]>,
            k: usize,
        }
        let dump = Dump {
            nodes: self
                .nodes
                .iter()
                .map(|n| Node {
                    pos: [n.position.0, n.position.1],
                    feature_dim: n.feature.len(),
                })
                .collect(),
            edges: self.edges.iter().map(|&(i, j)| [i, j]).collect(),
            k: self.k,
        };
        Ok(serde_json::to_string_pretty(&dump)?)
    }
}

pub fn graph_summary_stats(g: &EdgeGraph) -> [f64; STATS_DIM] {
    g.summary_stats()
}

/// `X_E = [pooled ‖ stats]`.
pub fn assemble_edge_feature(pooled: &[f64], stats: &[f64; STATS_DIM]) -> Result<FeatureVector> {
    let mut values = Vec::with_capacity(pooled.len() + STATS_DIM);
    values.extend_from_slice(pooled);
    values.extend_from_slice(stats);
    FeatureVector::new(Modality::Edge, values)
}
