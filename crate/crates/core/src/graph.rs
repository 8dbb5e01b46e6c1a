//! Core data model: graphs, splits, and flat cluster assignments.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use std::collections::BTreeSet;

/// Marker for unlabeled nodes in label vectors.
pub const UNLABELED: i32 = -1;

/// An undirected graph whose nodes carry feature vectors, optional class
/// labels, and optionally raw document texts.
#[derive(Clone, Debug)]
pub struct TextRichGraph {
    n: usize,
    edges: Vec<(u32, u32)>,
    features: Matrix,
    labels: Vec<i32>,
    num_classes: usize,
    texts: Option<Vec<String>>,
}

impl TextRichGraph {
    /// Builds a graph, canonicalizing edges (min id first, sorted, deduped)
    /// and checking every structural invariant.
    pub fn new(
        n: usize,
        edges: Vec<(u32, u32)>,
        features: Matrix,
        labels: Vec<i32>,
        num_classes: usize,
        texts: Option<Vec<String>>,
    ) -> Result<Self> {
        if features.rows() != n {
            return Err(Error::DimensionMismatch(format!(
                "feature rows {} != node count {}",
                features.rows(),
                n
            )));
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "label count {} != node count {}",
                labels.len(),
                n
            )));
        }
        if num_classes == 0 {
            return Err(Error::InvalidGraph("num_classes must be positive".into()));
        }
        features.ensure_finite("feature matrix")?;
        for (i, &l) in labels.iter().enumerate() {
            if l != UNLABELED && (l < 0 || l as usize >= num_classes) {
                return Err(Error::InvalidGraph(format!(
                    "label {} of node {} outside [0, {})",
                    l, i, num_classes
                )));
            }
        }
        if let Some(t) = &texts {
            if t.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "text count {} != node count {}",
                    t.len(),
                    n
                )));
            }
        }
        let edges = canonicalize_edges(n, edges)?;
        Ok(TextRichGraph {
            n,
            edges,
            features,
            labels,
            num_classes,
            texts,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Canonical edge list: `(min, max)` pairs, sorted, deduplicated.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Per-node labels, `-1` for unlabeled.
    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn texts(&self) -> Option<&[String]> {
        self.texts.as_deref()
    }

    pub fn is_labeled(&self, i: usize) -> bool {
        self.labels[i] != UNLABELED
    }

    /// Homophily of the labeled subgraph: fraction of edges whose endpoints
    /// are both labeled and share a class, over edges with both endpoints
    /// labeled. `None` when no such edge exists.
    pub fn labeled_subgraph_homophily(&self) -> Option<f64> {
        let mut total = 0usize;
        let mut same = 0usize;
        for &(u, v) in &self.edges {
            let (lu, lv) = (self.labels[u as usize], self.labels[v as usize]);
            if lu != UNLABELED && lv != UNLABELED {
                total += 1;
                if lu == lv {
                    same += 1;
                }
            }
        }
        if total == 0 {
            None
        } else {
            Some(same as f64 / total as f64)
        }
    }
}

/// Canonicalizes an edge list: orients each pair min-first, sorts, dedups.
/// Rejects self-loops and out-of-range endpoints.
pub fn canonicalize_edges(n: usize, edges: Vec<(u32, u32)>) -> Result<Vec<(u32, u32)>> {
    let mut canon = Vec::with_capacity(edges.len());
    for (u, v) in edges {
        if u as usize >= n {
            return Err(Error::OutOfRangeId { id: u as i64, n });
        }
        if v as usize >= n {
            return Err(Error::OutOfRangeId { id: v as i64, n });
        }
        if u == v {
            return Err(Error::InvalidGraph(format!("self-loop at node {}", u)));
        }
        canon.push((u.min(v), u.max(v)));
    }
    canon.sort_unstable();
    canon.dedup();
    Ok(canon)
}

/// Disjoint train/val/test node-id sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeSplit {
    pub train: Vec<u32>,
    pub val: Vec<u32>,
    pub test: Vec<u32>,
}

impl NodeSplit {
    /// Builds a split, sorting each part and checking disjointness against
    /// the graph: ids in range, parts pairwise disjoint, train nodes labeled.
    pub fn new(
        mut train: Vec<u32>,
        mut val: Vec<u32>,
        mut test: Vec<u32>,
        graph: &TextRichGraph,
    ) -> Result<Self> {
        train.sort_unstable();
        val.sort_unstable();
        test.sort_unstable();
        for part in [&train, &val, &test] {
            if part.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidSplit("duplicate id within a part".into()));
            }
            if let Some(&id) = part.last() {
                if id as usize >= graph.n() {
                    return Err(Error::OutOfRangeId {
                        id: id as i64,
                        n: graph.n(),
                    });
                }
            }
        }
        let mut seen = BTreeSet::new();
        for part in [&train, &val, &test] {
            for &id in part {
                if !seen.insert(id) {
                    return Err(Error::InvalidSplit(format!(
                        "node {} appears in more than one part",
                        id
                    )));
                }
            }
        }
        for &id in &train {
            if !graph.is_labeled(id as usize) {
                return Err(Error::InvalidSplit(format!(
                    "train node {} is unlabeled",
                    id
                )));
            }
        }
        Ok(NodeSplit { train, val, test })
    }

    pub fn is_train(&self, id: u32) -> bool {
        self.train.binary_search(&id).is_ok()
    }
}

/// A flat partition of nodes into `k` clusters with one centroid per cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterAssignment {
    pub assignment: Vec<u32>,
    pub k: usize,
    pub centroids: Matrix,
}

impl ClusterAssignment {
    pub fn new(assignment: Vec<u32>, k: usize, centroids: Matrix) -> Result<Self> {
        if centroids.rows() != k {
            return Err(Error::InvalidAssignment(format!(
                "centroid rows {} != k {}",
                centroids.rows(),
                k
            )));
        }
        let mut sizes = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            if c as usize >= k {
                return Err(Error::InvalidAssignment(format!(
                    "node {} assigned to cluster {} >= k {}",
                    i, c, k
                )));
            }
            sizes[c as usize] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidAssignment(format!(
                "cluster {} is empty",
                empty
            )));
        }
        Ok(ClusterAssignment {
            assignment,
            k,
            centroids,
        })
    }

    /// Node ids of every cluster, each sorted ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.k];
        for (i, &c) in self.assignment.iter().enumerate() {
            members[c as usize].push(i);
        }
        members
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &c in &self.assignment {
            sizes[c as usize] += 1;
        }
        sizes
    }

    /// Recomputes all centroids as member means over `points`.
    pub fn recompute_centroids(&mut self, points: &Matrix) {
        let members = self.members();
        let mut centroids = Matrix::zeros(self.k, points.cols());
        for (c, ids) in members.iter().enumerate() {
            let mean = points.mean_of_rows(ids);
            centroids.row_mut(c).copy_from_slice(&mean);
        }
        self.centroids = centroids;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_graph(n: usize, edges: Vec<(u32, u32)>, labels: Vec<i32>) -> TextRichGraph {
        let features = Matrix::zeros(n, 2);
        TextRichGraph::new(n, edges, features, labels, 3, None).unwrap()
    }

    #[test]
    fn duplicate_and_reversed_edges_collapse() {
        let g = tiny_graph(3, vec![(0, 1), (1, 0), (1, 2)], vec![0, 0, -1]);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(g.num_edges(), 2);
    }

    #[test]
    fn canonicalization_is_idempotent() {
        let edges = vec![(2, 0), (0, 2), (1, 2), (0, 1)];
        let once = canonicalize_edges(3, edges).unwrap();
        let twice = canonicalize_edges(3, once.clone()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn self_loop_rejected() {
        let features = Matrix::zeros(2, 1);
        let err = TextRichGraph::new(2, vec![(1, 1)], features, vec![0, 0], 1, None);
        assert!(matches!(err, Err(Error::InvalidGraph(_))));
    }

    #[test]
    fn out_of_range_edge_rejected() {
        let features = Matrix::zeros(2, 1);
        let err = TextRichGraph::new(2, vec![(0, 5)], features, vec![0, 0], 1, None);
        assert!(matches!(err, Err(Error::OutOfRangeId { id: 5, .. })));
    }

    #[test]
    fn split_requires_labeled_train() {
        let g = tiny_graph(3, vec![(0, 1)], vec![0, -1, 1]);
        let err = NodeSplit::new(vec![1], vec![], vec![], &g);
        assert!(matches!(err, Err(Error::InvalidSplit(_))));
        let ok = NodeSplit::new(vec![0], vec![2], vec![], &g);
        assert!(ok.is_ok());
    }

    #[test]
    fn split_rejects_overlap() {
        let g = tiny_graph(3, vec![(0, 1)], vec![0, 1, 1]);
        let err = NodeSplit::new(vec![0], vec![0], vec![], &g);
        assert!(matches!(err, Err(Error::InvalidSplit(_))));
    }

    #[test]
    fn assignment_rejects_empty_cluster() {
        let err = ClusterAssignment::new(vec![0, 0, 0], 2, Matrix::zeros(2, 2));
        assert!(matches!(err, Err(Error::InvalidAssignment(_))));
    }

    #[test]
    fn labeled_homophily_counts_only_labeled_edges() {
        let g = tiny_graph(4, vec![(0, 1), (1, 2), (2, 3)], vec![0, 0, -1, 1]);
        // Only (0,1) has both endpoints labeled; it is same-class.
        assert_eq!(g.labeled_subgraph_homophily(), Some(1.0));
    }
}
