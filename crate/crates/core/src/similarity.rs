//! Positive-pair indicator matrices and the approximation-error oracle.
//!
//! The indicator `S` marks contrastive positives. Three constructions are
//! supported: identity only, identity plus same-label train pairs, and the
//! full matrix that additionally marks edges touching at least one node
//! outside the train set. The error oracle measures how far each
//! construction sits from the all-labels ideal and checks the expected
//! ordering on homophilous graphs.

use crate::error::{Error, Result};
use crate::graph::{NodeSplit, TextRichGraph, UNLABELED};
use std::collections::BTreeSet;

/// How the positive set is constructed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityMode {
    /// Each node positive only with itself.
    Identity,
    /// Identity plus pairs of train nodes sharing a label.
    Supcon,
    /// Supcon plus edges with at least one endpoint outside the train set.
    Full,
}

impl std::str::FromStr for SimilarityMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(SimilarityMode::Identity),
            "supcon" => Ok(SimilarityMode::Supcon),
            "full" => Ok(SimilarityMode::Full),
            other => Err(Error::InvalidConfig(format!(
                "unknown similarity mode `{other}`"
            ))),
        }
    }
}

/// Symmetric binary indicator with an implicit unit diagonal, stored as the
/// sparse set of off-diagonal positive pairs `(i, j)` with `i < j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimilarityMatrix {
    n: usize,
    positives: BTreeSet<(u32, u32)>,
}

impl SimilarityMatrix {
    pub fn identity(n: usize) -> Self {
        SimilarityMatrix {
            n,
            positives: BTreeSet::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Off-diagonal positive pairs, `(i, j)` with `i < j`, ascending.
    pub fn positives(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.positives.iter().copied()
    }

    pub fn num_positive_pairs(&self) -> usize {
        self.positives.len()
    }

    pub fn is_positive(&self, i: u32, j: u32) -> bool {
        i == j || self.positives.contains(&(i.min(j), i.max(j)))
    }

    fn insert(&mut self, i: u32, j: u32) {
        debug_assert_ne!(i, j);
        self.positives.insert((i.min(j), i.max(j)));
    }

    pub fn is_subset_of(&self, other: &SimilarityMatrix) -> bool {
        self.positives.is_subset(&other.positives)
    }
}

/// Builds the indicator from train labels and topology.
///
/// An edge between two train nodes with different labels is never marked:
/// the structural rule applies only when at least one endpoint is outside
/// the train set, so observed label disagreement wins over the homophily
/// heuristic.
pub fn build_similarity(
    graph: &TextRichGraph,
    split: &NodeSplit,
    mode: SimilarityMode,
) -> SimilarityMatrix {
    let mut sim = SimilarityMatrix::identity(graph.n());
    if mode == SimilarityMode::Identity {
        return sim;
    }

    // Label rule: train nodes grouped by class, all within-group pairs.
    let mut by_class: Vec<Vec<u32>> = vec![Vec::new(); graph.num_classes()];
    for &id in &split.train {
        let label = graph.labels()[id as usize];
        debug_assert_ne!(label, UNLABELED);
        by_class[label as usize].push(id);
    }
    for group in &by_class {
        for (a, &i) in group.iter().enumerate() {
            for &j in &group[a + 1..] {
                sim.insert(i, j);
            }
        }
    }
    if mode == SimilarityMode::Supcon {
        return sim;
    }

    // Structure rule: edges with at least one endpoint outside train.
    for &(u, v) in graph.edges() {
        if !(split.is_train(u) && split.is_train(v)) {
            sim.insert(u, v);
        }
    }
    sim
}

/// Fraction of edges joining same-class nodes. Requires every node labeled.
pub fn edge_homophily(graph: &TextRichGraph) -> Result<f64> {
    if graph.num_edges() == 0 {
        return Err(Error::UndefinedHomophily);
    }
    if let Some(i) = graph.labels().iter().position(|&l| l == UNLABELED) {
        return Err(Error::UnlabeledNode(i));
    }
    let same = graph
        .edges()
        .iter()
        .filter(|&&(u, v)| graph.labels()[u as usize] == graph.labels()[v as usize])
        .count();
    Ok(same as f64 / graph.num_edges() as f64)
}

/// Squared Frobenius distance between `S` and the all-labels ideal
/// `S* = Y Y^T`. Both matrices are binary with unit diagonals, so the value
/// is the exact count of disagreeing entries, computed sparsely as twice the
/// size of the symmetric difference of the off-diagonal positive sets.
pub fn frobenius_error(sim: &SimilarityMatrix, full_labels: &[i32]) -> Result<f64> {
    if full_labels.len() != sim.n() {
        return Err(Error::DimensionMismatch(format!(
            "label count {} != n {}",
            full_labels.len(),
            sim.n()
        )));
    }
    if let Some(i) = full_labels.iter().position(|&l| l == UNLABELED) {
        return Err(Error::UnlabeledNode(i));
    }
    // |pos(S*)| = sum over classes of C(n_c, 2).
    let max_label = full_labels.iter().copied().max().unwrap_or(0);
    let mut class_sizes = vec![0usize; max_label as usize + 1];
    for &l in full_labels {
        class_sizes[l as usize] += 1;
    }
    let ideal_pairs: usize = class_sizes.iter().map(|&c| c * (c - 1) / 2).sum();

    let mut same = 0usize; // pairs of S that agree with S*
    let mut diff = 0usize; // pairs of S that S* rejects
    for (i, j) in sim.positives() {
        if full_labels[i as usize] == full_labels[j as usize] {
            same += 1;
        } else {
            diff += 1;
        }
    }
    // Symmetric difference: false negatives + false positives, doubled
    // because the matrices are symmetric.
    Ok(2.0 * ((ideal_pairs - same) + diff) as f64)
}

/// Report produced by [`theorem1_oracle`].
#[derive(Clone, Debug, serde::Serialize)]
pub struct Theorem1Report {
    /// Error of the identity construction.
    pub e1: f64,
    /// Error of the label-only construction.
    pub e2: f64,
    /// Error of the full construction.
    pub e3: f64,
    /// Edge homophily over all edges (ground-truth labels).
    pub h: f64,
    /// Added edges (at least one endpoint outside train) joining same-class nodes.
    pub p_same_added: usize,
    /// Added edges joining different-class nodes.
    pub p_diff_added: usize,
    /// Whether `e3 < e2 <= e1`.
    pub holds: bool,
}

/// Measures the error of all three constructions on a fully labeled graph
/// and reports whether the expected strict improvement ordering holds.
///
/// The exact identity `e3 - e2 = 2 * (p_diff_added - p_same_added)` follows
/// from the structural rule touching exactly the added-edge entries.
pub fn theorem1_oracle(graph: &TextRichGraph, split: &NodeSplit) -> Result<Theorem1Report> {
    let labels = graph.labels();
    let h = edge_homophily(graph)?;

    let s1 = build_similarity(graph, split, SimilarityMode::Identity);
    let s2 = build_similarity(graph, split, SimilarityMode::Supcon);
    let s3 = build_similarity(graph, split, SimilarityMode::Full);
    let e1 = frobenius_error(&s1, labels)?;
    let e2 = frobenius_error(&s2, labels)?;
    let e3 = frobenius_error(&s3, labels)?;

    let mut p_same_added = 0usize;
    let mut p_diff_added = 0usize;
    for &(u, v) in graph.edges() {
        if split.is_train(u) && split.is_train(v) {
            continue;
        }
        // Edges already positive under the label rule change nothing.
        if s2.is_positive(u, v) {
            continue;
        }
        if labels[u as usize] == labels[v as usize] {
            p_same_added += 1;
        } else {
            p_diff_added += 1;
        }
    }

    Ok(Theorem1Report {
        e1,
        e2,
        e3,
        h,
        p_same_added,
        p_diff_added,
        holds: e3 < e2 && e2 <= e1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use rand::Rng as _;

    fn graph_with(
        n: usize,
        edges: Vec<(u32, u32)>,
        labels: Vec<i32>,
        num_classes: usize,
    ) -> TextRichGraph {
        TextRichGraph::new(n, edges, Matrix::zeros(n, 1), labels, num_classes, None).unwrap()
    }

    fn positives(sim: &SimilarityMatrix) -> Vec<(u32, u32)> {
        sim.positives().collect()
    }

    #[test]
    fn full_mode_marks_label_and_edge_pairs() {
        // y = [0, 0, -1], edge (1,2); node 2 unlabeled.
        let g = graph_with(3, vec![(1, 2)], vec![0, 0, -1], 1);
        let split = NodeSplit::new(vec![0, 1], vec![], vec![2], &g).unwrap();
        let sim = build_similarity(&g, &split, SimilarityMode::Full);
        assert_eq!(positives(&sim), vec![(0, 1), (1, 2)]);
        assert!(!sim.is_positive(0, 2));
    }

    #[test]
    fn supcon_mode_marks_only_label_pairs() {
        let g = graph_with(3, vec![(1, 2)], vec![0, 0, -1], 1);
        let split = NodeSplit::new(vec![0, 1], vec![], vec![2], &g).unwrap();
        let sim = build_similarity(&g, &split, SimilarityMode::Supcon);
        assert_eq!(positives(&sim), vec![(0, 1)]);
    }

    #[test]
    fn conflicting_train_edge_is_not_positive() {
        // Two train nodes with different labels joined by an edge.
        let g = graph_with(2, vec![(0, 1)], vec![0, 1], 2);
        let split = NodeSplit::new(vec![0, 1], vec![], vec![], &g).unwrap();
        let sim = build_similarity(&g, &split, SimilarityMode::Full);
        assert_eq!(sim.num_positive_pairs(), 0);
    }

    #[test]
    fn empty_label_set_degrades_to_identity_plus_edges() {
        let g = graph_with(3, vec![(0, 1), (1, 2)], vec![0, 0, 1], 2);
        let split = NodeSplit::new(vec![], vec![], vec![0, 1, 2], &g).unwrap();
        let sim = build_similarity(&g, &split, SimilarityMode::Full);
        assert_eq!(positives(&sim), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn homophily_examples() {
        // 4 edges, 3 same-class.
        let g = graph_with(5, vec![(0, 1), (1, 2), (2, 3), (3, 4)], vec![0, 0, 0, 0, 1], 2);
        assert!((edge_homophily(&g).unwrap() - 0.75).abs() < 1e-15);

        let g = graph_with(3, vec![(0, 1), (1, 2)], vec![0, 0, 0], 1);
        assert_eq!(edge_homophily(&g).unwrap(), 1.0);

        // Bipartite across two classes.
        let g = graph_with(4, vec![(0, 2), (0, 3), (1, 2), (1, 3)], vec![0, 0, 1, 1], 2);
        assert_eq!(edge_homophily(&g).unwrap(), 0.0);

        let g = graph_with(2, vec![], vec![0, 1], 2);
        assert!(matches!(edge_homophily(&g), Err(Error::UndefinedHomophily)));
    }

    #[test]
    fn frobenius_error_trivial_cases() {
        // S equal to the ideal -> 0.
        let labels = vec![0, 0, 1];
        let mut sim = SimilarityMatrix::identity(3);
        sim.insert(0, 1);
        assert_eq!(frobenius_error(&sim, &labels).unwrap(), 0.0);

        // n=2 same class, S=I -> the two off-diagonal entries disagree.
        let sim = SimilarityMatrix::identity(2);
        assert_eq!(frobenius_error(&sim, &[0, 0]).unwrap(), 2.0);
    }

    /// Dense brute-force oracle: build both matrices entrywise and count.
    fn dense_frobenius(sim: &SimilarityMatrix, labels: &[i32]) -> f64 {
        let n = labels.len();
        let mut err = 0.0;
        for i in 0..n {
            for j in 0..n {
                let s = if sim.is_positive(i as u32, j as u32) { 1.0 } else { 0.0 };
                let ideal = if labels[i] == labels[j] { 1.0 } else { 0.0 };
                err += (s - ideal) * (s - ideal);
            }
        }
        err
    }

    #[test]
    fn frobenius_error_matches_dense_brute_force() {
        let mut rng = crate::rng::stream(11, &[0]);
        for trial in 0..20 {
            let n = 30;
            let labels: Vec<i32> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let mut sim = SimilarityMatrix::identity(n);
            for _ in 0..40 {
                let i = rng.random_range(0..n as u32);
                let j = rng.random_range(0..n as u32);
                if i != j {
                    sim.insert(i, j);
                }
            }
            let sparse = frobenius_error(&sim, &labels).unwrap();
            let dense = dense_frobenius(&sim, &labels);
            assert_eq!(sparse, dense, "trial {trial}");
        }
    }

    #[test]
    fn positive_sets_nest_across_modes() {
        let mut rng = crate::rng::stream(5, &[1]);
        for _ in 0..10 {
            let n = 20usize;
            let labels: Vec<i32> = (0..n).map(|_| rng.random_range(0..3) as i32).collect();
            let mut edges = Vec::new();
            for i in 0..n as u32 {
                for j in (i + 1)..n as u32 {
                    if rng.random::<f64>() < 0.15 {
                        edges.push((i, j));
                    }
                }
            }
            let g = graph_with(n, edges, labels, 3);
            let train: Vec<u32> = (0..n as u32).filter(|_| rng.random::<f64>() < 0.4).collect();
            let rest: Vec<u32> = (0..n as u32).filter(|i| !train.contains(i)).collect();
            let split = NodeSplit::new(train, vec![], rest, &g).unwrap();
            let s1 = build_similarity(&g, &split, SimilarityMode::Identity);
            let s2 = build_similarity(&g, &split, SimilarityMode::Supcon);
            let s3 = build_similarity(&g, &split, SimilarityMode::Full);
            assert!(s1.is_subset_of(&s2));
            assert!(s2.is_subset_of(&s3));
            // Label-only fixes can never hurt.
            let e1 = frobenius_error(&s1, g.labels()).unwrap();
            let e2 = frobenius_error(&s2, g.labels()).unwrap();
            assert!(e2 <= e1);
            // Exact error delta of the structural additions.
            let report = theorem1_oracle(&g, &split).unwrap();
            let delta = 2.0 * (report.p_diff_added as f64 - report.p_same_added as f64);
            assert_eq!(report.e3 - report.e2, delta);
        }
    }

    #[test]
    fn half_homophily_on_added_edges_leaves_error_unchanged() {
        // Labels [0,0,1,1], no train labels, edges (0,1) same and (1,2) diff:
        // h = 0.5 on the added edges, so e3 == e2.
        let g = graph_with(4, vec![(0, 1), (1, 2)], vec![0, 0, 1, 1], 2);
        let split = NodeSplit::new(vec![], vec![], vec![0, 1, 2, 3], &g).unwrap();
        let report = theorem1_oracle(&g, &split).unwrap();
        assert_eq!(report.p_same_added, 1);
        assert_eq!(report.p_diff_added, 1);
        assert_eq!(report.e3, report.e2);
    }

    #[test]
    fn no_labels_means_supcon_equals_identity() {
        let g = graph_with(4, vec![(0, 1), (2, 3)], vec![0, 0, 1, 1], 2);
        let split = NodeSplit::new(vec![], vec![], vec![0, 1, 2, 3], &g).unwrap();
        let report = theorem1_oracle(&g, &split).unwrap();
        assert_eq!(report.e2, report.e1);
    }

    #[test]
    fn build_is_independent_of_edge_order() {
        let labels = vec![0, 1, 0, 1];
        let edges_a = vec![(0, 1), (2, 3), (1, 2)];
        let edges_b = vec![(1, 2), (1, 0), (3, 2)];
        let ga = graph_with(4, edges_a, labels.clone(), 2);
        let gb = graph_with(4, edges_b, labels, 2);
        let split = NodeSplit::new(vec![0], vec![], vec![1, 2, 3], &ga).unwrap();
        assert_eq!(
            build_similarity(&ga, &split, SimilarityMode::Full),
            build_similarity(&gb, &split, SimilarityMode::Full)
        );
    }
}
