//! Taxonomy trees: construction from leaf clusters, canonical JSON
//! persistence, and cophenetic distances.

mod viz;

pub use viz::{emit_dot, emit_radial_json, VizFormat};

use crate::error::{Error, Result};
use crate::graph::ClusterAssignment;
use crate::kmeans::{kmeans, kmeans_weighted, KMeansConfig};
use crate::matrix::Matrix;
use crate::rng;
use std::collections::BTreeMap;
use std::path::Path;

/// One taxonomy node. Only leaves (level == depth) carry members.
#[derive(Clone, Debug, PartialEq)]
pub struct TaxoNode {
    pub id: u32,
    /// Root is level 1.
    pub level: u32,
    pub parent: Option<u32>,
    pub centroid: Vec<f64>,
    pub label: String,
    pub summary: String,
    /// Graph-node ids, sorted ascending; empty for internal nodes.
    pub members: Vec<u32>,
}

/// A multi-level cluster hierarchy.
#[derive(Clone, Debug, PartialEq)]
pub struct TaxonomyTree {
    pub depth: u32,
    pub level_sizes: Vec<usize>,
    /// Sorted by id.
    pub nodes: Vec<TaxoNode>,
}

impl TaxonomyTree {
    /// Checks every structural invariant; called on load and after build.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidTree("empty tree".into()));
        }
        if self.depth as usize != self.level_sizes.len() {
            return Err(Error::InvalidTree(format!(
                "depth {} but {} level sizes",
                self.depth,
                self.level_sizes.len()
            )));
        }
        let mut ids = BTreeMap::new();
        for node in &self.nodes {
            if ids.insert(node.id, node).is_some() {
                return Err(Error::InvalidTree(format!("duplicate node id {}", node.id)));
            }
        }
        let roots: Vec<&TaxoNode> = self
            .nodes
            .iter()
            .filter(|n| n.parent.is_none())
            .collect();
        if roots.len() != 1 {
            return Err(Error::InvalidTree(format!(
                "multiple roots ({} parentless nodes)",
                roots.len()
            )));
        }
        if roots[0].level != 1 {
            return Err(Error::InvalidTree("root is not at level 1".into()));
        }
        let mut level_counts = vec![0usize; self.depth as usize];
        for node in &self.nodes {
            if node.level == 0 || node.level > self.depth {
                return Err(Error::InvalidTree(format!(
                    "node {} at level {} outside [1, {}]",
                    node.id, node.level, self.depth
                )));
            }
            level_counts[(node.level - 1) as usize] += 1;
            if node.centroid.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("centroid of node {}", node.id)));
            }
            match node.parent {
                None => {}
                Some(pid) => {
                    let parent = ids.get(&pid).ok_or_else(|| {
                        Error::InvalidTree(format!("node {} has unknown parent {}", node.id, pid))
                    })?;
                    if parent.level + 1 != node.level {
                        return Err(Error::InvalidTree(format!(
                            "node {} (level {}) has parent at level {}",
                            node.id, node.level, parent.level
                        )));
                    }
                }
            }
            let is_leaf = node.level == self.depth;
            if !is_leaf && !node.members.is_empty() {
                return Err(Error::InvalidTree(format!(
                    "internal node {} carries members",
                    node.id
                )));
            }
            if is_leaf && node.members.is_empty() {
                return Err(Error::InvalidTree(format!("leaf {} has no members", node.id)));
            }
        }
        if level_counts != self.level_sizes {
            return Err(Error::InvalidTree(format!(
                "level sizes {:?} but counted {:?}",
                self.level_sizes, level_counts
            )));
        }
        // Leaf members partition [0, n).
        let mut all: Vec<u32> = Vec::new();
        for node in self.leaves() {
            if node.members.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidTree(format!(
                    "leaf {} members not sorted/unique",
                    node.id
                )));
            }
            all.extend_from_slice(&node.members);
        }
        all.sort_unstable();
        for (expect, &got) in all.iter().enumerate() {
            if expect as u32 != got {
                return Err(Error::InvalidTree(
                    "leaf members do not partition the node range".into(),
                ));
            }
        }
        Ok(())
    }

    /// Leaves in id order (which is cluster-index order after construction).
    pub fn leaves(&self) -> impl Iterator<Item = &TaxoNode> {
        self.nodes.iter().filter(move |n| n.level == self.depth)
    }

    pub fn node(&self, id: u32) -> Option<&TaxoNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Total number of graph nodes covered by the leaves.
    pub fn num_graph_nodes(&self) -> usize {
        self.leaves().map(|l| l.members.len()).sum()
    }

    /// Children of a node, in id order.
    pub fn children(&self, id: u32) -> Vec<&TaxoNode> {
        self.nodes
            .iter()
            .filter(|n| n.parent == Some(id))
            .collect()
    }

    /// Member set of any node: own members for leaves, recursive union
    /// otherwise.
    pub fn derived_members(&self, id: u32) -> Vec<u32> {
        let node = self.node(id).expect("unknown node id");
        if node.level == self.depth {
            return node.members.clone();
        }
        let mut all = Vec::new();
        for child in self.children(id) {
            all.extend(self.derived_members(child.id));
        }
        all.sort_unstable();
        all
    }

    /// Leaf-cluster assignment induced by the leaves, clusters in leaf-id
    /// order; centroids are the stored leaf centroids.
    pub fn leaf_assignment(&self) -> Result<ClusterAssignment> {
        let leaves: Vec<&TaxoNode> = self.leaves().collect();
        let n = self.num_graph_nodes();
        let d = leaves.first().map_or(0, |l| l.centroid.len());
        let mut assignment = vec![0u32; n];
        let mut centroids = Matrix::zeros(leaves.len(), d);
        for (c, leaf) in leaves.iter().enumerate() {
            centroids.row_mut(c).copy_from_slice(&leaf.centroid);
            for &m in &leaf.members {
                assignment[m as usize] = c as u32;
            }
        }
        ClusterAssignment::new(assignment, leaves.len(), centroids)
    }
}

/// Target level sizes `[1, k_2, ..., k_L]`.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TreeShape {
    pub level_sizes: Vec<usize>,
}

impl TreeShape {
    pub fn new(level_sizes: Vec<usize>) -> Result<Self> {
        let shape = TreeShape { level_sizes };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.level_sizes.first() != Some(&1) {
            return Err(Error::InvalidConfig(
                "tree shape must start with a single root".into(),
            ));
        }
        if self.level_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(format!(
                "tree shape {:?} is not strictly increasing",
                self.level_sizes
            )));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.level_sizes.len()
    }

    pub fn leaf_count(&self) -> usize {
        *self.level_sizes.last().unwrap()
    }

    /// Parses `"1,7,64"`.
    pub fn parse(s: &str) -> Result<Self> {
        let sizes: Vec<usize> = s
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidConfig(format!("bad shape component `{tok}`")))
            })
            .collect::<Result<_>>()?;
        TreeShape::new(sizes)
    }

    /// Default shapes per dataset.
    pub fn dataset_default(name: &str) -> Option<Self> {
        let sizes: &[usize] = match name.to_ascii_lowercase().as_str() {
            "cora" => &[1, 7, 64],
            "citeseer" => &[1, 6, 64],
            "pubmed" => &[1, 3, 16, 64],
            "wikics" => &[1, 10, 128],
            "books" => &[1, 12, 64, 256],
            "photo" => &[1, 12, 64, 256],
            "computer" => &[1, 10, 128, 512],
            "arxiv" => &[1, 40, 128, 512, 2048],
            _ => return None,
        };
        Some(TreeShape {
            level_sizes: sizes.to_vec(),
        })
    }

    /// Re-fits the shape to an actual leaf count (refinement may change it):
    /// intermediate sizes are rescaled proportionally and clamped to stay
    /// strictly between 1 and the level below.
    pub fn refit(&self, leaf_count: usize) -> Result<TreeShape> {
        if leaf_count < 2 {
            return Err(Error::InvalidConfig(format!(
                "cannot build a hierarchy over {leaf_count} leaf cluster(s)"
            )));
        }
        let l = self.level_sizes.len();
        let mut sizes = self.level_sizes.clone();
        sizes[l - 1] = leaf_count;
        let ratio = leaf_count as f64 / self.leaf_count() as f64;
        for i in (1..l - 1).rev() {
            let proposed = (self.level_sizes[i] as f64 * ratio).round() as usize;
            let upper = sizes[i + 1].saturating_sub(1);
            if upper < 2 {
                return Err(Error::InvalidConfig(format!(
                    "shape {:?} infeasible for {leaf_count} leaves",
                    self.level_sizes
                )));
            }
            sizes[i] = proposed.clamp(2, upper);
        }
        TreeShape::new(sizes)
    }
}

/// Builds the tree bottom-up: leaves are the given clusters; each upper
/// level comes from K-Means over the centroids of the level below, with
/// parent links following that clustering. Centroids are clustered
/// unweighted; see [`build_hierarchy_weighted`] for the member-count
/// weighted variant.
pub fn build_hierarchy(
    leaf_assignment: &ClusterAssignment,
    shape: &TreeShape,
    seed: u64,
) -> Result<TaxonomyTree> {
    build_hierarchy_impl(leaf_assignment, shape, seed, false)
}

/// As [`build_hierarchy`], but each centroid enters the upper-level
/// clustering weighted by the number of graph nodes beneath it.
pub fn build_hierarchy_weighted(
    leaf_assignment: &ClusterAssignment,
    shape: &TreeShape,
    seed: u64,
) -> Result<TaxonomyTree> {
    build_hierarchy_impl(leaf_assignment, shape, seed, true)
}

fn build_hierarchy_impl(
    leaf_assignment: &ClusterAssignment,
    shape: &TreeShape,
    seed: u64,
    weight_by_size: bool,
) -> Result<TaxonomyTree> {
    shape.validate()?;
    let shape = if shape.leaf_count() == leaf_assignment.k {
        shape.clone()
    } else {
        shape.refit(leaf_assignment.k)?
    };
    let depth = shape.depth();
    let members = leaf_assignment.members();

    // Per level (top to bottom): centroids and, for non-leaf levels, the
    // child-to-parent assignment computed on the way up.
    let mut level_centroids: Vec<Matrix> = vec![Matrix::zeros(0, 0); depth];
    let mut level_weights: Vec<Vec<f64>> = vec![Vec::new(); depth];
    let mut child_parent: Vec<Vec<u32>> = vec![Vec::new(); depth]; // index l: level l+1 nodes -> level l cluster
    level_centroids[depth - 1] = leaf_assignment.centroids.clone();
    level_weights[depth - 1] = members.iter().map(|m| m.len() as f64).collect();

    for l in (0..depth - 1).rev() {
        let below = &level_centroids[l + 1];
        let k = shape.level_sizes[l];
        let config = KMeansConfig {
            restarts: 4,
            ..KMeansConfig::new(k, rng::derive_seed(seed, &[0x7a, l as u64]))
        };
        let clustering = if weight_by_size {
            kmeans_weighted(below, &level_weights[l + 1], &config)?
        } else {
            kmeans(below, &config)?
        };
        let mut weights = vec![0.0; k];
        for (child, &parent) in clustering.assignment.iter().enumerate() {
            weights[parent as usize] += level_weights[l + 1][child];
        }
        level_weights[l] = weights;
        child_parent[l] = clustering.assignment.clone();
        level_centroids[l] = clustering.centroids;
    }

    // Assign ids level by level, top to bottom.
    let mut first_id_of_level = vec![0u32; depth];
    let mut next = 0u32;
    for l in 0..depth {
        first_id_of_level[l] = next;
        next += shape.level_sizes[l] as u32;
    }

    let mut nodes = Vec::with_capacity(next as usize);
    for l in 0..depth {
        let centroids = &level_centroids[l];
        for j in 0..shape.level_sizes[l] {
            let parent = if l == 0 {
                None
            } else {
                Some(first_id_of_level[l - 1] + child_parent[l - 1][j])
            };
            let is_leaf = l == depth - 1;
            let node_members = if is_leaf {
                let mut m: Vec<u32> = members[j].iter().map(|&x| x as u32).collect();
                m.sort_unstable();
                m
            } else {
                Vec::new()
            };
            let label = if is_leaf {
                format!("leaf-{j}")
            } else if l == 0 {
                "root".to_string()
            } else {
                format!("level{}-cluster{}", l + 1, j)
            };
            nodes.push(TaxoNode {
                id: first_id_of_level[l] + j as u32,
                level: (l + 1) as u32,
                parent,
                centroid: centroids.row(j).to_vec(),
                label,
                summary: String::new(),
                members: node_members,
            });
        }
    }

    let tree = TaxonomyTree {
        depth: depth as u32,
        level_sizes: shape.level_sizes.clone(),
        nodes,
    };
    tree.validate()?;
    Ok(tree)
}

/// Cophenetic distance matrix over leaf clusters (leaf-id order): tree-edge
/// hops between leaves, i.e. `2 * (depth - level(lca))`.
pub fn cophenetic_matrix(tree: &TaxonomyTree) -> Matrix {
    let leaves: Vec<&TaxoNode> = tree.leaves().collect();
    let k = leaves.len();
    let by_id: BTreeMap<u32, &TaxoNode> = tree.nodes.iter().map(|n| (n.id, n)).collect();

    // Ancestor chain of each leaf, from the leaf's parent up to the root.
    let chains: Vec<Vec<u32>> = leaves
        .iter()
        .map(|leaf| {
            let mut chain = Vec::new();
            let mut cur = leaf.parent;
            while let Some(pid) = cur {
                chain.push(pid);
                cur = by_id[&pid].parent;
            }
            chain
        })
        .collect();

    let mut d = Matrix::zeros(k, k);
    for i in 0..k {
        for j in (i + 1)..k {
            // Deepest common ancestor: chains end at the root, so compare
            // from the back.
            let a = &chains[i];
            let b = &chains[j];
            let mut common = 0usize;
            while common < a.len()
                && common < b.len()
                && a[a.len() - 1 - common] == b[b.len() - 1 - common]
            {
                common += 1;
            }
            let lca_id = a[a.len() - common];
            let lca_level = by_id[&lca_id].level;
            let dist = 2.0 * (tree.depth - lca_level) as f64;
            d.set(i, j, dist);
            d.set(j, i, dist);
        }
    }
    d
}

// ---------------------------------------------------------------------------
// Canonical JSON persistence
// ---------------------------------------------------------------------------

use serde_json::{json, Map, Value};

fn node_to_value(node: &TaxoNode) -> Value {
    // serde_json maps are BTree-backed, so keys come out sorted; members are
    // stored sorted; together with id-sorted nodes this makes equal trees
    // serialize byte-identically.
    let mut obj = Map::new();
    obj.insert("id".into(), json!(node.id));
    obj.insert("level".into(), json!(node.level));
    if let Some(p) = node.parent {
        obj.insert("parent".into(), json!(p));
    }
    obj.insert("centroid".into(), json!(node.centroid));
    obj.insert("label".into(), json!(node.label));
    obj.insert("summary".into(), json!(node.summary));
    obj.insert("members".into(), json!(node.members));
    Value::Object(obj)
}

/// Canonical JSON text of a tree.
pub fn taxonomy_to_json(tree: &TaxonomyTree) -> Result<String> {
    tree.validate()?;
    let mut nodes = tree.nodes.clone();
    nodes.sort_by_key(|n| n.id);
    let value = json!({
        "depth": tree.depth,
        "level_sizes": tree.level_sizes,
        "nodes": nodes.iter().map(node_to_value).collect::<Vec<_>>(),
    });
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

pub fn save_taxonomy(tree: &TaxonomyTree, path: &Path) -> Result<()> {
    std::fs::write(path, taxonomy_to_json(tree)?)?;
    Ok(())
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::InvalidTree(format!("missing field `{key}`")))
}

pub fn taxonomy_from_json(text: &str) -> Result<TaxonomyTree> {
    let value: Value = serde_json::from_str(text)?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::InvalidTree("top level is not an object".into()))?;
    let depth = field(obj, "depth")?
        .as_u64()
        .ok_or_else(|| Error::InvalidTree("depth is not an integer".into()))? as u32;
    let level_sizes: Vec<usize> = serde_json::from_value(field(obj, "level_sizes")?.clone())?;
    let raw_nodes = field(obj, "nodes")?
        .as_array()
        .ok_or_else(|| Error::InvalidTree("nodes is not an array".into()))?;
    let mut nodes = Vec::with_capacity(raw_nodes.len());
    for raw in raw_nodes {
        let n = raw
            .as_object()
            .ok_or_else(|| Error::InvalidTree("node is not an object".into()))?;
        nodes.push(TaxoNode {
            id: serde_json::from_value(field(n, "id")?.clone())?,
            level: serde_json::from_value(field(n, "level")?.clone())?,
            parent: match n.get("parent") {
                Some(v) => Some(serde_json::from_value(v.clone())?),
                None => None,
            },
            centroid: serde_json::from_value(field(n, "centroid")?.clone())?,
            label: serde_json::from_value(field(n, "label")?.clone())?,
            summary: serde_json::from_value(field(n, "summary")?.clone())?,
            members: serde_json::from_value(field(n, "members")?.clone())?,
        });
    }
    nodes.sort_by_key(|n| n.id);
    let tree = TaxonomyTree {
        depth,
        level_sizes,
        nodes,
    };
    tree.validate()?;
    Ok(tree)
}

pub fn load_taxonomy(path: &Path) -> Result<TaxonomyTree> {
    taxonomy_from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    /// A valid tree of the given shape over random leaf centroids.
    pub(crate) fn random_tree(shape: &[usize], nodes_per_leaf: usize, seed: u64) -> TaxonomyTree {
        let shape = TreeShape::new(shape.to_vec()).unwrap();
        let k = shape.leaf_count();
        let mut r = rng::stream(seed, &[0x33]);
        let n = k * nodes_per_leaf;
        let d = 3;
        let mut assignment = vec![0u32; n];
        for (i, a) in assignment.iter_mut().enumerate() {
            *a = (i % k) as u32;
        }
        let mut centroids = Matrix::zeros(k, d);
        for v in centroids.data_mut() {
            *v = r.random_range(-10.0..10.0);
        }
        let leaf = ClusterAssignment::new(assignment, k, centroids).unwrap();
        build_hierarchy(&leaf, &shape, seed).unwrap()
    }

    #[test]
    fn far_apart_pairs_become_siblings() {
        // Four leaf centroids at the corners of two distant pairs.
        let centroids = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![100.0, 0.0],
            vec![100.0, 1.0],
        ]);
        let leaf = ClusterAssignment::new(vec![0, 1, 2, 3], 4, centroids).unwrap();
        let shape = TreeShape::new(vec![1, 2, 4]).unwrap();
        let tree = build_hierarchy(&leaf, &shape, 0).unwrap();
        let leaves: Vec<&TaxoNode> = tree.leaves().collect();
        assert_eq!(leaves[0].parent, leaves[1].parent);
        assert_eq!(leaves[2].parent, leaves[3].parent);
        assert_ne!(leaves[0].parent, leaves[2].parent);
    }

    #[test]
    fn flat_shape_gives_star_tree() {
        let centroids = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]);
        let leaf = ClusterAssignment::new(vec![0, 1, 2], 3, centroids).unwrap();
        let tree = build_hierarchy(&leaf, &TreeShape::new(vec![1, 3]).unwrap(), 0).unwrap();
        assert_eq!(tree.depth, 2);
        let root = tree.nodes.iter().find(|n| n.parent.is_none()).unwrap();
        for leaf in tree.leaves() {
            assert_eq!(leaf.parent, Some(root.id));
        }
    }

    #[test]
    fn reports_requested_level_sizes() {
        // Citeseer-like shape over synthetic centroids.
        let tree = random_tree(&[1, 6, 62], 2, 42);
        assert_eq!(tree.level_sizes, vec![1, 6, 62]);
        let mut counts = vec![0usize; 3];
        for n in &tree.nodes {
            counts[(n.level - 1) as usize] += 1;
        }
        assert_eq!(counts, vec![1, 6, 62]);
    }

    #[test]
    fn members_union_preserved_at_every_level() {
        let tree = random_tree(&[1, 3, 9, 27], 3, 7);
        for node in &tree.nodes {
            let mine = tree.derived_members(node.id);
            if node.level < tree.depth {
                let mut union = Vec::new();
                for child in tree.children(node.id) {
                    let child_members = tree.derived_members(child.id);
                    // Disjointness.
                    for m in &child_members {
                        assert!(!union.contains(m));
                    }
                    union.extend(child_members);
                }
                union.sort_unstable();
                assert_eq!(mine, union);
            }
        }
        let root = tree.nodes.iter().find(|n| n.parent.is_none()).unwrap();
        assert_eq!(
            tree.derived_members(root.id).len(),
            tree.num_graph_nodes()
        );
    }

    #[test]
    fn cophenetic_siblings_and_cross_pairs() {
        let tree = random_tree(&[1, 2, 4], 2, 9);
        let d = cophenetic_matrix(&tree);
        let leaves: Vec<&TaxoNode> = tree.leaves().collect();
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    assert_eq!(d.get(i, j), 0.0);
                } else if leaves[i].parent == leaves[j].parent {
                    assert_eq!(d.get(i, j), 2.0);
                } else {
                    assert_eq!(d.get(i, j), 4.0);
                }
            }
        }
    }

    /// BFS over the undirected tree graph.
    fn bfs_hops(tree: &TaxonomyTree, from: u32, to: u32) -> usize {
        use std::collections::VecDeque;
        let mut adj: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for n in &tree.nodes {
            if let Some(p) = n.parent {
                adj.entry(p).or_default().push(n.id);
                adj.entry(n.id).or_default().push(p);
            }
        }
        let mut dist: BTreeMap<u32, usize> = BTreeMap::new();
        dist.insert(from, 0);
        let mut q = VecDeque::from([from]);
        while let Some(u) = q.pop_front() {
            if u == to {
                return dist[&u];
            }
            for &v in adj.get(&u).into_iter().flatten() {
                if !dist.contains_key(&v) {
                    dist.insert(v, dist[&u] + 1);
                    q.push_back(v);
                }
            }
        }
        unreachable!("tree is connected");
    }

    #[test]
    fn cophenetic_matches_bfs_oracle_on_random_trees() {
        for seed in 0..5 {
            let tree = random_tree(&[1, 2, 5, 11], 2, 100 + seed);
            let d = cophenetic_matrix(&tree);
            let leaves: Vec<u32> = tree.leaves().map(|l| l.id).collect();
            for i in 0..leaves.len() {
                for j in 0..leaves.len() {
                    let hops = bfs_hops(&tree, leaves[i], leaves[j]);
                    assert_eq!(d.get(i, j), hops as f64, "pair ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn cophenetic_is_ultrametric_with_even_values() {
        for seed in 0..10 {
            let tree = random_tree(&[1, 3, 8], 2, 200 + seed);
            let d = cophenetic_matrix(&tree);
            let k = d.rows();
            for i in 0..k {
                for j in 0..k {
                    let v = d.get(i, j);
                    assert_eq!(v % 2.0, 0.0);
                    assert!(v <= 2.0 * (tree.depth as f64 - 1.0));
                    for l in 0..k {
                        assert!(d.get(i, j) <= d.get(i, l).max(d.get(l, j)));
                    }
                }
            }
        }
    }

    #[test]
    fn roundtrip_identity_and_byte_stability() {
        let tree = random_tree(&[1, 2, 4], 2, 5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        save_taxonomy(&tree, &path).unwrap();
        let loaded = load_taxonomy(&path).unwrap();
        assert_eq!(loaded, tree);

        let again = dir.path().join("t2.json");
        save_taxonomy(&loaded, &again).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&again).unwrap()
        );
    }

    #[test]
    fn roundtrip_many_random_trees() {
        for seed in 0..200u64 {
            let shape: &[usize] = match seed % 4 {
                0 => &[1, 3],
                1 => &[1, 2, 4],
                2 => &[1, 2, 4, 8],
                _ => &[1, 5, 11],
            };
            let tree = random_tree(shape, 1 + (seed as usize % 3), seed);
            let json = taxonomy_to_json(&tree).unwrap();
            let back = taxonomy_from_json(&json).unwrap();
            assert_eq!(back, tree, "seed {seed}");
        }
    }

    #[test]
    fn two_roots_rejected_on_load() {
        let tree = random_tree(&[1, 3], 2, 6);
        let mut json: Value = serde_json::from_str(&taxonomy_to_json(&tree).unwrap()).unwrap();
        // Detach a leaf: a second parentless node.
        let nodes = json["nodes"].as_array_mut().unwrap();
        nodes[1].as_object_mut().unwrap().remove("parent");
        let err = taxonomy_from_json(&serde_json::to_string(&json).unwrap());
        assert!(matches!(err, Err(Error::InvalidTree(msg)) if msg.contains("multiple roots")));
    }

    #[test]
    fn leaf_partition_violation_rejected_on_load() {
        let tree = random_tree(&[1, 3], 2, 8);
        let mut json: Value = serde_json::from_str(&taxonomy_to_json(&tree).unwrap()).unwrap();
        let nodes = json["nodes"].as_array_mut().unwrap();
        // Duplicate a member id across two leaves.
        let first_member = nodes[1]["members"][0].clone();
        nodes[2]["members"][0] = first_member;
        let err = taxonomy_from_json(&serde_json::to_string(&json).unwrap());
        assert!(err.is_err());
    }

    #[test]
    fn weighted_hierarchy_pulls_parents_toward_heavy_leaves() {
        // Three leaves on a line; the middle one joins the far-left leaf
        // unweighted, but a large membership on the right pulls the split.
        let centroids = Matrix::from_rows(&[vec![0.0], vec![1.1], vec![2.0], vec![50.0]]);
        let sizes = [1usize, 1, 200, 1];
        let n: usize = sizes.iter().sum();
        let mut assignment = Vec::with_capacity(n);
        for (c, &s) in sizes.iter().enumerate() {
            assignment.extend(std::iter::repeat_n(c as u32, s));
        }
        let leaf = ClusterAssignment::new(assignment, 4, centroids).unwrap();
        let shape = TreeShape::new(vec![1, 2, 4]).unwrap();
        let unweighted = build_hierarchy(&leaf, &shape, 3).unwrap();
        let weighted = build_hierarchy_weighted(&leaf, &shape, 3).unwrap();
        for tree in [&unweighted, &weighted] {
            tree.validate().unwrap();
            assert_eq!(tree.level_sizes, vec![1, 2, 4]);
        }
        // The heavy leaf dominates its parent centroid in the weighted tree.
        let heavy_leaf = weighted.leaves().nth(2).unwrap();
        let parent = weighted.node(heavy_leaf.parent.unwrap()).unwrap();
        assert!((parent.centroid[0] - 2.0).abs() < 0.1, "parent at {}", parent.centroid[0]);
    }

    #[test]
    fn refit_rescales_intermediate_levels() {
        let shape = TreeShape::new(vec![1, 4, 16]).unwrap();
        let refit = shape.refit(20).unwrap();
        assert_eq!(refit.level_sizes, vec![1, 5, 20]);
        let shrunk = shape.refit(8).unwrap();
        assert_eq!(shrunk.level_sizes, vec![1, 2, 8]);
    }

    #[test]
    fn single_leaf_cluster_is_infeasible() {
        let shape = TreeShape::new(vec![1, 4]).unwrap();
        assert!(shape.refit(1).is_err());
        assert!(TreeShape::new(vec![1, 1, 4]).is_err());
        assert!(TreeShape::new(vec![2, 4]).is_err());
    }
}
