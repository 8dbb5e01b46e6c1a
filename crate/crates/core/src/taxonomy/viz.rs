//! Taxonomy export for external rendering: Graphviz DOT and a nested JSON
//! form suitable for radial layouts. Output ordering is deterministic.

use super::TaxonomyTree;
use crate::error::{Error, Result};
use serde_json::{json, Map, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VizFormat {
    Dot,
    RadialJson,
}

impl std::str::FromStr for VizFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(VizFormat::Dot),
            "radial-json" => Ok(VizFormat::RadialJson),
            other => Err(Error::InvalidConfig(format!("unknown viz format `{other}`"))),
        }
    }
}

fn escape_dot(label: &str) -> String {
    label.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz digraph, one node per taxonomy node, edges parent to child.
pub fn emit_dot(tree: &TaxonomyTree) -> Result<String> {
    tree.validate()?;
    let mut out = String::from("digraph taxonomy {\n  rankdir=TB;\n");
    let mut nodes = tree.nodes.clone();
    nodes.sort_by_key(|n| n.id);
    for node in &nodes {
        out.push_str(&format!(
            "  n{} [label=\"{}\"];\n",
            node.id,
            escape_dot(&node.label)
        ));
    }
    for node in &nodes {
        if let Some(parent) = node.parent {
            out.push_str(&format!("  n{} -> n{};\n", parent, node.id));
        }
    }
    out.push_str("}\n");
    Ok(out)
}

fn radial_node(tree: &TaxonomyTree, id: u32) -> Value {
    let node = tree.node(id).unwrap();
    let mut obj = Map::new();
    obj.insert("id".into(), json!(node.id));
    obj.insert("label".into(), json!(node.label));
    obj.insert("summary".into(), json!(node.summary));
    obj.insert("size".into(), json!(tree.derived_members(id).len()));
    let children = tree.children(id);
    if !children.is_empty() {
        obj.insert(
            "children".into(),
            Value::Array(children.iter().map(|c| radial_node(tree, c.id)).collect()),
        );
    }
    Value::Object(obj)
}

/// Nested JSON rooted at the tree root; leaves have no `children` key.
pub fn emit_radial_json(tree: &TaxonomyTree) -> Result<String> {
    tree.validate()?;
    let root = tree
        .nodes
        .iter()
        .find(|n| n.parent.is_none())
        .expect("validated tree has a root");
    Ok(serde_json::to_string_pretty(&radial_node(tree, root.id))? + "\n")
}

#[cfg(test)]
mod tests {
    use super::super::tests::random_tree;
    use super::super::{TaxoNode, TaxonomyTree};
    use super::*;

    #[test]
    fn dot_counts_nodes_and_edges() {
        let tree = random_tree(&[1, 2, 4], 2, 1);
        let dot = emit_dot(&tree).unwrap();
        assert_eq!(dot.matches("[label=").count(), 7);
        assert_eq!(dot.matches("->").count(), 6);
    }

    #[test]
    fn dot_escapes_quotes_in_labels() {
        let mut tree = random_tree(&[1, 2], 2, 2);
        tree.nodes[1].label = "A\"B".to_string();
        let dot = emit_dot(&tree).unwrap();
        assert!(dot.contains("A\\\"B"));
    }

    #[test]
    fn radial_json_of_root_only_tree_has_no_children() {
        let tree = TaxonomyTree {
            depth: 1,
            level_sizes: vec![1],
            nodes: vec![TaxoNode {
                id: 0,
                level: 1,
                parent: None,
                centroid: vec![0.0],
                label: "root".into(),
                summary: String::new(),
                members: vec![0, 1, 2],
            }],
        };
        let json = emit_radial_json(&tree).unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(value.get("children").is_none());
        assert_eq!(value["size"], 3);
    }

    #[test]
    fn radial_json_nests_by_levels() {
        let tree = random_tree(&[1, 2, 4], 2, 3);
        let value: serde_json::Value =
            serde_json::from_str(&emit_radial_json(&tree).unwrap()).unwrap();
        let children = value["children"].as_array().unwrap();
        assert_eq!(children.len(), 2);
        let grandchildren: usize = children
            .iter()
            .map(|c| c["children"].as_array().unwrap().len())
            .sum();
        assert_eq!(grandchildren, 4);
    }
}
