//! Tree export: a JSON schema with breadth-first node ids that round-trips
//! to TreeModel and back, and a Graphviz DOT rendering.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VtError};
use crate::harness::report::fmt6;
use crate::subgroup::{TreeModel, TreeNode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum ExportNode {
    Split { id: usize, var_name: String, threshold: f64, children: [usize; 2] },
    Leaf { id: usize, leaf_mean: f64, count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TreeExport {
    columns: Vec<String>,
    depth: usize,
    penalty_used: f64,
    nodes: Vec<ExportNode>,
}

/// Breadth-first renumbering of the model's nodes.
fn export_nodes(model: &TreeModel, columns: &[String]) -> Result<Vec<ExportNode>> {
    let mut order = vec![0usize];
    let mut new_id = vec![usize::MAX; model.nodes.len()];
    new_id[0] = 0;
    let mut head = 0;
    while head < order.len() {
        let old = order[head];
        head += 1;
        if let TreeNode::Split { left, right, .. } = model.nodes[old] {
            for child in [left, right] {
                if child >= model.nodes.len() {
                    return Err(VtError::InvalidInput("tree child out of range".into()));
                }
                new_id[child] = order.len();
                order.push(child);
            }
        }
    }
    order
        .iter()
        .map(|&old| match &model.nodes[old] {
            TreeNode::Split { var, threshold, left, right } => {
                let var_name = columns.get(*var).cloned().ok_or_else(|| {
                    VtError::InvalidInput(format!("split variable {var} has no column name"))
                })?;
                Ok(ExportNode::Split {
                    id: new_id[old],
                    var_name,
                    threshold: *threshold,
                    children: [new_id[*left], new_id[*right]],
                })
            }
            TreeNode::Leaf { mean, count } => {
                Ok(ExportNode::Leaf { id: new_id[old], leaf_mean: *mean, count: *count })
            }
        })
        .collect()
}

/// Serialize a tree to the JSON export schema.
pub fn tree_to_json(model: &TreeModel, columns: &[String]) -> Result<String> {
    let export = TreeExport {
        columns: columns.to_vec(),
        depth: model.depth,
        penalty_used: model.penalty_used,
        nodes: export_nodes(model, columns)?,
    };
    serde_json::to_string_pretty(&export).map_err(VtError::from)
}

/// Parse the JSON export schema back into a model plus its column names.
pub fn tree_from_json(text: &str) -> Result<(TreeModel, Vec<String>)> {
    let export: TreeExport = serde_json::from_str(text)
        .map_err(|e| VtError::InvalidInput(format!("bad tree JSON: {e}")))?;
    let n = export.nodes.len();
    if n == 0 {
        return Err(VtError::InvalidInput("tree JSON with no nodes".into()));
    }
    let mut nodes = vec![TreeNode::Leaf { mean: 0.0, count: 0 }; n];
    let mut seen = vec![false; n];
    for node in &export.nodes {
        let (id, built) = match node {
            ExportNode::Split { id, var_name, threshold, children } => {
                let var = export.columns.iter().position(|c| c == var_name).ok_or_else(|| {
                    VtError::InvalidInput(format!("unknown split variable {var_name}"))
                })?;
                let [left, right] = *children;
                // Breadth-first ids grow toward the leaves, which also rules
                // out cycles.
                if left >= n || right >= n || left <= *id || right <= *id {
                    return Err(VtError::InvalidInput("malformed tree children".into()));
                }
                (*id, TreeNode::Split { var, threshold: *threshold, left, right })
            }
            ExportNode::Leaf { id, leaf_mean, count } => {
                (*id, TreeNode::Leaf { mean: *leaf_mean, count: *count })
            }
        };
        if id >= n || seen[id] {
            return Err(VtError::InvalidInput("malformed tree node ids".into()));
        }
        seen[id] = true;
        nodes[id] = built;
    }
    Ok((
        TreeModel { nodes, depth: export.depth, penalty_used: export.penalty_used },
        export.columns,
    ))
}

/// Graphviz DOT rendering: one node per tree node, edges labeled with the
/// split condition.
pub fn tree_to_dot(model: &TreeModel, columns: &[String]) -> Result<String> {
    let nodes = export_nodes(model, columns)?;
    let mut out = String::from("digraph subgroups {\n  node [shape=box];\n");
    for node in &nodes {
        match node {
            ExportNode::Split { id, var_name, threshold, children } => {
                out.push_str(&format!("  n{id} [label=\"{var_name}\"];\n"));
                let t = fmt6(*threshold);
                out.push_str(&format!("  n{id} -> n{} [label=\"≤ {t}\"];\n", children[0]));
                out.push_str(&format!("  n{id} -> n{} [label=\"> {t}\"];\n", children[1]));
            }
            ExportNode::Leaf { id, leaf_mean, count } => {
                out.push_str(&format!(
                    "  n{id} [label=\"mean {}\\nn={count}\"];\n",
                    fmt6(*leaf_mean)
                ));
            }
        }
    }
    out.push_str("}\n");
    Ok(out)
}
