use std::fmt;

use super::{CubeTree, NodeId, Restriction};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    /// Parent/child links, ids or child counts are inconsistent.
    Structure(String),
    /// The node's depth is not its parent's plus one, or exceeds the limit.
    Depth { depth: usize, expected: usize },
    /// Coordinates restricted by the parent but free here.
    NotNested { missing: Vec<usize> },
    /// Coordinates restricted by the parent where the centers disagree.
    CenterMismatch { coordinates: Vec<usize> },
    /// The restricted count differs from `min(depth * q, d)`.
    RestrictedCount { found: usize, expected: usize },
    /// `local_restricted` is not the cumulative set minus the parent's.
    LocalMismatch,
    /// The children's members do not partition this node's members.
    Partition(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub node: NodeId,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {}: ", self.node)?;
        match &self.kind {
            ViolationKind::Structure(msg) => write!(f, "{msg}"),
            ViolationKind::Depth { depth, expected } => {
                write!(f, "depth {depth}, expected {expected}")
            }
            ViolationKind::NotNested { missing } => {
                write!(f, "parent-restricted coordinates {missing:?} are free")
            }
            ViolationKind::CenterMismatch { coordinates } => {
                write!(f, "center disagrees with parent at {coordinates:?}")
            }
            ViolationKind::RestrictedCount { found, expected } => {
                write!(f, "{found} restricted coordinates, expected {expected}")
            }
            ViolationKind::LocalMismatch => {
                write!(
                    f,
                    "local restriction does not match cumulative minus parent"
                )
            }
            ViolationKind::Partition(msg) => write!(f, "{msg}"),
        }
    }
}

fn is_strictly_sorted(v: &[usize]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

/// Checks nesting, center agreement, the restriction schedule and the
/// partition property. An empty result means the tree is valid.
pub fn validate(tree: &CubeTree) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut report = |node, kind| out.push(Violation { node, kind });
    let nodes = tree.nodes();
    let d = tree.d();

    for (id, node) in nodes.iter().enumerate() {
        if node.id != id {
            report(
                id,
                ViolationKind::Structure(format!("stored id {} at position {id}", node.id)),
            );
        }
        if !(node.children.is_empty() || node.children.len() == 2) {
            report(
                id,
                ViolationKind::Structure(format!("{} children", node.children.len())),
            );
        }
        for &c in &node.children {
            if c <= id || c >= nodes.len() || nodes[c].parent != Some(id) {
                report(
                    id,
                    ViolationKind::Structure(format!("bad child link to {c}")),
                );
            }
        }
        if node.depth > tree.config().depth {
            report(
                id,
                ViolationKind::Depth {
                    depth: node.depth,
                    expected: tree.config().depth,
                },
            );
        }

        let parent = match node.parent {
            None => {
                if id != 0 {
                    report(
                        id,
                        ViolationKind::Structure("non-root node without parent".into()),
                    );
                }
                if node.depth != 1 {
                    report(
                        id,
                        ViolationKind::Depth {
                            depth: node.depth,
                            expected: 1,
                        },
                    );
                }
                None
            }
            Some(p) if p >= id => {
                report(
                    id,
                    ViolationKind::Structure(format!("parent {p} does not precede node")),
                );
                None
            }
            Some(p) => {
                if !nodes[p].children.contains(&id) {
                    report(
                        id,
                        ViolationKind::Structure(format!("parent {p} does not list node")),
                    );
                }
                Some(&nodes[p])
            }
        };

        if let Some(parent) = parent {
            if node.depth != parent.depth + 1 {
                report(
                    id,
                    ViolationKind::Depth {
                        depth: node.depth,
                        expected: parent.depth + 1,
                    },
                );
            }
            let missing: Vec<usize> = parent
                .cube
                .restricted()
                .iter()
                .copied()
                .filter(|&s| !node.cube.is_restricted(s))
                .collect();
            if !missing.is_empty() {
                report(id, ViolationKind::NotNested { missing });
            }
            let coordinates: Vec<usize> = parent
                .cube
                .restricted()
                .iter()
                .copied()
                .filter(|&s| node.cube.center().get(s) != parent.cube.center().get(s))
                .collect();
            if !coordinates.is_empty() {
                report(id, ViolationKind::CenterMismatch { coordinates });
            }
        }

        let own: Vec<usize> = node
            .cube
            .restricted()
            .iter()
            .copied()
            .filter(|&s| parent.is_none_or(|p| !p.cube.is_restricted(s)))
            .collect();
        if own != node.local_restricted {
            report(id, ViolationKind::LocalMismatch);
        }

        if let Restriction::Fixed { q } = tree.config().restriction {
            let expected = node.depth.saturating_mul(q).min(d);
            let found = node.cube.restricted().len();
            if found != expected {
                report(id, ViolationKind::RestrictedCount { found, expected });
            }
        }

        if tree.has_members() {
            if !is_strictly_sorted(&node.members) {
                report(
                    id,
                    ViolationKind::Partition("members not sorted and unique".into()),
                );
            }
            if id == 0
                && (node.members.len() != tree.n_points()
                    || node.members.iter().enumerate().any(|(i, &m)| i != m))
            {
                report(
                    id,
                    ViolationKind::Partition("root does not hold every point".into()),
                );
            }
            if node.children.len() == 2 && node.children.iter().all(|&c| c < nodes.len()) {
                let mut union: Vec<usize> = node
                    .children
                    .iter()
                    .flat_map(|&c| nodes[c].members.iter().copied())
                    .collect();
                union.sort_unstable();
                if union != node.members {
                    report(
                        id,
                        ViolationKind::Partition("children do not partition members".into()),
                    );
                }
            }
        }
    }
    out
}
