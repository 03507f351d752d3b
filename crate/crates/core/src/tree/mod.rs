//! Trees of nested subcubes.
//!
//! Node `i` of a tree owns a subcube whose restricted set contains every
//! coordinate restricted by its ancestors, with the same center values there,
//! plus the coordinates it fixes itself. Together with a nested clustering of
//! the training points this is a multiscale code for binary data: the leaf a
//! point falls in carries every restricted value along its branch.
//!
//! Nodes live in an arena indexed by preorder position, so a node id is
//! always larger than its parent's and leaves appear in id order during a
//! depth-first walk.

mod build;
mod codec;
mod refine;
mod validate;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitcube::{BinaryMatrix, BitVecRef, BitVector};
use crate::error::{check_dim, Error, Result};
use crate::subcube::Subcube;

pub use build::build_tree;
pub use codec::{load, save, to_json, write_json, FORMAT_VERSION, MAGIC};
pub use refine::{refine, refine_with_history};
pub use validate::{validate, Violation, ViolationKind};

pub type NodeId = usize;

/// How many coordinates each node restricts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Restriction {
    /// Restrict `q` more coordinates per level, or all remaining ones if fewer are left.
    Fixed { q: usize },
    /// Leave free the fewest coordinates carrying at least this fraction of
    /// the node's discrepancy energy; restrict the rest.
    KeepFraction { tau: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub restriction: Restriction,
    /// Maximum depth `l`; the root is at depth 1.
    pub depth: usize,
    pub seed: u64,
    pub refine_iters: usize,
    /// Nodes with fewer members are not split.
    pub min_node_size: usize,
    /// Lloyd iteration cap for each two-means split.
    pub max_iter: usize,
}

impl TrainConfig {
    pub fn fixed(q: usize, depth: usize) -> Self {
        TrainConfig {
            restriction: Restriction::Fixed { q },
            depth,
            seed: 0,
            refine_iters: 0,
            min_node_size: 2,
            max_iter: crate::clustering::DEFAULT_MAX_ITER,
        }
    }

    pub fn keep_fraction(tau: f64, depth: usize) -> Self {
        TrainConfig {
            restriction: Restriction::KeepFraction { tau },
            ..TrainConfig::fixed(1, depth)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.restriction {
            Restriction::Fixed { q: 0 } => return Err(Error::param("q must be at least 1")),
            Restriction::KeepFraction { tau } if !(0.0..=1.0).contains(&tau) => {
                return Err(Error::param(format!("keep fraction {tau} outside [0, 1]")))
            }
            _ => {}
        }
        if self.depth == 0 {
            return Err(Error::param("depth must be at least 1"));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CubeNode {
    pub id: NodeId,
    /// Depth in the tree, 1 at the root.
    pub depth: usize,
    pub parent: Option<NodeId>,
    /// Either empty (leaf) or two children.
    pub children: Vec<NodeId>,
    /// Cumulative cube: every coordinate restricted on the path from the root.
    pub cube: Subcube,
    /// Coordinates newly restricted at this node, sorted.
    pub local_restricted: Vec<usize>,
    /// Training points in this node's cluster, sorted. Empty when the tree
    /// was stored without membership.
    pub members: Vec<usize>,
}

impl CubeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Clone, PartialEq)]
pub struct CubeTree {
    d: usize,
    config: TrainConfig,
    nodes: Vec<CubeNode>,
    leaves: Vec<NodeId>,
    /// Number of training points the membership refers to; 0 without membership.
    n_points: usize,
}

impl fmt::Debug for CubeTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CubeTree")
            .field("d", &self.d)
            .field("nodes", &self.nodes.len())
            .field("leaves", &self.leaves.len())
            .field("n_points", &self.n_points)
            .finish()
    }
}

impl CubeTree {
    /// Assembles a tree from preorder nodes. Structural consistency is the
    /// caller's business; see [`validate`].
    pub fn from_nodes(
        d: usize,
        config: TrainConfig,
        nodes: Vec<CubeNode>,
        n_points: usize,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::EmptyInput("a tree needs a root node"));
        }
        for node in &nodes {
            check_dim(d, node.cube.d())?;
        }
        let leaves = nodes.iter().filter(|n| n.is_leaf()).map(|n| n.id).collect();
        Ok(CubeTree {
            d,
            config,
            nodes,
            leaves,
            n_points,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn root(&self) -> &CubeNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: NodeId) -> &CubeNode {
        &self.nodes[id]
    }

    /// Mutable access for manual edits. Run [`validate`] afterwards.
    pub fn node_mut(&mut self, id: NodeId) -> &mut CubeNode {
        &mut self.nodes[id]
    }

    pub fn nodes(&self) -> &[CubeNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf ids in increasing order.
    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    /// Deepest node depth.
    pub fn height(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn has_members(&self) -> bool {
        self.n_points > 0
    }

    /// Drops the training membership, keeping only the dictionary.
    pub fn strip_members(&mut self) {
        for node in &mut self.nodes {
            node.members = Vec::new();
        }
        self.n_points = 0;
    }

    /// Best leaf and its distance, by depth-first search with pruning.
    ///
    /// The distance to a node's cube never exceeds the distance to any cube
    /// below it, so a subtree whose root is already at least as far as the
    /// best leaf found so far cannot hold a strictly better leaf. Leaves are
    /// reached in id order, which keeps the smaller id on ties.
    fn nearest_leaf(&self, x: &[u64]) -> (NodeId, usize) {
        let mut best = (NodeId::MAX, usize::MAX);
        let mut stack = vec![0];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let dist = node.cube.distance_unchecked(x);
            if dist >= best.1 {
                continue;
            }
            if node.is_leaf() {
                best = (id, dist);
            } else {
                stack.extend(node.children.iter().rev());
            }
        }
        best
    }
}

/// The leaf whose cube is closest to `x`; ties go to the smaller leaf id.
pub fn assign_leaf(tree: &CubeTree, x: BitVecRef<'_>) -> Result<NodeId> {
    Ok(assign_leaf_with_distance(tree, x)?.0)
}

/// [`assign_leaf`] together with the distance to the chosen leaf cube.
pub fn assign_leaf_with_distance(tree: &CubeTree, x: BitVecRef<'_>) -> Result<(NodeId, usize)> {
    check_dim(tree.d, x.len())?;
    Ok(tree.nearest_leaf(x.as_words()))
}

/// Leaf assignment of every column.
pub fn encode(tree: &CubeTree, x: &BinaryMatrix) -> Result<Vec<NodeId>> {
    check_dim(tree.d, x.d())?;
    Ok((0..x.n())
        .into_par_iter()
        .map(|j| tree.nearest_leaf(x.column(j).as_words()).0)
        .collect())
}

fn project(cube: &Subcube, x: &[u64], out: &mut [u64]) {
    let center = cube.center().as_words();
    let mask = cube.mask().as_words();
    for (((o, &xi), &c), &m) in out.iter_mut().zip(x).zip(center).zip(mask) {
        *o = (c & m) | (xi & !m);
    }
}

/// Projects `x` onto its best leaf cube: restricted coordinates take the
/// leaf center's values and free coordinates pass through unchanged.
pub fn reconstruct(tree: &CubeTree, x: BitVecRef<'_>) -> Result<BitVector> {
    let leaf = assign_leaf(tree, x)?;
    let mut out = vec![0u64; x.as_words().len()];
    project(&tree.nodes[leaf].cube, x.as_words(), &mut out);
    Ok(BitVector::from_words(tree.d, out))
}

/// [`reconstruct`] applied to every column.
pub fn reconstruct_matrix(tree: &CubeTree, x: &BinaryMatrix) -> Result<BinaryMatrix> {
    let codes = encode(tree, x)?;
    let mut out = x.clone();
    for (j, &leaf) in codes.iter().enumerate() {
        let cube = &tree.nodes[leaf].cube;
        let src = x.column(j).as_words();
        project(cube, src, out.column_words_mut(j));
    }
    Ok(out)
}

/// Total Hamming distance between the columns of `x` and their reconstructions.
pub fn reconstruction_error(tree: &CubeTree, x: &BinaryMatrix) -> Result<usize> {
    check_dim(tree.d, x.d())?;
    Ok((0..x.n())
        .into_par_iter()
        .map(|j| tree.nearest_leaf(x.column(j).as_words()).1)
        .sum())
}
