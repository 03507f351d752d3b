use crate::bitcube::{BinaryMatrix, BitVector};
use crate::clustering::two_means_with;
use crate::error::{Error, Result};
use crate::seed;
use crate::subcube::{coordinate_stats, Points, Subcube};

use super::{CubeNode, CubeTree, Restriction, TrainConfig};

/// A node under construction, before preorder ids are assigned.
struct Draft {
    depth: usize,
    cube: Subcube,
    local: Vec<usize>,
    members: Vec<usize>,
    children: Vec<Draft>,
}

/// Coordinates left free by `cube`.
pub(super) fn free_mask(cube: &Subcube) -> BitVector {
    let d = cube.d();
    let words = cube.mask().as_words().iter().map(|w| !w).collect();
    BitVector::from_words(d, words)
}

/// Merges a node's own restriction into its parent's cube: parent values on
/// the parent's restricted coordinates, `local` values everywhere else.
pub(super) fn inherit(parent: Option<&Subcube>, local: &Subcube) -> Result<Subcube> {
    let Some(parent) = parent else {
        return Ok(local.clone());
    };
    let pm = parent.mask().as_words();
    let center = parent
        .center()
        .as_words()
        .iter()
        .zip(local.center().as_words())
        .zip(pm)
        .map(|((&p, &c), &m)| (p & m) | (c & !m))
        .collect();
    let mut restricted = parent.restricted().to_vec();
    restricted.extend_from_slice(local.restricted());
    Subcube::new(BitVector::from_words(parent.d(), center), restricted)
}

/// Fits the subcube of a nonempty member set over the parent's free coordinates.
pub(super) fn fit_node(
    x: &BinaryMatrix,
    members: &[usize],
    parent: Option<&Subcube>,
    restriction: Restriction,
) -> Result<(Subcube, Vec<usize>)> {
    let active = match parent {
        Some(p) => free_mask(p),
        None => BitVector::filled(x.d(), true),
    };
    let stats = coordinate_stats(Points::subset(x, members), &active)?;
    let r = match restriction {
        Restriction::Fixed { q } => q.min(active.count_ones()),
        Restriction::KeepFraction { tau } => stats.adaptive_count(tau)?,
    };
    let local = stats.restrict(r)?;
    let cube = inherit(parent, &local)?;
    Ok((cube, local.restricted().to_vec()))
}

fn grow(x: &BinaryMatrix, config: &TrainConfig, node: &mut Draft, node_seed: u64) -> Result<()> {
    if node.depth >= config.depth
        || node.members.len() < config.min_node_size.max(2)
        || node.cube.dim() == 0
    {
        return Ok(());
    }
    let free = free_mask(&node.cube);
    let mut rng = seed::rng(node_seed);
    let split = match two_means_with(
        Points::subset(x, &node.members),
        &free,
        &mut rng,
        config.max_iter,
    ) {
        Ok(a) => a,
        Err(Error::Degenerate { .. }) => return Ok(()),
        Err(e) => return Err(e),
    };
    let mut parts = [Vec::new(), Vec::new()];
    for (&m, &l) in node.members.iter().zip(&split.labels) {
        parts[usize::from(l)].push(m);
    }
    let mut children = Vec::with_capacity(2);
    for members in parts {
        let (cube, local) = fit_node(x, &members, Some(&node.cube), config.restriction)?;
        children.push(Draft {
            depth: node.depth + 1,
            cube,
            local,
            members,
            children: Vec::new(),
        });
    }
    let (left, right) = children.split_at_mut(1);
    let (a, b) = rayon::join(
        || grow(x, config, &mut left[0], seed::split(node_seed, 0)),
        || grow(x, config, &mut right[0], seed::split(node_seed, 1)),
    );
    a?;
    b?;
    node.children = children;
    Ok(())
}

fn flatten(draft: Draft, parent: Option<usize>, out: &mut Vec<CubeNode>) {
    let id = out.len();
    out.push(CubeNode {
        id,
        depth: draft.depth,
        parent,
        children: Vec::new(),
        cube: draft.cube,
        local_restricted: draft.local,
        members: draft.members,
    });
    for child in draft.children {
        let child_id = out.len();
        out[id].children.push(child_id);
        flatten(child, Some(id), out);
    }
}

/// Builds a tree top-down.
///
/// The root restricts the best-fit coordinates of the whole data set. Every
/// node above the depth limit that has enough members and at least one free
/// coordinate is split by two-means over its free coordinates; each child
/// then restricts more of the parent's free coordinates, fitted on its own
/// members, and inherits the parent's restricted values. A node that cannot
/// be split becomes a leaf early. Sibling subtrees are grown in parallel
/// from independent seeds, so the result depends only on `(x, config)`.
pub fn build_tree(x: &BinaryMatrix, config: &TrainConfig) -> Result<CubeTree> {
    config.validate()?;
    if x.n() == 0 {
        return Err(Error::EmptyInput(
            "cannot build a tree from a matrix with no points",
        ));
    }
    let members: Vec<usize> = (0..x.n()).collect();
    let (cube, local) = fit_node(x, &members, None, config.restriction)?;
    let mut root = Draft {
        depth: 1,
        cube,
        local,
        members,
        children: Vec::new(),
    };
    grow(x, config, &mut root, config.seed)?;
    let mut nodes = Vec::new();
    flatten(root, None, &mut nodes);
    CubeTree::from_nodes(x.d(), config.clone(), nodes, x.n())
}
