use crate::bitcube::BinaryMatrix;
use crate::error::{check_dim, Result};

use super::build::{fit_node, free_mask, inherit};
use super::{reconstruction_error, CubeTree, Restriction};
use crate::subcube::Subcube;

/// Refit of a node that lost all its members: keep the coordinates it
/// restricted before where the new parent leaves them free, fill up with the
/// lowest free indices, and keep the old center values.
fn refit_empty(
    old: &Subcube,
    old_local: usize,
    parent: &Subcube,
    restriction: Restriction,
) -> Result<(Subcube, Vec<usize>)> {
    let free = free_mask(parent);
    let available = free.count_ones();
    let budget = match restriction {
        Restriction::Fixed { q } => q.min(available),
        Restriction::KeepFraction { .. } => old_local.min(available),
    };
    let mut local: Vec<usize> = free
        .ones()
        .filter(|&s| old.is_restricted(s))
        .take(budget)
        .collect();
    if local.len() < budget {
        let extra: Vec<usize> = free
            .ones()
            .filter(|&s| !old.is_restricted(s))
            .take(budget - local.len())
            .collect();
        local.extend(extra);
    }
    let own = Subcube::new(old.center().clone(), local)?;
    let cube = inherit(Some(parent), &own)?;
    let local = own.restricted().to_vec();
    Ok((cube, local))
}

/// Refits every cube top-down for the current membership.
fn refit(tree: &CubeTree, x: &BinaryMatrix) -> Result<CubeTree> {
    let mut next = tree.clone();
    let restriction = tree.config.restriction;
    // preorder: parents are refit before their children
    for id in 0..next.nodes.len() {
        let parent = next.nodes[id].parent.map(|p| next.nodes[p].cube.clone());
        let node = &next.nodes[id];
        let (cube, local) = if node.members.is_empty() {
            let parent = parent.as_ref().expect("the root holds every point");
            refit_empty(&node.cube, node.local_restricted.len(), parent, restriction)?
        } else {
            fit_node(x, &node.members, parent.as_ref(), restriction)?
        };
        let node = &mut next.nodes[id];
        node.cube = cube;
        node.local_restricted = local;
    }
    Ok(next)
}

/// Sends every point to its best leaf and rebuilds all member sets from the leaves up.
fn reassign(tree: &mut CubeTree, x: &BinaryMatrix) {
    let codes = super::encode(tree, x).expect("dimension checked by caller");
    for node in &mut tree.nodes {
        node.members.clear();
    }
    for (j, &leaf) in codes.iter().enumerate() {
        let mut at = Some(leaf);
        while let Some(id) = at {
            tree.nodes[id].members.push(j);
            at = tree.nodes[id].parent;
        }
    }
    tree.n_points = x.n();
}

/// Lloyd-type refinement; see [`refine_with_history`].
pub fn refine(tree: &CubeTree, x: &BinaryMatrix, iters: usize) -> Result<CubeTree> {
    Ok(refine_with_history(tree, x, iters)?.0)
}

/// Alternates cube refits and point reassignment for at most `iters` rounds.
///
/// Each round (a) holds the clustering fixed and refits every node's cube
/// from the root down, each node choosing among the coordinates its
/// ancestors left free, then (b) moves every point to its best leaf and
/// updates the member sets along the new branch. A round whose refit would
/// raise the total reconstruction error is discarded and ends the
/// refinement, as does a round that changes nothing. The tree's shape is
/// never changed.
///
/// Returns the refined tree and the total reconstruction error before the
/// first round and after each accepted round.
pub fn refine_with_history(
    tree: &CubeTree,
    x: &BinaryMatrix,
    iters: usize,
) -> Result<(CubeTree, Vec<usize>)> {
    check_dim(tree.d, x.d())?;
    let mut current = tree.clone();
    let mut history = vec![reconstruction_error(&current, x)?];
    if iters == 0 {
        return Ok((current, history));
    }
    if current.n_points != x.n() {
        reassign(&mut current, x);
    }
    for _ in 0..iters {
        let mut candidate = refit(&current, x)?;
        let error = reconstruction_error(&candidate, x)?;
        if error > *history.last().expect("nonempty") {
            break;
        }
        reassign(&mut candidate, x);
        if candidate == current {
            break;
        }
        current = candidate;
        history.push(error);
    }
    Ok((current, history))
}
