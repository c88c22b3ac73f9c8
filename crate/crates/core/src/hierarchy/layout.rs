//! Hierarchy → absolute leaf boxes.
//!
//! Relative and center-translation trees are laid out bottom-up: each node
//! is realized in its anchor's frame, with every non-reference child placed
//! by decoding its position vector against the reference child's aggregate.
//! Absolute trees read anchor poses directly. A floor leaf, when present,
//! ends at the origin with angle zero.

use alloc::vec;
use alloc::vec::Vec;

use super::build::{aggregates_from_leaves, hull};
use super::{GroupKind, HierarchyError, LeafRole, Placement, SceneNode, SceneTree};
use crate::geometry::{Obb, Pose};
use crate::relpos::{absolute_pose, decode_center_translation, decode_relpos, DecodeOptions, PositionMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutOptions {
    pub decode: DecodeOptions,
}

impl Default for LayoutOptions {
    fn default() -> Self {
        Self {
            decode: DecodeOptions { snap: true },
        }
    }
}

impl LayoutOptions {
    pub fn exact() -> Self {
        Self {
            decode: DecodeOptions { snap: false },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodePlacement {
    pub path: Vec<usize>,
    pub aggregate: Obb,
}

/// Realized geometry: one box per leaf (pre-order) and one aggregate per node (pre-order).
#[derive(Debug, Clone, PartialEq)]
pub struct TreeLayout {
    pub leaves: Vec<Obb>,
    pub nodes: Vec<NodePlacement>,
}

impl TreeLayout {
    /// Copy of `tree` whose leaves carry the realized poses.
    pub fn apply(&self, tree: &SceneTree) -> SceneTree {
        let mut out = tree.clone();
        let mut next = 0;
        fn go(n: &mut SceneNode, leaves: &[Obb], next: &mut usize) {
            match n {
                SceneNode::Leaf(l) => {
                    let b = leaves[*next];
                    *next += 1;
                    l.placement = Some(Placement {
                        center: b.center,
                        elevation: b.elevation,
                        angle: b.angle,
                    });
                }
                SceneNode::Group(g) => g.children.iter_mut().for_each(|c| go(c, leaves, next)),
            }
        }
        go(&mut out.root, &self.leaves, &mut next);
        out
    }
}

/// Leaf bottoms relative to the node anchor's bottom (floor leaves sit
/// below zero), plus the node's top.
fn elevations(node: &SceneNode) -> (Vec<f64>, f64) {
    match node {
        SceneNode::Leaf(l) => {
            let bottom = if l.role == LeafRole::Floor { -l.size[2] } else { 0.0 };
            (vec![bottom], bottom + l.size[2])
        }
        SceneNode::Group(g) if g.children.is_empty() => (Vec::new(), 0.0),
        SceneNode::Group(g) => {
            let (mut out, t0) = elevations(&g.children[0]);
            let mut top = t0;
            for (i, c) in g.children.iter().enumerate().skip(1) {
                let (e, t) = elevations(c);
                let shift = if g.kind == GroupKind::Support && i == 1 { t0 } else { 0.0 };
                out.extend(e.into_iter().map(|x| x + shift));
                top = top.max(t + shift);
            }
            (out, top)
        }
    }
}

struct Local {
    /// Footprint poses of the leaves in the node's anchor frame.
    leaves: Vec<Pose>,
    agg: Obb,
}

fn local_layout(
    node: &SceneNode,
    mode: PositionMode,
    opts: &LayoutOptions,
    path: &mut Vec<usize>,
) -> Result<Local, HierarchyError> {
    match node {
        SceneNode::Leaf(l) => Ok(Local {
            leaves: vec![Pose::IDENTITY],
            agg: Obb::new([0.0, 0.0], 0.0, l.size, 0.0),
        }),
        SceneNode::Group(g) => {
            if g.children.is_empty() || g.relpos.len() + 1 != g.children.len() {
                return Err(HierarchyError::Structure(alloc::format!(
                    "node at {path:?} has {} children and {} position vectors",
                    g.children.len(),
                    g.relpos.len()
                )));
            }
            path.push(0);
            let first = local_layout(&g.children[0], mode, opts, path)?;
            path.pop();
            let reference = first.agg;
            let mut aggs = vec![reference];
            let mut leaves = first.leaves;
            for (i, c) in g.children.iter().enumerate().skip(1) {
                path.push(i);
                let child = local_layout(c, mode, opts, path)?;
                let rp = &g.relpos[i - 1];
                let placed = match mode {
                    PositionMode::CenterTranslation => decode_center_translation(&reference, rp, child.agg.size),
                    _ => decode_relpos(&reference, rp, child.agg.size, opts.decode),
                }
                .map_err(|source| HierarchyError::Placement {
                    path: path.clone(),
                    source,
                })?;
                path.pop();
                let tf = placed.pose().compose(&child.agg.pose().inverse());
                aggs.push(child.agg.transformed(&tf));
                leaves.extend(child.leaves.iter().map(|p| tf.compose(p)));
            }
            Ok(Local {
                leaves,
                agg: hull(&aggs, 0.0),
            })
        }
    }
}

fn absolute_layout(node: &SceneNode, anchor: Pose, out: &mut Vec<Pose>) {
    match node {
        SceneNode::Leaf(_) => out.push(anchor),
        SceneNode::Group(g) => {
            absolute_layout(&g.children[0], anchor, out);
            for (c, rp) in g.children[1..].iter().zip(&g.relpos) {
                absolute_layout(c, absolute_pose(rp), out);
            }
        }
    }
}

/// Realizes a hierarchy into absolute leaf boxes.
///
/// Existing leaf poses are ignored; only sizes, node kinds and position
/// vectors are read.
pub fn realize_layout(tree: &SceneTree, opts: &LayoutOptions) -> Result<TreeLayout, HierarchyError> {
    let leaves_data = tree.leaves();
    let (bottoms, _) = elevations(&tree.root);
    let mut poses = match tree.position_mode {
        PositionMode::Absolute => {
            let mut bad = None;
            tree.root.visit(&mut |p, n| {
                if let Some(g) = n.as_group() {
                    if bad.is_none() && (g.children.is_empty() || g.relpos.len() + 1 != g.children.len()) {
                        bad = Some(p.to_vec());
                    }
                }
            });
            if let Some(path) = bad {
                return Err(HierarchyError::Structure(alloc::format!(
                    "node at {path:?} has mismatched children and position vectors"
                )));
            }
            let mut out = Vec::with_capacity(leaves_data.len());
            absolute_layout(&tree.root, Pose::IDENTITY, &mut out);
            out
        }
        mode => {
            let mut path = Vec::new();
            local_layout(&tree.root, mode, opts, &mut path)?.leaves
        }
    };
    if tree.position_mode != PositionMode::Absolute {
        if let Some(fi) = leaves_data.iter().position(|l| l.role == LeafRole::Floor) {
            let to_floor = poses[fi].inverse();
            for p in poses.iter_mut() {
                *p = to_floor.compose(p);
            }
        }
    }
    let leaves: Vec<Obb> = poses
        .iter()
        .zip(&leaves_data)
        .zip(&bottoms)
        .map(|((p, l), &e)| Obb::new(p.translation, e, l.size, p.angle))
        .collect();
    let aggs = aggregates_from_leaves(&tree.root, &leaves);
    let mut paths = Vec::with_capacity(aggs.len());
    tree.root.visit(&mut |p, _| paths.push(p.to_vec()));
    let nodes = paths
        .into_iter()
        .zip(aggs)
        .map(|(path, aggregate)| NodePlacement { path, aggregate })
        .collect();
    Ok(TreeLayout { leaves, nodes })
}
