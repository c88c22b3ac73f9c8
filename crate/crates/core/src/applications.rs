//! Layout-guided generation and hierarchy editing.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{build_scene_graph, graph_kernel, SceneGraph, DEFAULT_WALK_LENGTH};
use crate::geometry::Obb;
use crate::hierarchy::{
    aggregate_obb, build_hierarchy, realize_layout, reencode_tree, validate_tree, BuildConfig, GroupKind, HierarchyError,
    LayoutOptions, LeafRole, Placement, RelationConfig, SceneNode, SceneTree, WallRootMode,
};
use crate::model::{decode_free_batch, evaluate, prepare_tree, DecodeLimits, Latent, ModelError, ModelParams};
use crate::relpos::{PositionMode, RelPos28};
use crate::scene::{Room, RoomType, Scene, SceneObject, Vocabulary};
use crate::synthesis::{realize_placements, PlacedScene, SynthesisError};

/// Height given to every layout box; the decoder regenerates sizes.
pub const LAYOUT_BOX_HEIGHT: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EditError {
    #[error("no node at path {0:?}")]
    InvalidPath(Vec<usize>),
    #[error("node at {0:?} is mandatory and cannot be removed or replaced")]
    Mandatory(Vec<usize>),
    #[error("incompatible donor: {0}")]
    Incompatible(String),
    #[error("the reference (first) child of a node cannot be moved")]
    ReferenceChild,
    #[error("invalid position vector: {0}")]
    InvalidRelpos(String),
    #[error("result has {0} nodes, over the limit")]
    Limit(usize),
    #[error("edited tree fails validation: {0}")]
    Invalid(String),
    #[error("empty layout")]
    EmptyLayout,
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutBox {
    pub center: [f64; 2],
    pub size: [f64; 2],
    pub angle: f64,
}

/// Unlabeled top-view boxes inside a room centered on the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout2D {
    pub width: f64,
    pub depth: f64,
    pub boxes: Vec<LayoutBox>,
}

impl Layout2D {
    /// Traces the object footprints of a placed scene.
    pub fn from_scene(scene: &PlacedScene) -> Self {
        Self {
            width: scene.room.width,
            depth: scene.room.depth,
            boxes: scene
                .placements
                .iter()
                .map(|p| LayoutBox {
                    center: p.obb.center,
                    size: [p.obb.size[0], p.obb.size[1]],
                    angle: p.obb.angle,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutMode {
    /// Decode the posterior mean.
    Mean,
    /// Decode samples around the posterior.
    Sample,
}

/// Lifts a 2D layout to a scene: overlapping boxes stack, the smaller on
/// top of the larger, when the overlap covers at least half the smaller
/// footprint. Every object gets `category`.
pub fn layout_scene(layout: &Layout2D, category: usize, room_type: RoomType) -> Result<Scene, EditError> {
    if layout.boxes.is_empty() {
        return Err(EditError::EmptyLayout);
    }
    let room = Room::new(layout.width, layout.depth, 2.5).map_err(|e| EditError::Invalid(format!("{e}")))?;
    let mut boxes: Vec<Obb> = layout
        .boxes
        .iter()
        .map(|b| Obb::new(b.center, 0.0, [b.size[0], b.size[1], LAYOUT_BOX_HEIGHT], crate::math::normalize_angle(b.angle)))
        .collect();
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[b].footprint_area().total_cmp(&boxes[a].footprint_area()).then(a.cmp(&b)));
    for (rank, &i) in order.iter().enumerate() {
        let mut elev: f64 = 0.0;
        for &j in &order[..rank] {
            let overlap = boxes[i].intersection_area(&boxes[j]);
            if overlap >= 0.5 * boxes[i].footprint_area() {
                elev = elev.max(boxes[j].top());
            }
        }
        boxes[i].elevation = elev;
    }
    Ok(Scene {
        room,
        objects: boxes
            .into_iter()
            .enumerate()
            .map(|(i, obb)| SceneObject {
                id: format!("box{i}"),
                category,
                obb,
            })
            .collect(),
        room_type,
    })
}

/// Generates labeled scenes from an unlabeled layout with the trained
/// model: leaf labels are uniform, the hierarchy is built from the lifted
/// layout, encoded, and decoded from the posterior mean or from samples.
pub fn layout_to_scenes<R: Rng + ?Sized>(
    params: &ModelParams,
    vocab: &Vocabulary,
    layout: &Layout2D,
    n_samples: usize,
    mode: LayoutMode,
    rng: &mut R,
) -> Result<Vec<PlacedScene>, EditError> {
    let cfg = &params.config;
    let placeholder = (0..vocab.len())
        .find(|&c| !vocab.is_structural(c))
        .ok_or_else(|| EditError::Invalid(String::from("vocabulary has no object category")))?;
    let scene = layout_scene(layout, placeholder, RoomType::Custom)?;
    let build = BuildConfig {
        position_mode: cfg.position_mode,
        wall_root_mode: cfg.wall_root_mode,
        ..BuildConfig::default()
    };
    let tree = build_hierarchy(&scene, vocab, &build)?;
    let mut flat = prepare_tree(cfg, &tree)?;
    let uniform = 1.0 / cfg.vocab_len as f64;
    for node in &mut flat.nodes {
        if node.kind.is_none() {
            let role = tree.root.at(&node.path).and_then(SceneNode::as_leaf).map(|l| l.role);
            if role == Some(LeafRole::Object) {
                node.leaf[3..].fill(uniform);
            }
        }
    }
    let out = evaluate(params, &[&flat], &[Latent::Mean])?;
    let mu = out.mu[0].clone();
    let zs: Vec<Vec<f64>> = match mode {
        LayoutMode::Mean => vec![mu],
        LayoutMode::Sample => {
            let sd: Vec<f64> = out.logvar[0].iter().map(|lv| crate::math::exp(0.5 * lv)).collect();
            (0..n_samples.max(1))
                .map(|_| {
                    let e = crate::synthesis::sample_latent(mu.len(), rng);
                    mu.iter().zip(&sd).zip(e).map(|((m, s), e)| m + s * e).collect()
                })
                .collect()
        }
    };
    let mut scenes = Vec::with_capacity(zs.len());
    for t in decode_free_batch(params, &zs, DecodeLimits::default()) {
        scenes.push(realize_placements(&t?, &scene.room)?);
    }
    Ok(scenes)
}

/// Whether the node at `path` belongs to the wall/root skeleton.
fn is_structural_slot(tree: &SceneTree, path: &[usize]) -> bool {
    let Some(node) = tree.root.at(path) else { return false };
    if let SceneNode::Leaf(l) = node {
        if l.role != LeafRole::Object {
            return true;
        }
    }
    match tree.wall_root_mode {
        WallRootMode::None => false,
        // root children, and the first child of wall nodes
        WallRootMode::Full => path.len() <= 1 || (path.len() == 2 && path[1] == 0),
        WallRootMode::WallOnly => {
            path.len() <= 3 || (path.len() == 4 && path[3] == 0 && tree.root.at(&path[..3]).and_then(SceneNode::kind) == Some(GroupKind::Wall))
        }
    }
}

fn contains_structure(node: &SceneNode) -> bool {
    node.leaves().iter().any(|l| l.role != LeafRole::Object)
        || matches!(node.kind(), Some(GroupKind::Wall) | Some(GroupKind::Root))
}

/// Whether `donor` may take the place of the node at `path`.
pub fn donor_compatible(tree: &SceneTree, path: &[usize], donor: &SceneNode) -> Result<(), EditError> {
    if tree.root.at(path).is_none() || path.is_empty() {
        return Err(EditError::InvalidPath(path.to_vec()));
    }
    if is_structural_slot(tree, path) {
        return Err(EditError::Mandatory(path.to_vec()));
    }
    if contains_structure(donor) {
        return Err(EditError::Incompatible(String::from("donor contains walls, floor or a root")));
    }
    let parent = tree.root.at(&path[..path.len() - 1]).and_then(SceneNode::as_group);
    if let Some(p) = parent {
        if p.kind == GroupKind::Support && path[path.len() - 1] == 0 && donor.as_leaf().is_none() {
            return Err(EditError::Incompatible(String::from("a supporter slot takes a single object")));
        }
    }
    Ok(())
}

/// Tree with absolute poses on every leaf (realized when not stored).
fn posed(tree: &SceneTree) -> Result<SceneTree, EditError> {
    if tree.is_posed() {
        return Ok(tree.clone());
    }
    Ok(realize_layout(tree, &LayoutOptions::default())?.apply(tree))
}

fn set_poses(node: &mut SceneNode, f: &mut impl FnMut(Obb) -> Obb) {
    match node {
        SceneNode::Leaf(l) => {
            if let Some(b) = l.obb() {
                let t = f(b);
                l.placement = Some(Placement {
                    center: t.center,
                    elevation: t.elevation,
                    angle: t.angle,
                });
            }
        }
        SceneNode::Group(g) => g.children.iter_mut().for_each(|c| set_poses(c, f)),
    }
}

/// Re-encodes a posed tree, stores exactly realized poses and validates.
fn finish(tree: SceneTree) -> Result<SceneTree, EditError> {
    let tree = reencode_tree(&tree, &RelationConfig::default())?;
    let tree = realize_layout(&tree, &LayoutOptions::exact())?.apply(&tree);
    let report = validate_tree(&tree);
    if let Some(v) = report.violations.iter().find(|v| v.is_structural()) {
        return Err(EditError::Invalid(format!("{} at {:?}: {}", v.code, v.path, v.message)));
    }
    Ok(tree)
}

fn check_path(tree: &SceneTree, path: &[usize]) -> Result<(), EditError> {
    if path.is_empty() || tree.root.at(path).is_none() {
        return Err(EditError::InvalidPath(path.to_vec()));
    }
    Ok(())
}

/// Replaces the subtree at `path` with `donor` (taken from `donor_tree`),
/// posed so that its aggregate box takes the place of the old one.
pub fn replace_subtree(
    tree: &SceneTree,
    path: &[usize],
    donor_tree: &SceneTree,
    donor_path: &[usize],
    max_nodes: usize,
) -> Result<SceneTree, EditError> {
    check_path(tree, path)?;
    let donor_posed = posed(donor_tree)?;
    let donor = donor_posed
        .root
        .at(donor_path)
        .ok_or_else(|| EditError::InvalidPath(donor_path.to_vec()))?
        .clone();
    donor_compatible(tree, path, &donor)?;
    let old_count = tree.root.at(path).map(SceneNode::node_count).unwrap_or(0);
    let count = tree.node_count() - old_count + donor.node_count();
    if count > max_nodes {
        return Err(EditError::Limit(count));
    }
    let mut out = posed(tree)?;
    let target = aggregate_obb(out.root.at(path).expect("checked")).expect("posed");
    let source = aggregate_obb(&donor).expect("posed");
    let to_target = target.pose().compose(&source.pose().inverse());
    let mut donor = donor;
    set_poses(&mut donor, &mut |b| b.transformed(&to_target));
    // unique leaf ids among the leaves that stay
    let replaced: Vec<&str> = out.root.at(path).expect("checked").leaves().iter().map(|l| l.id.as_str()).collect();
    let taken: Vec<String> = out
        .leaves()
        .iter()
        .filter(|l| !replaced.contains(&l.id.as_str()))
        .map(|l| l.id.clone())
        .collect();
    let mut next = 0;
    rename_leaves(&mut donor, &mut |id: &str| {
        if !taken.iter().any(|t| t == id) {
            return String::from(id);
        }
        loop {
            next += 1;
            let cand = format!("{id}~{next}");
            if !taken.iter().any(|t| *t == cand) {
                return cand;
            }
        }
    });
    *out.root.at_mut(path).expect("checked") = donor;
    finish(out)
}

fn rename_leaves(node: &mut SceneNode, f: &mut impl FnMut(&str) -> String) {
    match node {
        SceneNode::Leaf(l) => l.id = f(&l.id),
        SceneNode::Group(g) => g.children.iter_mut().for_each(|c| rename_leaves(c, f)),
    }
}

/// Removes the subtree at `path`. A binary parent collapses to its other
/// child; a surround parent becomes a co-occurrence of the remaining two.
pub fn delete_subtree(tree: &SceneTree, path: &[usize]) -> Result<SceneTree, EditError> {
    check_path(tree, path)?;
    if is_structural_slot(tree, path) {
        return Err(EditError::Mandatory(path.to_vec()));
    }
    let mut out = posed(tree)?;
    let (parent_path, idx) = (&path[..path.len() - 1], path[path.len() - 1]);
    let parent = out.root.at_mut(parent_path).expect("checked");
    let SceneNode::Group(g) = parent else {
        return Err(EditError::InvalidPath(path.to_vec()));
    };
    g.children.remove(idx);
    match g.kind {
        GroupKind::Surround => {
            g.kind = GroupKind::CoOccur;
        }
        GroupKind::Root => return Err(EditError::Mandatory(path.to_vec())),
        _ => {
            let only = g.children.pop().expect("binary node keeps one child");
            *parent = only;
        }
    }
    if let SceneNode::Group(g) = out.root.at_mut(parent_path).expect("still present") {
        g.relpos = vec![RelPos28::default(); g.children.len().saturating_sub(1)];
    }
    finish(out)
}

/// Index range, in pre-order leaf order, of the leaves under `path`.
fn leaf_range(root: &SceneNode, path: &[usize]) -> core::ops::Range<usize> {
    let mut start = 0;
    let mut node = root;
    for &i in path {
        let children = node.children();
        start += children[..i].iter().map(|c| c.leaves().len()).sum::<usize>();
        node = &children[i];
    }
    start..start + node.leaves().len()
}

/// Sets the position vector of a non-reference child and moves that
/// subtree accordingly; every other leaf keeps its pose.
pub fn move_subtree(tree: &SceneTree, path: &[usize], relpos: RelPos28) -> Result<SceneTree, EditError> {
    check_path(tree, path)?;
    let idx = path[path.len() - 1];
    if idx == 0 {
        return Err(EditError::ReferenceChild);
    }
    if is_structural_slot(tree, path) {
        return Err(EditError::Mandatory(path.to_vec()));
    }
    if relpos.values.iter().any(|v| !v.is_finite()) {
        return Err(EditError::InvalidRelpos(String::from("non-finite values")));
    }
    if tree.position_mode == PositionMode::Relative {
        relpos.check_one_hot().map_err(|e| EditError::InvalidRelpos(format!("{e}")))?;
    }
    let before = posed(tree)?;
    let mut edited = before.clone();
    if let Some(SceneNode::Group(g)) = edited.root.at_mut(&path[..path.len() - 1]) {
        g.relpos[idx - 1] = relpos;
    }
    let moved = realize_layout(&edited, &LayoutOptions::exact())?.apply(&edited);
    // the reference sibling is rigid in both layouts; map back onto its stored pose
    let mut ref_path = path.to_vec();
    *ref_path.last_mut().expect("non-empty") = 0;
    let old_ref = aggregate_obb(before.root.at(&ref_path).expect("checked")).expect("posed");
    let new_ref = aggregate_obb(moved.root.at(&ref_path).expect("checked")).expect("posed");
    let back = old_ref.pose().compose(&new_ref.pose().inverse());
    let range = leaf_range(&edited.root, path);
    let targets: Vec<Obb> = moved.leaves()[range.clone()]
        .iter()
        .map(|l| l.obb().expect("posed").transformed(&back))
        .collect();
    let mut k = 0;
    let mut next = targets.into_iter();
    set_poses(&mut edited.root, &mut |b| {
        k += 1;
        if range.contains(&(k - 1)) {
            next.next().expect("one per leaf")
        } else {
            b
        }
    });
    finish(edited)
}

/// A subtree offered as a replacement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub scene: usize,
    pub path: Vec<usize>,
    pub score: f64,
}

/// Relation graph of the siblings of the node at `path`.
pub fn sibling_context(tree: &SceneTree, path: &[usize]) -> Result<SceneGraph, EditError> {
    check_path(tree, path)?;
    let parent = tree.root.at(&path[..path.len() - 1]).expect("checked");
    let SceneNode::Group(g) = parent else { unreachable!("parents are groups") };
    let mut pruned = g.clone();
    let idx = path[path.len() - 1];
    pruned.children.remove(idx);
    pruned.relpos.clear();
    let node = match pruned.children.len() {
        1 => pruned.children.pop().expect("one"),
        _ => SceneNode::Group(pruned),
    };
    Ok(build_scene_graph(&SceneTree {
        wall_root_mode: WallRootMode::None,
        position_mode: tree.position_mode,
        root: node,
    }))
}

/// Top `k` compatible subtrees from `pool`, ranked by the kernel between
/// their sibling context and that of the node at `path`; ties by pool
/// index, then path.
pub fn candidate_subtrees(pool: &[SceneTree], tree: &SceneTree, path: &[usize], k: usize) -> Result<Vec<Candidate>, EditError> {
    check_path(tree, path)?;
    if is_structural_slot(tree, path) {
        return Err(EditError::Mandatory(path.to_vec()));
    }
    let context = sibling_context(tree, path)?;
    let mut out = Vec::new();
    for (s, donor_tree) in pool.iter().enumerate() {
        let mut paths = Vec::new();
        donor_tree.root.visit(&mut |p, n| {
            if !p.is_empty() && !is_structural_slot(donor_tree, p) && donor_compatible(tree, path, n).is_ok() {
                paths.push(p.to_vec());
            }
        });
        for p in paths {
            let score = graph_kernel(&context, &sibling_context(donor_tree, &p)?, DEFAULT_WALK_LENGTH);
            out.push(Candidate { scene: s, path: p, score });
        }
    }
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.scene.cmp(&b.scene)).then(a.path.cmp(&b.path)));
    out.truncate(k);
    Ok(out)
}
