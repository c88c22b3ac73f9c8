//! Structural and semantic checks on scene hierarchies.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::build::aggregates_from_leaves;
use super::layout::{realize_layout, LayoutOptions};
use super::{GroupKind, LeafRole, RelationConfig, SceneNode, SceneTree, WallRootMode};
use crate::geometry::Obb;
use crate::math::{abs, normalize_angle, sqrt};
use crate::relpos::{absolute_pose, decode_center_translation, decode_relpos, DecodeOptions, PositionMode};

/// Positional agreement required between stored poses and decoded position vectors.
const CONSISTENCY_TOL: f64 = 1e-6;

const SEMANTIC: [&str; 4] = ["surround-category", "surround-size", "support-contact", "relpos-consistency"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub path: Vec<usize>,
    pub message: String,
}

impl Violation {
    /// Structural violations break arity, ordering or placement rules;
    /// the rest concern semantics or geometry.
    pub fn is_structural(&self) -> bool {
        !SEMANTIC.contains(&self.code.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn structural_ok(&self) -> bool {
        self.violations.iter().all(|v| !v.is_structural())
    }

    pub fn has(&self, code: &str) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    fn push(&mut self, code: &str, path: &[usize], message: String) {
        self.violations.push(Violation {
            code: String::from(code),
            path: path.to_vec(),
            message,
        });
    }
}

pub fn validate_tree(tree: &SceneTree) -> ValidationReport {
    validate_tree_with(tree, &RelationConfig::default())
}

/// What the wall/root skeleton expects at a path.
#[derive(Clone, Copy, PartialEq)]
enum Slot {
    Floor,
    /// Wall leaf `k`, or a wall group whose first child is wall leaf `k`.
    WallNode(u8),
    /// A wall group merging two wall nodes.
    WallPair,
    WallLeaf(u8),
}

fn arity_code(kind: GroupKind) -> &'static str {
    match kind {
        GroupKind::Support => "support-arity",
        GroupKind::Surround => "surround-arity",
        GroupKind::CoOccur => "coocur-arity",
        GroupKind::Wall => "wall-arity",
        GroupKind::Root => "root-arity",
    }
}

fn skeleton(tree: &SceneTree, report: &mut ValidationReport) -> BTreeMap<Vec<usize>, Slot> {
    let mut slots = BTreeMap::new();
    let root = &tree.root;
    match tree.wall_root_mode {
        WallRootMode::None => {}
        WallRootMode::Full => {
            if root.kind() != Some(GroupKind::Root) {
                report.push("misplaced-root", &[], String::from("top node is not a root node"));
                return slots;
            }
            slots.insert(vec![0], Slot::Floor);
            for k in 0..4u8 {
                slots.insert(vec![k as usize + 1], Slot::WallNode(k));
            }
        }
        WallRootMode::WallOnly => {
            let floor_first = root.kind() == Some(GroupKind::Support);
            if !floor_first {
                report.push("root-floor-first", &[], String::from("top node is not a floor support node"));
                return slots;
            }
            slots.insert(vec![0], Slot::Floor);
            slots.insert(vec![1], Slot::WallPair);
            slots.insert(vec![1, 0], Slot::WallPair);
            slots.insert(vec![1, 1], Slot::WallPair);
            for (path, k) in [([1, 0, 0], 0u8), ([1, 0, 1], 2), ([1, 1, 0], 1), ([1, 1, 1], 3)] {
                slots.insert(path.to_vec(), Slot::WallNode(k));
            }
        }
    }
    // expand wall-node slots that hold groups into their wall leaf
    let extra: Vec<(Vec<usize>, Slot)> = slots
        .iter()
        .filter_map(|(p, s)| match (s, root.at(p)) {
            (Slot::WallNode(k), Some(SceneNode::Group(_))) => {
                let mut q = p.clone();
                q.push(0);
                Some((q, Slot::WallLeaf(*k)))
            }
            _ => None,
        })
        .collect();
    slots.extend(extra);
    slots
}

fn check_slot(path: &[usize], node: &SceneNode, slot: Slot, report: &mut ValidationReport) {
    match (slot, node) {
        (Slot::Floor, SceneNode::Leaf(l)) if l.role == LeafRole::Floor => {}
        (Slot::Floor, _) => report.push("root-floor-first", path, String::from("expected the floor leaf")),
        (Slot::WallNode(k), SceneNode::Leaf(l)) | (Slot::WallLeaf(k), SceneNode::Leaf(l)) => match l.role {
            LeafRole::Wall(j) if j == k => {}
            LeafRole::Wall(j) => report.push("wall-order", path, format!("expected wall {k}, found wall {j}")),
            _ => {
                let code = if matches!(slot, Slot::WallLeaf(_)) { "wall-first-child" } else { "root-wall-child" };
                report.push(code, path, format!("expected wall {k}, found `{}`", l.id));
            }
        },
        (Slot::WallNode(_), SceneNode::Group(g)) if g.kind == GroupKind::Wall => {}
        (Slot::WallNode(_), _) => report.push("root-wall-child", path, String::from("expected a wall leaf or wall node")),
        (Slot::WallLeaf(_), _) => report.push("wall-first-child", path, String::from("wall node must start with a wall leaf")),
        (Slot::WallPair, SceneNode::Group(g)) if g.kind == GroupKind::Wall => {}
        (Slot::WallPair, _) => report.push("root-wall-child", path, String::from("expected a wall pair node")),
    }
}

fn center_gap(a: &Obb, b: &Obb) -> f64 {
    let dx = a.center[0] - b.center[0];
    let dy = a.center[1] - b.center[1];
    sqrt(dx * dx + dy * dy)
}

/// Runs every structural check and, when the hierarchy allows it, the
/// geometric ones. Never fails; problems are reported.
pub fn validate_tree_with(tree: &SceneTree, cfg: &RelationConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    let slots = skeleton(tree, &mut report);
    let mode = tree.wall_root_mode;
    let mut ids = BTreeSet::new();
    let mut shapes_ok = true;

    tree.root.visit(&mut |path, node| {
        let slot = slots.get(path).copied();
        if let Some(s) = slot {
            check_slot(path, node, s, &mut report);
        }
        match node {
            SceneNode::Leaf(l) => {
                if !ids.insert(l.id.as_str()) {
                    report.push("leaf-duplicate", path, format!("leaf id `{}` repeats", l.id));
                }
                if mode != WallRootMode::None && l.role != LeafRole::Object && slot.is_none() {
                    report.push("misplaced-structural-leaf", path, format!("`{}` outside the wall/root skeleton", l.id));
                }
            }
            SceneNode::Group(g) => {
                if g.children.len() != g.kind.arity() {
                    shapes_ok = false;
                    report.push(
                        arity_code(g.kind),
                        path,
                        format!("{} node has {} children", g.kind.as_str(), g.children.len()),
                    );
                }
                if g.children.is_empty() || g.relpos.len() + 1 != g.children.len() {
                    shapes_ok = false;
                    report.push("relpos-count", path, format!("{} position vectors", g.relpos.len()));
                }
                if tree.position_mode == PositionMode::Relative {
                    for rp in &g.relpos {
                        if rp.check_one_hot().is_err() || rp.values.iter().any(|v| !v.is_finite()) {
                            report.push("relpos-bits", path, String::from("position vector bits are not one-hot"));
                            break;
                        }
                    }
                }
                match g.kind {
                    GroupKind::Root if !path.is_empty() || mode != WallRootMode::Full => {
                        report.push("misplaced-root", path, String::from("root node below the top"));
                    }
                    GroupKind::Root => {}
                    GroupKind::Wall if mode == WallRootMode::None || slot.is_none() => {
                        report.push("misplaced-wall", path, String::from("wall node outside the skeleton"));
                    }
                    GroupKind::Support if g.children.first().is_some_and(|c| c.as_leaf().is_none()) => {
                        report.push("support-first-leaf", path, String::from("supporter must be a leaf"));
                    }
                    GroupKind::Surround if g.children.len() == 3 => {
                        let a = g.children[1].anchor();
                        let b = g.children[2].anchor();
                        if a.category != b.category {
                            report.push("surround-category", path, String::from("surrounders differ in category"));
                        }
                        let ratio = a.footprint_area() / b.footprint_area();
                        let [lo, hi] = cfg.surround_size_ratio;
                        // the builder tests the ratio in one orientation; accept both
                        if !(ratio >= lo && ratio <= hi || 1.0 / ratio >= lo && 1.0 / ratio <= hi) {
                            report.push("surround-size", path, format!("surrounder area ratio {ratio:.3}"));
                        }
                    }
                    _ => {}
                }
            }
        }
    });

    if !shapes_ok {
        return report;
    }

    // geometry: stored poses when complete, realized ones otherwise
    let leaves = tree.leaves();
    let posed = leaves.iter().all(|l| l.placement.is_some());
    let boxes: Vec<Obb> = if posed {
        leaves.iter().map(|l| l.obb().expect("posed")).collect()
    } else {
        match realize_layout(tree, &LayoutOptions::default()) {
            Ok(layout) => layout.leaves,
            Err(e) => {
                report.push("placement", &[], format!("{e}"));
                return report;
            }
        }
    };
    let aggs = aggregates_from_leaves(&tree.root, &boxes);
    let mut index = 0;
    let mut leaf_index = 0;
    let mut node_ids: BTreeMap<Vec<usize>, (usize, usize)> = BTreeMap::new();
    tree.root.visit(&mut |path, node| {
        node_ids.insert(path.to_vec(), (index, leaf_index));
        index += 1;
        if node.as_leaf().is_some() {
            leaf_index += 1;
        }
    });

    tree.root.visit(&mut |path, node| {
        let Some(g) = node.as_group() else { return };
        let child = |i: usize| {
            let mut p = path.to_vec();
            p.push(i);
            node_ids[&p]
        };
        if g.kind == GroupKind::CoOccur {
            let a = aggs[child(0).0].footprint_area();
            let b = aggs[child(1).0].footprint_area();
            if a < b * (1.0 - 1e-9) - 1e-12 {
                report.push("coocur-order", path, format!("children areas {a:.4} < {b:.4}"));
            }
        }
        if !posed {
            return;
        }
        if g.kind == GroupKind::Support {
            let supporter = &boxes[child(0).1];
            let supported = &boxes[child(1).1];
            if abs(supported.elevation - supporter.top()) > cfg.support_gap_max {
                report.push(
                    "support-contact",
                    path,
                    format!("gap {:.4} m", supported.elevation - supporter.top()),
                );
            }
        }
        let reference = aggs[child(0).0];
        for (i, rp) in g.relpos.iter().enumerate() {
            let (ni, li) = child(i + 1);
            let (expected, got) = match tree.position_mode {
                PositionMode::Absolute => {
                    let p = absolute_pose(rp);
                    let anchor = boxes[li];
                    (anchor, Obb::new(p.translation, anchor.elevation, anchor.size, p.angle))
                }
                PositionMode::Relative => {
                    let target = aggs[ni];
                    match decode_relpos(&reference, rp, target.size, DecodeOptions { snap: false }) {
                        Ok(b) => (target, b),
                        Err(_) => (target, Obb { center: [f64::NAN; 2], ..target }),
                    }
                }
                PositionMode::CenterTranslation => {
                    let target = aggs[ni];
                    match decode_center_translation(&reference, rp, target.size) {
                        Ok(b) => (target, b),
                        Err(_) => (target, Obb { center: [f64::NAN; 2], ..target }),
                    }
                }
            };
            let d = center_gap(&expected, &got);
            let da = abs(normalize_angle(expected.angle - got.angle));
            if !(d <= CONSISTENCY_TOL && da <= CONSISTENCY_TOL) {
                report.push(
                    "relpos-consistency",
                    path,
                    format!("child {} decodes {d:.2e} m / {da:.2e} rad away", i + 1),
                );
            }
        }
    });
    report
}
