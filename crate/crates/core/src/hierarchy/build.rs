//! Scene → hierarchy construction.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::relations::{cluster_indices, support_indices, surround_indices};
use super::{BuildConfig, GroupKind, HierarchyError, LeafData, LeafRole, Placement, SceneNode, SceneTree, WallRootMode};
use crate::geometry::{Obb, Pose};
use crate::math::sqrt;
use crate::relpos::{encode_position, CodecConfig, PositionMode, RelPos28};
use crate::scene::{Scene, Vocabulary};

/// Axis-aligned hull of `boxes` in a frame rotated by `angle`.
///
/// The result carries `angle`, spans all footprints, and covers the
/// vertical range of every box.
pub(crate) fn hull(boxes: &[Obb], angle: f64) -> Obb {
    let to_frame = Pose::new(-angle, [0.0, 0.0]);
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut bottom = f64::INFINITY;
    let mut top = f64::NEG_INFINITY;
    for b in boxes {
        for c in b.corners() {
            let p = to_frame.apply(c);
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        bottom = bottom.min(b.elevation);
        top = top.max(b.top());
    }
    let mid = [(lo[0] + hi[0]) * 0.5, (lo[1] + hi[1]) * 0.5];
    Obb::new(
        Pose::new(angle, [0.0, 0.0]).apply(mid),
        bottom,
        [hi[0] - lo[0], hi[1] - lo[1], top - bottom],
        angle,
    )
}

/// Aggregate box of a node from stored leaf poses: a leaf's own box, or
/// the hull of the children's aggregates in the reference child's frame.
pub fn aggregate_obb(node: &SceneNode) -> Option<Obb> {
    match node {
        SceneNode::Leaf(l) => l.obb(),
        SceneNode::Group(g) => {
            let boxes = g
                .children
                .iter()
                .map(aggregate_obb)
                .collect::<Option<Vec<_>>>()?;
            Some(hull(&boxes, boxes.first()?.angle))
        }
    }
}

/// Aggregates for every node given one box per leaf (in pre-order leaf
/// order), returned in pre-order.
pub(crate) fn aggregates_from_leaves(node: &SceneNode, leaves: &[Obb]) -> Vec<Obb> {
    fn go(node: &SceneNode, leaves: &[Obb], next: &mut usize, out: &mut Vec<Obb>) -> Obb {
        match node {
            SceneNode::Leaf(_) => {
                let b = leaves[*next];
                *next += 1;
                out.push(b);
                b
            }
            SceneNode::Group(g) => {
                let slot = out.len();
                out.push(leaves[0]);
                let boxes: Vec<Obb> = g.children.iter().map(|c| go(c, leaves, next, out)).collect();
                let h = hull(&boxes, boxes[0].angle);
                out[slot] = h;
                h
            }
        }
    }
    let mut out = Vec::new();
    let mut next = 0;
    go(node, leaves, &mut next, &mut out);
    out
}

struct Unit {
    node: SceneNode,
    agg: Obb,
}

struct Builder {
    mode: PositionMode,
    codec: CodecConfig,
}

impl Builder {
    fn leaf(&self, data: LeafData) -> Unit {
        let agg = data.obb().expect("builder leaves are posed");
        Unit {
            node: SceneNode::Leaf(data),
            agg,
        }
    }

    fn group(&self, kind: GroupKind, children: Vec<Unit>) -> Unit {
        let reference = children[0].agg;
        let relpos: Vec<RelPos28> = children[1..]
            .iter()
            .map(|c| {
                let anchor = c.node.anchor().obb().expect("builder leaves are posed");
                encode_position(self.mode, &reference, &c.agg, &anchor, &self.codec)
            })
            .collect();
        let aggs: Vec<Obb> = children.iter().map(|c| c.agg).collect();
        let agg = hull(&aggs, reference.angle);
        Unit {
            node: SceneNode::group(kind, children.into_iter().map(|c| c.node).collect(), relpos),
            agg,
        }
    }

    /// Binary co-occurrence node, larger aggregate footprint first.
    fn cooccur(&self, a: Unit, b: Unit) -> Unit {
        if b.agg.footprint_area() > a.agg.footprint_area() {
            self.group(GroupKind::CoOccur, vec![b, a])
        } else {
            self.group(GroupKind::CoOccur, vec![a, b])
        }
    }

    /// Repeatedly merges the two units with the nearest aggregate centers.
    fn agglomerate(&self, mut units: Vec<Unit>) -> Option<Unit> {
        while units.len() > 1 {
            let mut best = (0, 1, f64::INFINITY);
            for i in 0..units.len() {
                for j in i + 1..units.len() {
                    let a = units[i].agg.center;
                    let b = units[j].agg.center;
                    let d = sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]));
                    if d < best.2 {
                        best = (i, j, d);
                    }
                }
            }
            let (i, j, _) = best;
            let b = units.remove(j);
            let a = units.remove(i);
            units.insert(i, self.cooccur(a, b));
        }
        units.pop()
    }
}

fn object_leaf(scene: &Scene, i: usize) -> LeafData {
    let o = &scene.objects[i];
    LeafData {
        id: o.id.clone(),
        category: o.category,
        size: o.obb.size,
        role: LeafRole::Object,
        placement: Some(placement_of(&o.obb)),
    }
}

fn placement_of(obb: &Obb) -> Placement {
    Placement {
        center: obb.center,
        elevation: obb.elevation,
        angle: obb.angle,
    }
}

fn wall_leaf(scene: &Scene, vocab: &Vocabulary, k: usize) -> LeafData {
    let obb = scene.room.walls[k].obb;
    LeafData {
        id: format!("wall{k}"),
        category: vocab.wall(),
        size: obb.size,
        role: LeafRole::Wall(k as u8),
        placement: Some(placement_of(&obb)),
    }
}

fn floor_leaf(scene: &Scene, vocab: &Vocabulary) -> LeafData {
    let obb = scene.room.floor;
    LeafData {
        id: "floor".to_string(),
        category: vocab.floor(),
        size: obb.size,
        role: LeafRole::Floor,
        placement: Some(placement_of(&obb)),
    }
}

/// Builds the training hierarchy of a scene.
///
/// Support stacks are merged first, then surround triples, then the
/// remaining units of each wall cluster by nearest-center agglomeration.
pub fn build_hierarchy(scene: &Scene, vocab: &Vocabulary, cfg: &BuildConfig) -> Result<SceneTree, HierarchyError> {
    let mut seen = BTreeSet::new();
    for o in &scene.objects {
        if !seen.insert(o.id.as_str()) {
            return Err(HierarchyError::DuplicateId(o.id.clone()));
        }
        if vocab.is_structural(o.category) {
            return Err(HierarchyError::Structure(format!(
                "object `{}` uses a reserved wall/floor category",
                o.id
            )));
        }
    }
    for reserved in ["floor", "wall0", "wall1", "wall2", "wall3"] {
        if seen.contains(reserved) {
            return Err(HierarchyError::DuplicateId(String::from(reserved)));
        }
    }

    let rel = &cfg.relation;
    let n = scene.objects.len();
    let support = support_indices(scene, rel);
    let surround = surround_indices(scene, rel, &support);
    let clusters = cluster_indices(scene, &support);
    let b = Builder {
        mode: cfg.position_mode,
        codec: rel.codec(),
    };

    let mut supported_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut is_supported = vec![false; n];
    for &(s, t) in &support {
        supported_by[s].push(t);
        is_supported[t] = true;
    }
    // Support edges form a forest: every object has at most one supporter
    // strictly below it.
    fn stack(b: &Builder, scene: &Scene, supported_by: &[Vec<usize>], i: usize) -> Unit {
        let base = b.leaf(object_leaf(scene, i));
        if supported_by[i].is_empty() {
            return base;
        }
        let upper: Vec<Unit> = supported_by[i]
            .iter()
            .map(|&t| stack(b, scene, supported_by, t))
            .collect();
        let upper = b.agglomerate(upper).expect("non-empty");
        b.group(GroupKind::Support, vec![base, upper])
    }

    // units keyed by their wall cluster, in object order
    let mut in_surround = vec![false; n];
    let mut surround_of = vec![None; n];
    for (g, &(c, s1, s2)) in surround.iter().enumerate() {
        in_surround[s1] = true;
        in_surround[s2] = true;
        surround_of[c] = Some(g);
    }
    let mut units: Vec<(usize, Unit)> = Vec::new();
    for i in 0..n {
        if is_supported[i] || in_surround[i] {
            continue;
        }
        let u = match surround_of[i] {
            Some(g) => {
                let (c, s1, s2) = surround[g];
                let kids = vec![
                    stack(&b, scene, &supported_by, c),
                    stack(&b, scene, &supported_by, s1),
                    stack(&b, scene, &supported_by, s2),
                ];
                b.group(GroupKind::Surround, kids)
            }
            None => stack(&b, scene, &supported_by, i),
        };
        units.push((clusters[i], u));
    }

    let root = match cfg.wall_root_mode {
        WallRootMode::None => {
            let mut all: Vec<Unit> = units.into_iter().map(|(_, u)| u).collect();
            all.push(b.leaf(floor_leaf(scene, vocab)));
            for k in 0..4 {
                all.push(b.leaf(wall_leaf(scene, vocab, k)));
            }
            b.agglomerate(all).expect("structural leaves present")
        }
        mode => {
            let mut per_wall: Vec<Vec<Unit>> = (0..4).map(|_| Vec::new()).collect();
            for (w, u) in units {
                per_wall[w].push(u);
            }
            let mut wall_nodes: Vec<Unit> = Vec::with_capacity(4);
            for (k, cluster) in per_wall.into_iter().enumerate() {
                let wall = b.leaf(wall_leaf(scene, vocab, k));
                wall_nodes.push(match b.agglomerate(cluster) {
                    Some(c) => b.group(GroupKind::Wall, vec![wall, c]),
                    None => wall,
                });
            }
            let floor = b.leaf(floor_leaf(scene, vocab));
            if mode == WallRootMode::Full {
                let mut kids = vec![floor];
                kids.extend(wall_nodes);
                b.group(GroupKind::Root, kids)
            } else {
                let mut it = wall_nodes.into_iter();
                let (n0, n1, n2, n3) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
                let p02 = b.group(GroupKind::Wall, vec![n0, n2]);
                let p13 = b.group(GroupKind::Wall, vec![n1, n3]);
                let w = b.group(GroupKind::Wall, vec![p02, p13]);
                b.group(GroupKind::Support, vec![floor, w])
            }
        }
    };

    Ok(SceneTree {
        wall_root_mode: cfg.wall_root_mode,
        position_mode: cfg.position_mode,
        root: root.node,
    })
}

/// Recomputes every position vector of a fully posed tree from its leaf
/// poses, reordering co-occurrence children so the larger footprint leads.
pub fn reencode_tree(tree: &SceneTree, relation: &super::RelationConfig) -> Result<SceneTree, HierarchyError> {
    let b = Builder {
        mode: tree.position_mode,
        codec: relation.codec(),
    };
    fn go(b: &Builder, node: &SceneNode) -> Result<Unit, HierarchyError> {
        match node {
            SceneNode::Leaf(l) => {
                if l.placement.is_none() {
                    return Err(HierarchyError::Structure(format!("leaf `{}` has no pose", l.id)));
                }
                Ok(b.leaf(l.clone()))
            }
            SceneNode::Group(g) => {
                if g.children.is_empty() {
                    return Err(HierarchyError::Structure(String::from("group without children")));
                }
                let kids = g.children.iter().map(|c| go(b, c)).collect::<Result<Vec<_>, _>>()?;
                if g.kind == GroupKind::CoOccur && kids.len() == 2 {
                    let mut it = kids.into_iter();
                    let (x, y) = (it.next().expect("two"), it.next().expect("two"));
                    return Ok(b.cooccur(x, y));
                }
                Ok(b.group(g.kind, kids))
            }
        }
    }
    Ok(SceneTree {
        wall_root_mode: tree.wall_root_mode,
        position_mode: tree.position_mode,
        root: go(&b, &tree.root)?.node,
    })
}
