//! Free decoding: latent vectors to hierarchies, guided by the node classifier.
//!
//! The wall/root skeleton of the configured mode is imposed by designating
//! what each decoded code may become; everywhere else the classifier's
//! masked argmax selects the decoder.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{leaf_from_features, relpos_from_features, ModelError, ModelParams};
use crate::hierarchy::{
    realize_layout, reencode_tree, GroupKind, LayoutOptions, LeafData, LeafRole, NodeClass, RelationConfig, SceneNode, SceneTree,
    WallRootMode,
};
use crate::nn::NnError;
use crate::relpos::{RelPos28, RELPOS_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeLimits {
    pub max_depth: usize,
    pub max_nodes: usize,
}

impl Default for DecodeLimits {
    fn default() -> Self {
        Self {
            max_depth: 12,
            max_nodes: 128,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Role {
    RootFull,
    RootWallOnly,
    Floor,
    WallTop,
    WallPair(u8),
    /// Wall leaf, or a wall group holding that wall's cluster.
    WallSlot(u8),
    WallLeaf(u8),
    Supporter,
    Object,
}

impl Role {
    /// Classes the classifier may choose from; `None` means the kind is fixed.
    fn allowed(self) -> Option<&'static [NodeClass]> {
        const OBJECT: &[NodeClass] = &[NodeClass::Box, NodeClass::Support, NodeClass::CoOccur, NodeClass::Surround];
        match self {
            Role::WallSlot(_) => Some(&[NodeClass::Box, NodeClass::Wall]),
            Role::Object => Some(OBJECT),
            _ => None,
        }
    }

    fn fixed(self) -> Option<NodeClass> {
        match self {
            Role::RootFull => None,
            Role::RootWallOnly => Some(NodeClass::Support),
            Role::Floor | Role::WallLeaf(_) | Role::Supporter => Some(NodeClass::Box),
            Role::WallTop | Role::WallPair(_) => Some(NodeClass::Wall),
            Role::WallSlot(_) | Role::Object => None,
        }
    }
}

enum Proto {
    Pending,
    Leaf(LeafData),
    Group(GroupKind, Vec<usize>, Vec<RelPos28>),
}

struct Scene {
    arena: Vec<Proto>,
    objects: usize,
    walls: u8,
    error: Option<ModelError>,
}

struct Item {
    scene: usize,
    slot: usize,
    code: Vec<f64>,
    role: Role,
    depth: usize,
}

fn nn_err(e: NnError) -> ModelError {
    ModelError::ConfigMismatch(format!("{e}"))
}

fn kind_of(class: NodeClass) -> Option<GroupKind> {
    match class {
        NodeClass::Box => None,
        NodeClass::Support => Some(GroupKind::Support),
        NodeClass::CoOccur => Some(GroupKind::CoOccur),
        NodeClass::Surround => Some(GroupKind::Surround),
        NodeClass::Wall => Some(GroupKind::Wall),
    }
}

fn child_roles(kind: GroupKind, parent: Role) -> Vec<Role> {
    match (kind, parent) {
        (GroupKind::Root, _) => vec![
            Role::Floor,
            Role::WallSlot(0),
            Role::WallSlot(1),
            Role::WallSlot(2),
            Role::WallSlot(3),
        ],
        (GroupKind::Support, Role::RootWallOnly) => vec![Role::Floor, Role::WallTop],
        (GroupKind::Wall, Role::WallTop) => vec![Role::WallPair(0), Role::WallPair(1)],
        (GroupKind::Wall, Role::WallPair(i)) => vec![Role::WallSlot(i), Role::WallSlot(i + 2)],
        (GroupKind::Wall, Role::WallSlot(k)) => vec![Role::WallLeaf(k), Role::Object],
        (GroupKind::Support, _) => vec![Role::Supporter, Role::Object],
        (k, _) => vec![Role::Object; k.arity()],
    }
}

/// Decodes one latent vector into a hierarchy without poses.
pub fn decode_free(params: &ModelParams, z: &[f64], limits: DecodeLimits) -> Result<SceneTree, ModelError> {
    decode_free_batch(params, &[z.to_vec()], limits).pop().expect("one result per latent")
}

/// Decodes many latent vectors at once; each level of every tree shares
/// one matrix product per node kind.
pub fn decode_free_batch(params: &ModelParams, zs: &[Vec<f64>], limits: DecodeLimits) -> Vec<Result<SceneTree, ModelError>> {
    match decode_inner(params, zs, limits) {
        Ok(v) => v,
        Err(e) => zs.iter().map(|_| Err(e.clone())).collect(),
    }
}

fn decode_inner(params: &ModelParams, zs: &[Vec<f64>], limits: DecodeLimits) -> Result<Vec<Result<SceneTree, ModelError>>, ModelError> {
    let cfg = &params.config;
    let m = &params.modules;
    let data = &params.data;
    let (n, ld) = (cfg.code_dim, cfg.latent_dim);
    if zs.is_empty() {
        return Ok(Vec::new());
    }
    let mut x = Vec::with_capacity(zs.len() * ld);
    for z in zs {
        if z.len() != ld {
            return Err(ModelError::ConfigMismatch(format!("latent has {} values, expected {ld}", z.len())));
        }
        x.extend_from_slice(z);
    }
    let roots = m.vae_expand.forward(data, x, zs.len()).map_err(nn_err)?;
    let rd = cfg.root_dim();
    let root_role = match cfg.wall_root_mode {
        WallRootMode::Full => Role::RootFull,
        WallRootMode::WallOnly => Role::RootWallOnly,
        WallRootMode::None => Role::Object,
    };
    let mut scenes: Vec<Scene> = (0..zs.len())
        .map(|_| Scene {
            arena: vec![Proto::Pending],
            objects: 0,
            walls: 0,
            error: None,
        })
        .collect();
    let mut frontier: Vec<Item> = (0..zs.len())
        .map(|s| Item {
            scene: s,
            slot: 0,
            code: roots.output()[s * rd..(s + 1) * rd].to_vec(),
            role: root_role,
            depth: 0,
        })
        .collect();

    while !frontier.is_empty() {
        frontier.retain(|it| scenes[it.scene].error.is_none());
        // resolve node kinds
        let mut ops: Vec<Option<GroupKind>> = Vec::with_capacity(frontier.len());
        let need: Vec<usize> = (0..frontier.len()).filter(|&i| frontier[i].role.allowed().is_some()).collect();
        let mut probs = Vec::new();
        if !need.is_empty() {
            let mut x = Vec::with_capacity(need.len() * n);
            for &i in &need {
                x.extend_from_slice(&frontier[i].code);
            }
            probs = m.classifier.forward(data, x, need.len()).map_err(nn_err)?.acts.pop().expect("output");
        }
        let mut next_need = 0;
        for it in &frontier {
            let op = match it.role {
                Role::RootFull => Some(GroupKind::Root),
                r => match (r.fixed(), r.allowed()) {
                    (Some(c), _) => kind_of(c),
                    (None, Some(allowed)) => {
                        let row = &probs[next_need * super::NUM_CLASSES..(next_need + 1) * super::NUM_CLASSES];
                        next_need += 1;
                        let mut best = allowed[0];
                        for &c in allowed {
                            if row[c.index()] > row[best.index()] {
                                best = c;
                            }
                        }
                        kind_of(best)
                    }
                    (None, None) => unreachable!("every role is fixed or classified"),
                },
            };
            ops.push(op);
        }

        // apply limits
        for (it, op) in frontier.iter().zip(&ops) {
            let sc = &mut scenes[it.scene];
            if sc.error.is_some() {
                continue;
            }
            if op.is_some() && it.depth >= limits.max_depth {
                sc.error = Some(ModelError::Limit(format!("tree deeper than {}", limits.max_depth)));
            } else if let Some(k) = op {
                if sc.arena.len() + k.arity() > limits.max_nodes {
                    sc.error = Some(ModelError::Limit(format!("more than {} nodes", limits.max_nodes)));
                    continue;
                }
                let first = sc.arena.len();
                sc.arena.extend((0..k.arity()).map(|_| Proto::Pending));
                sc.arena[it.slot] = Proto::Group(*k, (first..first + k.arity()).collect(), Vec::new());
            }
        }

        // batch by operation
        let mut next = Vec::new();
        let mut kinds: Vec<Option<GroupKind>> = ops.clone();
        kinds.sort();
        kinds.dedup();
        for kind in kinds {
            let ids: Vec<usize> = (0..frontier.len())
                .filter(|&i| ops[i] == kind && scenes[frontier[i].scene].error.is_none())
                .collect();
            if ids.is_empty() {
                continue;
            }
            let mlp = match kind {
                None => &m.box_dec,
                Some(k) => m.decoder(k),
            };
            let mut x = Vec::with_capacity(ids.len() * mlp.in_dim());
            for &i in &ids {
                x.extend_from_slice(&frontier[i].code);
            }
            let cache = mlp.forward(data, x, ids.len()).map_err(nn_err)?;
            let w = mlp.out_dim();
            for (r, &i) in ids.iter().enumerate() {
                let it = &frontier[i];
                let row = &cache.output()[r * w..(r + 1) * w];
                let sc = &mut scenes[it.scene];
                match kind {
                    None => {
                        let leaf = make_leaf(params, row, it.role, sc);
                        sc.arena[it.slot] = Proto::Leaf(leaf);
                    }
                    Some(k) => {
                        let roles = child_roles(k, it.role);
                        let Proto::Group(_, children, relpos) = &mut sc.arena[it.slot] else {
                            unreachable!("group slot allocated above")
                        };
                        let mut off = 0;
                        for (c, role) in roles.into_iter().enumerate() {
                            next.push(Item {
                                scene: it.scene,
                                slot: children[c],
                                code: row[off..off + n].to_vec(),
                                role,
                                depth: it.depth + 1,
                            });
                            off += n;
                            if c > 0 {
                                relpos.push(relpos_from_features(cfg, &row[off..off + RELPOS_DIM]));
                                off += RELPOS_DIM;
                            }
                        }
                    }
                }
            }
        }
        frontier = next;
    }

    Ok(scenes
        .into_iter()
        .map(|mut sc| match sc.error.take() {
            Some(e) => Err(e),
            None => Ok(canonical_order(SceneTree {
                wall_root_mode: cfg.wall_root_mode,
                position_mode: cfg.position_mode,
                root: assemble(&mut sc.arena, 0),
            })),
        })
        .collect())
}

fn make_leaf(params: &ModelParams, row: &[f64], role: Role, sc: &mut Scene) -> LeafData {
    let cfg = &params.config;
    let objects: Vec<usize> = (0..cfg.vocab_len)
        .filter(|&c| c != cfg.wall_category && c != cfg.floor_category)
        .collect();
    let (id, category, leaf_role) = match role {
        Role::Floor => (String::from("floor"), cfg.floor_category, LeafRole::Floor),
        Role::WallSlot(k) | Role::WallLeaf(k) => (format!("wall{k}"), cfg.wall_category, LeafRole::Wall(k)),
        _ => {
            let free = cfg.wall_root_mode == WallRootMode::None;
            let (_, cat) = leaf_from_features(cfg, row, if free { None } else { Some(&objects) });
            if free && cat == cfg.floor_category {
                (format!("floor{}", sc.objects), cat, LeafRole::Floor)
            } else if free && cat == cfg.wall_category {
                let k = sc.walls;
                sc.walls = sc.walls.saturating_add(1);
                (format!("wall{k}"), cat, LeafRole::Wall(k))
            } else {
                sc.objects += 1;
                (format!("obj{}", sc.objects), cat, LeafRole::Object)
            }
        }
    };
    let (size, _) = leaf_from_features(cfg, row, None);
    LeafData {
        id,
        category,
        size,
        role: leaf_role,
        placement: None,
    }
}

fn assemble(arena: &mut [Proto], slot: usize) -> SceneNode {
    match core::mem::replace(&mut arena[slot], Proto::Pending) {
        Proto::Leaf(l) => SceneNode::Leaf(l),
        Proto::Group(kind, children, relpos) => {
            let children = children.into_iter().map(|c| assemble(arena, c)).collect();
            SceneNode::group(kind, children, relpos)
        }
        Proto::Pending => unreachable!("every slot is decoded before assembly"),
    }
}

/// Co-occurrence children must lead with the larger footprint. When the
/// realized layout breaks that order the tree is re-encoded from its own
/// realized poses, which swaps the pair and keeps the geometry.
pub fn canonical_order(tree: SceneTree) -> SceneTree {
    let Ok(layout) = realize_layout(&tree, &LayoutOptions::default()) else {
        return tree;
    };
    let area: alloc::collections::BTreeMap<&[usize], f64> =
        layout.nodes.iter().map(|n| (n.path.as_slice(), n.aggregate.footprint_area())).collect();
    let mut misordered = false;
    tree.root.visit(&mut |path, node| {
        if node.kind() == Some(GroupKind::CoOccur) && node.children().len() == 2 {
            let child = |i: usize| {
                let mut p = path.to_vec();
                p.push(i);
                area.get(p.as_slice()).copied()
            };
            if let (Some(a), Some(b)) = (child(0), child(1)) {
                misordered |= a < b * (1.0 - 1e-9) - 1e-12;
            }
        }
    });
    if !misordered {
        return tree;
    }
    match reencode_tree(&layout.apply(&tree), &RelationConfig::default()) {
        Ok(t) => t.without_poses(),
        Err(_) => tree,
    }
}
