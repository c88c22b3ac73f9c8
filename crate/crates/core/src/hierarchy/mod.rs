//! Scene hierarchies: typed trees whose internal nodes carry child placements.
//!
//! Every group node stores its children in a fixed order and one 28-D
//! position vector per non-reference child (`relpos[i]` places
//! `children[i + 1]` relative to `children[0]`).

mod build;
mod layout;
mod relations;
mod validate;

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Obb;
use crate::relpos::{CodecConfig, CodecError, PositionMode, RelPos28};

pub use build::{aggregate_obb, build_hierarchy, reencode_tree};
pub use layout::{realize_layout, LayoutOptions, NodePlacement, TreeLayout};
pub use relations::{assign_wall_clusters, detect_support_pairs, detect_surround_groups};
pub use validate::{validate_tree, validate_tree_with, ValidationReport, Violation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HierarchyError {
    #[error("structural error: {0}")]
    Structure(String),
    #[error("duplicate object id `{0}`")]
    DuplicateId(String),
    #[error("cannot place node at path {path:?}: {source}")]
    Placement { path: Vec<usize>, source: CodecError },
    #[error("no node at path {0:?}")]
    InvalidPath(Vec<usize>),
}

/// Tolerances for relation detection and relative-position bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationConfig {
    /// Minimum footprint overlap, as a fraction of the supported object's footprint.
    pub support_overlap_min: f64,
    /// Maximum vertical gap between supporter top and supported bottom, meters.
    pub support_gap_max: f64,
    /// Allowed footprint-area ratio between two surrounding objects.
    pub surround_size_ratio: [f64; 2],
    /// Maximum distance from a surrounder center to the central box boundary, meters.
    pub surround_radius_max: f64,
    pub attach_tol: f64,
    pub align_tol: f64,
}

impl Default for RelationConfig {
    fn default() -> Self {
        Self {
            support_overlap_min: 0.5,
            support_gap_max: 0.05,
            surround_size_ratio: [0.75, 1.33],
            surround_radius_max: 1.0,
            attach_tol: 0.05,
            align_tol: 5.0 * PI / 180.0,
        }
    }
}

impl RelationConfig {
    pub fn codec(&self) -> CodecConfig {
        CodecConfig {
            attach_tol: self.attach_tol,
            align_tol: self.align_tol,
        }
    }
}

/// How walls and floor join the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallRootMode {
    /// Wall nodes per cluster, merged with the floor by a root node.
    #[default]
    Full,
    /// Wall nodes, opposite walls merged pairwise, then supported by the floor.
    WallOnly,
    /// Walls and floor are ordinary objects merged by co-occurrence.
    None,
}

impl WallRootMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            WallRootMode::Full => "full",
            WallRootMode::WallOnly => "wall_only",
            WallRootMode::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BuildConfig {
    pub relation: RelationConfig,
    pub position_mode: PositionMode,
    pub wall_root_mode: WallRootMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafRole {
    Object,
    Wall(u8),
    Floor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub center: [f64; 2],
    pub elevation: f64,
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafData {
    pub id: String,
    pub category: usize,
    pub size: [f64; 3],
    pub role: LeafRole,
    /// Known pose; absent for decoded (generated) trees.
    pub placement: Option<Placement>,
}

impl LeafData {
    pub fn obb(&self) -> Option<Obb> {
        self.placement.map(|p| Obb {
            center: p.center,
            elevation: p.elevation,
            size: self.size,
            angle: p.angle,
        })
    }

    pub fn footprint_area(&self) -> f64 {
        self.size[0] * self.size[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Support,
    Surround,
    CoOccur,
    Wall,
    Root,
}

impl GroupKind {
    pub fn arity(&self) -> usize {
        match self {
            GroupKind::Support | GroupKind::CoOccur | GroupKind::Wall => 2,
            GroupKind::Surround => 3,
            GroupKind::Root => 5,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            GroupKind::Support => "support",
            GroupKind::Surround => "surround",
            GroupKind::CoOccur => "cooccur",
            GroupKind::Wall => "wall",
            GroupKind::Root => "root",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupNode {
    pub kind: GroupKind,
    pub children: Vec<SceneNode>,
    pub relpos: Vec<RelPos28>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum SceneNode {
    Leaf(LeafData),
    Group(GroupNode),
}

/// The five node classes distinguished by the node classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeClass {
    Box,
    Support,
    CoOccur,
    Surround,
    Wall,
}

impl NodeClass {
    pub const ALL: [NodeClass; 5] = [
        NodeClass::Box,
        NodeClass::Support,
        NodeClass::CoOccur,
        NodeClass::Surround,
        NodeClass::Wall,
    ];

    pub fn index(&self) -> usize {
        *self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }
}

impl SceneNode {
    pub fn leaf(data: LeafData) -> Self {
        SceneNode::Leaf(data)
    }

    pub fn group(kind: GroupKind, children: Vec<SceneNode>, relpos: Vec<RelPos28>) -> Self {
        SceneNode::Group(GroupNode {
            kind,
            children,
            relpos,
        })
    }

    pub fn as_leaf(&self) -> Option<&LeafData> {
        match self {
            SceneNode::Leaf(l) => Some(l),
            SceneNode::Group(_) => None,
        }
    }

    pub fn as_group(&self) -> Option<&GroupNode> {
        match self {
            SceneNode::Group(g) => Some(g),
            SceneNode::Leaf(_) => None,
        }
    }

    pub fn kind(&self) -> Option<GroupKind> {
        self.as_group().map(|g| g.kind)
    }

    pub fn children(&self) -> &[SceneNode] {
        match self {
            SceneNode::Group(g) => &g.children,
            SceneNode::Leaf(_) => &[],
        }
    }

    /// Classifier label; `None` for the root group.
    pub fn class(&self) -> Option<NodeClass> {
        Some(match self {
            SceneNode::Leaf(_) => NodeClass::Box,
            SceneNode::Group(g) => match g.kind {
                GroupKind::Support => NodeClass::Support,
                GroupKind::CoOccur => NodeClass::CoOccur,
                GroupKind::Surround => NodeClass::Surround,
                GroupKind::Wall => NodeClass::Wall,
                GroupKind::Root => return None,
            },
        })
    }

    /// First-child chain down to a leaf.
    pub fn anchor(&self) -> &LeafData {
        match self {
            SceneNode::Leaf(l) => l,
            SceneNode::Group(g) => g.children[0].anchor(),
        }
    }

    pub fn leaves(&self) -> Vec<&LeafData> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a LeafData>) {
        match self {
            SceneNode::Leaf(l) => out.push(l),
            SceneNode::Group(g) => g.children.iter().for_each(|c| c.collect_leaves(out)),
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children().iter().map(|c| c.node_count()).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    pub fn at(&self, path: &[usize]) -> Option<&SceneNode> {
        match path.split_first() {
            None => Some(self),
            Some((i, rest)) => self.children().get(*i)?.at(rest),
        }
    }

    pub fn at_mut(&mut self, path: &[usize]) -> Option<&mut SceneNode> {
        match path.split_first() {
            None => Some(self),
            Some((i, rest)) => match self {
                SceneNode::Group(g) => g.children.get_mut(*i)?.at_mut(rest),
                SceneNode::Leaf(_) => None,
            },
        }
    }

    /// Pre-order visit with paths.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&[usize], &'a SceneNode)) {
        let mut path = Vec::new();
        self.visit_inner(&mut path, f);
    }

    fn visit_inner<'a>(&'a self, path: &mut Vec<usize>, f: &mut impl FnMut(&[usize], &'a SceneNode)) {
        f(path, self);
        for (i, c) in self.children().iter().enumerate() {
            path.push(i);
            c.visit_inner(path, f);
            path.pop();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTree {
    pub wall_root_mode: WallRootMode,
    pub position_mode: PositionMode,
    pub root: SceneNode,
}

impl SceneTree {
    pub fn leaves(&self) -> Vec<&LeafData> {
        self.root.leaves()
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    /// Leaves that are ordinary objects (not walls or floor).
    pub fn object_leaves(&self) -> Vec<&LeafData> {
        self.leaves()
            .into_iter()
            .filter(|l| l.role == LeafRole::Object)
            .collect()
    }

    pub fn is_posed(&self) -> bool {
        self.leaves().iter().all(|l| l.placement.is_some())
    }

    /// Drops stored leaf poses, leaving only what the hierarchy encodes.
    pub fn without_poses(&self) -> SceneTree {
        let mut t = self.clone();
        fn strip(n: &mut SceneNode) {
            match n {
                SceneNode::Leaf(l) => l.placement = None,
                SceneNode::Group(g) => g.children.iter_mut().for_each(strip),
            }
        }
        strip(&mut t.root);
        t
    }
}
