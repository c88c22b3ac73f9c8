//! Scene similarity and corpus statistics.
//!
//! Scene graphs have one node per object. Edges come from the hierarchy:
//! supporter to supported base objects, surround center to each surrounder,
//! co-occurrence siblings, and an against-wall self-loop for each unit
//! directly under a wall node.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::hierarchy::{GroupKind, LeafRole, SceneNode, SceneTree};
use crate::math::{exp, ln, sqrt};
use crate::scene::Scene;

/// Node-kernel bandwidth on log footprint areas.
pub const KERNEL_SIGMA: f64 = 0.5;
pub const DEFAULT_WALK_LENGTH: usize = 3;
pub const DEFAULT_MIN_SUPPORT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Support,
    Surround,
    CoOccurAdjacent,
    AgainstWall,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub category: usize,
    pub footprint_area: f64,
    pub diag_size: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub a: usize,
    pub b: usize,
    pub relation: Relation,
}

/// Objects and their relations. `a <= b` for every edge; `a == b` only for
/// against-wall edges; no edge repeats.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl SceneGraph {
    pub fn count(&self, relation: Relation) -> usize {
        self.edges.iter().filter(|e| e.relation == relation).count()
    }

    /// `(neighbor, relation)` steps available from each node.
    fn adjacency(&self) -> Vec<Vec<(usize, Relation)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.a].push((e.b, e.relation));
            if e.a != e.b {
                adj[e.b].push((e.a, e.relation));
            }
        }
        adj
    }

    fn total_cmp(&self, other: &Self) -> Ordering {
        let node_key = |n: &GraphNode| (n.category, n.footprint_area.to_bits(), n.diag_size.to_bits());
        let edge_key = |e: &GraphEdge| (e.a, e.b, e.relation);
        self.nodes
            .iter()
            .map(node_key)
            .cmp(other.nodes.iter().map(node_key))
            .then_with(|| self.edges.iter().map(edge_key).cmp(other.edges.iter().map(edge_key)))
    }
}

/// Object leaves a node rests on the floor through: a support group
/// contributes only its supporter.
fn base_leaves(node: &SceneNode, index: &[Option<usize>], first: usize, out: &mut Vec<usize>) {
    fn go(node: &SceneNode, index: &[Option<usize>], cursor: &mut usize, take: bool, out: &mut Vec<usize>) {
        match node {
            SceneNode::Leaf(_) => {
                if take {
                    if let Some(i) = index[*cursor] {
                        out.push(i);
                    }
                }
                *cursor += 1;
            }
            SceneNode::Group(g) => {
                for (c, child) in g.children.iter().enumerate() {
                    let keep = take && !(g.kind == GroupKind::Support && c > 0);
                    go(child, index, cursor, keep, out);
                }
            }
        }
    }
    let mut cursor = first;
    go(node, index, &mut cursor, true, out);
}

/// Builds the relation graph of a hierarchy.
pub fn build_scene_graph(tree: &SceneTree) -> SceneGraph {
    let leaves = tree.leaves();
    let mut index = Vec::with_capacity(leaves.len());
    let mut nodes = Vec::new();
    for l in &leaves {
        if l.role == LeafRole::Object {
            index.push(Some(nodes.len()));
            nodes.push(GraphNode {
                category: l.category,
                footprint_area: l.footprint_area(),
                diag_size: sqrt(l.size.iter().map(|s| s * s).sum()),
            });
        } else {
            index.push(None);
        }
    }
    let mut edges = BTreeSet::new();
    let mut add = |a: usize, b: usize, relation: Relation| {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        if a != b || relation == Relation::AgainstWall {
            edges.insert((a, b, relation));
        }
    };
    // first leaf index of every node, in pre-order
    fn walk(
        node: &SceneNode,
        first: usize,
        index: &[Option<usize>],
        add: &mut dyn FnMut(usize, usize, Relation),
    ) -> usize {
        let SceneNode::Group(g) = node else { return 1 };
        let mut starts = Vec::with_capacity(g.children.len());
        let mut cursor = first;
        for c in &g.children {
            starts.push(cursor);
            cursor += walk(c, cursor, index, add);
        }
        let bases = |i: usize| {
            let mut out = Vec::new();
            base_leaves(&g.children[i], index, starts[i], &mut out);
            out
        };
        match g.kind {
            GroupKind::Support => {
                for s in bases(0) {
                    for t in bases(1) {
                        add(s, t, Relation::Support);
                    }
                }
            }
            GroupKind::Surround => {
                if let Some(&c) = bases(0).first() {
                    for i in 1..g.children.len() {
                        if let Some(&s) = bases(i).first() {
                            add(c, s, Relation::Surround);
                        }
                    }
                }
            }
            GroupKind::CoOccur => {
                if let (Some(&a), Some(&b)) = (bases(0).first(), bases(1).first()) {
                    add(a, b, Relation::CoOccurAdjacent);
                }
            }
            GroupKind::Wall => {
                for i in 1..g.children.len() {
                    for o in bases(i) {
                        add(o, o, Relation::AgainstWall);
                    }
                }
            }
            GroupKind::Root => {}
        }
        cursor - first
    }
    walk(&tree.root, 0, &index, &mut add);
    SceneGraph {
        nodes,
        edges: edges.into_iter().map(|(a, b, relation)| GraphEdge { a, b, relation }).collect(),
    }
}

pub fn node_kernel(a: &GraphNode, b: &GraphNode) -> f64 {
    if a.category != b.category {
        return 0.0;
    }
    let d = ln(a.footprint_area) - ln(b.footprint_area);
    exp(-(d * d) / (KERNEL_SIGMA * KERNEL_SIGMA))
}

/// Unnormalized random-walk kernel: the sum over all walk pairs of equal
/// length `0..=p` of the product of node and edge kernels along the walks.
pub fn walk_kernel(g1: &SceneGraph, g2: &SceneGraph, p: usize) -> f64 {
    let (n1, n2) = (g1.nodes.len(), g2.nodes.len());
    let (a1, a2) = (g1.adjacency(), g2.adjacency());
    let nk: Vec<f64> = (0..n1 * n2)
        .map(|i| node_kernel(&g1.nodes[i / n2], &g2.nodes[i % n2]))
        .collect();
    let mut w = nk.clone();
    let mut total: f64 = w.iter().sum();
    for _ in 0..p {
        let mut next = vec![0.0; n1 * n2];
        for u in 0..n1 {
            for v in 0..n2 {
                let k = nk[u * n2 + v];
                if k == 0.0 {
                    continue;
                }
                let mut s = 0.0;
                for &(u2, r1) in &a1[u] {
                    for &(v2, r2) in &a2[v] {
                        if r1 == r2 {
                            s += w[u2 * n2 + v2];
                        }
                    }
                }
                next[u * n2 + v] = k * s;
            }
        }
        w = next;
        total += w.iter().sum::<f64>();
    }
    total
}

/// `k(a, b) / √(k(a, a)·k(b, b))`, in `[0, 1]` and exactly symmetric.
/// Two empty graphs are identical (1); one empty graph shares nothing (0).
pub fn graph_kernel(a: &SceneGraph, b: &SceneGraph, p: usize) -> f64 {
    // a fixed argument order makes the floating-point sums order-independent
    let (a, b) = if a.total_cmp(b) == Ordering::Greater { (b, a) } else { (a, b) };
    if a.nodes.is_empty() || b.nodes.is_empty() {
        return if a.nodes.is_empty() && b.nodes.is_empty() { 1.0 } else { 0.0 };
    }
    if a.total_cmp(b) == Ordering::Equal {
        return 1.0;
    }
    let kab = walk_kernel(a, b, p);
    let kaa = walk_kernel(a, a, p);
    let kbb = walk_kernel(b, b, p);
    (kab / sqrt(kaa * kbb)).clamp(0.0, 1.0)
}

/// Top `k` corpus entries by normalized kernel, descending; ties by index.
pub fn nearest_neighbors(query: &SceneGraph, corpus: &[SceneGraph], k: usize, p: usize) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> = corpus.iter().enumerate().map(|(i, g)| (i, graph_kernel(query, g, p))).collect();
    scored.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    scored.truncate(k);
    scored
}

/// `P(c1 | c2) = N(c1, c2) / N(c2)` over scenes; `None` where `N(c2) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CooccurrenceMatrix {
    pub categories: usize,
    pub scenes: usize,
    /// `pair_counts[c1 * categories + c2] = N(c1, c2)`; the diagonal holds `N(c)`.
    pub pair_counts: Vec<usize>,
}

impl CooccurrenceMatrix {
    pub fn count(&self, c1: usize, c2: usize) -> usize {
        self.pair_counts[c1 * self.categories + c2]
    }

    pub fn conditional(&self, c1: usize, c2: usize) -> Option<f64> {
        let n2 = self.count(c2, c2);
        (n2 > 0).then(|| self.count(c1, c2) as f64 / n2 as f64)
    }
}

pub fn cooccurrence_matrix(scenes: &[Scene], categories: usize) -> CooccurrenceMatrix {
    let mut pair_counts = vec![0; categories * categories];
    for s in scenes {
        let present: BTreeSet<usize> = s.objects.iter().map(|o| o.category).filter(|&c| c < categories).collect();
        for &a in &present {
            for &b in &present {
                pair_counts[a * categories + b] += 1;
            }
        }
    }
    CooccurrenceMatrix {
        categories,
        scenes: scenes.len(),
        pair_counts,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityEntry {
    pub c1: usize,
    pub c2: usize,
    pub training: f64,
    pub generated: f64,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMap {
    pub entries: Vec<SimilarityEntry>,
    pub mean: f64,
}

/// `s(c1 | c2) = 1 − |Pt(c1 | c2) − Pg(c1 | c2)|` over ordered pairs of
/// distinct categories that co-occur in at least `min_support` of the
/// scenes of either corpus. An undefined conditional counts as 0.
pub fn cooccurrence_similarity(training: &CooccurrenceMatrix, generated: &CooccurrenceMatrix, min_support: f64) -> SimilarityMap {
    let n = training.categories.min(generated.categories);
    let frac = |m: &CooccurrenceMatrix, a: usize, b: usize| {
        if m.scenes == 0 {
            0.0
        } else {
            m.count(a, b) as f64 / m.scenes as f64
        }
    };
    let mut entries = Vec::new();
    for c2 in 0..n {
        for c1 in 0..n {
            if c1 == c2 || (frac(training, c1, c2) < min_support && frac(generated, c1, c2) < min_support) {
                continue;
            }
            let pt = training.conditional(c1, c2).unwrap_or(0.0);
            let pg = generated.conditional(c1, c2).unwrap_or(0.0);
            entries.push(SimilarityEntry {
                c1,
                c2,
                training: pt,
                generated: pg,
                similarity: 1.0 - (pt - pg).abs(),
            });
        }
    }
    let mean = if entries.is_empty() {
        1.0
    } else {
        entries.iter().map(|e| e.similarity).sum::<f64>() / entries.len() as f64
    };
    SimilarityMap { entries, mean }
}

/// Target centers in the local frames of reference objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelposExport {
    pub reference: usize,
    pub target: usize,
    pub points: Vec<[f64; 2]>,
    /// Footprint `(sx, sy)` of the reference object of each point.
    pub reference_sizes: Vec<[f64; 2]>,
    pub notice: Option<String>,
}

/// One point per ordered (reference, target) object pair within a scene.
pub fn relpos_distribution(scenes: &[Scene], reference: usize, target: usize) -> RelposExport {
    let mut out = RelposExport {
        reference,
        target,
        points: Vec::new(),
        reference_sizes: Vec::new(),
        notice: None,
    };
    for s in scenes {
        for r in s.objects.iter().filter(|o| o.category == reference) {
            for t in s.objects.iter().filter(|o| o.category == target && o.id != r.id) {
                out.points.push(r.obb.to_local(t.obb.center));
                out.reference_sizes.push([r.obb.size[0], r.obb.size[1]]);
            }
        }
    }
    if out.points.is_empty() {
        out.notice = Some(format!("no scene contains categories {reference} and {target} together"));
    }
    out
}
