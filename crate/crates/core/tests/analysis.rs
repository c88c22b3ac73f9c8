use std::collections::BTreeSet;

use grains_core::analysis::{
    build_scene_graph, cooccurrence_matrix, cooccurrence_similarity, graph_kernel, nearest_neighbors, node_kernel,
    relpos_distribution, walk_kernel, GraphEdge, GraphNode, Relation, SceneGraph,
};
use grains_core::geometry::Obb;
use grains_core::hierarchy::BuildConfig;
use grains_core::scene::{Room, RoomType, Scene, SceneObject, Vocabulary};
use grains_core::synth::{synthesize_corpus, TemplateConfig};
use grains_core::build_hierarchy;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RELATIONS: [Relation; 4] = [
    Relation::Support,
    Relation::Surround,
    Relation::CoOccurAdjacent,
    Relation::AgainstWall,
];

/// Sum over all pairs of equal-length walks, enumerated explicitly.
fn brute_force(g1: &SceneGraph, g2: &SceneGraph, p: usize) -> f64 {
    // a walk is its node sequence plus the relation of each step
    fn walks(g: &SceneGraph, len: usize) -> Vec<(Vec<usize>, Vec<Relation>)> {
        let mut out: Vec<(Vec<usize>, Vec<Relation>)> = (0..g.nodes.len()).map(|i| (vec![i], vec![])).collect();
        for _ in 0..len {
            let mut next = Vec::new();
            for (nodes, rels) in &out {
                let u = *nodes.last().unwrap();
                for e in &g.edges {
                    let to = if e.a == u {
                        Some(e.b)
                    } else if e.b == u {
                        Some(e.a)
                    } else {
                        None
                    };
                    if let Some(v) = to {
                        let mut n = nodes.clone();
                        n.push(v);
                        let mut r = rels.clone();
                        r.push(e.relation);
                        next.push((n, r));
                    }
                }
            }
            out = next;
        }
        out
    }
    let mut total = 0.0;
    for len in 0..=p {
        for (n1, r1) in walks(g1, len) {
            for (n2, r2) in walks(g2, len) {
                if r1 != r2 {
                    continue;
                }
                let mut prod = 1.0;
                for (a, b) in n1.iter().zip(&n2) {
                    prod *= node_kernel(&g1.nodes[*a], &g2.nodes[*b]);
                }
                total += prod;
            }
        }
    }
    total
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize, edge_mask: Option<u32>) -> SceneGraph {
    let nodes = (0..n)
        .map(|_| GraphNode {
            category: rng.random_range(0..2),
            footprint_area: [0.2, 0.5, 1.3][rng.random_range(0..3)],
            diag_size: 1.0,
        })
        .collect();
    let mut edges = Vec::new();
    let mut bit = 0;
    for a in 0..n {
        for b in a + 1..n {
            let on = match edge_mask {
                Some(m) => m >> bit & 1 == 1,
                None => rng.random_bool(0.5),
            };
            bit += 1;
            if on {
                edges.push(GraphEdge {
                    a,
                    b,
                    relation: RELATIONS[rng.random_range(0..3)],
                });
            }
        }
        if rng.random_bool(0.3) {
            edges.push(GraphEdge {
                a,
                b: a,
                relation: Relation::AgainstWall,
            });
        }
    }
    edges.sort_by_key(|e| (e.a, e.b, e.relation));
    SceneGraph { nodes, edges }
}

#[test]
fn walk_kernel_matches_enumeration_on_all_small_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    for n in 1..=4usize {
        let pairs = n * (n - 1) / 2;
        for mask in 0..(1u32 << pairs) {
            let g1 = random_graph(&mut rng, n, Some(mask));
            for m in 1..=4 {
                let g2 = random_graph(&mut rng, m, None);
                for p in 0..=3 {
                    let fast = walk_kernel(&g1, &g2, p);
                    let slow = brute_force(&g1, &g2, p);
                    assert!((fast - slow).abs() <= 1e-9 * slow.abs().max(1.0), "n={n} mask={mask} p={p}: {fast} vs {slow}");
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 1000);
}

#[test]
fn disjoint_categories_give_zero_at_length_zero() {
    let mut a = random_graph(&mut ChaCha8Rng::seed_from_u64(1), 3, None);
    let mut b = random_graph(&mut ChaCha8Rng::seed_from_u64(2), 3, None);
    a.nodes.iter_mut().for_each(|n| n.category = 0);
    b.nodes.iter_mut().for_each(|n| n.category = 1);
    assert_eq!(graph_kernel(&a, &b, 0), 0.0);
}

proptest! {
    #[test]
    fn kernel_is_symmetric_and_normalized(seed_a in 0u64..10_000, seed_b in 0u64..10_000, n in 1usize..6, m in 1usize..6, p in 0usize..4) {
        let a = random_graph(&mut ChaCha8Rng::seed_from_u64(seed_a), n, None);
        let b = random_graph(&mut ChaCha8Rng::seed_from_u64(seed_b), m, None);
        let ab = graph_kernel(&a, &b, p);
        let ba = graph_kernel(&b, &a, p);
        prop_assert_eq!(ab.to_bits(), ba.to_bits());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((graph_kernel(&a, &a, p) - 1.0).abs() <= 1e-9);
        // normalization against the raw kernel
        let raw = walk_kernel(&a, &a, p);
        prop_assert!((raw / (raw * raw).sqrt() - 1.0).abs() <= 1e-9);
    }
}

fn bedroom_vocab() -> Vocabulary {
    Vocabulary::new(["bed", "nightstand", "table_lamp", "wardrobe"].iter().map(|s| s.to_string()).collect()).unwrap()
}

fn obj(id: &str, cat: usize, c: [f64; 2], elev: f64, size: [f64; 3]) -> SceneObject {
    SceneObject {
        id: id.into(),
        category: cat,
        obb: Obb::new(c, elev, size, 0.0),
    }
}

fn figure_bedroom() -> Scene {
    Scene {
        room: Room::new(4.0, 4.0, 2.5).unwrap(),
        objects: vec![
            obj("bed", 0, [0.0, -0.95], 0.0, [1.6, 2.1, 0.5]),
            obj("ns_l", 1, [-1.07, -1.8], 0.0, [0.5, 0.4, 0.55]),
            obj("ns_r", 1, [1.05, -1.8], 0.0, [0.5, 0.4, 0.55]),
            obj("lamp_l", 2, [-1.07, -1.8], 0.55, [0.25, 0.25, 0.4]),
            obj("lamp_r", 2, [1.05, -1.8], 0.55, [0.25, 0.25, 0.4]),
        ],
        room_type: RoomType::Bedroom,
    }
}

#[test]
fn bedroom_graph_has_surround_and_support_edges() {
    let tree = build_hierarchy(&figure_bedroom(), &bedroom_vocab(), &BuildConfig::default()).unwrap();
    let g = build_scene_graph(&tree);
    assert_eq!(g.nodes.len(), 5);
    let cats: Vec<(usize, usize, Relation)> = g
        .edges
        .iter()
        .map(|e| (g.nodes[e.a].category, g.nodes[e.b].category, e.relation))
        .collect();
    let count = |a: usize, b: usize, r: Relation| {
        cats.iter().filter(|&&(x, y, rel)| rel == r && ((x, y) == (a, b) || (x, y) == (b, a))).count()
    };
    assert_eq!(count(0, 1, Relation::Surround), 2);
    assert_eq!(count(1, 2, Relation::Support), 2);
    // the bed unit sits under the south wall; its base leaves are bed and nightstands
    assert_eq!(g.count(Relation::AgainstWall), 3);
}

#[test]
fn single_object_graph() {
    let mut s = figure_bedroom();
    s.objects.truncate(1);
    let g = build_scene_graph(&build_hierarchy(&s, &bedroom_vocab(), &BuildConfig::default()).unwrap());
    assert_eq!(g.nodes.len(), 1);
    assert!(g.edges.iter().all(|e| e.relation == Relation::AgainstWall));
}

#[test]
fn edge_census_matches_generator_manifest() {
    let synth = synthesize_corpus(&TemplateConfig::bedroom(), 31, 200).unwrap();
    for (scene, manifest) in synth.corpus.scenes.iter().zip(&synth.manifests) {
        let tree = build_hierarchy(scene, &synth.corpus.vocabulary, &BuildConfig::default()).unwrap();
        let g = build_scene_graph(&tree);
        assert_eq!(g.nodes.len(), scene.objects.len());
        assert_eq!(g.count(Relation::Support), manifest.support.len());
        assert_eq!(g.count(Relation::Surround), 2 * manifest.surround.len());
    }
}

#[test]
fn nearest_neighbors_rank_self_and_duplicates_first() {
    let corpus = synthesize_corpus(&TemplateConfig::bedroom(), 32, 100).unwrap().corpus;
    let graphs: Vec<SceneGraph> = corpus
        .scenes
        .iter()
        .map(|s| build_scene_graph(&build_hierarchy(s, &corpus.vocabulary, &BuildConfig::default()).unwrap()))
        .collect();
    for q in [0usize, 17, 63] {
        let top = nearest_neighbors(&graphs[q], &graphs, 3, 3);
        assert_eq!(top[0].1, 1.0);
        // brute-force top-1
        let best = (0..graphs.len())
            .map(|i| (i, graph_kernel(&graphs[q], &graphs[i], 3)))
            .fold((usize::MAX, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        assert_eq!(top[0].0, best.0);
        assert_eq!(top[0].0, q.min(best.0));
    }
    let mut with_dup = graphs[..10].to_vec();
    with_dup.push(graphs[4].clone());
    let top = nearest_neighbors(&graphs[4], &with_dup, 3, 3);
    let first_two: BTreeSet<usize> = top[..2].iter().map(|t| t.0).collect();
    assert_eq!(first_two, BTreeSet::from([4, 10]));
    assert!(top[2].1 < 1.0);
}

fn cat_scene(cats: &[usize]) -> Scene {
    Scene {
        room: Room::new(4.0, 4.0, 2.5).unwrap(),
        objects: cats
            .iter()
            .enumerate()
            .map(|(i, &c)| obj(&format!("o{i}"), c, [0.0, 0.0], 0.0, [0.5, 0.5, 0.5]))
            .collect(),
        room_type: RoomType::Bedroom,
    }
}

#[test]
fn cooccurrence_matches_hand_count() {
    // categories 0..3; scene A {0,1}, B {0,2,2}, C {0,1,2}
    let scenes = vec![cat_scene(&[0, 1]), cat_scene(&[0, 2, 2]), cat_scene(&[1, 0, 2])];
    let m = cooccurrence_matrix(&scenes, 4);
    assert_eq!(m.conditional(1, 0), Some(2.0 / 3.0));
    assert_eq!(m.conditional(2, 1), Some(1.0 / 2.0));
    assert_eq!(m.conditional(0, 2), Some(1.0));
    assert_eq!(m.conditional(2, 2), Some(1.0));
    assert_eq!(m.conditional(0, 3), None);
    assert_eq!(m.conditional(3, 0), Some(0.0));
    // every scene holds category 0
    for c in 0..3 {
        assert_eq!(m.conditional(0, c), Some(1.0));
    }
    let mut reversed = scenes.clone();
    reversed.reverse();
    assert_eq!(cooccurrence_matrix(&reversed, 4), m);
}

#[test]
fn cooccurrence_similarity_limits() {
    let a = vec![cat_scene(&[0, 1]), cat_scene(&[0, 1])];
    let b = vec![cat_scene(&[0]), cat_scene(&[1])];
    let ma = cooccurrence_matrix(&a, 2);
    let same = cooccurrence_similarity(&ma, &ma, 0.05);
    assert!(same.entries.iter().all(|e| e.similarity == 1.0));
    assert_eq!(same.mean, 1.0);
    let diff = cooccurrence_similarity(&ma, &cooccurrence_matrix(&b, 2), 0.05);
    // Pt = 1, Pg = 0
    assert!(diff.entries.iter().all(|e| e.similarity == 0.0));
    assert_eq!(diff.entries.len(), 2);
}

#[test]
fn nightstands_flank_the_bed_in_its_frame() {
    let synth = synthesize_corpus(&TemplateConfig::bedroom(), 33, 200).unwrap();
    let v = &synth.corpus.vocabulary;
    let (bed, ns) = (v.index_of("bed").unwrap(), v.index_of("nightstand").unwrap());
    let export = relpos_distribution(&synth.corpus.scenes, bed, ns);
    assert!(export.notice.is_none());
    let (mut left, mut right) = (0, 0);
    for (p, s) in export.points.iter().zip(&export.reference_sizes) {
        // beside the bed, toward its head
        assert!(p[0].abs() > 0.5 * s[0], "{p:?} inside bed width {s:?}");
        if p[0] < 0.0 {
            left += 1
        } else {
            right += 1
        }
    }
    assert!(left > 20 && right > 20, "left {left} right {right}");

    let one = &synth.corpus.scenes[..1];
    let n_bed = one[0].objects.iter().filter(|o| o.category == bed).count();
    let n_ns = one[0].objects.iter().filter(|o| o.category == ns).count();
    assert_eq!(relpos_distribution(one, bed, ns).points.len(), n_bed * n_ns);

    let wall = v.wall();
    let none = relpos_distribution(one, wall, bed);
    assert!(none.points.is_empty() && none.notice.is_some());
}
