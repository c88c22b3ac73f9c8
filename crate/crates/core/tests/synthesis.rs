use grains_core::hierarchy::{validate_tree, BuildConfig};
use grains_core::model::{DecodeLimits, ModelConfig, ModelParams};
use grains_core::scene::{Corpus, Room, RoomType};
use grains_core::synth::{synthesize_corpus, TemplateConfig};
use grains_core::synthesis::{
    attach_models, realize_placements, realize_placements_with, retrieve_model, sample_scene, sample_scenes, wall_count, CatalogEntry, ModelCatalog,
    SynthesisError,
};
use grains_core::{build_hierarchy, LayoutOptions, LeafRole, WallRootMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn entry(id: &str, category: &str, dims: [f64; 3]) -> CatalogEntry {
    CatalogEntry {
        id: id.into(),
        category: category.into(),
        dims,
    }
}

fn log_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i].ln() - b[i].ln()).powi(2)).sum()
}

#[test]
fn retrieval_minimizes_log_distance() {
    let catalog = ModelCatalog::new(vec![
        entry("A", "box", [2.0, 2.0, 2.0]),
        entry("B", "box", [1.0, 1.0, 1.0]),
        entry("C", "lamp", [1.9, 1.9, 1.9]),
    ])
    .unwrap();
    let q = [1.9, 1.9, 1.9];
    assert!(log_distance(q, [2.0; 3]) < log_distance(q, [1.0; 3]));
    assert_eq!(retrieve_model(&catalog, "box", q).unwrap().id, "A");
    assert_eq!(retrieve_model(&catalog, "box", [1.0; 3]).unwrap().id, "B");
    assert_eq!(retrieve_model(&catalog, "lamp", [9.0; 3]).unwrap().id, "C");
    assert!(matches!(retrieve_model(&catalog, "sofa", q), Err(SynthesisError::Catalog(_))));
}

#[test]
fn retrieval_ties_go_to_lowest_id() {
    let catalog = ModelCatalog::new(vec![entry("z", "box", [2.0, 1.0, 1.0]), entry("m", "box", [1.0, 2.0, 1.0])]).unwrap();
    assert_eq!(retrieve_model(&catalog, "box", [1.0, 1.0, 1.0]).unwrap().id, "m");
}

#[test]
fn catalog_rejects_bad_entries() {
    assert!(ModelCatalog::new(vec![entry("a", "x", [1.0; 3]), entry("a", "y", [1.0; 3])]).is_err());
    assert!(ModelCatalog::new(vec![entry("a", "x", [1.0, 0.0, 1.0])]).is_err());
    assert!(ModelCatalog::new(vec![entry("a", "x", [1.0, f64::NAN, 1.0])]).is_err());
}

fn corpus(seed: u64, n: usize) -> Corpus {
    synthesize_corpus(&TemplateConfig::bedroom(), seed, n).unwrap().corpus
}

#[test]
fn ground_truth_trees_realize_original_scenes() {
    let c = corpus(41, 60);
    let prior = Room::new(1.0, 1.0, 2.5).unwrap();
    for scene in &c.scenes {
        let tree = build_hierarchy(scene, &c.vocabulary, &BuildConfig::default()).unwrap();
        // stored offsets are exact; snapping would pull near-contacts flush
        let placed = realize_placements_with(&tree.without_poses(), &prior, &LayoutOptions::exact()).unwrap();
        assert_eq!(placed.placements.len(), scene.objects.len());
        // room size recovered from the walls
        assert!((placed.room.width - scene.room.width).abs() < 1e-9);
        assert!((placed.room.depth - scene.room.depth).abs() < 1e-9);
        for p in &placed.placements {
            let o = scene.objects.iter().find(|o| o.id == p.id).unwrap();
            assert_eq!(o.category, p.category);
            for k in 0..2 {
                assert!((o.obb.center[k] - p.obb.center[k]).abs() < 1e-6, "{} {:?} {:?}", p.id, o.obb, p.obb);
            }
            assert!((o.obb.elevation - p.obb.elevation).abs() < 1e-6);
        }
        let back = placed.to_scene(scene.room_type);
        assert_eq!(back.objects.len(), scene.objects.len());
    }
}

#[test]
fn supported_objects_rest_exactly_on_supporters() {
    let c = corpus(42, 40);
    let v = &c.vocabulary;
    let (ns, lamp) = (v.index_of("nightstand").unwrap(), v.index_of("table_lamp").unwrap());
    let mut seen = 0;
    for scene in &c.scenes {
        let tree = build_hierarchy(scene, v, &BuildConfig::default()).unwrap();
        let placed = realize_placements(&tree.without_poses(), &scene.room).unwrap();
        for l in placed.placements.iter().filter(|p| p.category == lamp) {
            let tops: Vec<f64> = placed
                .placements
                .iter()
                .filter(|p| p.category == ns && p.obb.intersection_area(&l.obb) > 0.0)
                .map(|p| p.obb.top())
                .collect();
            assert!(tops.contains(&l.obb.elevation), "{tops:?} vs {}", l.obb.elevation);
            seen += 1;
        }
    }
    assert!(seen > 10);
}

fn tiny_params(c: &Corpus, mode: WallRootMode, seed: u64) -> ModelParams {
    let cfg = ModelConfig {
        code_dim: 12,
        hidden_dim: 16,
        root_code_dim: 12,
        root_hidden_dim: 16,
        latent_dim: 8,
        wall_root_mode: mode,
        init_scale: 0.3,
        ..ModelConfig::for_vocabulary(&c.vocabulary)
    };
    ModelParams::init(cfg, seed).unwrap()
}

#[test]
fn sampling_is_seeded() {
    let c = corpus(43, 1);
    let p = tiny_params(&c, WallRootMode::Full, 1);
    let a = sample_scene(&p, &mut ChaCha8Rng::seed_from_u64(5), DecodeLimits::default());
    let b = sample_scene(&p, &mut ChaCha8Rng::seed_from_u64(5), DecodeLimits::default());
    assert_eq!(a, b);
    let many = sample_scenes(&p, &mut ChaCha8Rng::seed_from_u64(5), 3, DecodeLimits::default());
    assert_eq!(many[0], a);
}

#[test]
fn full_mode_samples_have_four_walls_and_a_floor() {
    let c = corpus(44, 1);
    for seed in 0..3 {
        let p = tiny_params(&c, WallRootMode::Full, seed);
        for t in sample_scenes(&p, &mut ChaCha8Rng::seed_from_u64(seed), 20, DecodeLimits::default())
            .into_iter()
            .flatten()
        {
            assert_eq!(wall_count(&t), 4);
            assert_eq!(t.leaves().iter().filter(|l| l.role == LeafRole::Floor).count(), 1);
            assert!(validate_tree(&t).violations.iter().all(|v| !v.code.starts_with("root")));
            let placed = realize_placements(&t, &Room::new(4.0, 4.0, 2.5).unwrap()).unwrap();
            assert_eq!(placed.placements.len(), t.object_leaves().len());
        }
    }
}

#[test]
fn attach_models_fills_known_categories() {
    let c = corpus(45, 1);
    let scene = &c.scenes[0];
    let tree = build_hierarchy(scene, &c.vocabulary, &BuildConfig::default()).unwrap();
    let mut placed = realize_placements(&tree, &scene.room).unwrap();
    let catalog = ModelCatalog::new(vec![entry("bed-1", "bed", [1.6, 2.0, 0.5]), entry("bed-2", "bed", [1.0, 1.0, 1.0])]).unwrap();
    attach_models(&mut placed, &catalog, c.vocabulary.names());
    let bed = c.vocabulary.index_of("bed").unwrap();
    for p in &placed.placements {
        if p.category == bed {
            assert_eq!(p.model_ref.as_deref(), Some("bed-1"));
        } else {
            assert_eq!(p.model_ref, None);
        }
    }
    assert_eq!(placed.to_scene(RoomType::Bedroom).objects.len(), placed.placements.len());
}
