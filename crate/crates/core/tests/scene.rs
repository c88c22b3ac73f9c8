use std::f64::consts::{FRAC_PI_2, PI};

use grains_core::geometry::Obb;
use grains_core::scene::*;

fn vocab(names: &[&str]) -> Vocabulary {
    Vocabulary::new(names.iter().map(|s| s.to_string()).collect()).unwrap()
}

fn obj(id: &str, cat: usize, c: [f64; 2], size: [f64; 3]) -> SceneObject {
    SceneObject {
        id: id.into(),
        category: cat,
        obb: Obb::new(c, 0.0, size, 0.0),
    }
}

#[test]
fn room_walls_face_inward_and_are_anticlockwise() {
    let room = Room::new(4.0, 3.0, 2.5).unwrap();
    let mut prev = f64::NEG_INFINITY;
    for w in &room.walls {
        let n = w.inward_normal();
        let c = w.obb.center;
        // the normal points back to the origin
        assert!(n[0] * -c[0] + n[1] * -c[1] > 0.0);
        assert!(w.distance_from_inner_face([0.0, 0.0]) > 0.0);
        let ang = c[1].atan2(c[0]);
        let ang = if ang < -FRAC_PI_2 - 1e-9 { ang + 2.0 * PI } else { ang };
        assert!(ang > prev);
        prev = ang;
    }
    assert!((room.walls[0].distance_from_inner_face([0.0, -1.5])).abs() < 1e-12);
}

#[test]
fn leaf_vector_layout() {
    let mut names: Vec<String> = (0..20).map(|i| format!("c{i:02}")).collect();
    names[0] = "bed".into();
    let v = Vocabulary::new(names).unwrap();
    assert_eq!(v.len(), 22);
    let bed = obj("b", 0, [0.0, 0.0], [2.0, 1.6, 0.5]);
    let lv = leaf_vector(&bed, &v).unwrap();
    assert_eq!(lv.0.len(), 25);
    assert_eq!(&lv.0[..4], &[2.0, 1.6, 0.5, 1.0]);
    assert!(lv.0[4..].iter().all(|x| *x == 0.0));
    let wall = LeafVector::new([3.0, 0.1, 2.5], v.wall(), v.len()).unwrap();
    assert_eq!(wall.0[3 + v.wall()], 1.0);
    assert_eq!(wall.category(), v.wall());
    let bad = obj("x", 99, [0.0, 0.0], [1.0, 1.0, 1.0]);
    assert!(leaf_vector(&bad, &v).is_err());
}

#[test]
fn vocabulary_rejects_duplicates_and_adds_reserved() {
    assert!(Vocabulary::new(vec!["a".into(), "a".into()]).is_err());
    let v = vocab(&["bed"]);
    assert_eq!(v.names(), &["bed", "wall", "floor"]);
}

fn corpus_of(scenes: Vec<Vec<SceneObject>>, names: &[&str]) -> Corpus {
    let room = Room::new(4.0, 4.0, 2.5).unwrap();
    Corpus {
        room_type: RoomType::Bedroom,
        vocabulary: vocab(names),
        scenes: scenes
            .into_iter()
            .map(|objects| Scene {
                room: room.clone(),
                objects,
                room_type: RoomType::Bedroom,
            })
            .collect(),
    }
}

#[test]
fn single_scene_identity_filter() {
    let c = corpus_of(vec![vec![obj("a", 0, [0.0, 0.0], [1.0, 1.0, 1.0])]], &["bed"]);
    let cfg = FilterConfig {
        min_objects: 1,
        max_objects: 10,
        min_category_frequency: 0.0,
    };
    let (out, report) = c.filtered(&cfg).unwrap();
    assert_eq!(out, c);
    assert_eq!(report.scenes_retained, 1);
    assert_eq!(report.dropped_too_few + report.dropped_too_many, 0);
    assert_eq!(report.objects_removed, 0);
}

#[test]
fn empty_after_filter_is_an_error() {
    let c = corpus_of(vec![vec![obj("a", 0, [0.0, 0.0], [1.0, 1.0, 1.0])]], &["bed"]);
    let err = c.filtered(&FilterConfig::default()).unwrap_err();
    assert_eq!(err, SceneError::EmptyCorpus);
}

#[test]
fn rare_category_excluded_from_vocabulary() {
    // category "rare" appears in 1 of 100 scenes
    let scenes: Vec<Vec<SceneObject>> = (0..100)
        .map(|i| {
            let mut v = vec![obj("b", 0, [0.0, 0.0], [2.0, 1.6, 0.5])];
            if i == 0 {
                v.push(obj("r", 1, [1.0, 1.0], [0.2, 0.2, 0.2]));
            }
            v
        })
        .collect();
    let c = corpus_of(scenes, &["bed", "rare"]);
    let v = build_vocabulary(&c, 0.05);
    assert!(v.index_of("bed").is_some());
    assert!(v.index_of("rare").is_none());
    assert_eq!(v.index_of("bed"), Some(0));
    let v2 = build_vocabulary(&c, 0.0);
    assert_eq!(v2.names(), &["bed", "floor", "wall", "rare"]);
}

#[test]
fn object_outside_room_rejected() {
    let c = corpus_of(vec![vec![obj("far", 0, [9.0, 0.0], [1.0, 1.0, 1.0])]], &["bed"]);
    let cfg = FilterConfig {
        min_objects: 1,
        ..Default::default()
    };
    assert!(matches!(c.filtered(&cfg), Err(SceneError::InvalidObject { .. })));
}
