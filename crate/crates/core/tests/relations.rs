use grains_core::geometry::Obb;
use grains_core::hierarchy::{assign_wall_clusters, detect_support_pairs, detect_surround_groups, RelationConfig};
use grains_core::scene::{Room, RoomType, Scene, SceneObject};

fn obj(id: &str, cat: usize, c: [f64; 2], elev: f64, size: [f64; 3]) -> SceneObject {
    SceneObject {
        id: id.to_string(),
        category: cat,
        obb: Obb::new(c, elev, size, 0.0),
    }
}

fn scene(objects: Vec<SceneObject>) -> Scene {
    Scene {
        room: Room::new(4.0, 4.0, 2.5).unwrap(),
        objects,
        room_type: RoomType::Bedroom,
    }
}

#[test]
fn lamp_on_nightstand() {
    let s = scene(vec![
        obj("ns", 1, [1.0, -1.7], 0.0, [0.5, 0.4, 0.55]),
        obj("lamp", 2, [1.02, -1.72], 0.55, [0.2, 0.2, 0.4]),
    ]);
    let pairs = detect_support_pairs(&s, &RelationConfig::default());
    assert_eq!(pairs, vec![("ns".to_string(), "lamp".to_string())]);
}

#[test]
fn floor_objects_have_no_support() {
    let s = scene(vec![
        obj("a", 1, [0.0, 0.0], 0.0, [0.5, 0.4, 0.55]),
        obj("b", 1, [0.1, 0.0], 0.0, [0.5, 0.4, 0.55]),
    ]);
    assert!(detect_support_pairs(&s, &RelationConfig::default()).is_empty());
}

#[test]
fn nightstands_flank_bed() {
    // bed against the south wall, long axis along y
    let s = scene(vec![
        obj("bed", 0, [0.0, -1.0], 0.0, [1.6, 2.0, 0.5]),
        obj("ns_far", 1, [-1.1, -1.75], 0.0, [0.5, 0.5, 0.55]),
        obj("ns_near", 1, [1.06, -1.75], 0.0, [0.5, 0.5, 0.55]),
    ]);
    let cfg = RelationConfig::default();
    let groups = detect_surround_groups(&s, &cfg, &[]);
    assert_eq!(
        groups,
        vec![("bed".to_string(), "ns_near".to_string(), "ns_far".to_string())]
    );
}

#[test]
fn single_nightstand_is_not_a_surround() {
    let s = scene(vec![
        obj("bed", 0, [0.0, -1.0], 0.0, [1.6, 2.0, 0.5]),
        obj("ns", 1, [1.1, -1.75], 0.0, [0.5, 0.5, 0.55]),
    ]);
    assert!(detect_surround_groups(&s, &RelationConfig::default(), &[]).is_empty());
}

#[test]
fn three_chairs_pick_two_nearest() {
    let s = scene(vec![
        obj("table", 0, [0.0, 0.0], 0.0, [1.6, 0.9, 0.75]),
        obj("c_far", 3, [0.0, 1.2], 0.0, [0.45, 0.45, 0.9]),
        obj("c_a", 3, [0.0, 0.75], 0.0, [0.45, 0.45, 0.9]),
        obj("c_b", 3, [0.2, -0.8], 0.0, [0.45, 0.45, 0.9]),
    ]);
    let cfg = RelationConfig::default();
    let got = detect_surround_groups(&s, &cfg, &[]);
    // brute force: two nearest by boundary distance
    let table = s.objects[0].obb;
    let mut d: Vec<(f64, &str)> = s.objects[1..]
        .iter()
        .map(|o| (table.distance_to_boundary(o.obb.center), o.id.as_str()))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert_eq!(got.len(), 1);
    assert_eq!(got[0].1, d[0].1);
    assert_eq!(got[0].2, d[1].1);
}

#[test]
fn clusters_follow_walls_and_stacks() {
    let s = scene(vec![
        obj("wardrobe", 0, [1.7, 0.0], 0.0, [0.6, 1.2, 2.0]),
        obj("center", 1, [0.0, 0.0], 0.0, [0.5, 0.5, 0.5]),
        obj("ns", 1, [-1.0, 1.75], 0.0, [0.5, 0.5, 0.55]),
        obj("lamp", 2, [-1.0, 1.75], 0.55, [0.2, 0.2, 0.3]),
    ]);
    let pairs = detect_support_pairs(&s, &RelationConfig::default());
    let clusters = assign_wall_clusters(&s, &pairs);
    assert_eq!(clusters["wardrobe"], 1);
    assert_eq!(clusters["center"], 0);
    assert_eq!(clusters["ns"], 2);
    assert_eq!(clusters["lamp"], 2);
}
