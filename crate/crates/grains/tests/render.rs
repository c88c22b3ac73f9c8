mod common;

use grains::render::*;
use grains_core::synthesis::realize_placements;
use grains_core::Room;

fn scene() -> (grains_core::synthesis::PlacedScene, Vec<String>) {
    let set = common::trees(8, 1);
    let placed = realize_placements(&set.trees[0].without_poses(), &Room::new(4.0, 4.0, 2.6).unwrap()).unwrap();
    (placed, set.vocabulary.names().to_vec())
}

fn numbers(s: &str) -> Vec<f64> {
    s.split(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-'))
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().unwrap())
        .collect()
}

#[test]
fn topview_has_one_group_per_object_at_the_mapped_pose() {
    let (placed, names) = scene();
    let svg = render_topview(&placed, &names);
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let groups: Vec<_> = doc.descendants().filter(|n| n.attribute("class") == Some("object")).collect();
    assert_eq!(groups.len(), placed.placements.len());
    for g in groups {
        let p = placed.placements.iter().find(|p| Some(p.id.as_str()) == g.attribute("data-id")).unwrap();
        assert_eq!(g.attribute("data-category"), Some(names[p.category].as_str()));
        let t = numbers(g.attribute("transform").unwrap());
        // y grows downward on screen
        let x = MARGIN + (p.obb.center[0] + placed.room.width / 2.0) * SCALE;
        let y = MARGIN + (placed.room.depth / 2.0 - p.obb.center[1]) * SCALE;
        assert!((t[0] - x).abs() < 1e-3 && (t[1] - y).abs() < 1e-3, "{t:?} vs {x} {y}");
        assert!((t[2] + p.obb.angle.to_degrees()).abs() < 1e-3);
        let rect = g.children().find(|c| c.has_tag_name("rect")).unwrap();
        let w: f64 = rect.attribute("width").unwrap().parse().unwrap();
        assert!((w - p.obb.size[0] * SCALE).abs() < 1e-3);
    }
    let room = doc.descendants().find(|n| n.attribute("class") == Some("room")).unwrap();
    let w: f64 = room.attribute("width").unwrap().parse().unwrap();
    assert!((w - placed.room.width * SCALE).abs() < 1e-3);
}

#[test]
fn topview_is_deterministic_and_escapes_text() {
    let (mut placed, names) = scene();
    assert_eq!(render_topview(&placed, &names), render_topview(&placed, &names));
    placed.placements[0].id = "a<b&\"c\"".into();
    let svg = render_topview(&placed, &names);
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert!(doc.descendants().any(|n| n.attribute("data-id") == Some("a<b&\"c\"")));
}

#[test]
fn supported_objects_are_drawn_after_their_supporters() {
    let (placed, names) = scene();
    let svg = render_topview(&placed, &names);
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let elevations: Vec<f64> = doc
        .descendants()
        .filter_map(|n| n.attribute("data-id"))
        .map(|id| placed.placements.iter().find(|p| p.id == id).unwrap().obb.elevation)
        .collect();
    assert!(elevations.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn heatmap_cells_carry_clamped_values() {
    let labels: Vec<String> = ["bed", "lamp", "desk"].iter().map(|s| s.to_string()).collect();
    let svg = render_heatmap("t", &labels, &[(0, 1, 0.5), (2, 2, 1.7), (1, 0, -0.2)]);
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let cells: Vec<_> = doc.descendants().filter(|n| n.attribute("class") == Some("cell")).collect();
    assert_eq!(cells.len(), 3);
    let vals: Vec<f64> = cells.iter().map(|c| c.attribute("data-value").unwrap().parse().unwrap()).collect();
    assert_eq!(vals, vec![0.5, 1.0, 0.0]);
    assert_eq!(doc.descendants().filter(|n| n.attribute("class") == Some("row")).count(), 3);
}
