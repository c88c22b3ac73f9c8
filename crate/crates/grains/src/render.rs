//! Top-view SVG rendering.

use std::fmt::Write;

use grains_core::synthesis::PlacedScene;

/// Pixels per meter.
pub const SCALE: f64 = 100.0;
/// Margin around the room in pixels.
pub const MARGIN: f64 = 20.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Fill color of a category: hues spread by the golden angle.
pub fn category_color(category: usize) -> String {
    let hue = (category as f64 * 137.507_764) % 360.0;
    format!("hsl({hue:.1},55%,62%)")
}

/// Maps room coordinates (x right, y up, origin at the room center) to
/// SVG coordinates (y down, origin at the top-left corner).
pub fn to_svg(scene: &PlacedScene, p: [f64; 2]) -> [f64; 2] {
    [
        MARGIN + (p[0] + scene.room.width * 0.5) * SCALE,
        MARGIN + (scene.room.depth * 0.5 - p[1]) * SCALE,
    ]
}

/// Room outline plus one rotated, labeled rectangle per object, drawn in
/// ascending elevation so supported objects appear on top.
pub fn render_topview(scene: &PlacedScene, names: &[String]) -> String {
    let (w, d) = (scene.room.width * SCALE, scene.room.depth * SCALE);
    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.1}" height="{:.1}" viewBox="0 0 {:.1} {:.1}">"#,
        w + 2.0 * MARGIN,
        d + 2.0 * MARGIN,
        w + 2.0 * MARGIN,
        d + 2.0 * MARGIN
    );
    s.push('\n');
    let _ = writeln!(
        s,
        r##"<rect class="room" x="{MARGIN:.1}" y="{MARGIN:.1}" width="{w:.3}" height="{d:.3}" fill="#fafafa" stroke="#333" stroke-width="3"/>"##
    );
    let mut order: Vec<usize> = (0..scene.placements.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&scene.placements[a], &scene.placements[b]);
        pa.obb.elevation.total_cmp(&pb.obb.elevation).then(a.cmp(&b))
    });
    for i in order {
        let p = &scene.placements[i];
        let [x, y] = to_svg(scene, p.obb.center);
        // anticlockwise in the room is clockwise on screen
        let deg = -p.obb.angle.to_degrees();
        let (sx, sy) = (p.obb.size[0] * SCALE, p.obb.size[1] * SCALE);
        let label = names.get(p.category).map(String::as_str).unwrap_or("?");
        let _ = writeln!(
            s,
            r##"<g class="object" data-id="{}" data-category="{}" transform="translate({x:.3} {y:.3}) rotate({deg:.3})"><rect x="{:.3}" y="{:.3}" width="{sx:.3}" height="{sy:.3}" fill="{}" fill-opacity="0.8" stroke="#222"/><line x1="0" y1="0" x2="0" y2="{:.3}" stroke="#222"/><text x="0" y="0" font-size="11" text-anchor="middle">{}</text></g>"##,
            escape(&p.id),
            escape(label),
            -sx * 0.5,
            -sy * 0.5,
            category_color(p.category),
            // the front axis points to local +y, which is up on screen
            -sy * 0.5,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Cell size of heatmaps in pixels.
pub const CELL: f64 = 28.0;

/// Square heatmap over `labels`; `cells` holds (row, column, value in
/// [0, 1]) and missing cells stay blank. Rows are ordered as given.
pub fn render_heatmap(title: &str, labels: &[String], cells: &[(usize, usize, f64)]) -> String {
    let pad = 120.0;
    let side = pad + CELL * labels.len() as f64 + MARGIN;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{side:.1}" height="{:.1}" viewBox="0 0 {side:.1} {:.1}">"#,
        side + 20.0,
        side + 20.0
    );
    let _ = writeln!(s, r#"<text x="{MARGIN:.1}" y="16" font-size="13">{}</text>"#, escape(title));
    for (i, l) in labels.iter().enumerate() {
        let c = pad + CELL * (i as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text class="row" x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{}</text>"#,
            pad - 4.0,
            c + 20.0 + 3.0,
            escape(l)
        );
        let _ = writeln!(
            s,
            r#"<text class="col" x="{c:.1}" y="{:.1}" font-size="10" transform="rotate(-60 {c:.1} {:.1})">{}</text>"#,
            pad + 16.0,
            pad + 16.0,
            escape(l)
        );
    }
    for &(r, c, v) in cells {
        let v = v.clamp(0.0, 1.0);
        // blue at 0, red at 1
        let hue = 240.0 * (1.0 - v);
        let _ = writeln!(
            s,
            r#"<rect class="cell" data-row="{r}" data-col="{c}" data-value="{v:.4}" x="{:.1}" y="{:.1}" width="{CELL:.1}" height="{CELL:.1}" fill="hsl({hue:.1},70%,55%)"/>"#,
            pad + CELL * c as f64,
            pad + 20.0 + CELL * r as f64
        );
    }
    s.push_str("</svg>\n");
    s
}
