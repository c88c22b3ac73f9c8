//! Support, surround and wall-cluster detection on raw scenes.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::RelationConfig;
use crate::geometry::Obb;
use crate::math::abs;
use crate::scene::Scene;

/// `(supporter_id, supported_id)` pairs. Every object gets at most one
/// supporter: the one with the smallest vertical gap.
pub fn detect_support_pairs(scene: &Scene, cfg: &RelationConfig) -> Vec<(String, String)> {
    support_indices(scene, cfg)
        .into_iter()
        .map(|(s, t)| (scene.objects[s].id.clone(), scene.objects[t].id.clone()))
        .collect()
}

pub(crate) fn support_indices(scene: &Scene, cfg: &RelationConfig) -> Vec<(usize, usize)> {
    let objs = &scene.objects;
    let mut out = Vec::new();
    for (ti, t) in objs.iter().enumerate() {
        let mut best: Option<(usize, f64, f64)> = None;
        for (si, s) in objs.iter().enumerate() {
            if si == ti || s.obb.elevation >= t.obb.elevation {
                continue;
            }
            let gap = abs(t.obb.elevation - s.obb.top());
            if gap > cfg.support_gap_max {
                continue;
            }
            let overlap = s.obb.intersection_area(&t.obb);
            if overlap < cfg.support_overlap_min * t.obb.footprint_area() {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, bg, bo)) => gap < bg || (gap == bg && overlap > bo),
            };
            if better {
                best = Some((si, gap, overlap));
            }
        }
        if let Some((si, _, _)) = best {
            out.push((si, ti));
        }
    }
    out
}

/// Side of `p` relative to the long axis of `central`: `+1`, `-1`, or `0` on the axis.
fn side_of_long_axis(central: &Obb, p: [f64; 2]) -> i8 {
    let local = central.to_local(p);
    // coordinate along the short axis
    let across = if central.size[0] >= central.size[1] {
        local[1]
    } else {
        local[0]
    };
    if across > 1e-9 {
        1
    } else if across < -1e-9 {
        -1
    } else {
        0
    }
}

fn center_distance(a: &Obb, b: &Obb) -> f64 {
    let dx = a.center[0] - b.center[0];
    let dy = a.center[1] - b.center[1];
    crate::math::sqrt(dx * dx + dy * dy)
}

/// `(central, nearer surrounder, farther surrounder)` triples among objects
/// that are not supported by anything.
pub fn detect_surround_groups(
    scene: &Scene,
    cfg: &RelationConfig,
    support_pairs: &[(String, String)],
) -> Vec<(String, String, String)> {
    let index: BTreeMap<&str, usize> = scene
        .objects
        .iter()
        .enumerate()
        .map(|(i, o)| (o.id.as_str(), i))
        .collect();
    let pairs: Vec<(usize, usize)> = support_pairs
        .iter()
        .filter_map(|(s, t)| Some((*index.get(s.as_str())?, *index.get(t.as_str())?)))
        .collect();
    surround_indices(scene, cfg, &pairs)
        .into_iter()
        .map(|(c, a, b)| {
            (
                scene.objects[c].id.clone(),
                scene.objects[a].id.clone(),
                scene.objects[b].id.clone(),
            )
        })
        .collect()
}

pub(crate) fn surround_indices(
    scene: &Scene,
    cfg: &RelationConfig,
    support: &[(usize, usize)],
) -> Vec<(usize, usize, usize)> {
    let objs = &scene.objects;
    let n = objs.len();
    let mut supported = alloc::vec![false; n];
    for &(_, t) in support {
        supported[t] = true;
    }
    let mut order: Vec<usize> = (0..n).filter(|&i| !supported[i]).collect();
    order.sort_by(|&a, &b| {
        objs[b]
            .obb
            .footprint_area()
            .total_cmp(&objs[a].obb.footprint_area())
            .then(a.cmp(&b))
    });
    let mut used = alloc::vec![false; n];
    let mut groups = Vec::new();
    for &c in &order {
        if used[c] {
            continue;
        }
        let central = &objs[c].obb;
        // candidates within reach, grouped by category
        let mut by_cat: BTreeMap<usize, Vec<(f64, f64, usize)>> = BTreeMap::new();
        for &j in &order {
            if j == c || used[j] {
                continue;
            }
            let d = central.distance_to_boundary(objs[j].obb.center);
            if d > cfg.surround_radius_max {
                continue;
            }
            if side_of_long_axis(central, objs[j].obb.center) == 0 {
                continue;
            }
            by_cat
                .entry(objs[j].category)
                .or_default()
                .push((d, center_distance(central, &objs[j].obb), j));
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for (_, mut cands) in by_cat {
            if cands.len() < 2 {
                continue;
            }
            cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
            let (d1, _, s1) = cands[0];
            let side1 = side_of_long_axis(central, objs[s1].obb.center);
            let a1 = objs[s1].obb.footprint_area();
            let partner = cands[1..].iter().find(|&&(_, _, j)| {
                let ratio = a1 / objs[j].obb.footprint_area();
                side_of_long_axis(central, objs[j].obb.center) == -side1
                    && ratio >= cfg.surround_size_ratio[0]
                    && ratio <= cfg.surround_size_ratio[1]
            });
            if let Some(&(d2, _, s2)) = partner {
                let score = d1 + d2;
                if best.map_or(true, |(b, _, _)| score < b) {
                    best = Some((score, s1, s2));
                }
            }
        }
        if let Some((_, s1, s2)) = best {
            used[c] = true;
            used[s1] = true;
            used[s2] = true;
            groups.push((c, s1, s2));
        }
    }
    groups
}

/// Wall index per object. Support stacks follow their base object; the
/// base object goes to the wall whose inner face is nearest to its center
/// (lowest index on ties).
pub fn assign_wall_clusters(scene: &Scene, support_pairs: &[(String, String)]) -> BTreeMap<String, usize> {
    let index: BTreeMap<&str, usize> = scene
        .objects
        .iter()
        .enumerate()
        .map(|(i, o)| (o.id.as_str(), i))
        .collect();
    let pairs: Vec<(usize, usize)> = support_pairs
        .iter()
        .filter_map(|(s, t)| Some((*index.get(s.as_str())?, *index.get(t.as_str())?)))
        .collect();
    cluster_indices(scene, &pairs)
        .into_iter()
        .enumerate()
        .map(|(i, w)| (scene.objects[i].id.clone(), w))
        .collect()
}

pub(crate) fn base_of(support: &[(usize, usize)], n: usize) -> Vec<usize> {
    let mut parent: Vec<Option<usize>> = alloc::vec![None; n];
    for &(s, t) in support {
        parent[t] = Some(s);
    }
    (0..n)
        .map(|mut i| {
            let mut steps = 0;
            while let Some(p) = parent[i] {
                i = p;
                steps += 1;
                if steps > n {
                    break;
                }
            }
            i
        })
        .collect()
}

pub(crate) fn nearest_wall(scene: &Scene, p: [f64; 2]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (w, wall) in scene.room.walls.iter().enumerate() {
        let d = abs(wall.distance_from_inner_face(p));
        if d < best_d {
            best_d = d;
            best = w;
        }
    }
    best
}

pub(crate) fn cluster_indices(scene: &Scene, support: &[(usize, usize)]) -> Vec<usize> {
    let base = base_of(support, scene.objects.len());
    base.iter()
        .map(|&b| nearest_wall(scene, scene.objects[b].obb.center))
        .collect()
}
