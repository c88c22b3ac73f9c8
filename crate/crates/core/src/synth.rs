//! Procedural corpus generator with known ground-truth relations.
//!
//! A template lists object kinds with size ranges, inclusion
//! probabilities and a placement rule. Generation is deterministic for a
//! given `(template, seed)`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Obb;
use crate::scene::{Corpus, Room, RoomType, Scene, SceneError, SceneObject, Vocabulary};

/// How an item is positioned relative to the room or to another item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum PlacementRule {
    /// Mandatory, back against a wall, front facing the room.
    Anchor,
    /// Back against a random wall.
    AgainstWall,
    /// Two identical copies on both sides of `of`, backs aligned with it.
    Flanking { of: String },
    /// One copy on top of every instance of `of`, footprint inside it.
    OnTop { of: String },
    /// In front of the first instance of `of`.
    InFront { of: String, facing: bool },
    /// Anywhere on the floor, roughly axis-aligned.
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemSpec {
    pub category: String,
    pub size_min: [f64; 3],
    pub size_max: [f64; 3],
    pub probability: f64,
    #[serde(flatten)]
    pub placement: PlacementRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateConfig {
    pub room_type: RoomType,
    pub width: [f64; 2],
    pub depth: [f64; 2],
    pub wall_height: f64,
    /// Minimum free space kept around independently placed floor items.
    pub clearance: f64,
    /// Scenes with fewer objects are redrawn.
    pub min_objects: usize,
    pub items: Vec<ItemSpec>,
}

fn item(category: &str, size_min: [f64; 3], size_max: [f64; 3], probability: f64, placement: PlacementRule) -> ItemSpec {
    ItemSpec {
        category: category.to_string(),
        size_min,
        size_max,
        probability,
        placement,
    }
}

impl TemplateConfig {
    /// Twenty-category bedroom template.
    pub fn bedroom() -> Self {
        use PlacementRule::*;
        let of = |s: &str| s.to_string();
        Self {
            room_type: RoomType::Bedroom,
            width: [3.6, 5.0],
            depth: [3.6, 5.0],
            wall_height: 2.6,
            clearance: 0.05,
            min_objects: 4,
            items: alloc::vec![
                item("bed", [1.4, 1.95, 0.45], [1.8, 2.15, 0.6], 1.0, Anchor),
                item("nightstand", [0.4, 0.35, 0.45], [0.55, 0.45, 0.6], 0.85, Flanking { of: of("bed") }),
                item("table_lamp", [0.2, 0.2, 0.3], [0.3, 0.3, 0.5], 0.75, OnTop { of: of("nightstand") }),
                item("wardrobe", [1.0, 0.55, 1.9], [1.6, 0.65, 2.2], 0.6, AgainstWall),
                item("desk", [1.0, 0.55, 0.72], [1.4, 0.7, 0.78], 0.5, AgainstWall),
                item("office_chair", [0.45, 0.45, 0.85], [0.6, 0.6, 1.05], 0.9, InFront { of: of("desk"), facing: true }),
                item("computer", [0.35, 0.2, 0.3], [0.55, 0.3, 0.45], 0.7, OnTop { of: of("desk") }),
                item("dresser", [0.8, 0.4, 0.8], [1.2, 0.5, 1.0], 0.4, AgainstWall),
                item("tv_stand", [1.0, 0.35, 0.45], [1.6, 0.45, 0.6], 0.35, AgainstWall),
                item("television", [0.8, 0.08, 0.5], [1.2, 0.15, 0.75], 0.85, OnTop { of: of("tv_stand") }),
                item("bookshelf", [0.6, 0.28, 1.6], [1.0, 0.35, 2.0], 0.3, AgainstWall),
                item("armchair", [0.7, 0.7, 0.8], [0.9, 0.85, 1.0], 0.3, Free),
                item("floor_lamp", [0.3, 0.3, 1.4], [0.45, 0.45, 1.8], 0.3, Free),
                item("plant", [0.3, 0.3, 0.6], [0.5, 0.5, 1.2], 0.35, Free),
                item("cabinet", [0.5, 0.4, 0.7], [0.9, 0.5, 1.0], 0.25, AgainstWall),
                item("ottoman", [0.5, 0.4, 0.4], [0.8, 0.5, 0.45], 0.2, InFront { of: of("bed"), facing: false }),
                item("vanity", [0.8, 0.4, 0.75], [1.1, 0.5, 0.8], 0.2, AgainstWall),
                item("stool", [0.35, 0.35, 0.45], [0.45, 0.45, 0.5], 0.8, InFront { of: of("vanity"), facing: true }),
                item("laundry_basket", [0.35, 0.3, 0.5], [0.5, 0.4, 0.65], 0.2, Free),
                item("bench", [1.0, 0.35, 0.4], [1.5, 0.45, 0.5], 0.2, InFront { of: of("bed"), facing: false }),
            ],
        }
    }

    /// Declared category names in template order.
    pub fn categories(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for it in &self.items {
            if !out.contains(&it.category) {
                out.push(it.category.clone());
            }
        }
        out
    }

    fn check(&self) -> Result<(), SceneError> {
        let bad = |msg: String| Err(SceneError::InfeasibleTemplate(msg));
        if !(self.width[0] > 0.0 && self.width[0] <= self.width[1] && self.depth[0] > 0.0 && self.depth[0] <= self.depth[1]) {
            return bad(format!("room ranges {:?} x {:?} are empty or non-positive", self.width, self.depth));
        }
        if !(self.wall_height > 0.0) {
            return bad(String::from("wall height must be positive"));
        }
        let cats = self.categories();
        for it in &self.items {
            if (0..3).any(|k| !(it.size_min[k] > 0.0 && it.size_min[k] <= it.size_max[k])) {
                return bad(format!("`{}` size range is empty or non-positive", it.category));
            }
            if !(0.0..=1.0).contains(&it.probability) {
                return bad(format!("`{}` probability outside [0, 1]", it.category));
            }
            let parent = match &it.placement {
                PlacementRule::Flanking { of } | PlacementRule::OnTop { of } | PlacementRule::InFront { of, .. } => Some(of),
                _ => None,
            };
            if let Some(p) = parent {
                let pos_parent = self.items.iter().position(|x| &x.category == p);
                let pos_self = self.items.iter().position(|x| core::ptr::eq(x, it));
                if !cats.contains(p) || pos_parent >= pos_self {
                    return bad(format!("`{}` refers to `{p}`, which must be declared earlier", it.category));
                }
            }
            if matches!(it.placement, PlacementRule::Anchor) {
                let longest_wall = self.width[1].max(self.depth[1]);
                let shortest_wall = self.width[1].min(self.depth[1]);
                // along a wall needs size[0], into the room needs size[1]
                if it.size_min[0] > longest_wall || it.size_min[1] > longest_wall || it.size_min[0].min(it.size_min[1]) > shortest_wall {
                    return bad(format!(
                        "anchor `{}` ({} x {} m) does not fit a room of at most {} x {} m",
                        it.category, it.size_min[0], it.size_min[1], self.width[1], self.depth[1]
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Generator-declared relations of one scene, by object id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub support: Vec<(String, String)>,
    /// `(central, nearer, farther)`.
    pub surround: Vec<(String, String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub manifests: Vec<SceneManifest>,
}

const ATTEMPTS: usize = 60;
const SCENE_ATTEMPTS: usize = 100;

struct Draft<'a> {
    room: &'a Room,
    objects: Vec<SceneObject>,
    manifest: SceneManifest,
    counts: BTreeMap<usize, usize>,
}

impl Draft<'_> {
    fn inside(&self, b: &Obb) -> bool {
        let (hw, hd) = (self.room.width * 0.5 + 1e-9, self.room.depth * 0.5 + 1e-9);
        b.corners().iter().all(|c| c[0] >= -hw && c[0] <= hw && c[1] >= -hd && c[1] <= hd)
    }

    /// True when `b`, grown by `margin`, overlaps no floor object other than `except`.
    fn free(&self, b: &Obb, margin: f64, except: &[usize]) -> bool {
        let grown = Obb {
            size: [b.size[0] + 2.0 * margin, b.size[1] + 2.0 * margin, b.size[2]],
            ..*b
        };
        self.objects.iter().enumerate().all(|(i, o)| {
            except.contains(&i) || o.obb.elevation > 0.0 || grown.intersection_area(&o.obb) <= 1e-9
        })
    }

    fn first_of(&self, category: usize) -> Option<usize> {
        self.objects.iter().position(|o| o.category == category)
    }

    fn push(&mut self, category: usize, name: &str, obb: Obb) -> usize {
        let n = self.counts.entry(category).or_insert(0);
        let id = format!("{name}_{n}");
        *n += 1;
        self.objects.push(SceneObject { id, category, obb });
        self.objects.len() - 1
    }
}

fn sample_size(rng: &mut ChaCha8Rng, it: &ItemSpec) -> [f64; 3] {
    let mut s = [0.0; 3];
    for k in 0..3 {
        s[k] = if it.size_min[k] < it.size_max[k] {
            rng.random_range(it.size_min[k]..=it.size_max[k])
        } else {
            it.size_min[k]
        };
    }
    s
}

/// Box with its back against wall `k`, `t` meters along the wall from its middle.
fn against_wall(room: &Room, k: usize, t: f64, gap: f64, size: [f64; 3]) -> Obb {
    let wall = &room.walls[k].obb;
    let (along, inward) = wall.axes();
    let half_t = wall.size[1] * 0.5;
    let d = half_t + gap + size[1] * 0.5;
    let c = [
        wall.center[0] + along[0] * t + inward[0] * d,
        wall.center[1] + along[1] * t + inward[1] * d,
    ];
    Obb::new(c, 0.0, size, wall.angle)
}

/// Room kept free on each side of an item along its wall for flanking companions.
fn flank_reserve(template: &TemplateConfig, category: &str) -> f64 {
    template
        .items
        .iter()
        .filter(|x| matches!(&x.placement, PlacementRule::Flanking { of } if of == category))
        .map(|x| x.size_max[0] + 0.05)
        .fold(0.0, f64::max)
}

fn place_item(rng: &mut ChaCha8Rng, draft: &mut Draft, it: &ItemSpec, vocab: &Vocabulary, template: &TemplateConfig) -> Result<(), SceneError> {
    let clearance = template.clearance;
    let cat = vocab.index_of(&it.category).expect("template categories are in the vocabulary");
    let room = draft.room;
    match &it.placement {
        PlacementRule::Anchor | PlacementRule::AgainstWall => {
            let size = sample_size(rng, it);
            let reserve = flank_reserve(template, &it.category);
            for _ in 0..ATTEMPTS {
                let k = rng.random_range(0..4usize);
                let len = room.walls[k].obb.size[0];
                let mut slack = (len - size[0]) * 0.5 - reserve;
                if slack < 0.0 {
                    slack += reserve;
                }
                if slack < 0.0 {
                    continue;
                }
                let t = rng.random_range(-slack..=slack);
                let gap = rng.random_range(0.0..=0.02);
                let b = against_wall(room, k, t, gap, size);
                if draft.inside(&b) && draft.free(&b, clearance, &[]) {
                    draft.push(cat, &it.category, b);
                    return Ok(());
                }
            }
            if matches!(it.placement, PlacementRule::Anchor) {
                return Err(SceneError::InfeasibleTemplate(format!(
                    "anchor `{}` could not be placed against any wall of a {:.2} x {:.2} m room",
                    it.category, room.width, room.depth
                )));
            }
        }
        PlacementRule::Flanking { of } => {
            let Some(p) = vocab.index_of(of).and_then(|c| draft.first_of(c)) else { return Ok(()) };
            let parent = draft.objects[p].obb;
            let size = sample_size(rng, it);
            let (u, v) = parent.axes();
            let mut placed = Vec::new();
            for side in [-1.0, 1.0] {
                let gap = rng.random_range(0.0..=0.05);
                let a = side * (parent.size[0] * 0.5 + gap + size[0] * 0.5);
                let b = (size[1] - parent.size[1]) * 0.5;
                let c = [
                    parent.center[0] + u[0] * a + v[0] * b,
                    parent.center[1] + u[1] * a + v[1] * b,
                ];
                placed.push((Obb::new(c, 0.0, size, parent.angle), gap));
            }
            let ok = placed.iter().all(|(b, _)| draft.inside(b) && draft.free(b, 0.0, &[p]));
            if ok && !placed[0].0.footprints_intersect(&placed[1].0) {
                let i0 = draft.push(cat, &it.category, placed[0].0);
                let i1 = draft.push(cat, &it.category, placed[1].0);
                // nearer by boundary distance; equal distances keep object order
                let (near, far) = if placed[1].1 < placed[0].1 { (i1, i0) } else { (i0, i1) };
                let ids = |i: usize| draft.objects[i].id.clone();
                let entry = (ids(p), ids(near), ids(far));
                draft.manifest.surround.push(entry);
            }
        }
        PlacementRule::OnTop { of } => {
            let Some(pc) = vocab.index_of(of) else { return Ok(()) };
            let parents: Vec<usize> = (0..draft.objects.len())
                .filter(|&i| draft.objects[i].category == pc)
                .collect();
            for p in parents {
                if !rng.random_bool(it.probability) {
                    continue;
                }
                let parent = draft.objects[p].obb;
                let mut size = sample_size(rng, it);
                size[0] = size[0].min(parent.size[0] * 0.9);
                size[1] = size[1].min(parent.size[1] * 0.9);
                let sx = (parent.size[0] - size[0]) * 0.5;
                let sy = (parent.size[1] - size[1]) * 0.5;
                let a = rng.random_range(-sx..=sx);
                let b = rng.random_range(-sy..=sy);
                let (u, v) = parent.axes();
                let c = [
                    parent.center[0] + u[0] * a + v[0] * b,
                    parent.center[1] + u[1] * a + v[1] * b,
                ];
                let obb = Obb::new(c, parent.top(), size, parent.angle);
                let child = draft.push(cat, &it.category, obb);
                let entry = (draft.objects[p].id.clone(), draft.objects[child].id.clone());
                draft.manifest.support.push(entry);
            }
        }
        PlacementRule::InFront { of, facing } => {
            let Some(p) = vocab.index_of(of).and_then(|c| draft.first_of(c)) else { return Ok(()) };
            let parent = draft.objects[p].obb;
            let size = sample_size(rng, it);
            let (u, v) = parent.axes();
            for _ in 0..ATTEMPTS / 4 {
                let gap = rng.random_range(0.05..=0.3);
                let slide = rng.random_range(-0.15..=0.15) * parent.size[0];
                let d = parent.size[1] * 0.5 + gap + size[1] * 0.5;
                let c = [
                    parent.center[0] + u[0] * slide + v[0] * d,
                    parent.center[1] + u[1] * slide + v[1] * d,
                ];
                let angle = if *facing { parent.angle + PI } else { parent.angle };
                let obb = Obb::new(c, 0.0, size, angle);
                if draft.inside(&obb) && draft.free(&obb, clearance, &[]) {
                    draft.push(cat, &it.category, obb);
                    break;
                }
            }
        }
        PlacementRule::Free => {
            let size = sample_size(rng, it);
            for _ in 0..ATTEMPTS {
                let quarter = rng.random_range(0..4) as f64 * FRAC_PI_2;
                let angle = quarter + rng.random_range(-0.2..=0.2);
                let x = rng.random_range(-0.5..=0.5) * room.width;
                let y = rng.random_range(-0.5..=0.5) * room.depth;
                let obb = Obb::new([x, y], 0.0, size, angle);
                if draft.inside(&obb) && draft.free(&obb, clearance, &[]) {
                    draft.push(cat, &it.category, obb);
                    break;
                }
            }
        }
    }
    Ok(())
}

fn synthesize_scene(rng: &mut ChaCha8Rng, template: &TemplateConfig, vocab: &Vocabulary) -> Result<(Scene, SceneManifest), SceneError> {
    let w = rng.random_range(template.width[0]..=template.width[1]);
    let d = rng.random_range(template.depth[0]..=template.depth[1]);
    let room = Room::new(w, d, template.wall_height)?;
    let mut draft = Draft {
        room: &room,
        objects: Vec::new(),
        manifest: SceneManifest::default(),
        counts: BTreeMap::new(),
    };
    for it in &template.items {
        let per_parent = matches!(it.placement, PlacementRule::OnTop { .. });
        let include = matches!(it.placement, PlacementRule::Anchor) || per_parent || rng.random_bool(it.probability);
        if include {
            place_item(rng, &mut draft, it, vocab, template)?;
        }
    }
    let Draft { objects, manifest, .. } = draft;
    Ok((
        Scene {
            room,
            objects,
            room_type: template.room_type,
        },
        manifest,
    ))
}

/// Generates `count` scenes. Category indices follow template order.
pub fn synthesize_corpus(template: &TemplateConfig, seed: u64, count: usize) -> Result<SyntheticCorpus, SceneError> {
    if count == 0 {
        return Err(SceneError::InfeasibleTemplate(String::from("count must be positive")));
    }
    template.check()?;
    let vocabulary = Vocabulary::new(template.categories())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scenes = Vec::with_capacity(count);
    let mut manifests = Vec::with_capacity(count);
    while scenes.len() < count {
        let mut attempt = 0;
        loop {
            let (scene, manifest) = synthesize_scene(&mut rng, template, &vocabulary)?;
            if scene.objects.len() >= template.min_objects {
                scenes.push(scene);
                manifests.push(manifest);
                break;
            }
            attempt += 1;
            if attempt >= SCENE_ATTEMPTS {
                return Err(SceneError::InfeasibleTemplate(format!(
                    "no scene reached {} objects in {SCENE_ATTEMPTS} draws",
                    template.min_objects
                )));
            }
        }
    }
    Ok(SyntheticCorpus {
        corpus: Corpus {
            room_type: template.room_type,
            vocabulary,
            scenes,
        },
        manifests,
    })
}
