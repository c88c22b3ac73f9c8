//! Scenes, rooms, vocabularies and corpus filtering.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Obb;
use crate::math::argmax;

/// Thickness given to the wall boxes and to the floor slab.
pub const WALL_THICKNESS: f64 = 0.1;
pub const FLOOR_THICKNESS: f64 = 0.1;

pub const WALL_NAME: &str = "wall";
pub const FLOOR_NAME: &str = "floor";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("object {id}: {reason}")]
    InvalidObject { id: String, reason: String },
    #[error("invalid room: {0}")]
    InvalidRoom(String),
    #[error("unknown category index {index} (vocabulary has {len} entries)")]
    UnknownCategory { index: usize, len: usize },
    #[error("unknown category name `{0}`")]
    UnknownCategoryName(String),
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("empty corpus after filtering")]
    EmptyCorpus,
    #[error("infeasible template: {0}")]
    InfeasibleTemplate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoomType {
    Bedroom,
    Living,
    Kitchen,
    Office,
    Custom,
}

impl RoomType {
    pub fn as_str(&self) -> &'static str {
        match self {
            RoomType::Bedroom => "bedroom",
            RoomType::Living => "living",
            RoomType::Kitchen => "kitchen",
            RoomType::Office => "office",
            RoomType::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "bedroom" => RoomType::Bedroom,
            "living" => RoomType::Living,
            "kitchen" => RoomType::Kitchen,
            "office" => RoomType::Office,
            "custom" => RoomType::Custom,
            _ => return None,
        })
    }
}

impl fmt::Display for RoomType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    pub category: usize,
    pub obb: Obb,
}

/// A wall slab. Its second local axis (the "front") faces the room interior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub obb: Obb,
}

impl Wall {
    pub fn inward_normal(&self) -> [f64; 2] {
        self.obb.axes().1
    }

    /// Signed distance from the inner face, positive towards the interior.
    pub fn distance_from_inner_face(&self, p: [f64; 2]) -> f64 {
        let n = self.inward_normal();
        let c = self.obb.center;
        let half = self.obb.size[1] * 0.5;
        (p[0] - c[0]) * n[0] + (p[1] - c[1]) * n[1] - half
    }
}

/// Rectangular room centered on the origin. Walls are ordered anticlockwise
/// seen from the top: south (−y), east (+x), north (+y), west (−x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub width: f64,
    pub depth: f64,
    pub wall_height: f64,
    pub walls: [Wall; 4],
    pub floor: Obb,
}

impl Room {
    pub fn new(width: f64, depth: f64, wall_height: f64) -> Result<Self, SceneError> {
        if !(width > 0.0 && depth > 0.0 && wall_height > 0.0)
            || !width.is_finite()
            || !depth.is_finite()
            || !wall_height.is_finite()
        {
            return Err(SceneError::InvalidRoom(alloc::format!(
                "dimensions must be positive, got {width} x {depth} x {wall_height}"
            )));
        }
        let t = WALL_THICKNESS;
        let (hw, hd) = (width * 0.5, depth * 0.5);
        let wall = |center: [f64; 2], length: f64, angle: f64| Wall {
            obb: Obb::new(center, 0.0, [length, t, wall_height], angle),
        };
        let walls = [
            wall([0.0, -hd - t * 0.5], width, 0.0),
            wall([hw + t * 0.5, 0.0], depth, FRAC_PI_2),
            wall([0.0, hd + t * 0.5], width, PI),
            wall([-hw - t * 0.5, 0.0], depth, -FRAC_PI_2),
        ];
        let floor = Obb::new(
            [0.0, 0.0],
            -FLOOR_THICKNESS,
            [width, depth, FLOOR_THICKNESS],
            0.0,
        );
        Ok(Self {
            width,
            depth,
            wall_height,
            walls,
            floor,
        })
    }

    pub fn contains_point(&self, p: [f64; 2]) -> bool {
        let (hw, hd) = (self.width * 0.5, self.depth * 0.5);
        p[0] >= -hw && p[0] <= hw && p[1] >= -hd && p[1] <= hd
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub room: Room,
    pub objects: Vec<SceneObject>,
    pub room_type: RoomType,
}

impl Scene {
    /// Checks box, room and category invariants.
    pub fn validate(&self, vocab_len: usize) -> Result<(), SceneError> {
        let room = &self.room;
        if room.walls.len() != 4 {
            return Err(SceneError::InvalidRoom("room needs exactly 4 walls".into()));
        }
        for obj in &self.objects {
            let bad = |reason: &str| SceneError::InvalidObject {
                id: obj.id.clone(),
                reason: reason.to_string(),
            };
            let o = &obj.obb;
            if !o.size.iter().all(|s| *s > 0.0 && s.is_finite()) {
                return Err(bad("sizes must be positive and finite"));
            }
            if !(o.angle > -PI && o.angle <= PI) {
                return Err(bad("angle must lie in (-pi, pi]"));
            }
            if !(o.center[0].is_finite() && o.center[1].is_finite() && o.elevation.is_finite()) {
                return Err(bad("non-finite position"));
            }
            if obj.category >= vocab_len {
                return Err(SceneError::UnknownCategory {
                    index: obj.category,
                    len: vocab_len,
                });
            }
            if !o.footprints_intersect(&room.floor) {
                return Err(bad("footprint lies outside the room"));
            }
        }
        Ok(())
    }

    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }
}

/// Ordered category names with reserved wall and floor entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    names: Vec<String>,
}

impl Vocabulary {
    /// Builds a vocabulary, appending `wall`/`floor` when missing.
    pub fn new(names: Vec<String>) -> Result<Self, SceneError> {
        let mut names = names;
        for reserved in [WALL_NAME, FLOOR_NAME] {
            if !names.iter().any(|n| n == reserved) {
                names.push(reserved.to_string());
            }
        }
        let mut seen = BTreeMap::new();
        for n in &names {
            if seen.insert(n.as_str(), ()).is_some() {
                return Err(SceneError::InvalidVocabulary(alloc::format!(
                    "duplicate category `{n}`"
                )));
            }
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(|s| s.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn wall(&self) -> usize {
        self.index_of(WALL_NAME).expect("wall is reserved")
    }

    pub fn floor(&self) -> usize {
        self.index_of(FLOOR_NAME).expect("floor is reserved")
    }

    pub fn is_structural(&self, index: usize) -> bool {
        index == self.wall() || index == self.floor()
    }

    /// Length of a leaf vector over this vocabulary.
    pub fn leaf_dim(&self) -> usize {
        3 + self.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub min_objects: usize,
    pub max_objects: usize,
    /// Fraction of scenes in which a category must appear to be kept.
    pub min_category_frequency: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_objects: 4,
            max_objects: 20,
            min_category_frequency: 0.01,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.min_objects == 0 || self.min_objects > self.max_objects {
            return Err(SceneError::InvalidFilter(alloc::format!(
                "need 0 < min_objects <= max_objects, got {} and {}",
                self.min_objects,
                self.max_objects
            )));
        }
        if !(0.0..=1.0).contains(&self.min_category_frequency) {
            return Err(SceneError::InvalidFilter(
                "min_category_frequency must be within [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub scenes_in: usize,
    pub scenes_retained: usize,
    pub dropped_too_few: usize,
    pub dropped_too_many: usize,
    /// Object categories (excluding wall/floor) before and after filtering.
    pub categories_in: usize,
    pub categories_retained: usize,
    pub dropped_categories: Vec<String>,
    pub objects_removed: usize,
}

/// Scenes sharing a room type and vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub room_type: RoomType,
    pub vocabulary: Vocabulary,
    pub scenes: Vec<Scene>,
}

impl Corpus {
    /// Fraction of scenes containing each category at least once.
    pub fn category_frequencies(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.vocabulary.len()];
        for scene in &self.scenes {
            let mut present = vec![false; self.vocabulary.len()];
            for o in &scene.objects {
                present[o.category] = true;
            }
            for (c, p) in present.iter().enumerate() {
                if *p {
                    counts[c] += 1;
                }
            }
        }
        let n = self.scenes.len().max(1) as f64;
        let mut freq: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
        freq[self.vocabulary.wall()] = 1.0;
        freq[self.vocabulary.floor()] = 1.0;
        freq
    }

    /// Re-expresses every object's category in `vocab`; objects whose
    /// category is absent from `vocab` are removed.
    pub fn with_vocabulary(&self, vocab: &Vocabulary) -> Corpus {
        let map: Vec<Option<usize>> = self
            .vocabulary
            .names()
            .iter()
            .map(|n| vocab.index_of(n))
            .collect();
        let scenes = self
            .scenes
            .iter()
            .map(|s| Scene {
                room: s.room.clone(),
                room_type: s.room_type,
                objects: s
                    .objects
                    .iter()
                    .filter_map(|o| {
                        map[o.category].map(|c| SceneObject {
                            id: o.id.clone(),
                            category: c,
                            obb: o.obb,
                        })
                    })
                    .collect(),
            })
            .collect();
        Corpus {
            room_type: self.room_type,
            vocabulary: vocab.clone(),
            scenes,
        }
    }

    /// Applies the filter until a fixed point, so that a second
    /// application changes nothing.
    pub fn filtered(&self, cfg: &FilterConfig) -> Result<(Corpus, FilterReport), SceneError> {
        cfg.validate()?;
        for scene in &self.scenes {
            scene.validate(self.vocabulary.len())?;
        }
        let object_categories = |c: &Corpus| {
            c.vocabulary.len() - 2 // wall and floor are always present
        };
        let mut report = FilterReport {
            scenes_in: self.scenes.len(),
            categories_in: object_categories(self),
            ..Default::default()
        };
        let objects_in: usize = self.scenes.iter().map(|s| s.objects.len()).sum();
        let mut current = self.clone();
        loop {
            let freq = current.category_frequencies();
            let keep: Vec<String> = current
                .vocabulary
                .names()
                .iter()
                .enumerate()
                .filter(|(i, _)| freq[*i] >= cfg.min_category_frequency)
                .map(|(_, n)| n.clone())
                .collect();
            let mut changed = false;
            if keep.len() != current.vocabulary.len() {
                for n in current.vocabulary.names() {
                    if !keep.contains(n) {
                        report.dropped_categories.push(n.clone());
                    }
                }
                let vocab = Vocabulary::new(keep)?;
                current = current.with_vocabulary(&vocab);
                changed = true;
            }
            let before = current.scenes.len();
            let mut kept = Vec::with_capacity(before);
            for s in current.scenes.drain(..) {
                if s.objects.len() < cfg.min_objects {
                    report.dropped_too_few += 1;
                } else if s.objects.len() > cfg.max_objects {
                    report.dropped_too_many += 1;
                } else {
                    kept.push(s);
                }
            }
            current.scenes = kept;
            if current.scenes.len() != before {
                changed = true;
            }
            if current.scenes.is_empty() {
                return Err(SceneError::EmptyCorpus);
            }
            if !changed {
                break;
            }
        }
        let objects_out: usize = current.scenes.iter().map(|s| s.objects.len()).sum();
        report.scenes_retained = current.scenes.len();
        report.categories_retained = object_categories(&current);
        report.objects_removed = objects_in - objects_out;
        Ok((current, report))
    }
}

/// Vocabulary ordered by descending scene frequency, then name. Wall and
/// floor count as present in every scene.
pub fn build_vocabulary(corpus: &Corpus, min_frequency: f64) -> Vocabulary {
    let freq = corpus.category_frequencies();
    let mut entries: Vec<(f64, &String)> = corpus
        .vocabulary
        .names()
        .iter()
        .enumerate()
        .filter(|(i, _)| freq[*i] >= min_frequency)
        .map(|(i, n)| (freq[i], n))
        .collect();
    entries.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    Vocabulary::new(entries.into_iter().map(|(_, n)| n.clone()).collect())
        .expect("names of an existing vocabulary are unique")
}

/// `[size_x, size_y, size_z] ++ one_hot(category)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafVector(pub Vec<f64>);

impl LeafVector {
    pub fn new(size: [f64; 3], category: usize, vocab_len: usize) -> Result<Self, SceneError> {
        if category >= vocab_len {
            return Err(SceneError::UnknownCategory {
                index: category,
                len: vocab_len,
            });
        }
        let mut v = vec![0.0; 3 + vocab_len];
        v[..3].copy_from_slice(&size);
        v[3 + category] = 1.0;
        Ok(Self(v))
    }

    pub fn sizes(&self) -> [f64; 3] {
        [self.0[0], self.0[1], self.0[2]]
    }

    /// Category by argmax over the label block.
    pub fn category(&self) -> usize {
        argmax(&self.0[3..])
    }
}

pub fn leaf_vector(obj: &SceneObject, vocab: &Vocabulary) -> Result<LeafVector, SceneError> {
    LeafVector::new(obj.obb.size, obj.category, vocab.len())
}
