//! From latent samples to placed scenes.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Obb;
use crate::hierarchy::{realize_layout, HierarchyError, LayoutOptions, LeafRole, SceneTree};
use crate::math::{ln, sqrt};
use crate::model::{decode_free_batch, DecodeLimits, ModelError, ModelParams};
use crate::scene::{Room, RoomType, Scene, SceneObject, WALL_THICKNESS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthesisError {
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("catalog: {0}")]
    Catalog(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedObject {
    pub id: String,
    pub category: usize,
    /// Absolute box in the room frame.
    pub obb: Obb,
    pub model_ref: Option<String>,
}

/// A realized scene. Every object leaf of `source_tree` has exactly one placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedScene {
    pub room: Room,
    pub placements: Vec<PlacedObject>,
    pub source_tree: SceneTree,
}

impl PlacedScene {
    pub fn to_scene(&self, room_type: RoomType) -> Scene {
        Scene {
            room: self.room.clone(),
            objects: self
                .placements
                .iter()
                .map(|p| SceneObject {
                    id: p.id.clone(),
                    category: p.category,
                    obb: p.obb,
                })
                .collect(),
            room_type,
        }
    }
}

/// Number of wall leaves in a tree.
pub fn wall_count(tree: &SceneTree) -> usize {
    tree.leaves().iter().filter(|l| matches!(l.role, LeafRole::Wall(_))).count()
}

/// Room size implied by four realized walls: opposite wall centers lie one
/// room extent plus one wall thickness apart.
fn room_from_walls(walls: &[Option<Obb>; 4], prior: &Room) -> Room {
    let gap = |a: Option<Obb>, b: Option<Obb>| {
        let (a, b) = (a?, b?);
        let (dx, dy) = (a.center[0] - b.center[0], a.center[1] - b.center[1]);
        let d = sqrt(dx * dx + dy * dy) - WALL_THICKNESS;
        (d.is_finite() && d > 0.0).then_some(d)
    };
    let width = gap(walls[1], walls[3]).unwrap_or(prior.width);
    let depth = gap(walls[0], walls[2]).unwrap_or(prior.depth);
    Room::new(width, depth, prior.wall_height).unwrap_or_else(|_| prior.clone())
}

/// Lays out a hierarchy in the room frame (floor at the origin, snapping on).
///
/// The room size comes from the realized walls when all four are present
/// exactly once, otherwise from `room_prior`.
pub fn realize_placements(tree: &SceneTree, room_prior: &Room) -> Result<PlacedScene, SynthesisError> {
    realize_placements_with(tree, room_prior, &LayoutOptions::default())
}

pub fn realize_placements_with(tree: &SceneTree, room_prior: &Room, opts: &LayoutOptions) -> Result<PlacedScene, SynthesisError> {
    let layout = realize_layout(tree, opts)?;
    let leaves = tree.leaves();
    let mut walls: [Option<Obb>; 4] = [None; 4];
    let mut seen = [0usize; 4];
    let mut placements = Vec::new();
    for (leaf, obb) in leaves.iter().zip(&layout.leaves) {
        match leaf.role {
            LeafRole::Object => placements.push(PlacedObject {
                id: leaf.id.clone(),
                category: leaf.category,
                obb: *obb,
                model_ref: None,
            }),
            LeafRole::Wall(k) if (k as usize) < 4 => {
                walls[k as usize] = Some(*obb);
                seen[k as usize] += 1;
            }
            _ => {}
        }
    }
    if seen.iter().any(|&c| c != 1) {
        walls = [None; 4];
    }
    Ok(PlacedScene {
        room: room_from_walls(&walls, room_prior),
        placements,
        source_tree: tree.clone(),
    })
}

pub fn sample_latent<R: Rng + ?Sized>(latent_dim: usize, rng: &mut R) -> Vec<f64> {
    (0..latent_dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Decodes `z ~ N(0, I)` into a hierarchy.
pub fn sample_scene<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R, limits: DecodeLimits) -> Result<SceneTree, ModelError> {
    sample_scenes(params, rng, 1, limits).pop().expect("one sample")
}

/// `count` samples decoded together; latents are drawn in order from `rng`.
pub fn sample_scenes<R: Rng + ?Sized>(
    params: &ModelParams,
    rng: &mut R,
    count: usize,
    limits: DecodeLimits,
) -> Vec<Result<SceneTree, ModelError>> {
    let zs: Vec<Vec<f64>> = (0..count).map(|_| sample_latent(params.config.latent_dim, rng)).collect();
    decode_free_batch(params, &zs, limits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub id: String,
    pub category: String,
    pub dims: [f64; 3],
}

/// Local shape database indexed by category and dimensions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelCatalog {
    pub entries: Vec<CatalogEntry>,
}

impl ModelCatalog {
    pub fn new(entries: Vec<CatalogEntry>) -> Result<Self, SynthesisError> {
        let mut ids = BTreeSet::new();
        for e in &entries {
            if !ids.insert(e.id.as_str()) {
                return Err(SynthesisError::Catalog(format!("duplicate id `{}`", e.id)));
            }
            if !e.dims.iter().all(|d| d.is_finite() && *d > 0.0) {
                return Err(SynthesisError::Catalog(format!("entry `{}` has non-positive dimensions", e.id)));
            }
        }
        Ok(Self { entries })
    }
}

/// Same-category entry minimizing `Σ (ln dim − ln entry_dim)²`; ties go to the lowest id.
pub fn retrieve_model<'a>(catalog: &'a ModelCatalog, category: &str, dims: [f64; 3]) -> Result<&'a CatalogEntry, SynthesisError> {
    let mut best: Option<(f64, &CatalogEntry)> = None;
    for e in catalog.entries.iter().filter(|e| e.category == category) {
        let d: f64 = (0..3)
            .map(|i| {
                let t = ln(dims[i].max(f64::MIN_POSITIVE)) - ln(e.dims[i]);
                t * t
            })
            .sum();
        let better = match best {
            None => true,
            Some((bd, be)) => d < bd || (d == bd && e.id < be.id),
        };
        if better {
            best = Some((d, e));
        }
    }
    best.map(|(_, e)| e)
        .ok_or_else(|| SynthesisError::Catalog(format!("no entry of category `{category}`")))
}

/// Fills `model_ref` of every placement whose category the catalog covers.
pub fn attach_models(scene: &mut PlacedScene, catalog: &ModelCatalog, names: &[String]) {
    for p in &mut scene.placements {
        if let Some(name) = names.get(p.category) {
            p.model_ref = retrieve_model(catalog, name, p.obb.size).ok().map(|e| e.id.clone());
        }
    }
}
