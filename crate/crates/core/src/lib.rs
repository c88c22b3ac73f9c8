//! Learned generation of hierarchically structured indoor scenes.
//!
//! Scenes are sets of labeled oriented bounding boxes inside a rectangular
//! room. Each scene is organized into a hierarchy of support, surround,
//! co-occurrence and wall groups whose internal nodes carry 28-D relative
//! position vectors. A recursive variational autoencoder learns a latent
//! space over those hierarchies; sampling it and realizing the decoded tree
//! yields new room layouts.
//!
//! The crate is `no_std` (with `alloc`) when built without the default
//! `std` feature. File formats, the CLI and the HTTP service live in the
//! companion `grains` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod analysis;
pub mod applications;
pub mod geometry;
pub mod hierarchy;
pub mod math;
pub mod model;
pub mod nn;
pub mod relpos;
pub mod scene;
pub mod synth;
pub mod synthesis;

pub use geometry::{Obb, Pose};
pub use hierarchy::{
    build_hierarchy, realize_layout, validate_tree, BuildConfig, GroupKind, LayoutOptions, LeafData, LeafRole, NodeClass,
    RelationConfig, SceneNode, SceneTree, ValidationReport, WallRootMode,
};

pub use relpos::{PositionMode, RelPos28};
pub use scene::{Corpus, FilterConfig, Room, RoomType, Scene, SceneObject, Vocabulary};
