//! On-disk formats.
//!
//! Text formats are UTF-8 JSON. Line-oriented files (`grains-scene/1`,
//! `grains-tree/1`, `grains-catalog/1`) hold a header record on the first
//! line and one record per following line. The checkpoint format
//! `grains-model/1` is a one-line JSON header followed by the parameters
//! as little-endian `f64` values, block by block in header order.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use grains_core::applications::{Layout2D, LayoutBox};
use grains_core::geometry::Obb;
use grains_core::math::normalize_angle;
use grains_core::model::{ModelConfig, ModelParams, Modules};
use grains_core::scene::{Corpus, FilterConfig, FilterReport, Room, RoomType, Scene, SceneObject, Vocabulary};
use grains_core::synthesis::{CatalogEntry, ModelCatalog, PlacedScene};
use grains_core::{PositionMode, SceneTree, WallRootMode};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCENE_FORMAT: &str = "grains-scene/1";
pub const TREE_FORMAT: &str = "grains-tree/1";
pub const MODEL_FORMAT: &str = "grains-model/1";
pub const PLACED_FORMAT: &str = "grains-placed/1";
pub const LAYOUT_FORMAT: &str = "grains-layout/1";
pub const CATALOG_FORMAT: &str = "grains-catalog/1";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: expected format `{expected}`, found `{found}`")]
    Version { path: PathBuf, expected: &'static str, found: String },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn invalid(path: &Path, message: impl Into<String>) -> FormatError {
    FormatError::Invalid {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn check_version(path: &Path, expected: &'static str, found: &str) -> Result<(), FormatError> {
    if found != expected {
        return Err(FormatError::Version {
            path: path.to_path_buf(),
            expected,
            found: found.to_string(),
        });
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, FormatError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(io_err(path))?))
}

fn write_line<T: Serialize>(w: &mut impl Write, path: &Path, value: &T) -> Result<(), FormatError> {
    serde_json::to_writer(&mut *w, value).map_err(|e| invalid(path, e.to_string()))?;
    w.write_all(b"\n").map_err(io_err(path))
}

/// Non-empty lines with their 1-based numbers.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, FormatError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn parse_line<T: for<'de> Deserialize<'de>>(path: &Path, line: usize, text: &str) -> Result<T, FormatError> {
    serde_json::from_str(text).map_err(|e| FormatError::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    })
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: String,
}

/// Splits a line-oriented file into its checked header and records.
fn header_and_records<H: for<'de> Deserialize<'de>>(
    path: &Path,
    expected: &'static str,
) -> Result<(H, Vec<(usize, String)>), FormatError> {
    let mut lines = read_lines(path)?.into_iter();
    let (n, first) = lines.next().ok_or_else(|| invalid(path, "empty file"))?;
    let probe: VersionProbe = parse_line(path, n, &first)?;
    check_version(path, expected, &probe.format_version)?;
    Ok((parse_line(path, n, &first)?, lines.collect()))
}

#[derive(Debug, Serialize, Deserialize)]
struct CorpusHeader {
    format_version: String,
    room_type: RoomType,
    category_names: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RoomRecord {
    width: f64,
    depth: f64,
    wall_height: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ObjectRecord {
    id: String,
    category: String,
    center: [f64; 2],
    elevation: f64,
    size: [f64; 3],
    angle: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SceneRecord {
    room: RoomRecord,
    objects: Vec<ObjectRecord>,
}

pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<(), FormatError> {
    let mut w = create(path)?;
    let header = CorpusHeader {
        format_version: SCENE_FORMAT.into(),
        room_type: corpus.room_type,
        category_names: corpus.vocabulary.names().to_vec(),
    };
    write_line(&mut w, path, &header)?;
    for scene in &corpus.scenes {
        let record = SceneRecord {
            room: RoomRecord {
                width: scene.room.width,
                depth: scene.room.depth,
                wall_height: scene.room.wall_height,
            },
            objects: scene
                .objects
                .iter()
                .map(|o| ObjectRecord {
                    id: o.id.clone(),
                    category: corpus.vocabulary.name(o.category).unwrap_or("?").to_string(),
                    center: o.obb.center,
                    elevation: o.obb.elevation,
                    size: o.obb.size,
                    angle: o.obb.angle,
                })
                .collect(),
        };
        write_line(&mut w, path, &record)?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a scene corpus; every scene must satisfy the scene invariants.
pub fn read_corpus(path: &Path) -> Result<Corpus, FormatError> {
    let (header, records): (CorpusHeader, _) = header_and_records(path, SCENE_FORMAT)?;
    let vocabulary = Vocabulary::new(header.category_names).map_err(|e| invalid(path, e.to_string()))?;
    let mut scenes = Vec::with_capacity(records.len());
    for (line, text) in records {
        let r: SceneRecord = parse_line(path, line, &text)?;
        let bad = |message: String| FormatError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let room = Room::new(r.room.width, r.room.depth, r.room.wall_height).map_err(|e| bad(e.to_string()))?;
        let mut objects = Vec::with_capacity(r.objects.len());
        for o in r.objects {
            let category = vocabulary
                .index_of(&o.category)
                .ok_or_else(|| bad(format!("object {}: unknown category `{}`", o.id, o.category)))?;
            if !o.angle.is_finite() || normalize_angle(o.angle) != o.angle {
                return Err(bad(format!("object {}: angle {} outside (-pi, pi]", o.id, o.angle)));
            }
            objects.push(SceneObject {
                id: o.id,
                category,
                obb: Obb::new(o.center, o.elevation, o.size, o.angle),
            });
        }
        let scene = Scene {
            room,
            objects,
            room_type: header.room_type,
        };
        scene.validate(vocabulary.len()).map_err(|e| bad(e.to_string()))?;
        scenes.push(scene);
    }
    Ok(Corpus {
        room_type: header.room_type,
        vocabulary,
        scenes,
    })
}

/// Reads a corpus and applies the filters.
pub fn load_corpus(path: &Path, filter: &FilterConfig) -> anyhow::Result<(Corpus, FilterReport)> {
    let corpus = read_corpus(path)?;
    Ok(corpus.filtered(filter)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct TreeHeader {
    format_version: String,
    room_type: RoomType,
    wall_root_mode: WallRootMode,
    position_mode: PositionMode,
    category_names: Vec<String>,
}

/// Hierarchies of one corpus, all built with the same modes.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSet {
    pub room_type: RoomType,
    pub vocabulary: Vocabulary,
    pub wall_root_mode: WallRootMode,
    pub position_mode: PositionMode,
    pub trees: Vec<SceneTree>,
}

pub fn write_trees(path: &Path, set: &TreeSet) -> Result<(), FormatError> {
    let mut w = create(path)?;
    let header = TreeHeader {
        format_version: TREE_FORMAT.into(),
        room_type: set.room_type,
        wall_root_mode: set.wall_root_mode,
        position_mode: set.position_mode,
        category_names: set.vocabulary.names().to_vec(),
    };
    write_line(&mut w, path, &header)?;
    for t in &set.trees {
        write_line(&mut w, path, t)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_trees(path: &Path) -> Result<TreeSet, FormatError> {
    let (header, records): (TreeHeader, _) = header_and_records(path, TREE_FORMAT)?;
    let vocabulary = Vocabulary::new(header.category_names).map_err(|e| invalid(path, e.to_string()))?;
    let mut trees = Vec::with_capacity(records.len());
    for (line, text) in records {
        let t: SceneTree = parse_line(path, line, &text)?;
        if t.wall_root_mode != header.wall_root_mode || t.position_mode != header.position_mode {
            return Err(FormatError::Parse {
                path: path.to_path_buf(),
                line,
                message: "tree modes differ from the header".into(),
            });
        }
        trees.push(t);
    }
    Ok(TreeSet {
        room_type: header.room_type,
        vocabulary,
        wall_root_mode: header.wall_root_mode,
        position_mode: header.position_mode,
        trees,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub name: String,
    /// Index of the first value in the parameter buffer.
    pub offset: usize,
    pub count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    format_version: String,
    room_type: RoomType,
    config: ModelConfig,
    category_names: Vec<String>,
    endianness: String,
    blocks: Vec<BlockRecord>,
}

/// A trained model together with the vocabulary it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub room_type: RoomType,
    pub vocabulary: Vocabulary,
    pub params: ModelParams,
}

/// Parameter blocks in buffer order: every dense layer contributes its
/// weights (row-major, `in × out`) followed by its biases.
pub fn checkpoint_blocks(modules: &Modules) -> Vec<BlockRecord> {
    modules
        .named_layers()
        .into_iter()
        .map(|(name, l)| BlockRecord {
            name,
            offset: l.offset,
            count: l.param_count(),
        })
        .collect()
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), FormatError> {
    let mut blocks = checkpoint_blocks(&ck.params.modules);
    blocks.sort_by_key(|b| b.offset);
    let header = ModelHeader {
        format_version: MODEL_FORMAT.into(),
        room_type: ck.room_type,
        config: ck.params.config.clone(),
        category_names: ck.vocabulary.names().to_vec(),
        endianness: "little".into(),
        blocks: blocks.clone(),
    };
    // write to a sibling file first so a crash never leaves a torn checkpoint
    let tmp = path.with_extension("partial");
    let mut w = create(&tmp)?;
    write_line(&mut w, &tmp, &header)?;
    for b in &blocks {
        for v in &ck.params.data[b.offset..b.offset + b.count] {
            w.write_all(&v.to_le_bytes()).map_err(io_err(&tmp))?;
        }
    }
    w.flush().map_err(io_err(&tmp))?;
    drop(w);
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, FormatError> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(io_err(path))?
        .read_to_end(&mut bytes)
        .map_err(io_err(path))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| invalid(path, "missing header line"))?;
    let head = std::str::from_utf8(&bytes[..nl]).map_err(|_| invalid(path, "header is not UTF-8"))?;
    let probe: VersionProbe = parse_line(path, 1, head)?;
    check_version(path, MODEL_FORMAT, &probe.format_version)?;
    let header: ModelHeader = parse_line(path, 1, head)?;
    if header.endianness != "little" {
        return Err(invalid(path, format!("unsupported endianness `{}`", header.endianness)));
    }
    let vocabulary = Vocabulary::new(header.category_names).map_err(|e| invalid(path, e.to_string()))?;
    if vocabulary.len() != header.config.vocab_len {
        return Err(invalid(path, "vocabulary size differs from the model configuration"));
    }
    header.config.validate().map_err(|e| invalid(path, e.to_string()))?;
    let modules = Modules::new(&header.config);
    let mut expected = checkpoint_blocks(&modules);
    expected.sort_by_key(|b| b.offset);
    if expected != header.blocks {
        return Err(invalid(path, "parameter blocks do not match the model configuration"));
    }
    let body = &bytes[nl + 1..];
    let total = modules.param_count;
    if body.len() != total * 8 {
        return Err(invalid(
            path,
            format!("expected {} parameter bytes, found {}", total * 8, body.len()),
        ));
    }
    let mut data = vec![0.0; total];
    let mut chunks = body.chunks_exact(8);
    for b in &header.blocks {
        for v in &mut data[b.offset..b.offset + b.count] {
            *v = f64::from_le_bytes(chunks.next().expect("length checked").try_into().expect("8 bytes"));
        }
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(invalid(path, format!("non-finite parameter at index {i}")));
    }
    let params = ModelParams::from_parts(header.config, data).map_err(|e| invalid(path, e.to_string()))?;
    Ok(Checkpoint {
        room_type: header.room_type,
        vocabulary,
        params,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct PlacedFile {
    format_version: String,
    room_type: RoomType,
    category_names: Vec<String>,
    scene: PlacedScene,
}

pub fn write_placed(path: &Path, scene: &PlacedScene, room_type: RoomType, vocab: &Vocabulary) -> Result<(), FormatError> {
    let mut w = create(path)?;
    let file = PlacedFile {
        format_version: PLACED_FORMAT.into(),
        room_type,
        category_names: vocab.names().to_vec(),
        scene: scene.clone(),
    };
    serde_json::to_writer_pretty(&mut w, &file).map_err(|e| invalid(path, e.to_string()))?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_placed(path: &Path) -> Result<(PlacedScene, RoomType, Vocabulary), FormatError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let probe: VersionProbe = parse_line(path, 1, &text)?;
    check_version(path, PLACED_FORMAT, &probe.format_version)?;
    let file: PlacedFile = parse_line(path, 1, &text)?;
    let vocab = Vocabulary::new(file.category_names).map_err(|e| invalid(path, e.to_string()))?;
    Ok((file.scene, file.room_type, vocab))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayoutRoom {
    width: f64,
    depth: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayoutFile {
    /// Optional in request bodies; files are probed before parsing.
    #[serde(default = "layout_format")]
    pub format_version: String,
    room: LayoutRoom,
    boxes: Vec<LayoutBox>,
}

fn layout_format() -> String {
    LAYOUT_FORMAT.into()
}

impl LayoutFile {
    pub fn new(layout: &Layout2D) -> Self {
        Self {
            format_version: LAYOUT_FORMAT.into(),
            room: LayoutRoom {
                width: layout.width,
                depth: layout.depth,
            },
            boxes: layout.boxes.clone(),
        }
    }

    /// Checks the version and the layout invariants.
    pub fn into_layout(self) -> Result<Layout2D, String> {
        if self.format_version != LAYOUT_FORMAT {
            return Err(format!("expected format `{LAYOUT_FORMAT}`, found `{}`", self.format_version));
        }
        let layout = Layout2D {
            width: self.room.width,
            depth: self.room.depth,
            boxes: self.boxes,
        };
        if !(layout.width > 0.0 && layout.depth > 0.0) {
            return Err("room dimensions must be positive".into());
        }
        let room = Obb::new([0.0, 0.0], 0.0, [layout.width, layout.depth, 1.0], 0.0);
        for (i, b) in layout.boxes.iter().enumerate() {
            if !(b.size[0] > 0.0 && b.size[1] > 0.0) || !b.center.iter().chain(&[b.angle]).all(|v| v.is_finite()) {
                return Err(format!("box {i}: sizes must be positive and values finite"));
            }
            let obb = Obb::new(b.center, 0.0, [b.size[0], b.size[1], 1.0], b.angle);
            if !room.footprints_intersect(&obb) {
                return Err(format!("box {i} lies outside the room"));
            }
        }
        Ok(layout)
    }
}

pub fn write_layout(path: &Path, layout: &Layout2D) -> Result<(), FormatError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &LayoutFile::new(layout)).map_err(|e| invalid(path, e.to_string()))?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_layout(path: &Path) -> Result<Layout2D, FormatError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let probe: VersionProbe = parse_line(path, 1, &text)?;
    check_version(path, LAYOUT_FORMAT, &probe.format_version)?;
    let file: LayoutFile = parse_line(path, 1, &text)?;
    file.into_layout().map_err(|m| invalid(path, m))
}

#[derive(Debug, Serialize, Deserialize)]
struct CatalogHeader {
    format_version: String,
}

pub fn write_catalog(path: &Path, catalog: &ModelCatalog) -> Result<(), FormatError> {
    let mut w = create(path)?;
    write_line(
        &mut w,
        path,
        &CatalogHeader {
            format_version: CATALOG_FORMAT.into(),
        },
    )?;
    for e in &catalog.entries {
        write_line(&mut w, path, e)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_catalog(path: &Path) -> Result<ModelCatalog, FormatError> {
    let (_, records): (CatalogHeader, _) = header_and_records(path, CATALOG_FORMAT)?;
    let entries = records
        .into_iter()
        .map(|(line, text)| parse_line::<CatalogEntry>(path, line, &text))
        .collect::<Result<Vec<_>, _>>()?;
    ModelCatalog::new(entries).map_err(|e| invalid(path, e.to_string()))
}
