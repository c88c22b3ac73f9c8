//! Whole-corpus steps shared by the CLI, the service and the tests.

use std::collections::BTreeMap;
use std::time::Instant;

use anyhow::{bail, Context};
use grains_core::analysis::{
    build_scene_graph, cooccurrence_matrix, cooccurrence_similarity, nearest_neighbors, relpos_distribution, RelposExport,
    SceneGraph,
};
use grains_core::model::{prepare_tree, train, DecodeLimits, FlatTree, LossBreakdown, ModelConfig, ModelError, ModelParams, TrainConfig};
use grains_core::scene::{Corpus, Room, RoomType, Scene};
use grains_core::synthesis::{realize_placements, sample_scenes, wall_count, PlacedScene};
use grains_core::{build_hierarchy, validate_tree, BuildConfig, PositionMode, SceneTree, WallRootMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::formats::{Checkpoint, TreeSet};

pub fn build_trees(corpus: &Corpus, wall_root_mode: WallRootMode, position_mode: PositionMode) -> anyhow::Result<TreeSet> {
    let cfg = BuildConfig {
        wall_root_mode,
        position_mode,
        ..BuildConfig::default()
    };
    let trees = corpus
        .scenes
        .iter()
        .enumerate()
        .map(|(i, s)| build_hierarchy(s, &corpus.vocabulary, &cfg).with_context(|| format!("scene {i}")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(TreeSet {
        room_type: corpus.room_type,
        vocabulary: corpus.vocabulary.clone(),
        wall_root_mode,
        position_mode,
        trees,
    })
}

/// Model dimensions and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub seed: u64,
    pub batch_size: Option<usize>,
    pub lr: f64,
    pub labels_enabled: bool,
    /// Overrides applied on top of the defaults for the vocabulary.
    pub code_dim: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub root_code_dim: Option<usize>,
    pub root_hidden_dim: Option<usize>,
    pub latent_dim: Option<usize>,
    pub kl_weight: Option<f64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: TrainConfig::default().epochs,
            seed: 0,
            batch_size: None,
            lr: TrainConfig::default().adam.lr,
            labels_enabled: true,
            code_dim: None,
            hidden_dim: None,
            root_code_dim: None,
            root_hidden_dim: None,
            latent_dim: None,
            kl_weight: None,
        }
    }
}

impl TrainOptions {
    pub fn model_config(&self, set: &TreeSet) -> ModelConfig {
        let d = ModelConfig::for_vocabulary(&set.vocabulary);
        ModelConfig {
            position_mode: set.position_mode,
            wall_root_mode: set.wall_root_mode,
            labels_enabled: self.labels_enabled,
            code_dim: self.code_dim.unwrap_or(d.code_dim),
            hidden_dim: self.hidden_dim.unwrap_or(d.hidden_dim),
            root_code_dim: self.root_code_dim.unwrap_or(d.root_code_dim),
            root_hidden_dim: self.root_hidden_dim.unwrap_or(d.root_hidden_dim),
            latent_dim: self.latent_dim.unwrap_or(d.latent_dim),
            kl_weight: self.kl_weight.unwrap_or(d.kl_weight),
            ..d
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub trees: usize,
    pub parameters: usize,
    pub batch_size: usize,
    pub steps: usize,
    pub epochs: Vec<LossBreakdown>,
    pub stopped_early: bool,
}

impl TrainSummary {
    /// Final epoch loss over first epoch loss.
    pub fn loss_ratio(&self) -> Option<f64> {
        let (first, last) = (self.epochs.first()?, self.epochs.last()?);
        (first.total > 0.0).then(|| last.total / first.total)
    }
}

pub fn flatten(params_cfg: &ModelConfig, trees: &[SceneTree]) -> anyhow::Result<Vec<FlatTree>> {
    trees
        .iter()
        .enumerate()
        .map(|(i, t)| prepare_tree(params_cfg, t).with_context(|| format!("tree {i}")))
        .collect()
}

/// Trains a fresh model; `on_epoch` sees each finished epoch and may stop
/// training. Also returns the wall-clock seconds spent in training.
pub fn train_model(
    set: &TreeSet,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(usize, &LossBreakdown, &ModelParams) -> bool,
) -> anyhow::Result<(Checkpoint, TrainSummary, f64)> {
    let cfg = opts.model_config(set);
    let flat = flatten(&cfg, &set.trees)?;
    let mut params = ModelParams::init(cfg, opts.seed)?;
    let tc = TrainConfig {
        epochs: opts.epochs,
        batch_size: opts.batch_size,
        seed: opts.seed,
        adam: grains_core::nn::AdamConfig {
            lr: opts.lr,
            ..Default::default()
        },
    };
    let start = Instant::now();
    let report = train(&mut params, &flat, &tc, |e, l, p| on_epoch(e, l, p))?;
    let summary = TrainSummary {
        trees: flat.len(),
        parameters: params.data.len(),
        batch_size: report.batch_size,
        steps: report.steps,
        epochs: report.epochs,
        stopped_early: report.stopped_early,
    };
    Ok((
        Checkpoint {
            room_type: set.room_type,
            vocabulary: set.vocabulary.clone(),
            params,
        },
        summary,
        start.elapsed().as_secs_f64(),
    ))
}

/// Room used when the decoded walls do not determine the size.
pub fn default_room(room_type: RoomType) -> Room {
    let (w, d) = match room_type {
        RoomType::Living => (5.0, 4.5),
        RoomType::Kitchen => (3.5, 3.0),
        RoomType::Office => (4.0, 3.5),
        RoomType::Bedroom | RoomType::Custom => (4.0, 4.0),
    };
    Room::new(w, d, 2.6).expect("positive constants")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateReport {
    pub seed: u64,
    pub requested: usize,
    /// Decoded without hitting the depth or node limits.
    pub within_limits: usize,
    /// Within limits and free of structural violations.
    pub structurally_valid: usize,
    pub validity_rate: f64,
    pub realized: usize,
    pub four_walls: usize,
    pub four_wall_fraction: f64,
    pub wall_count_histogram: BTreeMap<usize, usize>,
    /// Structural violation codes over all invalid trees.
    pub violations: BTreeMap<String, usize>,
}

pub struct Generated {
    pub report: GenerateReport,
    /// Wall-clock seconds spent decoding the whole batch.
    pub decode_seconds: f64,
    /// Structurally valid, realized scenes in sample order.
    pub scenes: Vec<PlacedScene>,
}

/// Samples `count` latents from `seed`, decodes them as one batch and
/// realizes the structurally valid trees.
pub fn generate(ck: &Checkpoint, count: usize, seed: u64, limits: DecodeLimits) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = Instant::now();
    let decoded = sample_scenes(&ck.params, &mut rng, count, limits);
    let decode_seconds = start.elapsed().as_secs_f64();
    let prior = default_room(ck.room_type);
    let mut report = GenerateReport {
        seed,
        requested: count,
        within_limits: 0,
        structurally_valid: 0,
        validity_rate: 0.0,
        realized: 0,
        four_walls: 0,
        four_wall_fraction: 0.0,
        wall_count_histogram: BTreeMap::new(),
        violations: BTreeMap::new(),
    };
    let mut scenes = Vec::new();
    for r in decoded {
        let tree = match r {
            Ok(t) => t,
            Err(ModelError::Limit(_)) => continue,
            Err(e) => {
                *report.violations.entry(format!("decode: {e}")).or_default() += 1;
                continue;
            }
        };
        report.within_limits += 1;
        let walls = wall_count(&tree);
        *report.wall_count_histogram.entry(walls).or_default() += 1;
        if walls == 4 {
            report.four_walls += 1;
        }
        let v = validate_tree(&tree);
        if !v.structural_ok() {
            for x in v.violations.iter().filter(|x| x.is_structural()) {
                *report.violations.entry(x.code.clone()).or_default() += 1;
            }
            continue;
        }
        report.structurally_valid += 1;
        if let Ok(p) = realize_placements(&tree, &prior) {
            report.realized += 1;
            scenes.push(p);
        }
    }
    if count > 0 {
        report.validity_rate = report.structurally_valid as f64 / count as f64;
        report.four_wall_fraction = report.four_walls as f64 / count as f64;
    }
    Generated {
        report,
        decode_seconds,
        scenes,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub training: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborRecord {
    pub generated: usize,
    pub neighbors: Vec<Neighbor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSimilarity {
    pub category: String,
    pub given: String,
    pub training: f64,
    pub generated: f64,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CooccurrenceReport {
    pub min_support: f64,
    pub retained_pairs: usize,
    pub mean_similarity: f64,
    /// `similarity` of P(category | given) between the corpora.
    pub pairs: Vec<NamedSimilarity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelposReport {
    pub reference: String,
    pub target: String,
    pub training: RelposExport,
    pub generated: RelposExport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub training_scenes: usize,
    pub generated_scenes: usize,
    pub walk_length: usize,
    pub mean_nearest_similarity: f64,
    pub nearest_neighbors: Vec<NeighborRecord>,
    pub cooccurrence: CooccurrenceReport,
    pub relpos: Vec<RelposReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub k: usize,
    pub walk_length: usize,
    pub min_support: f64,
    /// Category name pairs (reference, target).
    pub relpos_pairs: Vec<(String, String)>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            k: 3,
            walk_length: grains_core::analysis::DEFAULT_WALK_LENGTH,
            min_support: grains_core::analysis::DEFAULT_MIN_SUPPORT,
            relpos_pairs: Vec::new(),
        }
    }
}

/// Scenes of a set of posed trees.
pub fn scenes_of(set: &TreeSet) -> anyhow::Result<Vec<Scene>> {
    let prior = default_room(set.room_type);
    set.trees
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let placed = if t.is_posed() {
                placed_from_posed(t, &prior)
            } else {
                realize_placements(t, &prior).with_context(|| format!("tree {i}"))?
            };
            Ok(placed.to_scene(set.room_type))
        })
        .collect()
}

/// Placements read straight from stored leaf poses.
pub fn placed_from_posed(tree: &SceneTree, prior: &Room) -> PlacedScene {
    let mut placed = realize_placements(&tree.without_poses(), prior).unwrap_or_else(|_| PlacedScene {
        room: prior.clone(),
        placements: Vec::new(),
        source_tree: tree.clone(),
    });
    placed.placements = tree
        .object_leaves()
        .iter()
        .filter_map(|l| {
            Some(grains_core::synthesis::PlacedObject {
                id: l.id.clone(),
                category: l.category,
                obb: l.obb()?,
                model_ref: None,
            })
        })
        .collect();
    placed.source_tree = tree.clone();
    placed
}

/// Compares generated hierarchies with training hierarchies.
pub fn evaluate(training: &TreeSet, generated: &TreeSet, opts: &EvalOptions) -> anyhow::Result<EvalReport> {
    if training.vocabulary != generated.vocabulary {
        bail!("training and generated sets use different vocabularies");
    }
    let vocab = &training.vocabulary;
    let train_graphs: Vec<SceneGraph> = training.trees.iter().map(build_scene_graph).collect();
    let gen_graphs: Vec<SceneGraph> = generated.trees.iter().map(build_scene_graph).collect();
    let mut nn_records = Vec::with_capacity(gen_graphs.len());
    let mut nn_sum = 0.0;
    for (i, g) in gen_graphs.iter().enumerate() {
        let top = nearest_neighbors(g, &train_graphs, opts.k, opts.walk_length);
        nn_sum += top.first().map(|t| t.1).unwrap_or(0.0);
        nn_records.push(NeighborRecord {
            generated: i,
            neighbors: top
                .into_iter()
                .map(|(training, similarity)| Neighbor { training, similarity })
                .collect(),
        });
    }
    let train_scenes = scenes_of(training)?;
    let gen_scenes = scenes_of(generated)?;
    let mt = cooccurrence_matrix(&train_scenes, vocab.len());
    let mg = cooccurrence_matrix(&gen_scenes, vocab.len());
    let sim = cooccurrence_similarity(&mt, &mg, opts.min_support);
    let name = |c: usize| vocab.name(c).unwrap_or("?").to_string();
    let mut relpos = Vec::new();
    for (r, t) in &opts.relpos_pairs {
        let (ri, ti) = match (vocab.index_of(r), vocab.index_of(t)) {
            (Some(a), Some(b)) => (a, b),
            _ => bail!("unknown category in relpos pair {r}:{t}"),
        };
        relpos.push(RelposReport {
            reference: r.clone(),
            target: t.clone(),
            training: relpos_distribution(&train_scenes, ri, ti),
            generated: relpos_distribution(&gen_scenes, ri, ti),
        });
    }
    Ok(EvalReport {
        training_scenes: training.trees.len(),
        generated_scenes: generated.trees.len(),
        walk_length: opts.walk_length,
        mean_nearest_similarity: if gen_graphs.is_empty() { 0.0 } else { nn_sum / gen_graphs.len() as f64 },
        nearest_neighbors: nn_records,
        cooccurrence: CooccurrenceReport {
            min_support: opts.min_support,
            retained_pairs: sim.entries.len(),
            mean_similarity: sim.mean,
            pairs: sim
                .entries
                .iter()
                .map(|e| NamedSimilarity {
                    category: name(e.c1),
                    given: name(e.c2),
                    training: e.training,
                    generated: e.generated,
                    similarity: e.similarity,
                })
                .collect(),
        },
        relpos,
    })
}

/// Rebuilds a posed tree set under other hierarchy modes.
pub fn retarget(set: &TreeSet, wall_root_mode: WallRootMode, position_mode: PositionMode) -> anyhow::Result<TreeSet> {
    if set.wall_root_mode == wall_root_mode && set.position_mode == position_mode {
        return Ok(set.clone());
    }
    let corpus = Corpus {
        room_type: set.room_type,
        vocabulary: set.vocabulary.clone(),
        scenes: scenes_of(set)?,
    };
    build_trees(&corpus, wall_root_mode, position_mode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub trees: usize,
    pub mean_loss: f64,
    /// Node classifier argmax against the true node kinds along each tree.
    pub classifier_accuracy: f64,
    /// Leaf category argmax of the teacher-forced decoder.
    pub leaf_category_accuracy: f64,
}

/// Encodes each tree to its posterior mean and decodes along its own topology.
pub fn reconstruction(ck: &Checkpoint, set: &TreeSet) -> anyhow::Result<ReconstructionReport> {
    if set.vocabulary != ck.vocabulary {
        bail!("tree set and checkpoint use different vocabularies");
    }
    let cfg = &ck.params.config;
    if set.wall_root_mode != cfg.wall_root_mode || set.position_mode != cfg.position_mode {
        bail!("tree set was built in other hierarchy modes than the checkpoint");
    }
    let flat = flatten(cfg, &set.trees)?;
    let refs: Vec<&FlatTree> = flat.iter().collect();
    let out = grains_core::model::evaluate(&ck.params, &refs, &vec![grains_core::model::Latent::Mean; refs.len()])?;
    let ratio = |h: usize, t: usize| if t == 0 { 0.0 } else { h as f64 / t as f64 };
    Ok(ReconstructionReport {
        trees: refs.len(),
        mean_loss: out.mean.total,
        classifier_accuracy: ratio(out.class_hits, out.class_total),
        leaf_category_accuracy: ratio(out.leaf_category_hits, out.leaf_total),
    })
}
