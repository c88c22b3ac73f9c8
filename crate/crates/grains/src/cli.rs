//! Batch entry points. Every subcommand writes machine-readable report files
//! and prints a one-line JSON summary on stdout.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use grains_core::applications::{layout_to_scenes, LayoutMode};
use grains_core::model::DecodeLimits;
use grains_core::synth::{synthesize_corpus, TemplateConfig};
use grains_core::synthesis::attach_models;
use grains_core::{FilterConfig, PositionMode, WallRootMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::formats::{self, TreeSet};
use crate::pipeline::{self, EvalOptions, TrainOptions};
use crate::render;

/// Environment variable naming the directory that holds default paths.
pub const DATA_DIR_ENV: &str = "GRAINS_DATA_DIR";

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const TREES_FILE: &str = "trees.jsonl";
pub const CHECKPOINT_FILE: &str = "model.grains";
pub const GENERATED_DIR: &str = "generated";
pub const EVAL_DIR: &str = "eval";
/// Tree set written by `generate` inside its output directory.
pub const GENERATED_TREES: &str = "scenes.trees.jsonl";
pub const REPORT_FILE: &str = "report.json";
/// Wall-clock measurements; kept apart so reports stay reproducible.
pub const TIMING_FILE: &str = "timing.json";

#[derive(Debug, Parser)]
#[command(name = "grains", version, about = "Hierarchical indoor scene generation")]
pub struct Cli {
    /// Worker threads. Computation is single-threaded, so every value gives bit-identical results.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Directory for default input and output paths.
    #[arg(long, global = true, env = DATA_DIR_ENV)]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WallRootArg {
    Full,
    WallOnly,
    None,
}

impl From<WallRootArg> for WallRootMode {
    fn from(a: WallRootArg) -> Self {
        match a {
            WallRootArg::Full => WallRootMode::Full,
            WallRootArg::WallOnly => WallRootMode::WallOnly,
            WallRootArg::None => WallRootMode::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PositionArg {
    Relative,
    Absolute,
}

impl From<PositionArg> for PositionMode {
    fn from(a: PositionArg) -> Self {
        match a {
            PositionArg::Relative => PositionMode::Relative,
            PositionArg::Absolute => PositionMode::Absolute,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayoutModeArg {
    Mean,
    Sample,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Writes a synthetic corpus from a room template.
    SynthCorpus {
        /// Built-in template name (`bedroom`) or a JSON template file.
        #[arg(long, default_value = "bedroom")]
        template: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        count: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validates and filters a corpus.
    Ingest {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        min_objects: Option<usize>,
        #[arg(long)]
        max_objects: Option<usize>,
        #[arg(long)]
        min_category_frequency: Option<f64>,
        /// Filter report path; defaults to `<out>.report.json`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Builds one hierarchy per scene.
    BuildTrees {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "full")]
        wall_root_mode: WallRootArg,
        #[arg(long, value_enum, default_value = "relative")]
        position_mode: PositionArg,
    },
    /// Trains a model on a tree set and writes a checkpoint.
    Train {
        #[arg(long)]
        trees: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to a tenth of the tree count.
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        /// Drop category labels from the leaf vectors.
        #[arg(long)]
        no_labels: bool,
        /// Rebuild the trees with this wall/root structure before training.
        #[arg(long, value_enum)]
        wall_root_mode: Option<WallRootArg>,
        /// Rebuild the trees with this position encoding before training.
        #[arg(long, value_enum)]
        position_mode: Option<PositionArg>,
        #[arg(long)]
        code_dim: Option<usize>,
        #[arg(long)]
        hidden_dim: Option<usize>,
        #[arg(long)]
        root_code_dim: Option<usize>,
        #[arg(long)]
        root_hidden_dim: Option<usize>,
        #[arg(long)]
        latent_dim: Option<usize>,
        #[arg(long)]
        kl_weight: Option<f64>,
    },
    /// Samples scenes from a checkpoint.
    Generate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a top-view SVG per scene.
        #[arg(long)]
        svg: bool,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long, default_value_t = DecodeLimits::default().max_depth)]
        max_depth: usize,
        #[arg(long, default_value_t = DecodeLimits::default().max_nodes)]
        max_nodes: usize,
    },
    /// Compares generated scenes with the training scenes.
    Eval {
        /// Training tree set.
        #[arg(long)]
        training: Option<PathBuf>,
        /// Generated tree set, or a `generate` output directory.
        #[arg(long)]
        generated: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Neighbors listed per generated scene.
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = grains_core::analysis::DEFAULT_WALK_LENGTH)]
        walk_length: usize,
        #[arg(long, default_value_t = grains_core::analysis::DEFAULT_MIN_SUPPORT)]
        min_support: f64,
        /// Relative-position export for `reference:target` category names; repeatable.
        #[arg(long = "relpos")]
        relpos: Vec<String>,
        /// Adds reconstruction accuracy of this checkpoint on the training set.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Held-out tree set for reconstruction accuracy; needs `--checkpoint`.
        #[arg(long)]
        heldout: Option<PathBuf>,
    },
    /// Turns a 2D box layout into labeled scenes.
    Layout2scene {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        layout: PathBuf,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, value_enum, default_value = "mean")]
        mode: LayoutModeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: bool,
    },
    /// Runs the HTTP service.
    Serve {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        address: String,
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Scenes are persisted here when given.
        #[arg(long)]
        store_dir: Option<PathBuf>,
        /// Training trees used for candidates and co-occurrence metrics.
        #[arg(long)]
        training: Option<PathBuf>,
    },
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit status: 0 on success, 1 on failure, 2 on usage errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn resolve(given: &Option<PathBuf>, data_dir: &Option<PathBuf>, default: &str, what: &str) -> anyhow::Result<PathBuf> {
    match (given, data_dir) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(d)) => Ok(d.join(default)),
        (None, None) => bail!("no {what} path given and {DATA_DIR_ENV} is not set"),
    }
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_template(source: &str) -> anyhow::Result<TemplateConfig> {
    if source == "bedroom" {
        return Ok(TemplateConfig::bedroom());
    }
    let text = fs::read_to_string(source).with_context(|| format!("template `{source}` is neither built in nor a readable file"))?;
    serde_json::from_str(&text).with_context(|| format!("parsing template {source}"))
}

/// Runs a parsed command line and returns its summary.
pub fn execute(cli: &Cli) -> anyhow::Result<Value> {
    if cli.threads == 0 {
        bail!("--threads must be positive");
    }
    let dd = &cli.data_dir;
    match &cli.command {
        Command::SynthCorpus { template, seed, count, out } => {
            let out = resolve(out, dd, CORPUS_FILE, "output")?;
            let t = load_template(template)?;
            let synth = synthesize_corpus(&t, *seed, *count)?;
            ensure_parent(&out)?;
            formats::write_corpus(&out, &synth.corpus)?;
            Ok(json!({
                "command": "synth-corpus",
                "out": out,
                "scenes": synth.corpus.scenes.len(),
                "categories": synth.corpus.vocabulary.len(),
            }))
        }
        Command::Ingest {
            corpus,
            out,
            min_objects,
            max_objects,
            min_category_frequency,
            report,
        } => {
            let input = resolve(corpus, dd, CORPUS_FILE, "corpus")?;
            let d = FilterConfig::default();
            let filter = FilterConfig {
                min_objects: min_objects.unwrap_or(d.min_objects),
                max_objects: max_objects.unwrap_or(d.max_objects),
                min_category_frequency: min_category_frequency.unwrap_or(d.min_category_frequency),
            };
            let (kept, rep) = formats::load_corpus(&input, &filter)?;
            ensure_parent(out)?;
            formats::write_corpus(out, &kept)?;
            let report_path = report.clone().unwrap_or_else(|| with_suffix(out, ".report.json"));
            write_json(&report_path, &rep)?;
            Ok(json!({ "command": "ingest", "out": out, "report": report_path, "filter": rep }))
        }
        Command::BuildTrees {
            corpus,
            out,
            wall_root_mode,
            position_mode,
        } => {
            let input = resolve(corpus, dd, CORPUS_FILE, "corpus")?;
            let out = resolve(out, dd, TREES_FILE, "output")?;
            let c = formats::read_corpus(&input)?;
            let set = pipeline::build_trees(&c, (*wall_root_mode).into(), (*position_mode).into())?;
            ensure_parent(&out)?;
            formats::write_trees(&out, &set)?;
            let nodes: usize = set.trees.iter().map(|t| t.node_count()).sum();
            Ok(json!({
                "command": "build-trees",
                "out": out,
                "trees": set.trees.len(),
                "nodes": nodes,
                "wall_root_mode": set.wall_root_mode,
                "position_mode": set.position_mode,
            }))
        }
        Command::Train {
            trees,
            out,
            epochs,
            seed,
            batch_size,
            lr,
            no_labels,
            wall_root_mode,
            position_mode,
            code_dim,
            hidden_dim,
            root_code_dim,
            root_hidden_dim,
            latent_dim,
            kl_weight,
        } => {
            let input = resolve(trees, dd, TREES_FILE, "trees")?;
            let out = resolve(out, dd, CHECKPOINT_FILE, "checkpoint")?;
            let mut set = formats::read_trees(&input)?;
            let wm = wall_root_mode.map(WallRootMode::from).unwrap_or(set.wall_root_mode);
            let pm = position_mode.map(PositionMode::from).unwrap_or(set.position_mode);
            set = pipeline::retarget(&set, wm, pm)?;
            let opts = TrainOptions {
                epochs: *epochs,
                seed: *seed,
                batch_size: *batch_size,
                lr: *lr,
                labels_enabled: !no_labels,
                code_dim: *code_dim,
                hidden_dim: *hidden_dim,
                root_code_dim: *root_code_dim,
                root_hidden_dim: *root_hidden_dim,
                latent_dim: *latent_dim,
                kl_weight: *kl_weight,
            };
            let (ck, summary, seconds) = pipeline::train_model(&set, &opts, |e, l, _| {
                eprintln!("epoch {:>4}  loss {:.6}", e + 1, l.total);
                true
            })?;
            ensure_parent(&out)?;
            formats::write_checkpoint(&out, &ck)?;
            let report_path = with_suffix(&out, ".report.json");
            write_json(&report_path, &json!({ "options": opts, "config": ck.params.config, "summary": summary }))?;
            let timing_path = with_suffix(&out, ".timing.json");
            write_json(&timing_path, &json!({ "train_seconds": seconds }))?;
            Ok(json!({
                "command": "train",
                "out": out,
                "report": report_path,
                "epochs": summary.epochs.len(),
                "first_loss": summary.epochs.first().map(|l| l.total),
                "final_loss": summary.epochs.last().map(|l| l.total),
            }))
        }
        Command::Generate {
            checkpoint,
            count,
            seed,
            out,
            svg,
            catalog,
            max_depth,
            max_nodes,
        } => {
            let ckp = resolve(checkpoint, dd, CHECKPOINT_FILE, "checkpoint")?;
            let out = resolve(out, dd, GENERATED_DIR, "output")?;
            let ck = formats::read_checkpoint(&ckp)?;
            let catalog = catalog.as_deref().map(formats::read_catalog).transpose()?;
            let limits = DecodeLimits {
                max_depth: *max_depth,
                max_nodes: *max_nodes,
            };
            let mut g = pipeline::generate(&ck, *count, *seed, limits);
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let names = ck.vocabulary.names().to_vec();
            for (i, scene) in g.scenes.iter_mut().enumerate() {
                if let Some(c) = &catalog {
                    attach_models(scene, c, &names);
                }
                formats::write_placed(&out.join(format!("scene_{i:04}.json")), scene, ck.room_type, &ck.vocabulary)?;
                if *svg {
                    fs::write(out.join(format!("scene_{i:04}.svg")), render::render_topview(scene, &names))?;
                }
            }
            let set = TreeSet {
                room_type: ck.room_type,
                vocabulary: ck.vocabulary.clone(),
                wall_root_mode: ck.params.config.wall_root_mode,
                position_mode: ck.params.config.position_mode,
                trees: g.scenes.iter().map(|s| s.source_tree.clone()).collect(),
            };
            formats::write_trees(&out.join(GENERATED_TREES), &set)?;
            write_json(&out.join(REPORT_FILE), &g.report)?;
            let per_scene_ms = if *count == 0 { 0.0 } else { g.decode_seconds * 1e3 / *count as f64 };
            write_json(
                &out.join(TIMING_FILE),
                &json!({ "decode_seconds": g.decode_seconds, "mean_decode_ms": per_scene_ms }),
            )?;
            Ok(json!({
                "command": "generate",
                "out": out,
                "requested": g.report.requested,
                "structurally_valid": g.report.structurally_valid,
                "four_wall_fraction": g.report.four_wall_fraction,
            }))
        }
        Command::Eval {
            training,
            generated,
            out,
            k,
            walk_length,
            min_support,
            relpos,
            checkpoint,
            heldout,
        } => {
            let tp = resolve(training, dd, TREES_FILE, "training trees")?;
            let mut gp = resolve(generated, dd, GENERATED_DIR, "generated trees")?;
            if gp.is_dir() {
                gp = gp.join(GENERATED_TREES);
            }
            let out = resolve(out, dd, EVAL_DIR, "output")?;
            let train_set = formats::read_trees(&tp)?;
            let gen_set = formats::read_trees(&gp)?;
            let mut pairs = Vec::new();
            for p in relpos {
                let Some((r, t)) = p.split_once(':') else {
                    bail!("--relpos expects `reference:target`, got `{p}`");
                };
                pairs.push((r.to_string(), t.to_string()));
            }
            let opts = EvalOptions {
                k: *k,
                walk_length: *walk_length,
                min_support: *min_support,
                relpos_pairs: pairs,
            };
            let report = pipeline::evaluate(&train_set, &gen_set, &opts)?;
            let mut recon = serde_json::Map::new();
            if heldout.is_some() && checkpoint.is_none() {
                bail!("--heldout needs --checkpoint");
            }
            if let Some(cp) = checkpoint {
                let ck = formats::read_checkpoint(cp)?;
                let cfg = &ck.params.config;
                let mut sets = vec![("training", train_set.clone())];
                if let Some(h) = heldout {
                    sets.push(("heldout", formats::read_trees(h)?));
                }
                for (name, set) in sets {
                    let set = pipeline::retarget(&set, cfg.wall_root_mode, cfg.position_mode)?;
                    recon.insert(name.into(), serde_json::to_value(pipeline::reconstruction(&ck, &set)?)?);
                }
            }
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let full = json!({ "analysis": report, "reconstruction": recon });
            write_json(&out.join(REPORT_FILE), &full)?;
            fs::write(out.join("cooccurrence.txt"), cooccurrence_table(&report.cooccurrence))?;
            let names = train_set.vocabulary.names();
            let cells: Vec<(usize, usize, f64)> = report
                .cooccurrence
                .pairs
                .iter()
                .filter_map(|p| Some((train_set.vocabulary.index_of(&p.category)?, train_set.vocabulary.index_of(&p.given)?, p.similarity)))
                .collect();
            fs::write(
                out.join("cooccurrence.svg"),
                render::render_heatmap("co-occurrence similarity", names, &cells),
            )?;
            Ok(json!({
                "command": "eval",
                "out": out,
                "mean_nearest_similarity": report.mean_nearest_similarity,
                "cooccurrence_similarity": report.cooccurrence.mean_similarity,
                "reconstruction": recon,
            }))
        }
        Command::Layout2scene {
            checkpoint,
            layout,
            n,
            mode,
            seed,
            out,
            svg,
        } => {
            let ckp = resolve(checkpoint, dd, CHECKPOINT_FILE, "checkpoint")?;
            let ck = formats::read_checkpoint(&ckp)?;
            let layout = formats::read_layout(layout)?;
            let mode = match mode {
                LayoutModeArg::Mean => LayoutMode::Mean,
                LayoutModeArg::Sample => LayoutMode::Sample,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let scenes = layout_to_scenes(&ck.params, &ck.vocabulary, &layout, *n, mode, &mut rng)?;
            fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
            let names = ck.vocabulary.names().to_vec();
            let mut objects = Vec::new();
            for (i, s) in scenes.iter().enumerate() {
                formats::write_placed(&out.join(format!("scene_{i:04}.json")), s, ck.room_type, &ck.vocabulary)?;
                if *svg {
                    fs::write(out.join(format!("scene_{i:04}.svg")), render::render_topview(s, &names))?;
                }
                objects.push(s.placements.len());
            }
            let report = json!({ "scenes": scenes.len(), "objects": objects, "layout_boxes": layout.boxes.len() });
            write_json(&out.join(REPORT_FILE), &report)?;
            Ok(json!({ "command": "layout2scene", "out": out, "scenes": scenes.len() }))
        }
        Command::Serve {
            checkpoint,
            address,
            catalog,
            store_dir,
            training,
        } => {
            let config = crate::service::ServeConfig {
                address: address.clone(),
                model_path: resolve(checkpoint, dd, CHECKPOINT_FILE, "checkpoint")?,
                catalog_path: catalog.clone(),
                store_dir: store_dir.clone(),
                training_path: training.clone(),
            };
            crate::service::serve_blocking(config)?;
            Ok(json!({ "command": "serve", "address": address }))
        }
    }
}

/// Plain-text table, one retained category pair per line.
pub fn cooccurrence_table(r: &pipeline::CooccurrenceReport) -> String {
    let mut s = format!(
        "# min_support {:.4}  pairs {}  mean {:.4}\n{:<20} {:<20} {:>8} {:>9} {:>10}\n",
        r.min_support, r.retained_pairs, r.mean_similarity, "category", "given", "training", "generated", "similarity"
    );
    for p in &r.pairs {
        s.push_str(&format!(
            "{:<20} {:<20} {:>8.4} {:>9.4} {:>10.4}\n",
            p.category, p.given, p.training, p.generated, p.similarity
        ));
    }
    s
}
