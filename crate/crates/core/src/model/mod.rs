//! Recursive variational autoencoder over scene hierarchies.
//!
//! Each node kind has an encoder folding child codes and position vectors
//! into one code, and a decoder inverting it. Root codes pass through a
//! Gaussian head. A node classifier picks the decoder during free decoding.
//!
//! Network-space features: lengths are divided by `length_scale` and
//! angles by `angle_scale` so that tanh outputs can reach them.

mod decode;
mod engine;
mod train;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::{validate_tree, GroupKind, SceneNode, SceneTree, WallRootMode};
use crate::math::argmax;
use crate::nn::{init_layers, softmax, Activation, Dense, Mlp};
use crate::relpos::{BitGroup, PositionMode, RelPos28, ALIGN_START, ATTACH_START, EDGE_START, RELPOS_DIM};
use crate::scene::Vocabulary;

pub use decode::{canonical_order, decode_free, decode_free_batch, DecodeLimits};
pub use engine::{evaluate, loss_and_gradient, teacher_decode, BatchOutput, Latent, TeacherOutput};
pub use train::{batch_size_for, train, TrainConfig, TrainReport};

pub const NUM_CLASSES: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at step {step} (tree {tree})")]
    NonFinite { step: usize, tree: usize },
    #[error("decode limit exceeded: {0}")]
    Limit(String),
    #[error("empty training set")]
    EmptyCorpus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_len: usize,
    pub wall_category: usize,
    pub floor_category: usize,
    pub code_dim: usize,
    pub hidden_dim: usize,
    pub root_code_dim: usize,
    pub root_hidden_dim: usize,
    pub latent_dim: usize,
    pub position_mode: PositionMode,
    pub wall_root_mode: WallRootMode,
    pub labels_enabled: bool,
    pub kl_weight: f64,
    pub classifier_weight: f64,
    pub leaf_weight: f64,
    pub relpos_weight: f64,
    pub init_scale: f64,
    pub length_scale: f64,
    pub angle_scale: f64,
}

impl ModelConfig {
    pub fn for_vocabulary(vocab: &Vocabulary) -> Self {
        Self {
            vocab_len: vocab.len(),
            wall_category: vocab.wall(),
            floor_category: vocab.floor(),
            code_dim: 250,
            hidden_dim: 750,
            root_code_dim: 350,
            root_hidden_dim: 1050,
            latent_dim: 350,
            position_mode: PositionMode::Relative,
            wall_root_mode: WallRootMode::Full,
            labels_enabled: true,
            kl_weight: 0.001,
            classifier_weight: 1.0,
            leaf_weight: 1.0,
            relpos_weight: 1.0,
            init_scale: 0.03,
            length_scale: 8.0,
            angle_scale: 4.0,
        }
    }

    pub fn leaf_dim(&self) -> usize {
        3 + self.vocab_len
    }

    /// Dimension of the code entering the Gaussian head.
    pub fn root_dim(&self) -> usize {
        match self.wall_root_mode {
            WallRootMode::Full => self.root_code_dim,
            _ => self.code_dim,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            self.vocab_len,
            self.code_dim,
            self.hidden_dim,
            self.root_code_dim,
            self.root_hidden_dim,
            self.latent_dim,
        ];
        if dims.contains(&0) {
            return Err(ModelError::InvalidConfig(String::from("dimensions must be positive")));
        }
        if self.wall_category >= self.vocab_len || self.floor_category >= self.vocab_len || self.wall_category == self.floor_category {
            return Err(ModelError::InvalidConfig(String::from("wall/floor categories out of range")));
        }
        let weights = [self.kl_weight, self.classifier_weight, self.leaf_weight, self.relpos_weight, self.init_scale];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || !(self.length_scale > 0.0 && self.angle_scale > 0.0) {
            return Err(ModelError::InvalidConfig(String::from("weights and scales must be finite and non-negative")));
        }
        Ok(())
    }
}

/// Layer views of every module, in checkpoint order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Modules {
    pub box_enc: Mlp,
    pub box_dec: Mlp,
    pub supp_enc: Mlp,
    pub supp_dec: Mlp,
    pub cooc_enc: Mlp,
    pub cooc_dec: Mlp,
    pub surr_enc: Mlp,
    pub surr_dec: Mlp,
    pub wall_enc: Mlp,
    pub wall_dec: Mlp,
    pub root_enc: Option<Mlp>,
    pub root_dec: Option<Mlp>,
    pub vae_mu: Mlp,
    pub vae_logvar: Mlp,
    pub vae_expand: Mlp,
    pub classifier: Mlp,
    pub param_count: usize,
}

impl Modules {
    pub fn new(cfg: &ModelConfig) -> Self {
        let (n, h, k, r) = (cfg.code_dim, cfg.hidden_dim, cfg.leaf_dim(), RELPOS_DIM);
        let mut off = 0;
        let mut mlp = |dims: &[usize], out: Activation| Mlp::allocate(dims, out, &mut off);
        let box_enc = mlp(&[k, n], Activation::Tanh);
        let box_dec = mlp(&[n, k], Activation::Tanh);
        let supp_enc = mlp(&[2 * n + r, h, n], Activation::Tanh);
        let supp_dec = mlp(&[n, h, 2 * n + r], Activation::Tanh);
        let cooc_enc = mlp(&[2 * n + r, h, n], Activation::Tanh);
        let cooc_dec = mlp(&[n, h, 2 * n + r], Activation::Tanh);
        let surr_enc = mlp(&[3 * n + 2 * r, h, n], Activation::Tanh);
        let surr_dec = mlp(&[n, h, 3 * n + 2 * r], Activation::Tanh);
        let wall_enc = mlp(&[2 * n + r, h, n], Activation::Tanh);
        let wall_dec = mlp(&[n, h, 2 * n + r], Activation::Tanh);
        let (root_enc, root_dec) = if cfg.wall_root_mode == WallRootMode::Full {
            let (rc, rh) = (cfg.root_code_dim, cfg.root_hidden_dim);
            (
                Some(mlp(&[5 * n + 4 * r, rh, rc], Activation::Tanh)),
                Some(mlp(&[rc, rh, 5 * n + 4 * r], Activation::Tanh)),
            )
        } else {
            (None, None)
        };
        let rd = cfg.root_dim();
        let vae_mu = mlp(&[rd, cfg.latent_dim], Activation::Linear);
        let vae_logvar = mlp(&[rd, cfg.latent_dim], Activation::Linear);
        let vae_expand = mlp(&[cfg.latent_dim, rd], Activation::Tanh);
        let classifier = mlp(&[n, h, NUM_CLASSES], Activation::Linear);
        Self {
            box_enc,
            box_dec,
            supp_enc,
            supp_dec,
            cooc_enc,
            cooc_dec,
            surr_enc,
            surr_dec,
            wall_enc,
            wall_dec,
            root_enc,
            root_dec,
            vae_mu,
            vae_logvar,
            vae_expand,
            classifier,
            param_count: off,
        }
    }

    pub fn encoder(&self, kind: GroupKind) -> &Mlp {
        match kind {
            GroupKind::Support => &self.supp_enc,
            GroupKind::CoOccur => &self.cooc_enc,
            GroupKind::Surround => &self.surr_enc,
            GroupKind::Wall => &self.wall_enc,
            GroupKind::Root => self.root_enc.as_ref().expect("root modules exist in full mode"),
        }
    }

    pub fn decoder(&self, kind: GroupKind) -> &Mlp {
        match kind {
            GroupKind::Support => &self.supp_dec,
            GroupKind::CoOccur => &self.cooc_dec,
            GroupKind::Surround => &self.surr_dec,
            GroupKind::Wall => &self.wall_dec,
            GroupKind::Root => self.root_dec.as_ref().expect("root modules exist in full mode"),
        }
    }

    /// `(name, layer)` for every dense layer in parameter order.
    pub fn named_layers(&self) -> Vec<(String, Dense)> {
        let mut out = Vec::new();
        let mut add = |name: &str, m: &Mlp| {
            for (i, l) in m.layers.iter().enumerate() {
                out.push((format!("{name}.{i}"), *l));
            }
        };
        add("box_enc", &self.box_enc);
        add("box_dec", &self.box_dec);
        add("supp_enc", &self.supp_enc);
        add("supp_dec", &self.supp_dec);
        add("cooc_enc", &self.cooc_enc);
        add("cooc_dec", &self.cooc_dec);
        add("surr_enc", &self.surr_enc);
        add("surr_dec", &self.surr_dec);
        add("wall_enc", &self.wall_enc);
        add("wall_dec", &self.wall_dec);
        if let (Some(e), Some(d)) = (&self.root_enc, &self.root_dec) {
            add("root_enc", e);
            add("root_dec", d);
        }
        add("vae_mu", &self.vae_mu);
        add("vae_logvar", &self.vae_logvar);
        add("vae_expand", &self.vae_expand);
        add("classifier", &self.classifier);
        out
    }
}

/// Configuration plus one flat parameter buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub modules: Modules,
    pub data: Vec<f64>,
}

impl ModelParams {
    /// Gaussian weights with standard deviation `config.init_scale`, zero biases.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let modules = Modules::new(&config);
        let mut data = vec![0.0; modules.param_count];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers: Vec<Dense> = modules.named_layers().into_iter().map(|(_, l)| l).collect();
        init_layers(&mut data, &layers, &mut rng, config.init_scale);
        Ok(Self { config, modules, data })
    }

    /// Rebuilds a model from a configuration and a parameter buffer.
    pub fn from_parts(config: ModelConfig, data: Vec<f64>) -> Result<Self, ModelError> {
        config.validate()?;
        let modules = Modules::new(&config);
        if data.len() != modules.param_count {
            return Err(ModelError::ConfigMismatch(format!(
                "configuration needs {} parameters, buffer has {}",
                modules.param_count,
                data.len()
            )));
        }
        Ok(Self { config, modules, data })
    }

    /// Softmax over `{box, support, co-occur, surround, wall}` for one code.
    pub fn classify_node(&self, code: &[f64]) -> Result<[f64; NUM_CLASSES], ModelError> {
        let c = self
            .modules
            .classifier
            .forward(&self.data, code.to_vec(), 1)
            .map_err(|e| ModelError::ConfigMismatch(format!("{e}")))?;
        let p = softmax(c.output());
        let mut out = [0.0; NUM_CLASSES];
        out.copy_from_slice(&p);
        Ok(out)
    }
}

/// One node of a tree prepared for the network. Nodes are stored in
/// post-order, so children precede parents and the root is last.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatNode {
    pub kind: Option<GroupKind>,
    pub children: Vec<usize>,
    /// `(children − 1) × 28` scaled position features.
    pub relpos: Vec<f64>,
    /// Scaled leaf vector; empty for groups.
    pub leaf: Vec<f64>,
    pub category: usize,
    /// Classifier target, when the node is classified.
    pub class: Option<usize>,
    pub height: usize,
    pub depth: usize,
    pub path: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatTree {
    pub nodes: Vec<FlatNode>,
    pub leaf_count: usize,
    pub relpos_count: usize,
    pub class_count: usize,
}

impl FlatTree {
    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }
}

pub fn leaf_features(cfg: &ModelConfig, size: [f64; 3], category: usize) -> Vec<f64> {
    let mut v = vec![0.0; cfg.leaf_dim()];
    for k in 0..3 {
        v[k] = size[k] / cfg.length_scale;
    }
    if cfg.labels_enabled {
        v[3 + category] = 1.0;
    }
    v
}

/// Sizes and best category (restricted to `allowed`, when given) from decoded features.
pub fn leaf_from_features(cfg: &ModelConfig, f: &[f64], allowed: Option<&[usize]>) -> ([f64; 3], usize) {
    let size = [
        (f[0] * cfg.length_scale).max(MIN_SIZE),
        (f[1] * cfg.length_scale).max(MIN_SIZE),
        (f[2] * cfg.length_scale).max(MIN_SIZE),
    ];
    let scores = &f[3..];
    let category = match allowed {
        Some(a) if !a.is_empty() => {
            let mut best = a[0];
            for &c in a {
                if scores[c] > scores[best] {
                    best = c;
                }
            }
            best
        }
        _ => argmax(scores),
    };
    (size, category)
}

/// Smallest decoded box extent, meters.
pub const MIN_SIZE: f64 = 0.02;

fn real_scales(cfg: &ModelConfig) -> [f64; 3] {
    let (l, a) = (cfg.length_scale, cfg.angle_scale);
    match cfg.position_mode {
        PositionMode::Relative | PositionMode::CenterTranslation => [a, l, l],
        PositionMode::Absolute => [l, l, a],
    }
}

pub fn relpos_features(cfg: &ModelConfig, rp: &RelPos28) -> [f64; RELPOS_DIM] {
    let mut v = rp.values;
    let s = real_scales(cfg);
    for k in 0..3 {
        v[k] /= s[k];
    }
    v
}

/// Unscales decoded features; relative-mode bit groups are hardened by argmax.
pub fn relpos_from_features(cfg: &ModelConfig, f: &[f64]) -> RelPos28 {
    let mut rp = RelPos28::from_slice(f);
    let s = real_scales(cfg);
    for k in 0..3 {
        rp.values[k] *= s[k];
    }
    if cfg.position_mode == PositionMode::Relative {
        for (group, start, len) in [
            (BitGroup::Edge, EDGE_START, 16),
            (BitGroup::Attach, ATTACH_START, 4),
            (BitGroup::Align, ALIGN_START, 5),
        ] {
            let i = argmax(&f[start..start + len]);
            rp.set_one_hot(group, i);
        }
    } else {
        rp.values[3..].fill(0.0);
    }
    rp
}

/// Checks a tree against the configuration and flattens it into network features.
pub fn prepare_tree(cfg: &ModelConfig, tree: &SceneTree) -> Result<FlatTree, ModelError> {
    if tree.position_mode != cfg.position_mode || tree.wall_root_mode != cfg.wall_root_mode {
        return Err(ModelError::ConfigMismatch(format!(
            "tree built with {:?}/{}, model expects {:?}/{}",
            tree.position_mode,
            tree.wall_root_mode.as_str(),
            cfg.position_mode,
            cfg.wall_root_mode.as_str()
        )));
    }
    let report = validate_tree(tree);
    if let Some(v) = report.violations.iter().find(|v| v.is_structural()) {
        return Err(ModelError::InvalidTree(format!("{} at {:?}: {}", v.code, v.path, v.message)));
    }
    let classify_root = cfg.wall_root_mode == WallRootMode::None;
    let mut out = FlatTree {
        nodes: Vec::new(),
        leaf_count: 0,
        relpos_count: 0,
        class_count: 0,
    };
    fn go(
        cfg: &ModelConfig,
        node: &SceneNode,
        path: &mut Vec<usize>,
        classify_root: bool,
        out: &mut FlatTree,
    ) -> Result<(usize, usize), ModelError> {
        let class = if path.is_empty() && !classify_root {
            None
        } else {
            node.class().map(|c| c.index())
        };
        let depth = path.len();
        let flat = match node {
            SceneNode::Leaf(l) => {
                if l.category >= cfg.vocab_len {
                    return Err(ModelError::InvalidTree(format!("leaf `{}` category {} out of range", l.id, l.category)));
                }
                out.leaf_count += 1;
                FlatNode {
                    kind: None,
                    children: Vec::new(),
                    relpos: Vec::new(),
                    leaf: leaf_features(cfg, l.size, l.category),
                    category: l.category,
                    class,
                    height: 0,
                    depth,
                    path: path.clone(),
                }
            }
            SceneNode::Group(g) => {
                if g.kind == GroupKind::Root && cfg.wall_root_mode != WallRootMode::Full {
                    return Err(ModelError::InvalidTree(String::from("root node outside full wall/root mode")));
                }
                let mut children = Vec::with_capacity(g.children.len());
                let mut height = 0;
                for (i, c) in g.children.iter().enumerate() {
                    path.push(i);
                    let (id, h) = go(cfg, c, path, classify_root, out)?;
                    path.pop();
                    children.push(id);
                    height = height.max(h + 1);
                }
                let mut relpos = Vec::with_capacity(g.relpos.len() * RELPOS_DIM);
                for rp in &g.relpos {
                    if rp.values.iter().any(|v| !v.is_finite()) {
                        return Err(ModelError::InvalidTree(format!("non-finite position vector at {path:?}")));
                    }
                    relpos.extend_from_slice(&relpos_features(cfg, rp));
                }
                out.relpos_count += g.relpos.len();
                FlatNode {
                    kind: Some(g.kind),
                    children,
                    relpos,
                    leaf: Vec::new(),
                    category: 0,
                    class,
                    height,
                    depth,
                    path: path.clone(),
                }
            }
        };
        if flat.class.is_some() {
            out.class_count += 1;
        }
        let h = flat.height;
        out.nodes.push(flat);
        Ok((out.nodes.len() - 1, h))
    }
    go(cfg, &tree.root, &mut Vec::new(), classify_root, &mut out)?;
    Ok(out)
}

/// Per-tree or averaged loss terms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon_leaf: f64,
    pub recon_relpos: f64,
    pub classifier: f64,
    pub kl: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn weighted_total(&self, cfg: &ModelConfig) -> f64 {
        cfg.leaf_weight * self.recon_leaf
            + cfg.relpos_weight * self.recon_relpos
            + cfg.classifier_weight * self.classifier
            + cfg.kl_weight * self.kl
    }

    pub fn mean(items: &[LossBreakdown]) -> LossBreakdown {
        let n = items.len().max(1) as f64;
        let mut m = LossBreakdown::default();
        for l in items {
            m.recon_leaf += l.recon_leaf / n;
            m.recon_relpos += l.recon_relpos / n;
            m.classifier += l.classifier / n;
            m.kl += l.kl / n;
            m.total += l.total / n;
        }
        m
    }
}

/// KL divergence of `N(mu, exp(logvar))` from the standard normal.
pub fn kl_divergence(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| crate::math::exp(*lv) + m * m - 1.0 - lv)
        .sum::<f64>()
}
