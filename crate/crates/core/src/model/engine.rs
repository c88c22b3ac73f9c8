//! Batched forward and backward passes over a set of prepared trees.
//!
//! Nodes of all trees share one global index space. Encoders run bottom-up
//! grouped by `(height, kind)`, decoders top-down grouped by `(depth, kind)`,
//! so every group is one matrix product per layer.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{kl_divergence, relpos_from_features, FlatNode, FlatTree, LossBreakdown, ModelError, ModelParams};
use crate::hierarchy::GroupKind;
use crate::math::{argmax, exp};
use crate::nn::{softmax_xent, Mlp, MlpCache, NnError};
use crate::relpos::{RelPos28, RELPOS_DIM};

/// How the latent vector of each tree is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum Latent {
    /// Reparameterized sample `mu + exp(logvar / 2) * noise`.
    Noise(Vec<f64>),
    /// The posterior mean.
    Mean,
    /// A given latent vector; the encoder is bypassed.
    Fixed(Vec<f64>),
}

/// Decoder outputs for one tree under teacher forcing, keyed by node index.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherOutput {
    /// Decoded leaf features for every leaf node.
    pub leaves: Vec<(usize, Vec<f64>)>,
    /// Decoded position vectors (unscaled, hardened) for every group node.
    pub relpos: Vec<(usize, Vec<RelPos28>)>,
    /// Predicted class for every classified node.
    pub classes: Vec<(usize, usize)>,
}

/// Losses and accuracy counters of one batched pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    pub per_tree: Vec<LossBreakdown>,
    pub mean: LossBreakdown,
    pub leaf_category_hits: usize,
    pub leaf_total: usize,
    pub class_hits: usize,
    pub class_total: usize,
    pub mu: Vec<Vec<f64>>,
    pub logvar: Vec<Vec<f64>>,
}

fn dim_err(e: NnError) -> ModelError {
    ModelError::ConfigMismatch(format!("{e}"))
}

struct Group {
    kind: Option<GroupKind>,
    ids: Vec<usize>,
    cache: MlpCache,
}

struct Pass<'a> {
    params: &'a ModelParams,
    nodes: Vec<(&'a FlatNode, usize)>,
    base: Vec<usize>,
    roots: Vec<usize>,
    enc: Vec<Vec<f64>>,
    dec: Vec<Vec<f64>>,
    enc_groups: Vec<Group>,
    dec_groups: Vec<Group>,
    leaf_enc: Option<Group>,
    leaf_dec: Option<Group>,
    cls: Option<Group>,
    mu: Option<MlpCache>,
    logvar: Option<MlpCache>,
    expand: Option<MlpCache>,
    noise: Vec<Vec<f64>>,
    encoded: bool,
}

impl<'a> Pass<'a> {
    fn new(params: &'a ModelParams, trees: &'a [&'a FlatTree]) -> Self {
        let mut nodes = Vec::new();
        let mut base = Vec::with_capacity(trees.len());
        let mut roots = Vec::with_capacity(trees.len());
        for (t, tree) in trees.iter().enumerate() {
            base.push(nodes.len());
            roots.push(nodes.len() + tree.root());
            nodes.extend(tree.nodes.iter().map(|n| (n, t)));
        }
        let g = nodes.len();
        Self {
            params,
            nodes,
            base,
            roots,
            enc: vec![Vec::new(); g],
            dec: vec![Vec::new(); g],
            enc_groups: Vec::new(),
            dec_groups: Vec::new(),
            leaf_enc: None,
            leaf_dec: None,
            cls: None,
            mu: None,
            logvar: None,
            expand: None,
            noise: Vec::new(),
            encoded: false,
        }
    }

    fn child(&self, id: usize, i: usize) -> usize {
        let (node, t) = self.nodes[id];
        self.base[t] + node.children[i]
    }

    fn encoder(&self, kind: Option<GroupKind>) -> &'a Mlp {
        let m = &self.params.modules;
        match kind {
            None => &m.box_enc,
            Some(k) => m.encoder(k),
        }
    }

    fn decoder(&self, kind: Option<GroupKind>) -> &'a Mlp {
        let m = &self.params.modules;
        match kind {
            None => &m.box_dec,
            Some(k) => m.decoder(k),
        }
    }

    fn encode(&mut self) -> Result<(), ModelError> {
        let data = &self.params.data;
        let leaves: Vec<usize> = (0..self.nodes.len()).filter(|&i| self.nodes[i].0.kind.is_none()).collect();
        if !leaves.is_empty() {
            let mlp = self.encoder(None);
            let mut x = Vec::with_capacity(leaves.len() * mlp.in_dim());
            for &i in &leaves {
                x.extend_from_slice(&self.nodes[i].0.leaf);
            }
            let cache = mlp.forward(data, x, leaves.len()).map_err(dim_err)?;
            let w = mlp.out_dim();
            for (r, &i) in leaves.iter().enumerate() {
                self.enc[i] = cache.output()[r * w..(r + 1) * w].to_vec();
            }
            self.leaf_enc = Some(Group {
                kind: None,
                ids: leaves,
                cache,
            });
        }
        let mut buckets: BTreeMap<(usize, GroupKind), Vec<usize>> = BTreeMap::new();
        for (i, (n, _)) in self.nodes.iter().enumerate() {
            if let Some(k) = n.kind {
                buckets.entry((n.height, k)).or_default().push(i);
            }
        }
        for ((_, kind), ids) in buckets {
            let mlp = self.encoder(Some(kind));
            let mut x = Vec::with_capacity(ids.len() * mlp.in_dim());
            for &i in &ids {
                let node = self.nodes[i].0;
                for c in 0..node.children.len() {
                    x.extend_from_slice(&self.enc[self.child(i, c)]);
                    if c > 0 {
                        x.extend_from_slice(&node.relpos[(c - 1) * RELPOS_DIM..c * RELPOS_DIM]);
                    }
                }
            }
            let cache = mlp.forward(data, x, ids.len()).map_err(dim_err)?;
            let w = mlp.out_dim();
            for (r, &i) in ids.iter().enumerate() {
                self.enc[i] = cache.output()[r * w..(r + 1) * w].to_vec();
            }
            self.enc_groups.push(Group {
                kind: Some(kind),
                ids,
                cache,
            });
        }
        Ok(())
    }

    fn latent(&mut self, latent: &[Latent]) -> Result<(), ModelError> {
        let data = &self.params.data;
        let m = &self.params.modules;
        let cfg = &self.params.config;
        let b = self.roots.len();
        let ld = cfg.latent_dim;
        let mut z = Vec::with_capacity(b * ld);
        let fixed = latent.iter().all(|l| matches!(l, Latent::Fixed(_)));
        if fixed {
            for l in latent {
                if let Latent::Fixed(v) = l {
                    if v.len() != ld {
                        return Err(ModelError::ConfigMismatch(format!("latent has {} values, expected {ld}", v.len())));
                    }
                    z.extend_from_slice(v);
                }
            }
        } else {
            self.encode()?;
            self.encoded = true;
            let mut x = Vec::with_capacity(b * cfg.root_dim());
            for &r in &self.roots {
                x.extend_from_slice(&self.enc[r]);
            }
            let mu = m.vae_mu.forward(data, x.clone(), b).map_err(dim_err)?;
            let lv = m.vae_logvar.forward(data, x, b).map_err(dim_err)?;
            for (t, l) in latent.iter().enumerate() {
                let (mt, vt) = (&mu.output()[t * ld..(t + 1) * ld], &lv.output()[t * ld..(t + 1) * ld]);
                let eps = match l {
                    Latent::Noise(e) if e.len() == ld => e.clone(),
                    Latent::Noise(e) => {
                        return Err(ModelError::ConfigMismatch(format!("noise has {} values, expected {ld}", e.len())))
                    }
                    Latent::Mean => vec![0.0; ld],
                    Latent::Fixed(_) => {
                        return Err(ModelError::ConfigMismatch("fixed and encoded latents cannot be mixed".into()))
                    }
                };
                for j in 0..ld {
                    z.push(mt[j] + exp(0.5 * vt[j]) * eps[j]);
                }
                self.noise.push(eps);
            }
            self.mu = Some(mu);
            self.logvar = Some(lv);
        }
        let ex = m.vae_expand.forward(data, z, b).map_err(dim_err)?;
        let w = cfg.root_dim();
        for (t, &r) in self.roots.iter().enumerate() {
            self.dec[r] = ex.output()[t * w..(t + 1) * w].to_vec();
        }
        self.expand = Some(ex);
        Ok(())
    }

    fn decode(&mut self) -> Result<(), ModelError> {
        let data = &self.params.data;
        let mut buckets: BTreeMap<(usize, GroupKind), Vec<usize>> = BTreeMap::new();
        for (i, (n, _)) in self.nodes.iter().enumerate() {
            if let Some(k) = n.kind {
                buckets.entry((n.depth, k)).or_default().push(i);
            }
        }
        let n = self.params.config.code_dim;
        for ((_, kind), ids) in buckets {
            let mlp = self.decoder(Some(kind));
            let mut x = Vec::with_capacity(ids.len() * mlp.in_dim());
            for &i in &ids {
                x.extend_from_slice(&self.dec[i]);
            }
            let cache = mlp.forward(data, x, ids.len()).map_err(dim_err)?;
            let w = mlp.out_dim();
            for (r, &i) in ids.iter().enumerate() {
                let row = &cache.output()[r * w..(r + 1) * w];
                let mut off = 0;
                for c in 0..self.nodes[i].0.children.len() {
                    let cid = self.child(i, c);
                    self.dec[cid] = row[off..off + n].to_vec();
                    off += n;
                    if c > 0 {
                        off += RELPOS_DIM;
                    }
                }
            }
            self.dec_groups.push(Group {
                kind: Some(kind),
                ids,
                cache,
            });
        }
        let leaves: Vec<usize> = (0..self.nodes.len()).filter(|&i| self.nodes[i].0.kind.is_none()).collect();
        if !leaves.is_empty() {
            let mut x = Vec::with_capacity(leaves.len() * n);
            for &i in &leaves {
                x.extend_from_slice(&self.dec[i]);
            }
            let cache = self.decoder(None).forward(data, x, leaves.len()).map_err(dim_err)?;
            self.leaf_dec = Some(Group {
                kind: None,
                ids: leaves,
                cache,
            });
        }
        let classified: Vec<usize> = (0..self.nodes.len()).filter(|&i| self.nodes[i].0.class.is_some()).collect();
        if !classified.is_empty() {
            let mut x = Vec::with_capacity(classified.len() * n);
            for &i in &classified {
                x.extend_from_slice(&self.dec[i]);
            }
            let cache = self.params.modules.classifier.forward(data, x, classified.len()).map_err(dim_err)?;
            self.cls = Some(Group {
                kind: None,
                ids: classified,
                cache,
            });
        }
        Ok(())
    }

    /// Position-vector row offsets inside one decoder output row.
    fn relpos_offsets(children: usize, n: usize) -> Vec<usize> {
        (1..children).map(|c| c * n + (c - 1) * RELPOS_DIM + n).collect()
    }
}

/// Losses, counters and optional parameter gradients (accumulated into
/// `grads`) of the mean per-tree loss over `trees`.
pub(super) fn run(
    params: &ModelParams,
    trees: &[&FlatTree],
    latent: &[Latent],
    grads: Option<&mut [f64]>,
    teacher: Option<&mut Vec<TeacherOutput>>,
) -> Result<BatchOutput, ModelError> {
    if trees.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    if latent.len() != trees.len() {
        return Err(ModelError::ConfigMismatch(format!("{} latents for {} trees", latent.len(), trees.len())));
    }
    let cfg = &params.config;
    let mut pass = Pass::new(params, trees);
    pass.latent(latent)?;
    pass.decode()?;

    let b = trees.len();
    let (n, k, ld) = (cfg.code_dim, cfg.leaf_dim(), cfg.latent_dim);
    let mut per_tree = vec![LossBreakdown::default(); b];
    let mut out = BatchOutput {
        per_tree: Vec::new(),
        mean: LossBreakdown::default(),
        leaf_category_hits: 0,
        leaf_total: 0,
        class_hits: 0,
        class_total: 0,
        mu: Vec::new(),
        logvar: Vec::new(),
    };
    let want_grad = grads.is_some();
    let mut d_dec: Vec<Vec<f64>> = if want_grad { vec![Vec::new(); pass.nodes.len()] } else { Vec::new() };
    let scale = 1.0 / b as f64;

    // Leaf reconstruction.
    let mut d_leaf = Vec::new();
    if let Some(g) = &pass.leaf_dec {
        let pred = g.cache.output();
        if want_grad {
            d_leaf = vec![0.0; pred.len()];
        }
        for (r, &i) in g.ids.iter().enumerate() {
            let (node, t) = pass.nodes[i];
            let p = &pred[r * k..(r + 1) * k];
            let denom = trees[t].leaf_count as f64;
            let mut se = 0.0;
            for j in 0..k {
                let d = p[j] - node.leaf[j];
                se += d * d;
                if want_grad {
                    d_leaf[r * k + j] = scale * cfg.leaf_weight * 2.0 * d / denom;
                }
            }
            per_tree[t].recon_leaf += se / denom;
            if cfg.labels_enabled {
                out.leaf_total += 1;
                if argmax(&p[3..]) == node.category {
                    out.leaf_category_hits += 1;
                }
            }
        }
    }

    // Position reconstruction.
    let mut d_groups: Vec<Vec<f64>> = Vec::with_capacity(pass.dec_groups.len());
    for g in &pass.dec_groups {
        let pred = g.cache.output();
        let w = pass.decoder(g.kind).out_dim();
        let mut dg = if want_grad { vec![0.0; pred.len()] } else { Vec::new() };
        for (r, &i) in g.ids.iter().enumerate() {
            let (node, t) = pass.nodes[i];
            let denom = trees[t].relpos_count as f64;
            for (c, off) in Pass::relpos_offsets(node.children.len(), n).into_iter().enumerate() {
                let p = &pred[r * w + off..r * w + off + RELPOS_DIM];
                let target = &node.relpos[c * RELPOS_DIM..(c + 1) * RELPOS_DIM];
                let mut se = 0.0;
                for j in 0..RELPOS_DIM {
                    let d = p[j] - target[j];
                    se += d * d;
                    if want_grad {
                        dg[r * w + off + j] = scale * cfg.relpos_weight * 2.0 * d / denom;
                    }
                }
                per_tree[t].recon_relpos += se / denom;
            }
        }
        d_groups.push(dg);
    }

    // Node classification.
    let mut d_cls = Vec::new();
    if let Some(g) = &pass.cls {
        let logits = g.cache.output();
        let c = super::NUM_CLASSES;
        if want_grad {
            d_cls = vec![0.0; logits.len()];
        }
        for (r, &i) in g.ids.iter().enumerate() {
            let (node, t) = pass.nodes[i];
            let label = node.class.expect("classified nodes carry a label");
            let l = &logits[r * c..(r + 1) * c];
            let (loss, grad) = softmax_xent(l, label).map_err(dim_err)?;
            let denom = trees[t].class_count as f64;
            per_tree[t].classifier += loss / denom;
            out.class_total += 1;
            if argmax(l) == label {
                out.class_hits += 1;
            }
            if want_grad {
                for j in 0..c {
                    d_cls[r * c + j] = scale * cfg.classifier_weight * grad[j] / denom;
                }
            }
        }
    }

    // KL term.
    if let (Some(mu), Some(lv)) = (&pass.mu, &pass.logvar) {
        for t in 0..b {
            let m = &mu.output()[t * ld..(t + 1) * ld];
            per_tree[t].kl = kl_divergence(m, &lv.output()[t * ld..(t + 1) * ld]);
            out.mu.push(m.to_vec());
            out.logvar.push(lv.output()[t * ld..(t + 1) * ld].to_vec());
        }
    }
    for l in per_tree.iter_mut() {
        l.total = l.weighted_total(cfg);
    }
    for (t, l) in per_tree.iter().enumerate() {
        if !l.total.is_finite() {
            return Err(ModelError::NonFinite { step: 0, tree: t });
        }
    }

    if let Some(teacher) = teacher {
        *teacher = collect_teacher(&pass, trees)?;
    }

    if let Some(grads) = grads {
        backward(&mut pass, grads, &mut d_dec, &d_leaf, &d_cls, &d_groups, scale)?;
    }

    out.mean = LossBreakdown::mean(&per_tree);
    out.per_tree = per_tree;
    Ok(out)
}

fn add_into(dst: &mut Vec<f64>, src: &[f64]) {
    if dst.is_empty() {
        dst.extend_from_slice(src);
    } else {
        for (d, s) in dst.iter_mut().zip(src) {
            *d += s;
        }
    }
}

fn backward(
    pass: &mut Pass<'_>,
    grads: &mut [f64],
    d_dec: &mut [Vec<f64>],
    d_leaf: &[f64],
    d_cls: &[f64],
    d_groups: &[Vec<f64>],
    scale: f64,
) -> Result<(), ModelError> {
    let params = pass.params;
    let data = &params.data;
    let m = &params.modules;
    let cfg = &params.config;
    let n = cfg.code_dim;

    if let Some(g) = &pass.cls {
        let dx = m.classifier.backward(data, &g.cache, d_cls, grads).map_err(dim_err)?;
        for (r, &i) in g.ids.iter().enumerate() {
            add_into(&mut d_dec[i], &dx[r * n..(r + 1) * n]);
        }
    }
    if let Some(g) = &pass.leaf_dec {
        let dx = m.box_dec.backward(data, &g.cache, d_leaf, grads).map_err(dim_err)?;
        for (r, &i) in g.ids.iter().enumerate() {
            add_into(&mut d_dec[i], &dx[r * n..(r + 1) * n]);
        }
    }
    // Deepest groups first, so child code gradients are complete.
    for (gi, g) in pass.dec_groups.iter().enumerate().rev() {
        let mlp = pass.decoder(g.kind);
        let w = mlp.out_dim();
        let mut dy = d_groups[gi].clone();
        for (r, &i) in g.ids.iter().enumerate() {
            let mut off = 0;
            for c in 0..pass.nodes[i].0.children.len() {
                let cid = pass.child(i, c);
                if !d_dec[cid].is_empty() {
                    dy[r * w + off..r * w + off + n].copy_from_slice(&d_dec[cid]);
                }
                off += n;
                if c > 0 {
                    off += RELPOS_DIM;
                }
            }
        }
        let dx = mlp.backward(data, &g.cache, &dy, grads).map_err(dim_err)?;
        let iw = mlp.in_dim();
        for (r, &i) in g.ids.iter().enumerate() {
            add_into(&mut d_dec[i], &dx[r * iw..(r + 1) * iw]);
        }
    }

    // Gaussian head.
    let b = pass.roots.len();
    let rd = cfg.root_dim();
    let ld = cfg.latent_dim;
    let mut d_root = Vec::with_capacity(b * rd);
    for &r in &pass.roots {
        if d_dec[r].is_empty() {
            d_root.extend(core::iter::repeat_n(0.0, rd));
        } else {
            d_root.extend_from_slice(&d_dec[r]);
        }
    }
    let ex = pass.expand.as_ref().expect("latent pass ran");
    let dz = m.vae_expand.backward(data, ex, &d_root, grads).map_err(dim_err)?;
    if !pass.encoded {
        return Ok(());
    }
    let (mu, lv) = (pass.mu.as_ref().expect("encoded"), pass.logvar.as_ref().expect("encoded"));
    let mut dmu = vec![0.0; b * ld];
    let mut dlv = vec![0.0; b * ld];
    for t in 0..b {
        for j in 0..ld {
            let idx = t * ld + j;
            let (mv, lvv) = (mu.output()[idx], lv.output()[idx]);
            let sd = exp(0.5 * lvv);
            dmu[idx] = dz[idx] + scale * cfg.kl_weight * mv;
            dlv[idx] = dz[idx] * pass.noise[t][j] * 0.5 * sd + scale * cfg.kl_weight * 0.5 * (exp(lvv) - 1.0);
        }
    }
    let dx_mu = m.vae_mu.backward(data, mu, &dmu, grads).map_err(dim_err)?;
    let dx_lv = m.vae_logvar.backward(data, lv, &dlv, grads).map_err(dim_err)?;
    let mut d_enc: Vec<Vec<f64>> = vec![Vec::new(); pass.nodes.len()];
    for (t, &r) in pass.roots.iter().enumerate() {
        let mut v = dx_mu[t * rd..(t + 1) * rd].to_vec();
        for (a, c) in v.iter_mut().zip(&dx_lv[t * rd..(t + 1) * rd]) {
            *a += c;
        }
        d_enc[r] = v;
    }
    // Highest groups first, so parent code gradients are complete.
    for g in pass.enc_groups.iter().rev() {
        let mlp = pass.encoder(g.kind);
        let w = mlp.out_dim();
        let mut dy = vec![0.0; g.ids.len() * w];
        for (r, &i) in g.ids.iter().enumerate() {
            if !d_enc[i].is_empty() {
                dy[r * w..(r + 1) * w].copy_from_slice(&d_enc[i]);
            }
        }
        let dx = mlp.backward(data, &g.cache, &dy, grads).map_err(dim_err)?;
        let iw = mlp.in_dim();
        for (r, &i) in g.ids.iter().enumerate() {
            let row = &dx[r * iw..(r + 1) * iw];
            let mut off = 0;
            for c in 0..pass.nodes[i].0.children.len() {
                let cid = pass.child(i, c);
                add_into(&mut d_enc[cid], &row[off..off + n]);
                off += n;
                if c > 0 {
                    off += RELPOS_DIM;
                }
            }
        }
    }
    if let Some(g) = &pass.leaf_enc {
        let mut dy = vec![0.0; g.ids.len() * n];
        for (r, &i) in g.ids.iter().enumerate() {
            if !d_enc[i].is_empty() {
                dy[r * n..(r + 1) * n].copy_from_slice(&d_enc[i]);
            }
        }
        m.box_enc.backward(data, &g.cache, &dy, grads).map_err(dim_err)?;
    }
    Ok(())
}

fn collect_teacher(pass: &Pass<'_>, trees: &[&FlatTree]) -> Result<Vec<TeacherOutput>, ModelError> {
    let cfg = &pass.params.config;
    let (n, k) = (cfg.code_dim, cfg.leaf_dim());
    let mut out: Vec<TeacherOutput> = trees
        .iter()
        .map(|_| TeacherOutput {
            leaves: Vec::new(),
            relpos: Vec::new(),
            classes: Vec::new(),
        })
        .collect();
    if let Some(g) = &pass.leaf_dec {
        for (r, &i) in g.ids.iter().enumerate() {
            let t = pass.nodes[i].1;
            out[t].leaves.push((i - pass.base[t], g.cache.output()[r * k..(r + 1) * k].to_vec()));
        }
    }
    for g in &pass.dec_groups {
        let w = pass.decoder(g.kind).out_dim();
        for (r, &i) in g.ids.iter().enumerate() {
            let (node, t) = pass.nodes[i];
            let rps = Pass::relpos_offsets(node.children.len(), n)
                .into_iter()
                .map(|off| relpos_from_features(cfg, &g.cache.output()[r * w + off..r * w + off + RELPOS_DIM]))
                .collect();
            out[t].relpos.push((i - pass.base[t], rps));
        }
    }
    if let Some(g) = &pass.cls {
        let c = super::NUM_CLASSES;
        for (r, &i) in g.ids.iter().enumerate() {
            let t = pass.nodes[i].1;
            out[t].classes.push((i - pass.base[t], argmax(&g.cache.output()[r * c..(r + 1) * c])));
        }
    }
    for o in &mut out {
        o.leaves.sort_by_key(|e| e.0);
        o.relpos.sort_by_key(|e| e.0);
        o.classes.sort_by_key(|e| e.0);
    }
    Ok(out)
}

/// Loss and accuracy of the trees without updating anything.
pub fn evaluate(params: &ModelParams, trees: &[&FlatTree], latent: &[Latent]) -> Result<BatchOutput, ModelError> {
    run(params, trees, latent, None, None)
}

/// Teacher-forced decoder outputs for each tree.
pub fn teacher_decode(params: &ModelParams, trees: &[&FlatTree], latent: &[Latent]) -> Result<Vec<TeacherOutput>, ModelError> {
    let mut t = Vec::new();
    run(params, trees, latent, None, Some(&mut t))?;
    Ok(t)
}

/// Mean loss and its gradient, accumulated into `grads`.
pub fn loss_and_gradient(
    params: &ModelParams,
    trees: &[&FlatTree],
    latent: &[Latent],
    grads: &mut [f64],
) -> Result<BatchOutput, ModelError> {
    if grads.len() != params.data.len() {
        return Err(ModelError::ConfigMismatch(format!(
            "gradient buffer has {} values, model has {}",
            grads.len(),
            params.data.len()
        )));
    }
    run(params, trees, latent, Some(grads), None)
}
