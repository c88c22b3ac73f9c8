use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::engine::{loss_and_gradient, Latent};
use super::{FlatTree, LossBreakdown, ModelError, ModelParams};
use crate::nn::{AdamConfig, AdamState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// `None` selects `max(1, ⌊N / 10⌋)`.
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: None,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-tree loss of each epoch, measured while training.
    pub epochs: Vec<LossBreakdown>,
    pub steps: usize,
    pub batch_size: usize,
    pub stopped_early: bool,
}

pub fn batch_size_for(n: usize) -> usize {
    (n / 10).max(1)
}

/// Minibatch Adam over shuffled trees.
///
/// `on_epoch(epoch, loss, params)` runs after every epoch; returning
/// `false` stops training. Parameters are left at their last finite state
/// when a non-finite loss aborts training.
pub fn train<F>(params: &mut ModelParams, trees: &[FlatTree], cfg: &TrainConfig, mut on_epoch: F) -> Result<TrainReport, ModelError>
where
    F: FnMut(usize, &LossBreakdown, &ModelParams) -> bool,
{
    if trees.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let batch = cfg.batch_size.unwrap_or_else(|| batch_size_for(trees.len())).clamp(1, trees.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(params.data.len(), cfg.adam);
    let mut grads = vec![0.0; params.data.len()];
    let mut order: Vec<usize> = (0..trees.len()).collect();
    let ld = params.config.latent_dim;
    let mut report = TrainReport {
        epochs: Vec::with_capacity(cfg.epochs),
        steps: 0,
        batch_size: batch,
        stopped_early: false,
    };
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = Vec::with_capacity(trees.len());
        for chunk in order.chunks(batch) {
            let refs: Vec<&FlatTree> = chunk.iter().map(|&i| &trees[i]).collect();
            let latent: Vec<Latent> = chunk
                .iter()
                .map(|_| Latent::Noise((0..ld).map(|_| StandardNormal.sample(&mut rng)).collect()))
                .collect();
            grads.fill(0.0);
            let out = loss_and_gradient(params, &refs, &latent, &mut grads).map_err(|e| match e {
                ModelError::NonFinite { tree, .. } => ModelError::NonFinite {
                    step: report.steps,
                    tree: chunk[tree],
                },
                other => other,
            })?;
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(ModelError::NonFinite {
                    step: report.steps,
                    tree: chunk[0],
                });
            }
            adam.step(&mut params.data, &grads).map_err(|e| ModelError::ConfigMismatch(alloc::format!("{e}")))?;
            report.steps += 1;
            sums.extend(out.per_tree);
        }
        let mean = LossBreakdown::mean(&sums);
        report.epochs.push(mean);
        if !on_epoch(epoch, &mean, params) {
            report.stopped_early = true;
            break;
        }
    }
    Ok(report)
}
