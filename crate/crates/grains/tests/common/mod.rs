#![allow(dead_code)]

use grains::formats::{Checkpoint, TreeSet};
use grains::pipeline::{build_trees, train_model, TrainOptions};
use grains_core::synth::{synthesize_corpus, TemplateConfig};
use grains_core::{Corpus, PositionMode, WallRootMode};

pub fn corpus(seed: u64, count: usize) -> Corpus {
    synthesize_corpus(&TemplateConfig::bedroom(), seed, count).unwrap().corpus
}

pub fn trees(seed: u64, count: usize) -> TreeSet {
    build_trees(&corpus(seed, count), WallRootMode::Full, PositionMode::Relative).unwrap()
}

/// Dimensions small enough for a few seconds of training.
pub fn small_options(epochs: usize) -> TrainOptions {
    TrainOptions {
        epochs,
        seed: 3,
        code_dim: Some(24),
        hidden_dim: Some(32),
        root_code_dim: Some(32),
        root_hidden_dim: Some(48),
        latent_dim: Some(16),
        ..TrainOptions::default()
    }
}

/// Briefly trained model on 30 synthetic bedrooms.
pub fn small_checkpoint() -> Checkpoint {
    let set = trees(5, 30);
    train_model(&set, &small_options(40), |_, _, _| true).unwrap().0
}

/// Runs the CLI in-process with `grains` as the program name.
pub fn cli(args: &[&str]) -> i32 {
    grains::cli::run(std::iter::once("grains").chain(args.iter().copied()))
}
