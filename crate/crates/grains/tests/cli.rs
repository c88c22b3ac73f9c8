mod common;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::cli;
use grains::cli::{CHECKPOINT_FILE, CORPUS_FILE, GENERATED_TREES, REPORT_FILE, TIMING_FILE, TREES_FILE};
use grains::formats;

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &[&str] = &[
    "--code-dim",
    "24",
    "--hidden-dim",
    "32",
    "--root-code-dim",
    "32",
    "--root-hidden-dim",
    "48",
    "--latent-dim",
    "16",
];

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

#[test]
fn synth_corpus_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    assert_eq!(cli(&["synth-corpus", "--seed", "1", "--count", "500", "--out", s(&a)]), 0);
    assert_eq!(cli(&["synth-corpus", "--seed", "1", "--count", "500", "--out", s(&b)]), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(formats::read_corpus(&a).unwrap().scenes.len(), 500);
    let c = dir.path().join("c.jsonl");
    assert_eq!(cli(&["synth-corpus", "--seed", "2", "--count", "500", "--out", s(&c)]), 0);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn usage_errors_exit_nonzero() {
    assert_eq!(cli(&["no-such-command"]), 2);
    assert_eq!(cli(&["train", "--epochs", "many"]), 2);
    assert_eq!(cli(&["layout2scene", "--n", "1"]), 2, "missing required flags");
    // no path and no data directory
    assert_eq!(cli(&["build-trees"]), 1);
    assert_eq!(cli(&["--threads", "0", "synth-corpus", "--out", "/dev/null"]), 1);
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(&["synth-corpus", "--template", s(&dir.path().join("missing.json")), "--out", s(&dir.path().join("x"))]), 1);
    assert_eq!(cli(&["--help"]), 0);
}

#[test]
fn ingest_filters_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("c.jsonl");
    let out = dir.path().join("f.jsonl");
    assert_eq!(cli(&["synth-corpus", "--seed", "3", "--count", "40", "--out", s(&c)]), 0);
    assert_eq!(cli(&["ingest", "--corpus", s(&c), "--out", s(&out), "--max-objects", "9"]), 0);
    let report = json(&dir.path().join("f.jsonl.report.json"));
    let kept = formats::read_corpus(&out).unwrap();
    assert_eq!(report["scenes_retained"].as_u64().unwrap() as usize, kept.scenes.len());
    assert!(kept.scenes.iter().all(|s| s.objects.len() <= 9));
    assert_eq!(report["scenes_in"], 40);
}

/// The data directory supplies every path the commands leave out.
#[test]
fn data_dir_environment_variable_sets_default_paths() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_grains");
    let run = |args: &[&str]| Command::new(bin).args(args).env("GRAINS_DATA_DIR", dir.path()).output().unwrap();
    let o = run(&["synth-corpus", "--seed", "4", "--count", "12"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join(CORPUS_FILE).exists());
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["scenes"], 12);
    let o = run(&["build-trees"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(formats::read_trees(&dir.path().join(TREES_FILE)).unwrap().trees.len(), 12);
    let o = Command::new(bin).args(["build-trees"]).env_remove("GRAINS_DATA_DIR").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

/// synth, trees, 5 training epochs, 10 samples and the evaluation, all
/// through the command line.
#[test]
fn pipeline_smoke() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    assert_eq!(cli(&["--data-dir", d, "synth-corpus", "--seed", "5", "--count", "40"]), 0);
    assert_eq!(cli(&["--data-dir", d, "build-trees"]), 0);
    let mut train = vec!["--data-dir", d, "train", "--epochs", "5", "--seed", "2"];
    train.extend_from_slice(SMALL);
    assert_eq!(cli(&train), 0);
    let ck = dir.path().join(CHECKPOINT_FILE);
    let report = json(&dir.path().join(format!("{CHECKPOINT_FILE}.report.json")));
    assert_eq!(report["summary"]["epochs"].as_array().unwrap().len(), 5);
    assert_eq!(report["summary"]["batch_size"], 4);
    assert!(json(&dir.path().join(format!("{CHECKPOINT_FILE}.timing.json")))["train_seconds"].as_f64().unwrap() > 0.0);

    assert_eq!(cli(&["--data-dir", d, "generate", "--count", "10", "--seed", "9", "--svg"]), 0);
    let gen = dir.path().join("generated");
    let g = json(&gen.join(REPORT_FILE));
    assert_eq!(g["requested"], 10);
    let valid = g["structurally_valid"].as_u64().unwrap() as usize;
    let trees = formats::read_trees(&gen.join(GENERATED_TREES)).unwrap();
    assert_eq!(trees.trees.len(), g["realized"].as_u64().unwrap() as usize);
    assert!(trees.trees.len() <= valid);
    for i in 0..trees.trees.len() {
        assert!(gen.join(format!("scene_{i:04}.json")).exists());
        roxmltree::Document::parse(&fs::read_to_string(gen.join(format!("scene_{i:04}.svg"))).unwrap()).unwrap();
    }
    assert!(json(&gen.join(TIMING_FILE))["mean_decode_ms"].as_f64().unwrap() >= 0.0);

    let heldout = dir.path().join("heldout.jsonl");
    let hc = dir.path().join("heldout_corpus.jsonl");
    assert_eq!(cli(&["synth-corpus", "--seed", "6", "--count", "5", "--out", s(&hc)]), 0);
    assert_eq!(cli(&["build-trees", "--corpus", s(&hc), "--out", s(&heldout)]), 0);
    let code = cli(&[
        "--data-dir",
        d,
        "eval",
        "--relpos",
        "bed:nightstand",
        "--checkpoint",
        s(&ck),
        "--heldout",
        s(&heldout),
    ]);
    assert_eq!(code, 0);
    let e = json(&dir.path().join("eval").join(REPORT_FILE));
    assert_eq!(e["analysis"]["training_scenes"], 40);
    assert_eq!(e["analysis"]["generated_scenes"].as_u64().unwrap() as usize, trees.trees.len());
    assert_eq!(e["analysis"]["relpos"][0]["reference"], "bed");
    for set in ["training", "heldout"] {
        let acc = e["reconstruction"][set]["classifier_accuracy"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
    assert_eq!(e["reconstruction"]["heldout"]["trees"], 5);
    assert!(dir.path().join("eval/cooccurrence.svg").exists());
    assert!(fs::read_to_string(dir.path().join("eval/cooccurrence.txt")).unwrap().starts_with("# min_support"));
    assert!(start.elapsed().as_secs() < 300);
}

/// Same seed, same files; `--threads` does not change results.
#[test]
fn training_and_generation_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    assert_eq!(cli(&["--data-dir", d, "synth-corpus", "--seed", "7", "--count", "20"]), 0);
    assert_eq!(cli(&["--data-dir", d, "build-trees"]), 0);
    let mut outs = Vec::new();
    for (i, threads) in ["1", "4"].iter().enumerate() {
        let ck = dir.path().join(format!("m{i}.grains"));
        let mut train = vec!["--data-dir", d, "--threads", threads, "train", "--epochs", "3", "--out", s(&ck)];
        train.extend_from_slice(SMALL);
        assert_eq!(cli(&train), 0);
        let gen = dir.path().join(format!("g{i}"));
        assert_eq!(cli(&["--threads", threads, "generate", "--checkpoint", s(&ck), "--count", "8", "--seed", "3", "--out", s(&gen)]), 0);
        outs.push((ck, gen));
    }
    assert_eq!(fs::read(&outs[0].0).unwrap(), fs::read(&outs[1].0).unwrap());
    for f in [REPORT_FILE, GENERATED_TREES] {
        assert_eq!(fs::read(outs[0].1.join(f)).unwrap(), fs::read(outs[1].1.join(f)).unwrap(), "{f}");
    }
    let r0 = fs::read(dir.path().join("m0.grains.report.json")).unwrap();
    let r1 = fs::read(dir.path().join("m1.grains.report.json")).unwrap();
    assert_eq!(r0, r1);
}

#[test]
fn train_ablation_flags_rebuild_the_trees() {
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    assert_eq!(cli(&["--data-dir", d, "synth-corpus", "--seed", "8", "--count", "10"]), 0);
    assert_eq!(cli(&["--data-dir", d, "build-trees"]), 0);
    let ck = dir.path().join("none.grains");
    let mut train = vec![
        "--data-dir",
        d,
        "train",
        "--epochs",
        "1",
        "--wall-root-mode",
        "none",
        "--position-mode",
        "absolute",
        "--no-labels",
        "--out",
        s(&ck),
    ];
    train.extend_from_slice(SMALL);
    assert_eq!(cli(&train), 0);
    let cfg = formats::read_checkpoint(&ck).unwrap().params.config;
    assert_eq!(cfg.wall_root_mode, grains_core::WallRootMode::None);
    assert_eq!(cfg.position_mode, grains_core::PositionMode::Absolute);
    assert!(!cfg.labels_enabled);
    let gen = dir.path().join("g");
    assert_eq!(cli(&["generate", "--checkpoint", s(&ck), "--count", "20", "--out", s(&gen)]), 0);
    let r = json(&gen.join(REPORT_FILE));
    let hist: u64 = r["wall_count_histogram"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(hist, r["within_limits"].as_u64().unwrap());
}

#[test]
fn layout2scene_writes_scenes() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("m.grains");
    formats::write_checkpoint(&ck, &common::small_checkpoint()).unwrap();
    let layout = dir.path().join("l.json");
    let set = common::trees(12, 1);
    let placed = grains_core::synthesis::realize_placements(&set.trees[0].without_poses(), &grains_core::Room::new(4.0, 4.0, 2.6).unwrap()).unwrap();
    formats::write_layout(&layout, &grains_core::applications::Layout2D::from_scene(&placed)).unwrap();
    let out = dir.path().join("o");
    let code = cli(&[
        "layout2scene",
        "--checkpoint",
        s(&ck),
        "--layout",
        s(&layout),
        "--n",
        "3",
        "--mode",
        "sample",
        "--seed",
        "1",
        "--out",
        s(&out),
        "--svg",
    ]);
    assert_eq!(code, 0);
    assert_eq!(json(&out.join(REPORT_FILE))["scenes"], 3);
    for i in 0..3 {
        formats::read_placed(&out.join(format!("scene_{i:04}.json"))).unwrap();
        assert!(out.join(format!("scene_{i:04}.svg")).exists());
    }
    // a corrupt layout is a plain failure
    fs::write(&layout, "{}").unwrap();
    assert_eq!(cli(&["layout2scene", "--checkpoint", s(&ck), "--layout", s(&layout), "--out", s(&out)]), 1);
}

#[test]
fn serve_fails_on_a_bad_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("m.grains");
    fs::write(&ck, "garbage").unwrap();
    assert_eq!(cli(&["serve", "--checkpoint", s(&ck), "--address", "127.0.0.1:0"]), 1);
}
