//! Helpers shared by the CLI test targets.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// A world and training run small enough to finish in a few seconds.
pub const TINY_CONFIG: &str = "\
# tiny world for command tests
phones = 12
confusable_pairs = 3
lexicon_size = 12
pron_len_min = 2
pron_len_max = 4
train_utterances = 240
dev_utterances = 36
test_utterances = 36
embed_dim = 4
f_hidden = 6
g_hidden = 6
microbatch_size = 6
microbatches_per_minibatch = 2
triplets_per_minibatch = 8
distill_batch = 8
minibatches_per_epoch = 4
max_epochs = 2
dev_samples = 8
";

pub fn ane(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ane")).args(args).env("ANE_LOG", "error").output().expect("run ane")
}

pub fn ok(args: &[&str]) -> String {
    let out = ane(args);
    assert!(out.status.success(), "ane {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

/// Every file under `root` keyed by its relative path.
pub fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Runs every command once under `root` with the given worker count and
/// returns the concatenated standard output of the reporting commands.
pub fn run_pipeline(root: &Path, workers: usize) -> String {
    let w = workers.to_string();
    let p = |rel: &str| root.join(rel).to_str().unwrap().to_string();
    fs::create_dir_all(root).unwrap();
    fs::write(root.join("tiny.cfg"), TINY_CONFIG).unwrap();
    let cfg = p("tiny.cfg");
    let data = p("data");
    let (train, dev, test) = (p("data/train"), p("data/dev"), p("data/test"));
    let (lexicon, kernel) = (p("data/lexicon.tsv"), p("data/kernel.txt"));
    let mut stdout = String::new();
    let mut run = |args: Vec<&str>| {
        let mut full = vec!["--workers", w.as_str()];
        full.extend(args);
        stdout.push_str(&ok(&full));
    };
    run(vec!["gen-corpus", "--config", &cfg, "--seed", "7", "--out", &data]);
    let (fdir, gdir, fgdir, tfdir) = (p("f"), p("g"), p("fg"), p("tripf"));
    run(vec!["train-f", "--config", &cfg, "--seed", "3", "--train", &train, "--dev", &dev, "--out", &fdir]);
    run(vec![
        "train-f", "--config", &cfg, "--seed", "3", "--set", "objective=triplet-singleview", "--train", &train, "--dev",
        &dev, "--out", &tfdir,
    ]);
    let f = p("f/f.anem");
    run(vec![
        "train-g", "--config", &cfg, "--seed", "3", "--f-model", &f, "--train", &train, "--dev", &dev, "--out", &gdir,
    ]);
    run(vec!["train-fg", "--config", &cfg, "--seed", "3", "--dims", "3", "--train", &train, "--dev", &dev, "--out", &fgdir]);
    let g = p("g/g.anem");
    run(vec!["embed", "--model", &f, "--corpus", &test, "--out", &p("test.emb")]);
    run(vec!["embed", "--model", &g, "--lexicon", &lexicon, "--out", &p("lexicon.emb")]);
    let index = p("lexicon.aneg");
    run(vec!["build-index", "--g-model", &g, "--lexicon", &lexicon, "--out", &index]);
    let first = fs::read_to_string(root.join("data/test/manifest.tsv")).unwrap();
    let rel = first.lines().find(|l| !l.starts_with('#') && l.contains(".anex")).unwrap().rsplit('\t').next().unwrap().to_string();
    let utt = format!("{test}/{rel}");
    run(vec!["recognize", "--index", &index, "--f-model", &f, "--input", &utt, "--k", "3"]);
    run(vec!["eval-recognition", "--f-model", &f, "--g-model", &g, "--lexicon", &lexicon, "--test", &test]);
    run(vec!["eval-ap", "--f-model", &f, "--corpus", &test, "--metric", "cosine"]);
    run(vec!["eval-crossview", "--f-model", &f, "--g-model", &g, "--corpus", &test]);
    run(vec!["eval-noisy-match", "--g-model", &g, "--lexicon", &lexicon, "--kernel", &kernel, "--seed", "5", "--rate", "0.2"]);
    run(vec!["distance-table", "--g-model", &g, "--lexicon", &lexicon, "--kernel", &kernel, "--seed", "5", "--count", "4"]);
    fs::write(root.join("pairs.tsv"), "1 2 3\t1 2 3\n1 2 3\t4 5\n").unwrap();
    run(vec!["distance-table", "--g-model", &g, "--pairs", &p("pairs.tsv")]);
    run(vec!["validate-config", "--config", &cfg, "--set", "embed_dim=5"]);
    stdout
}
