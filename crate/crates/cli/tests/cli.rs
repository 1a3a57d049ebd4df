mod common;

use common::{ane, ok, run_pipeline, tree, TINY_CONFIG};

#[test]
fn pipeline_is_reproducible_and_independent_of_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let a = run_pipeline(&tmp.path().join("a"), 1);
    let b = run_pipeline(&tmp.path().join("b"), 3);
    assert_eq!(a, b);
    let (ta, tb) = (tree(&tmp.path().join("a")), tree(&tmp.path().join("b")));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (path, bytes) in &ta {
        assert!(bytes == &tb[path], "{} differs between runs", path.display());
    }
    assert!(ta.contains_key(std::path::Path::new("f/f.anem")));
    assert!(ta.contains_key(std::path::Path::new("fg/g.anem")));
    assert!(a.contains("metric,config,value"));
}

#[test]
fn gen_corpus_twice_gives_identical_trees() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.cfg");
    std::fs::write(&cfg, TINY_CONFIG).unwrap();
    for d in ["x", "y"] {
        ok(&["gen-corpus", "--config", cfg.to_str().unwrap(), "--seed", "7", "--out", tmp.path().join(d).to_str().unwrap()]);
    }
    assert_eq!(tree(&tmp.path().join("x")), tree(&tmp.path().join("y")));
    ok(&["gen-corpus", "--config", cfg.to_str().unwrap(), "--seed", "8", "--out", tmp.path().join("z").to_str().unwrap()]);
    assert_ne!(tree(&tmp.path().join("x")), tree(&tmp.path().join("z")));
}

#[test]
fn recognize_prints_label_and_distance() {
    let tmp = tempfile::tempdir().unwrap();
    run_pipeline(tmp.path(), 1);
    let lexicon = std::fs::read_to_string(tmp.path().join("data/lexicon.tsv")).unwrap();
    let labels: Vec<&str> = lexicon.lines().map(|l| l.split('\t').next().unwrap()).collect();
    let manifest = std::fs::read_to_string(tmp.path().join("data/test/manifest.tsv")).unwrap();
    let rel = manifest.lines().next().unwrap().rsplit('\t').next().unwrap();
    let out = ok(&[
        "recognize",
        "--index",
        tmp.path().join("lexicon.aneg").to_str().unwrap(),
        "--f-model",
        tmp.path().join("f/f.anem").to_str().unwrap(),
        "--input",
        tmp.path().join("data/test").join(rel).to_str().unwrap(),
    ]);
    let line = out.trim_end();
    let (label, dist) = line.split_once('\t').expect("label<TAB>distance");
    assert!(labels.contains(&label), "{label} not in lexicon");
    assert!(dist.parse::<f64>().unwrap() >= 0.0);
}

#[test]
fn missing_required_flag_exits_2_naming_it() {
    let out = ane(&["gen-corpus", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--out"));
    let out = ane(&["gen-corpus", "--out", "/nonexistent/never"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn unknown_command_or_flag_exits_2() {
    assert_eq!(ane(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(ane(&["validate-config", "--bogus"]).status.code(), Some(2));
    assert_eq!(ane(&["validate-config", "--metric", "manhattan"]).status.code(), Some(2));
}

#[test]
fn validate_config_echoes_defaults_for_an_empty_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("empty.cfg");
    std::fs::write(&cfg, "").unwrap();
    let from_file = ok(&["validate-config", "--config", cfg.to_str().unwrap()]);
    assert_eq!(from_file, ok(&["validate-config"]));
    assert!(from_file.contains("embed_dim = 16\n"));
    assert!(from_file.contains("learning_rate = 0.001\n"));
}

#[test]
fn override_beats_file_value() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.cfg");
    std::fs::write(&cfg, "embed_dim = 8\n").unwrap();
    let out = ok(&["validate-config", "--config", cfg.to_str().unwrap(), "--set", "embed_dim=24"]);
    assert!(out.contains("embed_dim = 24\n"));
    let out = ok(&["validate-config", "--config", cfg.to_str().unwrap()]);
    assert!(out.contains("embed_dim = 8\n"));
}

#[test]
fn config_errors_are_single_line_with_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.cfg");
    std::fs::write(&cfg, "# header\nmargin = 0.2\nmargin = 0.3\n").unwrap();
    let out = ane(&["validate-config", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: duplicate-key: "), "{err}");
    assert!(err.contains("margin") && err.contains("line 3"), "{err}");

    std::fs::write(&cfg, "embed_dim 16\n").unwrap();
    let err = String::from_utf8(ane(&["validate-config", "--config", cfg.to_str().unwrap()]).stderr).unwrap();
    assert!(err.contains("line 1"), "{err}");

    let err = String::from_utf8(ane(&["validate-config", "--set", "nope=1"]).stderr).unwrap();
    assert!(err.starts_with("error: unknown-key: ") && err.contains("nope"), "{err}");
}

#[test]
fn missing_input_file_is_an_io_error() {
    let out = ane(&["validate-config", "--config", "/nonexistent/c.cfg"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: io: "));
}
