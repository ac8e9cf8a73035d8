mod common;

use std::fs;
use std::path::Path;

use common::{run, stderr, stdout, synthetic_inputs};
use taxoprobe::attention::{AttentionMatrix, Direction, MatrixStoreWriter};
use taxoprobe::dataset::SetLabel;

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small stub pipeline: 3 categories x 4 leaves, 2 x 3 attention grid.
fn small_run(dir: &Path, out: &str) -> std::process::Output {
    let (lex, norms) = synthetic_inputs(dir, 3, 4);
    let out = dir.join(out);
    run(&[
        "all",
        "--norms",
        p(&norms),
        "--lexicon",
        p(&lex),
        "--backend",
        "stub:3:2x3",
        "--out-dir",
        p(&out),
    ])
}

#[test]
fn build_dataset_writes_three_aligned_files() {
    let dir = tempfile::tempdir().unwrap();
    let (lex, norms) = synthetic_inputs(dir.path(), 3, 4);
    let out = dir.path().join("out");
    let o = run(&["build-dataset", "--norms", p(&norms), "--lexicon", p(&lex), "--out-dir", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("wrote 60 examples per set"), "{}", stdout(&o));
    let lines: Vec<usize> = ["positive.tsv", "negative.tsv", "sisters.tsv"]
        .iter()
        .map(|f| fs::read_to_string(out.join("dataset").join(f)).unwrap().lines().count())
        .collect();
    assert_eq!(lines, vec![61, 61, 61]);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("dataset/dataset.meta.json")).unwrap()).unwrap();
    assert!(meta["metadata"]["lexicon_version"].as_str().unwrap().starts_with("fixture:"));
    assert_eq!(meta["metadata"]["config_hash"].as_str().unwrap().len(), 16);
}

#[test]
fn missing_norms_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let (lex, _) = synthetic_inputs(dir.path(), 2, 2);
    let missing = dir.path().join("nope.tsv");
    let o = run(&["build-dataset", "--norms", p(&missing), "--lexicon", p(&lex), "--out-dir", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.tsv"), "{}", stderr(&o));
}

#[test]
fn unavailable_backend_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let (lex, norms) = synthetic_inputs(dir.path(), 2, 3);
    let out = dir.path().join("out");
    let o = run(&["build-dataset", "--norms", p(&norms), "--lexicon", p(&lex), "--out-dir", p(&out)]);
    assert!(o.status.success());
    let model = dir.path().join("no-model");
    let spec = format!("transformers:{}", model.display());
    let o = run(&["extract", "--backend", &spec, "--out-dir", p(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn rerun_extract_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let o = small_run(dir.path(), "out");
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    let again = run(&["extract", "--backend", "stub:3:2x3", "--out-dir", p(&out)]);
    assert_eq!(again.status.code(), Some(4));
    assert!(stderr(&again).contains("--force"));
    let forced = run(&["extract", "--backend", "stub:3:2x3", "--out-dir", p(&out), "--force"]);
    assert!(forced.status.success(), "{}", stderr(&forced));
}

#[test]
fn identical_config_gives_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    assert!(small_run(dir.path(), "a").status.success());
    assert!(small_run(dir.path(), "b").status.success());
    for file in [
        "dataset/positive.tsv",
        "dataset/negative.tsv",
        "dataset/sisters.tsv",
        "store/index.tsv",
        "store/matrices.bin",
        "extraction_counts.tsv",
        "probe-forward/results.tsv",
        "figures/skewness.tsv",
        "figures/pattern1/panels.png",
    ] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert!(a == b, "{file} differs between runs");
    }
}

#[test]
fn probe_table_and_direction_flag() {
    let dir = tempfile::tempdir().unwrap();
    let o = small_run(dir.path(), "out");
    assert!(o.status.success());
    for row in ["All three", "Pos. vs. Neg.", "Pos. vs. Sisters", "Neg. vs. Sisters"] {
        assert!(stdout(&o).contains(row), "{row}");
    }
    let out = dir.path().join("out");
    let back = run(&["probe", "--direction", "backward", "--out-dir", p(&out)]);
    assert!(back.status.success(), "{}", stderr(&back));
    assert!(stdout(&back).contains("backward attention"));
    let tsv = fs::read_to_string(out.join("probe-backward/results.tsv")).unwrap();
    let names: Vec<&str> = tsv.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(names, ["All three", "Pos. vs. Neg.", "Pos. vs. Sisters", "Neg. vs. Sisters"]);
    assert!(tsv.starts_with("experiment\taccuracy\tn_train\tn_test\tseed\n"));
}

#[test]
fn visualize_inventory_and_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    assert!(small_run(dir.path(), "out").status.success());
    let figures = dir.path().join("out/figures");
    let groups: Vec<String> = (1..=5)
        .map(|p| format!("pattern{p}"))
        .chain(["all-patterns".to_string()])
        .collect();
    for g in &groups {
        let pngs = fs::read_dir(figures.join(g))
            .unwrap()
            .filter(|e| {
                let name = e.as_ref().unwrap().file_name().into_string().unwrap();
                name.ends_with(".png") && !name.starts_with("panels") && !name.starts_with("skewness")
            })
            .count();
        assert_eq!(pngs, 9, "{g}");
        for which in ["first", "last"] {
            assert!(figures.join(g).join(format!("skewness_{which}.png")).exists());
        }
        for label in ["positive", "negative", "sister"] {
            for dir_name in ["forward", "backward", "average"] {
                let side: serde_json::Value = serde_json::from_str(
                    &fs::read_to_string(figures.join(g).join(format!("{label}_{dir_name}.json"))).unwrap(),
                )
                .unwrap();
                let rows = side["matrix"].as_array().unwrap();
                assert_eq!(rows.len(), 2);
                assert!(rows.iter().all(|r| r.as_array().unwrap().len() == 3));
                assert!(side["metadata"]["backend"].as_str().unwrap().starts_with("stub:3"));
            }
        }
    }
    let skew = fs::read_to_string(figures.join("skewness.tsv")).unwrap();
    // 6 groups x 2 layers x 9 (set, direction) rows x 3 heads
    assert_eq!(skew.lines().count(), 1 + 6 * 2 * 9 * 3);
}

fn write_store(dir: &Path, labels: &[SetLabel], patterns: &[u8]) {
    let mut w = MatrixStoreWriter::create(dir, false).unwrap();
    let mut id = 0;
    for &label in labels {
        for &pattern in patterns {
            for i in 0..6 {
                for direction in Direction::ALL {
                    let v = (0..4).map(|k| ((i * 4 + k) % 5) as f32 / 10.0).collect();
                    let m = AttentionMatrix::new(2, 2, v, direction, id).unwrap();
                    w.append(label, pattern, &m).unwrap();
                }
                id += 1;
            }
        }
    }
    w.finish().unwrap();
}

#[test]
fn probe_on_store_missing_a_set_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    write_store(&dir.path().join("store"), &[SetLabel::Positive, SetLabel::Negative], &[1]);
    let o = run(&["probe", "--out-dir", p(dir.path())]);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
    assert!(stderr(&o).contains("sister"));
}

#[test]
fn empty_store_exits_6() {
    let dir = tempfile::tempdir().unwrap();
    write_store(&dir.path().join("store"), &[], &[]);
    let o = run(&["visualize", "--out-dir", p(dir.path())]);
    assert_eq!(o.status.code(), Some(6), "{}", stderr(&o));
    let o = run(&["probe", "--out-dir", p(dir.path())]);
    assert_eq!(o.status.code(), Some(6));
}

#[test]
fn single_pattern_store_gets_one_group() {
    let dir = tempfile::tempdir().unwrap();
    write_store(&dir.path().join("store"), &SetLabel::ALL, &[4]);
    let o = run(&["visualize", "--out-dir", p(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("wrote 9 heatmaps"), "{}", stdout(&o));
    let groups: Vec<String> = fs::read_dir(dir.path().join("figures"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| !n.ends_with(".tsv"))
        .collect();
    assert_eq!(groups, ["pattern4"]);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let (lex, norms) = synthetic_inputs(dir.path(), 3, 4);
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        format!(
            "seed = 9\nout_dir = \"from-config\"\n[paths]\nnorms = \"{}\"\nlexicon = \"{}\"\n[backend]\nspec = \"stub:1:2x2\"\n[probe]\ncv_folds = 3\n",
            norms.file_name().unwrap().to_str().unwrap(),
            lex.file_name().unwrap().to_str().unwrap()
        ),
    )
    .unwrap();
    let o = run(&["all", "--config", p(&config), "--seed", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let tsv = fs::read_to_string(dir.path().join("from-config/probe-forward/results.tsv")).unwrap();
    assert!(tsv.lines().next().unwrap().ends_with("\tcv_accuracy"));
    assert!(tsv.lines().nth(1).unwrap().split('\t').nth(4) == Some("4"), "{tsv}");

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "unknown_key = 1\n").unwrap();
    let o = run(&["probe", "--config", p(&bad)]);
    assert_eq!(o.status.code(), Some(2));
}
