use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use phenomodel::config::ExperimentConfig;
use phenomodel::io::{self, read_results, tree_hash};
use phenomodel::qd::QdConfig;
use phenomodel::surrogate::KrigingConfig;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phenomodel"))
}

fn small_config(out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        qd: QdConfig {
            generations: 15,
            initial_random: 60,
            ..QdConfig::default()
        },
        replications: 2,
        train_size: 25,
        kriging: KrigingConfig {
            mle_budget: 60,
            ..KrigingConfig::default()
        },
        bootstrap: phenomodel::config::BootstrapConfig {
            resamples: 50,
            level: 0.9,
        },
        out_dir: out.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

fn write_config(dir: &Path, out: &Path) -> PathBuf {
    let path = dir.join("config.json");
    io::write_json(&path, &small_config(out)).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Generates the small experiment into `<tmp>/<name>` and returns its root.
fn generate(tmp: &TempDir, name: &str) -> (PathBuf, PathBuf) {
    let root = tmp.path().join(name);
    fs::create_dir_all(&root).unwrap();
    let config = write_config(tmp.path(), &root);
    ok(&["generate", "--config", s(&config)]);
    (root, config)
}

#[test]
fn generate_writes_one_dataset_per_topology_and_replication() {
    let tmp = TempDir::new().unwrap();
    let (root, config) = generate(&tmp, "a");
    let mut dirs: Vec<String> = fs::read_dir(root.join("datasets"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    dirs.sort();
    assert_eq!(
        dirs,
        ["nh2_rep000", "nh2_rep001", "nh5_rep000", "nh5_rep001"]
    );
    assert!(root.join("config.json").is_file());

    let meta: phenomodel::eval::DatasetMeta =
        io::read_json(&root.join("datasets/nh5_rep001/meta.json")).unwrap();
    let cfg = small_config(&root);
    for p in &meta.probes {
        assert_eq!(p.seed, cfg.probe_seed(1, p.k));
    }
    let files: Vec<String> = ["weights", "pheno_4", "pheno_512", "fitness"]
        .iter()
        .map(|f| format!("{f}.csv"))
        .collect();
    for f in files {
        assert!(root.join("datasets/nh2_rep000").join(f).is_file());
    }

    // same config into a second root gives byte-identical datasets
    let other = tmp.path().join("b");
    ok(&["generate", "--config", s(&config), "--out", s(&other)]);
    assert_eq!(
        tree_hash(&root.join("datasets")).unwrap(),
        tree_hash(&other.join("datasets")).unwrap()
    );
}

#[test]
fn evaluate_filters_and_reports() {
    let tmp = TempDir::new().unwrap();
    let (root, config) = generate(&tmp, "a");
    let results = root.join("results");
    ok(&["evaluate", "--config", s(&config)]);
    let rows = read_results(&results.join("results.csv")).unwrap();
    assert_eq!(rows.len(), 4 * 18);
    for rep in 0..2 {
        for nh in [2, 5] {
            let n = rows
                .iter()
                .filter(|r| r.replication == rep && r.n_hidden == nh)
                .count();
            assert_eq!(n, 18);
        }
    }
    assert!(rows.iter().all(|r| r.train_size == 25));
    for f in [
        "pca.csv",
        "summary.json",
        "summary.csv",
        "pca_summary.csv",
        "fig6.json",
        "fig7.json",
        "fig8.json",
        "config.json",
    ] {
        assert!(results.join(f).is_file(), "missing {f}");
    }

    let fig7: serde_json::Value = io::read_json(&results.join("fig7.json")).unwrap();
    let names: Vec<&str> = fig7["series"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["subset"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"weights"));
    assert_eq!(names.len(), 2 * 9);

    let filtered = tmp.path().join("filtered");
    ok(&[
        "evaluate",
        "--config",
        s(&config),
        "--subset",
        "pheno_64",
        "--model",
        "kriging",
        "--out",
        s(&filtered),
    ]);
    let rows = read_results(&filtered.join("results.csv")).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows
        .iter()
        .all(|r| r.subset == "pheno_64" && r.model.name() == "kriging"));
}

#[test]
fn report_is_idempotent_and_needs_results() {
    let tmp = TempDir::new().unwrap();
    let (root, config) = generate(&tmp, "a");
    ok(&["evaluate", "--config", s(&config), "--model", "linear"]);
    let results = root.join("results");
    let before = tree_hash(&results).unwrap();
    let out = ok(&["report", "--results", s(&results)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("median tau"));
    assert_eq!(before, tree_hash(&results).unwrap());
    ok(&["report", "--results", s(&results)]);
    assert_eq!(before, tree_hash(&results).unwrap());

    let empty = tmp.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let out = run(&["report", "--results", s(&empty)]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
}

#[test]
fn full_pipeline_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let mut hashes = Vec::new();
    for name in ["x", "y"] {
        let root = tmp.path().join(name);
        let config = tmp.path().join(format!("{name}.json"));
        let mut c = small_config(&root);
        c.replications = 1;
        c.n_hidden = vec![2];
        io::write_json(&config, &c).unwrap();
        ok(&["generate", "--config", s(&config)]);
        ok(&["evaluate", "--config", s(&config)]);
        ok(&["report", "--config", s(&config)]);
        // the echoed config names the output root, which differs by design
        fs::remove_file(root.join("config.json")).unwrap();
        fs::remove_file(root.join("results/config.json")).unwrap();
        hashes.push(tree_hash(&root).unwrap());
    }
    assert_eq!(hashes[0], hashes[1]);
}

#[test]
fn missing_fitness_file_is_a_schema_error() {
    let tmp = TempDir::new().unwrap();
    let (root, config) = generate(&tmp, "a");
    fs::remove_file(root.join("datasets/nh2_rep001/fitness.csv")).unwrap();
    let out = run(&["evaluate", "--config", s(&config)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("fitness.csv"), "{err}");
    assert!(err.contains("nh2_rep001"), "{err}");
}

#[test]
fn fit_analyze_and_phenotype() {
    let tmp = TempDir::new().unwrap();
    let (root, config) = generate(&tmp, "a");
    let data = root.join("datasets/nh2_rep000");

    let out = ok(&[
        "fit",
        "--config",
        s(&config),
        "--data",
        s(&data),
        "--subset",
        "pheno_32",
        "--model",
        "linear",
    ]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("pheno_32 linear tau="), "{text}");

    let pca_out = tmp.path().join("pca");
    ok(&[
        "analyze",
        "--config",
        s(&config),
        "--data",
        s(&data),
        "--out",
        s(&pca_out),
    ]);
    assert!(pca_out.join("pca.csv").is_file());
    assert!(pca_out.join("fig7.json").is_file());
    assert!(!pca_out.join("results.csv").exists());

    let resampled = tmp.path().join("resampled");
    ok(&[
        "phenotype",
        "--data",
        s(&data),
        "--k",
        "2,3",
        "--out",
        s(&resampled),
    ]);
    let original = io::read_dataset(&data).unwrap();
    let fresh = io::read_dataset(&resampled).unwrap();
    assert_eq!(fresh.subset("pheno_4"), original.subset("pheno_4"));
    assert_eq!(fresh.subset("pheno_6").unwrap().cols(), 6);
    assert_eq!(fresh.y(), original.y());
}

#[test]
fn validation_failures_exit_with_one() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("bad.json");
    fs::write(&config, r#"{"replications": 0}"#).unwrap();
    let out = run(&["generate", "--config", s(&config)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("replications"));

    fs::write(&config, r#"{"nosuchfield": 1}"#).unwrap();
    assert_eq!(
        run(&["generate", "--config", s(&config)]).status.code(),
        Some(1)
    );
    assert_eq!(
        run(&["evaluate", "--model", "forest"]).status.code(),
        Some(1)
    );
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
