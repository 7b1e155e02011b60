use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn shapedict(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shapedict"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = shapedict(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn cloud_count(csv: &Path) -> usize {
    let text = fs::read_to_string(csv).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect::<HashSet<_>>()
        .len()
}

#[test]
fn generate_counts_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&[
        "generate",
        "--per-class",
        "10",
        "--seed",
        "3",
        "--out-dir",
        s(&a),
    ]);
    assert_eq!(cloud_count(&a.join("clouds.csv")), 80);

    // the manifest alone reproduces the file
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("generate.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "generate");
    let cfg_path = dir.path().join("gen.json");
    fs::write(
        &cfg_path,
        serde_json::json!({ "generator": manifest["config"] }).to_string(),
    )
    .unwrap();
    ok(&["generate", "--config", s(&cfg_path), "--out-dir", s(&b)]);
    assert_eq!(
        fs::read(a.join("clouds.csv")).unwrap(),
        fs::read(b.join("clouds.csv")).unwrap()
    );
}

#[test]
fn default_generate_emits_1600_clouds() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["generate", "--out-dir", s(dir.path())]);
    assert_eq!(cloud_count(&dir.path().join("clouds.csv")), 1600);
}

#[test]
fn train_evaluate_classify_describe() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let model = dir.path().join("model");
    ok(&[
        "generate",
        "--per-class",
        "30",
        "--seed",
        "5",
        "--out-dir",
        s(&data),
    ]);
    let clouds = data.join("clouds.csv");

    ok(&[
        "train",
        "--input",
        s(&clouds),
        "--out-dir",
        s(&model),
        "--atoms",
        "12",
        "--seed",
        "5",
    ]);
    for class in ["3", "4", "5", "6", "7", "8", "9", "circle"] {
        let d: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(model.join(format!("dict_{class}.json"))).unwrap(),
        )
        .unwrap();
        assert_eq!(d["N"], 36);
        assert_eq!(d["K"], 12);
        assert_eq!(d["atoms"].as_array().unwrap().len(), 36 * 12);
        assert_eq!(d["solver"], "lars");
    }
    let log = fs::read_to_string(model.join("training_log.csv")).unwrap();
    assert!(log
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(1) == Some("lars")));
    assert!(model.join("train.manifest.json").exists());

    let report = ok(&[
        "evaluate",
        "--input",
        s(&clouds),
        "--dict-dir",
        s(&model),
        "--out-dir",
        s(&model),
    ]);
    assert!(report.contains("mean diagonal"));
    let hrm = fs::read_to_string(model.join("hrm.csv")).unwrap();
    assert_eq!(hrm.lines().count(), 9);
    assert!(hrm.starts_with("true\\recognized,3,4,5,6,7,8,9,circle"));
    assert!(model.join("evaluate.manifest.json").exists());

    ok(&[
        "evaluate",
        "--input",
        s(&clouds),
        "--dict-dir",
        s(&model),
        "--out-dir",
        s(&model),
        "--format",
        "json",
    ]);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(model.join("hrm.json")).unwrap()).unwrap();
    assert_eq!(json["unclassified_rate"].as_array().unwrap().len(), 8);

    ok(&[
        "classify",
        "--input",
        s(&clouds),
        "--dict-dir",
        s(&model),
        "--out-dir",
        s(&model),
    ]);
    let rows = fs::read_to_string(model.join("classification.csv")).unwrap();
    let mut lines = rows.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let body: Vec<&str> = lines.collect();
    assert_eq!(body.len(), 240);
    let label_col = header.iter().position(|h| *h == "label").unwrap();
    for line in &body {
        let f: Vec<&str> = line.split(',').collect();
        let w: Vec<f64> = f[2..10].iter().map(|v| v.parse().unwrap()).collect();
        let best = (0..8).fold(0, |b, i| if w[i] > w[b] { i } else { b });
        assert_eq!(f[label_col], header[2 + best].trim_start_matches("w_"));
    }
    // rows follow the input order
    assert!(body[0].starts_with("3-0000,"));
    assert!(body[239].starts_with("circle-0029,"));

    ok(&[
        "describe",
        "--input",
        s(&clouds),
        "--out-dir",
        s(&model),
        "--n-descriptor",
        "10",
    ]);
    let desc = fs::read_to_string(model.join("descriptors.csv")).unwrap();
    assert_eq!(desc.lines().next().unwrap().split(',').count(), 2 + 10 + 1);
    assert_eq!(desc.lines().count(), 241);
}

#[test]
fn omp_coder_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["generate", "--per-class", "8", "--out-dir", s(dir.path())]);
    let clouds = dir.path().join("clouds.csv");
    ok(&[
        "train",
        "--input",
        s(&clouds),
        "--out-dir",
        s(dir.path()),
        "--atoms",
        "4",
        "--nonzeros",
        "2",
        "--coder",
        "omp",
    ]);
    let log = fs::read_to_string(dir.path().join("training_log.csv")).unwrap();
    assert!(log
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(1) == Some("omp")));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(shapedict(&["generate", "--bogus"]).status.code(), Some(1));
    assert_eq!(
        shapedict(&["generate", "--coder", "ista"]).status.code(),
        Some(1)
    );
    assert_eq!(
        shapedict(&["generate", "--split", "1.5", "--out-dir", s(dir.path())])
            .status
            .code(),
        Some(1)
    );
    let missing = dir.path().join("missing.csv");
    assert_eq!(
        shapedict(&[
            "describe",
            "--input",
            s(&missing),
            "--out-dir",
            s(dir.path())
        ])
        .status
        .code(),
        Some(2)
    );
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "source_id,class,point_index,x,y\na,12,0,0,0\n").unwrap();
    let out = shapedict(&["describe", "--input", s(&bad), "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2:"));
    assert_eq!(shapedict(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_dictionary_names_the_class() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["generate", "--per-class", "8", "--out-dir", s(dir.path())]);
    let clouds = dir.path().join("clouds.csv");
    ok(&[
        "train",
        "--input",
        s(&clouds),
        "--out-dir",
        s(dir.path()),
        "--atoms",
        "4",
        "--nonzeros",
        "2",
    ]);
    fs::remove_file(dir.path().join("dict_7.json")).unwrap();
    let out = shapedict(&[
        "evaluate",
        "--input",
        s(&clouds),
        "--out-dir",
        s(dir.path()),
    ]);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dict_7.json"));
}

#[test]
fn describe_reports_bad_clouds_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    fs::write(
        &input,
        "source_id,class,point_index,x,y\n\
         flat,4,0,1,1\nflat,4,1,1,1\nflat,4,2,1,1\nflat,4,3,1,1\n\
         sq,4,0,0,0\nsq,4,1,1,0\nsq,4,2,1,1\nsq,4,3,0,1\nsq,4,4,0,0\n",
    )
    .unwrap();
    ok(&[
        "describe",
        "--input",
        s(&input),
        "--out-dir",
        s(dir.path()),
        "--n-descriptor",
        "4",
    ]);
    let text = fs::read_to_string(dir.path().join("descriptors.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].contains("degenerate-cloud"));
    assert!(lines[2].ends_with(','));
}
