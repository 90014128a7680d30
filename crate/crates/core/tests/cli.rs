mod common;

use std::fs;
use std::path::Path;

use common::*;

fn toy(dir: &Path) -> String {
    let p = dir.join("toy.csv");
    fs::write(&p, "x,y\n1,0\n2,0\n3,1\n4,1\n").unwrap();
    p.to_str().unwrap().to_string()
}

fn train_toy(dir: &Path) -> String {
    let data = toy(dir);
    let model = dir.join("toy.json").to_str().unwrap().to_string();
    let out = run(&[
        "train", "--data", &data, "--label", "y", "--model", &model, "--num-trees", "1", "--learning-rate", "1",
        "--max-leaves", "2", "--min-data-in-leaf", "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    model
}

#[test]
fn train_toy_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_toy(dir.path());
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(json["format_version"], 1);
    assert_eq!(json["objective"], "mse");
    assert_eq!(json["base_score"], 0.5);
    assert_eq!(json["feature_names"], serde_json::json!(["x"]));
    assert_eq!(json["trees"][0]["threshold"], 2.5);
    assert_eq!(json["trees"][0]["left"]["value"], -0.5);
    assert_eq!(json["trees"][0]["right"]["value"], 0.5);
    assert_eq!(json["metadata"]["num_trees"], 1);
}

#[test]
fn train_logs_losses() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path());
    let model = dir.path().join("m.json");
    let out = run(&[
        "train", "--data", &data, "--valid", &data, "--label", "y", "--model", model.to_str().unwrap(),
        "--num-trees", "3", "--min-data-in-leaf", "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("iter=0 train_loss=0.5 valid_loss=0.5"), "{}", lines[0]);
    assert_eq!(loss_log(&text).len(), 4);
}

#[test]
fn zero_trees_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path());
    let model = dir.path().join("m.json");
    let out = run(&["train", "--data", &data, "--label", "y", "--model", model.to_str().unwrap(), "--num-trees", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("ConfigError"), "{}", stderr(&out));
    assert!(!model.exists());
}

#[test]
fn unknown_flag_exits_one() {
    let out = run(&["train", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn mem_report_zero_copy() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path());
    let model = dir.path().join("m.json");
    let out = run(&[
        "train", "--data", &data, "--label", "y", "--model", model.to_str().unwrap(), "--num-trees", "2",
        "--binning-mode", "zerocopy", "--mem-report",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(mem_line(&text, "raw_value_bytes_copied"), Some(0));
    for name in ["bin_cache_bytes", "histogram_bytes", "merge_structure_bytes", "gradient_bytes", "total_library_bytes"] {
        assert!(mem_line(&text, name).is_some(), "missing mem.{name}");
    }
}

#[test]
fn mem_report_cache_mode_counts_bins() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path());
    let model = dir.path().join("m.json");
    let out = run(&[
        "train", "--data", &data, "--label", "y", "--model", model.to_str().unwrap(), "--num-trees", "2", "--mem-report",
    ]);
    assert!(out.status.success());
    assert_eq!(mem_line(&stdout(&out), "bin_cache_bytes"), Some(4));
}

#[test]
fn predict_toy() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_toy(dir.path());
    let data = toy(dir.path());
    let out = run(&["predict", "--model", &model, "--data", &data]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out), "score\n0\n0\n1\n1\n");

    let file = dir.path().join("p.csv");
    let out = run(&["predict", "--model", &model, "--data", &data, "--out", file.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(file).unwrap(), "score\n0\n0\n1\n1\n");
}

#[test]
fn predict_logloss_has_probability() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path());
    let model = dir.path().join("m.json");
    let out = run(&[
        "train", "--data", &data, "--label", "y", "--model", model.to_str().unwrap(), "--objective", "logloss",
        "--num-trees", "1", "--min-data-in-leaf", "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = run(&["predict", "--model", model.to_str().unwrap(), "--data", &data]);
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("score,probability"));
    for l in lines {
        let (s, p) = l.split_once(',').unwrap();
        let (s, p): (f64, f64) = (s.parse().unwrap(), p.parse().unwrap());
        assert!((p - 1.0 / (1.0 + (-s).exp())).abs() < 1e-15);
    }
}

#[test]
fn predict_schema_errors() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_toy(dir.path());
    let other = dir.path().join("other.csv");
    fs::write(&other, "z\n1\n").unwrap();
    let out = run(&["predict", "--model", &model, "--data", other.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("SchemaError"), "{}", stderr(&out));

    let empty_other = dir.path().join("empty_other.csv");
    fs::write(&empty_other, "z\n").unwrap();
    let out = run(&["predict", "--model", &model, "--data", empty_other.to_str().unwrap()]);
    assert!(stderr(&out).starts_with("SchemaError"));
}

#[test]
fn predict_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_toy(dir.path());
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "x,y\n").unwrap();
    let out = run(&["predict", "--model", &model, "--data", empty.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out), "score\n");
}

#[test]
fn model_load_errors() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_toy(dir.path());
    let data = toy(dir.path());
    let text = fs::read_to_string(&model).unwrap();

    let bad_version = dir.path().join("v.json");
    fs::write(&bad_version, text.replace("\"format_version\":1", "\"format_version\":999")).unwrap();
    let out = run(&["predict", "--model", bad_version.to_str().unwrap(), "--data", &data]);
    assert!(stderr(&out).starts_with("VersionError"), "{}", stderr(&out));

    let truncated = dir.path().join("t.json");
    fs::write(&truncated, &text[..text.len() / 2]).unwrap();
    let out = run(&["predict", "--model", truncated.to_str().unwrap(), "--data", &data]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("ParseError"), "{}", stderr(&out));
}

#[test]
fn ingestion_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "x,y\nabc,0\n").unwrap();
    let model = dir.path().join("m.json");
    let out = run(&["train", "--data", bad.to_str().unwrap(), "--label", "y", "--model", model.to_str().unwrap()]);
    let err = stderr(&out);
    assert!(err.starts_with("ParseError") && err.contains("row 1") && err.contains("column x"), "{err}");

    let data = toy(dir.path());
    let out = run(&["train", "--data", &data, "--label", "nope", "--model", model.to_str().unwrap()]);
    assert!(stderr(&out).starts_with("SchemaError"));

    let out = run(&["train", "--data", "/nonexistent/x.csv", "--label", "y", "--model", model.to_str().unwrap()]);
    assert!(stderr(&out).starts_with("Io"));
}

#[test]
fn missing_cells_get_a_missing_bin() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "x,y\n1,0\n,1\nNaN,1\n4,0\n5,0\n").unwrap();
    let model = dir.path().join("m.json");
    let out = run(&[
        "train", "--data", data.to_str().unwrap(), "--label", "y", "--model", model.to_str().unwrap(),
        "--num-trees", "1", "--learning-rate", "1", "--min-data-in-leaf", "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    // 3 finite values and a missing bin
    assert_eq!(json["metadata"]["bin_counts"], serde_json::json!([4]));
    assert_eq!(json["metadata"]["bin_boundaries"], serde_json::json!([[2.5, 4.5]]));
}

fn merge_fixture(dir: &Path) -> (String, String) {
    let side = dir.join("side.csv");
    let mut text = String::from("store,size,region\n");
    for k in 0..10 {
        text.push_str(&format!("{k},{},{}\n", k * 10, k % 3));
    }
    fs::write(&side, text).unwrap();
    let main = dir.join("main.csv");
    let mut text = String::from("store,day,y\n");
    for i in 0..300 {
        let k = (i * 7) % 12; // stores 10 and 11 have no side row
        let y = if k < 10 { (k * 10) as f64 / 20.0 } else { 0.0 } + (i % 5) as f64 * 0.01;
        text.push_str(&format!("{k},{},{y}\n", i % 7));
    }
    fs::write(&main, text).unwrap();
    (main.to_str().unwrap().to_string(), side.to_str().unwrap().to_string())
}

#[test]
fn merge_flag_trains_on_side_features() {
    let dir = tempfile::tempdir().unwrap();
    let (main, side) = merge_fixture(dir.path());
    let model = dir.path().join("m.json");
    let spec = format!("{side}:store:size,region");
    let out = run(&[
        "train", "--data", &main, "--label", "y", "--merge", &spec, "--model", model.to_str().unwrap(),
        "--num-trees", "20", "--learning-rate", "0.5", "--min-data-in-leaf", "5", "--mem-report",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    // join index (4 bytes per row) plus the key-level side table
    assert!(mem_line(&text, "merge_structure_bytes").unwrap() >= 300 * 4);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(json["feature_names"], serde_json::json!(["day", "size", "region"]));
    let log = loss_log(&text);
    assert!(log.last().unwrap().1 < 0.1 * log[0].1);

    let out = run(&["predict", "--model", model.to_str().unwrap(), "--data", &main, "--merge", &spec]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).lines().count(), 301);

    let out = run(&["predict", "--model", model.to_str().unwrap(), "--data", &main]);
    assert!(stderr(&out).starts_with("SchemaError"));

    let out = run(&["eval", "--model", model.to_str().unwrap(), "--data", &main, "--label", "y", "--merge", &format!("{side}:store:*")]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rmse: f64 = stdout(&out).trim().strip_prefix("rmse=").unwrap().parse().unwrap();
    assert!((rmse - log.last().unwrap().1).abs() < 1e-12);
}

#[test]
fn duplicate_side_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let side = dir.path().join("side.csv");
    fs::write(&side, "k,v\n1,2\n1,3\n").unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "k,y\n1,0\n1,1\n").unwrap();
    let model = dir.path().join("m.json");
    let out = run(&[
        "train", "--data", data.to_str().unwrap(), "--label", "y", "--merge", &format!("{}:k:v", side.display()),
        "--model", model.to_str().unwrap(),
    ]);
    assert!(stderr(&out).starts_with("DuplicateKey"), "{}", stderr(&out));
}

#[test]
fn eval_and_cv() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let cols: Vec<Vec<f64>> = vec![
        (0..200).map(|i| ((i * 37) % 100) as f64 / 10.0).collect(),
        (0..200).map(|i| ((i * 11) % 13) as f64).collect(),
    ];
    let y: Vec<f64> = cols[0].iter().zip(&cols[1]).map(|(a, b)| f64::from(a + b * 0.2 > 6.0)).collect();
    let mut all = cols.clone();
    all.push(y);
    write_csv(&data, &["a", "b", "y"], &all);
    let d = data.to_str().unwrap();
    let model = dir.path().join("m.json");
    let out = run(&["train", "--data", d, "--label", "y", "--objective", "logloss", "--num-trees", "30", "--model", model.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));

    let out = run(&["eval", "--model", model.to_str().unwrap(), "--data", d, "--label", "y"]);
    let text = stdout(&out);
    let auc: f64 = text.lines().find_map(|l| l.strip_prefix("auc=")).unwrap().parse().unwrap();
    assert!(auc > 0.95, "{text}");
    assert!(text.lines().any(|l| l.starts_with("logloss=")));

    let out = run(&["cv", "--data", d, "--label", "y", "--objective", "logloss", "--num-trees", "20", "--folds", "4", "--seed", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().filter(|l| l.starts_with("fold=")).count(), 4);
    let mean: f64 = text.lines().find_map(|l| l.strip_prefix("mean_auc=")).unwrap().parse().unwrap();
    assert!(mean > 0.8, "{text}");
    assert_eq!(text, stdout(&run(&["cv", "--data", d, "--label", "y", "--objective", "logloss", "--num-trees", "20", "--folds", "4", "--seed", "3"])));

    let out = run(&["cv", "--data", d, "--label", "y", "--folds", "500"]);
    assert!(stderr(&out).starts_with("InvalidFoldCount"));
}

#[test]
fn early_stopping_via_cli() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("t.csv");
    let valid = dir.path().join("v.csv");
    let x: Vec<f64> = (0..300).map(|i| (i % 60) as f64).collect();
    write_csv(&train, &["x", "y"], &[x.clone(), (0..300).map(|i| ((i * 7919) % 17) as f64).collect()]);
    write_csv(&valid, &["x", "y"], &[x, (0..300).map(|i| ((i * 104729) % 13) as f64).collect()]);
    let model = dir.path().join("m.json");
    let out = run(&[
        "train", "--data", train.to_str().unwrap(), "--valid", valid.to_str().unwrap(), "--label", "y",
        "--model", model.to_str().unwrap(), "--num-trees", "300", "--learning-rate", "0.5",
        "--min-data-in-leaf", "2", "--early-stopping-rounds", "5",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let lines = stdout(&out).lines().count();
    assert!(lines < 301, "{lines}");
    assert!(stdout(&out).lines().all(|l| l.contains("valid_loss=")));
}
