use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fae"))
        .args(args)
        .env_remove("FAE_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes a schema and a 240-row file with a noisy numeric signal, one
/// categorical column and a sex column. `protected_positives` controls
/// whether any woman carries the positive label.
fn fixture(protected_positives: bool) -> (TempDir, PathBuf, PathBuf) {
    let dir = TempDir::new().unwrap();
    let schema = dir.path().join("toy.toml");
    fs::write(
        &schema,
        r#"
name = "toy"
files = ["toy.csv"]
delimiter = ","
class_attribute = "label"
positive_label = "yes"
sensitive_attribute = "sex"
protected_value = "F"
attributes = [
  { name = "score", kind = "numeric" },
  { name = "color", kind = "categorical" },
  { name = "sex", kind = "categorical", values = ["F", "M"] },
  { name = "label", kind = "categorical", values = ["yes", "no"] },
]
"#,
    )
    .unwrap();
    let mut text = String::new();
    let mut state: u64 = 12345;
    for i in 0..240 {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let noise = (state >> 33) as f64 / (1u64 << 31) as f64;
        let female = i % 3 == 0;
        let positive = i % 4 == 0 || i % 7 == 0;
        let positive = positive && (protected_positives || !female);
        let base = if positive { 1.0 } else { -1.0 };
        let shift = if female { -0.4 } else { 0.0 };
        let color = ["red", "green", "blue"][i % 3];
        text.push_str(&format!(
            "{:.4},{},{},{}\n",
            base + shift + 2.0 * noise,
            color,
            if female { "F" } else { "M" },
            if positive { "yes" } else { "no" }
        ));
    }
    let data = dir.path().join("toy.csv");
    fs::write(&data, text).unwrap();
    (dir, schema, data)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_predict_evaluate_round_trip() {
    let (dir, schema, data) = fixture(true);
    let model = dir.path().join("model.json");
    for method in ["fae", "adaboost", "smt", "sdb", "ob", "easyensemble"] {
        let out = fae(&[
            "train", "--schema", s(&schema), "--method", method, "--rounds", "3", "--seed", "4", "--model",
            s(&model),
        ]);
        assert!(out.status.success(), "{method}: {}", stderr(&out));

        let preds = dir.path().join("preds.csv");
        let out = fae(&["predict", "--model", s(&model), "--dataset", s(&data), "--out", s(&preds)]);
        assert!(out.status.success(), "{}", stderr(&out));
        let text = fs::read_to_string(&preds).unwrap();
        assert_eq!(text.lines().count(), 241);
        assert_eq!(text.lines().next(), Some("row,group,score,prediction"));

        let out = fae(&["evaluate", "--model", s(&model)]);
        assert!(out.status.success(), "{}", stderr(&out));
        let eval: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        let bacc = eval["balanced_accuracy"].as_f64().unwrap();
        assert!(bacc > 0.5 && bacc <= 1.0, "{method}: {bacc}");
    }
}

#[test]
fn training_is_reproducible() {
    let (dir, schema, _) = fixture(true);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for m in [&a, &b] {
        let out = fae(&["train", "--schema", s(&schema), "--rounds", "3", "--model", s(m)]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn experiment_writes_split_and_mean_rows() {
    let (dir, schema, _) = fixture(true);
    let csv = dir.path().join("report.csv");
    let out = fae(&[
        "experiment", "--schema", s(&schema), "--method", "adaboost,smt", "--splits", "3", "--rounds", "3",
        "--out", s(&csv),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(&csv).unwrap();
    // header, 3 splits × 2 methods, 2 mean rows
    assert_eq!(text.lines().count(), 1 + 6 + 2);
    assert!(String::from_utf8_lossy(&out.stdout).contains("SMT"));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(fae(&[]).status.code(), Some(1));
    assert_eq!(fae(&["train", "--method", "fae"]).status.code(), Some(1));
    assert_eq!(fae(&["train", "--schema", "x", "--model", "y", "--method", "svm"]).status.code(), Some(1));
    let (dir, schema, _) = fixture(true);
    let out = fae(&[
        "train", "--schema", s(&schema), "--epsilon", "-1", "--model", s(&dir.path().join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert_eq!(fae(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_data_exits_2_with_instructions() {
    let (dir, schema, data) = fixture(true);
    fs::remove_file(&data).unwrap();
    let out = fae(&["train", "--schema", s(&schema), "--model", s(&dir.path().join("m.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("toy.csv"), "{}", stderr(&out));
}

#[test]
fn data_dir_override_is_honoured() {
    let (dir, schema, data) = fixture(true);
    let other = TempDir::new().unwrap();
    fs::create_dir(other.path().join("toy")).unwrap();
    fs::rename(&data, other.path().join("toy").join("toy.csv")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_fae"))
        .args(["train", "--schema", s(&schema), "--method", "adaboost", "--rounds", "2", "--model"])
        .arg(dir.path().join("m.json"))
        .env("FAE_DATA_DIR", other.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn degenerate_metric_exits_3() {
    let (dir, schema, _) = fixture(true);
    let model = dir.path().join("m.json");
    let out = fae(&["train", "--schema", s(&schema), "--method", "adaboost", "--rounds", "2", "--model", s(&model)]);
    assert!(out.status.success(), "{}", stderr(&out));
    // no woman is labelled positive, so TPR of the protected group is undefined
    let (_d2, _, no_pos) = fixture(false);
    let out = fae(&["evaluate", "--model", s(&model), "--dataset", s(&no_pos)]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}
