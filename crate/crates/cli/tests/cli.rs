use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const MODEL: &str = r#"{
  "values": ["noun", "verb"],
  "bins": [
    {"id": "the", "p": 0.6, "cond": {"noun": 0.9, "verb": 0.1}},
    {"id": "to", "p": 0.3, "cond": {"noun": 0.2, "verb": 0.8}},
    {"id": "rare", "p": 0.1, "cond": {"noun": 0.5, "verb": 0.5}}
  ]
}"#;

fn datareq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_datareq"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}",
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

#[test]
fn validate_accepts_good_model() {
    let dir = TempDir::new().unwrap();
    let model = write(&dir, "m.json", MODEL);
    let out = datareq(&["validate", "--model", s(&model)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out), serde_json::json!([]));
}

#[test]
fn validate_reports_bad_sum_with_exit_2() {
    let dir = TempDir::new().unwrap();
    let model = write(&dir, "m.json", &MODEL.replace("\"p\": 0.6", "\"p\": 0.7"));
    let out = datareq(&["validate", "--model", s(&model)]);
    assert_eq!(out.status.code(), Some(2));
    let violations = json(&out);
    assert!(violations.to_string().contains("bin_probs"), "{violations}");

    let fixed = datareq(&["validate", "--model", s(&model), "--renormalize"]);
    assert_eq!(fixed.status.code(), Some(0));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(datareq(&["simulate"]).status.code(), Some(1));
    assert_eq!(datareq(&["no-such-command"]).status.code(), Some(1));
    let dir = TempDir::new().unwrap();
    let model = write(&dir, "m.json", MODEL);
    let out = datareq(&["curves", "--model", s(&model), "--grid", "1,x"]);
    assert_eq!(out.status.code(), Some(1));
    let out = datareq(&[
        "simulate",
        "--model",
        s(&model),
        "--m",
        "3",
        "--policy",
        "bogus",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bounds_reports_requested_m() {
    let dir = TempDir::new().unwrap();
    let model = write(&dir, "m.json", MODEL);
    let out = datareq(&[
        "bounds",
        "--model",
        s(&model),
        "--m",
        "20",
        "--fallback",
        "conservative",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json(&out);
    let text = v.to_string();
    assert!(text.contains("\"m\":20"), "{text}");
}

#[test]
fn curves_csv_has_one_row_per_grid_point() {
    let dir = TempDir::new().unwrap();
    let model = write(&dir, "m.json", MODEL);
    let out = datareq(&["curves", "--model", s(&model), "--grid", "0,10,100"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4, "{text}");
    assert!(lines[0].starts_with("m,"));
}

#[test]
fn simulate_and_oracle_agree() {
    let dir = TempDir::new().unwrap();
    let model = write(&dir, "m.json", MODEL);
    let sim = json(&datareq(&[
        "simulate",
        "--model",
        s(&model),
        "--m",
        "4",
        "--trials",
        "40000",
        "--seed",
        "9",
    ]));
    let oracle = json(&datareq(&["oracle", "--model", s(&model), "--m", "4"]));
    let mean = sim["mean_error"].as_f64().unwrap();
    let se = sim["std_error"].as_f64().unwrap();
    let exact = oracle["expected_error"].as_f64().unwrap();
    assert!(
        (mean - exact).abs() <= 4.0 * se,
        "mc {mean} +- {se} vs oracle {exact}"
    );
}

#[test]
fn fixed_default_needs_a_known_value() {
    let dir = TempDir::new().unwrap();
    let model = write(&dir, "m.json", MODEL);
    let base = [
        "simulate",
        "--model",
        s(&model),
        "--m",
        "2",
        "--trials",
        "10",
        "--policy",
        "fixed-default-value",
    ];
    let ok = datareq(&[&base[..], &["--default-value", "verb"]].concat());
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    let bad = datareq(&[&base[..], &["--default-value", "adjective"]].concat());
    assert_ne!(bad.status.code(), Some(0));
}

#[test]
fn ingest_bigram_roundtrips_into_train() {
    let dir = TempDir::new().unwrap();
    let text = write(&dir, "t.txt", "The cat sat. The cat ran!");
    let corpus = dir.path().join("c.tsv");
    let out = datareq(&["ingest", "--in", s(&text), "--out", s(&corpus), "--stats"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stats = json(&out);
    assert_eq!(stats["m"], 7);
    let tsv = fs::read_to_string(&corpus).unwrap();
    assert_eq!(tsv.lines().filter(|l| !l.is_empty()).count(), 7, "{tsv}");
}

#[test]
fn ingest_window_counts() {
    let dir = TempDir::new().unwrap();
    let words: Vec<String> = (0..20).map(|i| format!("w{i}")).collect();
    let text = write(&dir, "t.txt", &words.join(" "));
    let out = datareq(&[
        "ingest",
        "--scheme",
        "window",
        "--width",
        "5",
        "--in",
        s(&text),
        "--stats",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["m"], 16 * 4);
}

#[test]
fn train_exports_learned_map() {
    let dir = TempDir::new().unwrap();
    let model = write(&dir, "m.json", MODEL);
    let corpus = write(&dir, "c.tsv", "the\tnoun\nthe\tnoun\nthe\tverb\nto\tverb\n");
    let out = datareq(&["train", "--model", s(&model), "--corpus", s(&corpus)]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json(&out);
    assert_eq!(v["assignment"]["the"], "noun");
    assert_eq!(v["assignment"]["to"], "verb");
    assert!(v["assignment"].get("rare").is_none_or(|x| x.is_null()));
}

#[test]
fn summarize_builtin_table() {
    let out = datareq(&["summarize"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = json(&out);
    let ratios: Vec<f64> = rows
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["ratio"].as_f64().unwrap())
        .collect();
    assert_eq!(ratios.len(), 5);
    assert!(ratios.windows(2).all(|w| w[0] >= w[1]));

    let csv = datareq(&["summarize", "--format", "csv"]);
    let text = String::from_utf8(csv.stdout).unwrap();
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn report_writes_json_and_csv() {
    let dir = TempDir::new().unwrap();
    let model = write(&dir, "m.json", MODEL);
    let prefix = dir.path().join("r");
    let out = datareq(&[
        "report",
        "--model",
        s(&model),
        "--grid",
        "1,5,20",
        "--trials",
        "500",
        "--out",
        s(&prefix),
    ]);
    assert!(matches!(out.status.code(), Some(0) | Some(3)));
    let bundle: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(prefix.with_extension("json")).unwrap()).unwrap();
    assert_eq!(bundle["rows"].as_array().unwrap().len(), 3);
    let csv = fs::read_to_string(prefix.with_extension("csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}
