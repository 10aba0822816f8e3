use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn ctan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctan"))
        .args(args)
        .env_remove("CTDG_DATA_DIR")
        .output()
        .expect("spawn ctan")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen_path(dir: &Path, n: &str, count: &str) {
    let o = ctan(&[
        "generate",
        "path",
        "--n",
        n,
        "--count",
        count,
        "--seed",
        "7",
        "--out",
        p(dir),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

fn write_config(path: &Path, v: &Value) {
    fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
}

fn small_path_config(data: &Path) -> Value {
    json!({
        "data": {"kind": "path", "path": p(data)},
        "model": {"dim": 6},
        "train": {"epochs": 2, "seeds": [0]}
    })
}

#[test]
fn generate_rejects_degenerate_path() {
    let d = tempfile::tempdir().unwrap();
    let o = ctan(&["generate", "path", "--n", "1", "--out", p(&d.path().join("x"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn generate_is_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    gen_path(&a, "9", "50");
    gen_path(&b, "9", "50");
    for f in ["events.csv", "labels.json", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    for dir in [&a, &b] {
        let o = ctan(&[
            "generate",
            "periodic",
            "--users",
            "3",
            "--items",
            "4",
            "--period",
            "2",
            "--events",
            "40",
            "--out",
            p(&dir.join("per")),
        ]);
        assert_eq!(code(&o), 0);
    }
    assert_eq!(
        fs::read(a.join("per/events.csv")).unwrap(),
        fs::read(b.join("per/events.csv")).unwrap()
    );
}

#[test]
fn data_root_resolves_relative_paths() {
    let d = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ctan"))
        .args(["generate", "path", "--n", "3", "--count", "10", "--out", "paths"])
        .env("CTDG_DATA_DIR", d.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(d.path().join("paths/events.csv").exists());
    let o = Command::new(env!("CARGO_BIN_EXE_ctan"))
        .args(["stats", "--data", "paths"])
        .env("CTDG_DATA_DIR", d.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(stdout_json(&o)["nodes"], json!(30));
}

#[test]
fn verify_default_passes() {
    let o = ctan(&["verify"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = stdout_json(&o);
    let checks = r["checks"].as_array().unwrap();
    assert!(!checks.is_empty());
    for c in checks {
        assert_eq!(c["pass"], json!(true), "{c}");
    }
    for name in ["antisym_real_parts", "shift_real_parts", "scaled_real_parts"] {
        let c = checks.iter().find(|c| c["name"] == json!(name)).unwrap();
        assert!(c["max_violation"].as_f64().unwrap() < 1e-9, "{c}");
    }
}

#[test]
fn verify_single_gamma_and_fault_injection() {
    let o = ctan(&["verify", "--count", "10", "--gamma", "0.1"]);
    assert_eq!(code(&o), 0);
    let r = stdout_json(&o);
    let shift = r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == json!("shift_real_parts"))
        .unwrap();
    assert!(shift["max_violation"].as_f64().unwrap() < 1e-9);
    let o = ctan(&["verify", "--count", "10", "--inject-symmetric"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn stats_of_generated_and_empty_data() {
    let d = tempfile::tempdir().unwrap();
    let data = d.path().join("p9");
    gen_path(&data, "9", "1000");
    let o = ctan(&["stats", "--data", p(&data)]);
    assert_eq!(code(&o), 0);
    let s = stdout_json(&o);
    assert_eq!((s["nodes"].clone(), s["edges"].clone()), (json!(9000), json!(8000)));

    let empty = d.path().join("empty.csv");
    fs::write(&empty, "t,src,dst,kind\n").unwrap();
    let o = ctan(&["stats", "--data", p(&empty)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout_json(&o);
    assert_eq!((s["nodes"].clone(), s["edges"].clone()), (json!(0), json!(0)));
    assert_eq!(s["surprise_defined"], json!(false));

    let o = ctan(&["stats", "--data", p(&d.path().join("missing.csv"))]);
    assert_eq!(code(&o), 1);
}

#[test]
fn train_writes_runs_and_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let data = d.path().join("p3");
    gen_path(&data, "3", "20");
    let cfg = d.path().join("run.json");
    write_config(&cfg, &small_path_config(&data));
    let mut metrics = Vec::new();
    for out in ["a", "b"] {
        let out = d.path().join(out);
        let o = ctan(&["train", "--config", p(&cfg), "--out", p(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let s = stdout_json(&o);
        assert_eq!(s["test"]["metric"], json!("test_acc"));
        assert!(s["test"]["mean"].as_f64().is_some());
        for f in [
            "config.json",
            "summary.json",
            "seed-0/metrics.jsonl",
            "seed-0/checkpoint.json",
        ] {
            assert!(out.join(f).exists(), "{f}");
        }
        // The resolved config records every default.
        let resolved: Value = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
        assert_eq!(resolved["model"]["dim"], json!(6));
        assert_eq!(resolved["train"]["lr"], json!(3e-4));
        assert_eq!(resolved["model"]["psi"], json!("tanh_concat"));
        metrics.push(fs::read(out.join("seed-0/metrics.jsonl")).unwrap());
    }
    assert_eq!(metrics[0], metrics[1]);

    // Rerunning from the resolved config reproduces the run.
    let c = d.path().join("c");
    let o = ctan(&["train", "--config", p(&d.path().join("a/config.json")), "--out", p(&c)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(c.join("seed-0/metrics.jsonl")).unwrap(), metrics[0]);

    let o = ctan(&[
        "eval",
        "--checkpoint",
        p(&d.path().join("a/seed-0/checkpoint.json")),
        "--config",
        p(&cfg),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout_json(&o)["test"]["acc"].as_f64().is_some());
}

#[test]
fn grid_of_four_pairs_selects_best_by_validation() {
    let d = tempfile::tempdir().unwrap();
    let data = d.path().join("p3");
    gen_path(&data, "3", "20");
    let cfg = d.path().join("run.json");
    write_config(&cfg, &small_path_config(&data));
    let grid = d.path().join("grid.json");
    write_config(
        &grid,
        &json!([
            {"model.epsilon": 1.0, "model.gamma": 0.1},
            {"model.epsilon": 0.5, "model.gamma": 0.1},
            {"model.epsilon": 0.1, "model.gamma": 0.01},
            {"model.epsilon": 0.01, "model.gamma": 1.0}
        ]),
    );
    let out = d.path().join("g");
    let o = ctan(&["train", "--config", p(&cfg), "--grid", p(&grid), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = stdout_json(&o);
    let runs = r["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 4);
    let best = runs
        .iter()
        .max_by(|a, b| {
            a["val_mean"]
                .as_f64()
                .unwrap()
                .total_cmp(&b["val_mean"].as_f64().unwrap())
        })
        .unwrap();
    assert_eq!(
        best["val_mean"].as_f64(),
        runs.iter().find(|x| x["run"] == r["best"]).unwrap()["val_mean"].as_f64()
    );
    for i in 0..4 {
        let dir = out.join(format!("run-{i:03}"));
        let resolved: Value = serde_json::from_str(&fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
        assert_eq!(resolved["model"]["epsilon"], runs[i]["overrides"]["model.epsilon"]);
    }
    assert!(out.join("grid.json").exists());
}

#[test]
fn eval_rejects_mismatched_checkpoint() {
    let d = tempfile::tempdir().unwrap();
    let per = d.path().join("per");
    let o = ctan(&[
        "generate",
        "periodic",
        "--users",
        "3",
        "--items",
        "3",
        "--period",
        "2",
        "--events",
        "120",
        "--out",
        p(&per),
    ]);
    assert_eq!(code(&o), 0);
    let cfg = d.path().join("link.json");
    write_config(
        &cfg,
        &json!({
            "data": {"kind": "events", "path": p(&per)},
            "model": {"dim": 4, "time_dim": 2},
            "train": {"epochs": 1, "batch_size": 40}
        }),
    );
    let out = d.path().join("run");
    let o = ctan(&["train", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["test"]["metric"], json!("test_auc"));

    let paths = d.path().join("p3");
    gen_path(&paths, "3", "20");
    let path_cfg = d.path().join("path.json");
    write_config(&path_cfg, &small_path_config(&paths));
    let o = ctan(&[
        "eval",
        "--checkpoint",
        p(&out.join("seed-0/checkpoint.json")),
        "--config",
        p(&path_cfg),
    ]);
    assert_eq!(code(&o), 2);
    assert!(
        String::from_utf8_lossy(&o.stderr).contains("dim"),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn config_errors_map_to_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let data = d.path().join("p3");
    gen_path(&data, "3", "20");
    let o = ctan(&[
        "train",
        "--config",
        p(&d.path().join("nope.json")),
        "--out",
        p(&d.path().join("o")),
    ]);
    assert_eq!(code(&o), 1);

    let cfg = d.path().join("bad.json");
    let mut v = small_path_config(&data);
    v["model"]["depth"] = json!(3);
    write_config(&cfg, &v);
    let o = ctan(&["train", "--config", p(&cfg), "--out", p(&d.path().join("o"))]);
    assert_eq!(code(&o), 2);

    let mut v = small_path_config(&data);
    v["model"]["node_dim"] = json!(4);
    write_config(&cfg, &v);
    let o = ctan(&["train", "--config", p(&cfg), "--out", p(&d.path().join("o"))]);
    assert_eq!(code(&o), 2);

    let mut v = small_path_config(&data);
    v["data"]["path"] = json!(p(&d.path().join("absent")));
    write_config(&cfg, &v);
    let o = ctan(&["train", "--config", p(&cfg), "--out", p(&d.path().join("o"))]);
    assert_eq!(code(&o), 1);

    let o = ctan(&["train", "--bogus"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn divergence_exits_with_training_failure() {
    let d = tempfile::tempdir().unwrap();
    let data = d.path().join("p3");
    gen_path(&data, "3", "20");
    let cfg = d.path().join("run.json");
    let mut v = small_path_config(&data);
    v["train"]["lr"] = json!(1e308);
    write_config(&cfg, &v);
    let o = ctan(&["train", "--config", p(&cfg), "--out", p(&d.path().join("o"))]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}
