use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
[simulation]
seed = 3
holdout_dialogues = 24
test_dialogues = 30
"#;

fn orchestra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orchestra"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = orchestra(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Simulates a small fixture into `dir/sim` and returns its config path.
fn simulate(dir: &Path) -> PathBuf {
    let config = dir.join("sim.toml");
    fs::write(&config, SMALL).unwrap();
    let out = dir.join("sim");
    ok(&["--config", path(&config), "--out", path(&out), "simulate"]);
    out.join("config.toml")
}

/// Every file below `root`, keyed by relative path.
fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn report_json(config: &Path, label: &str) -> serde_json::Value {
    let file = config.parent().unwrap().join("pipeline/reports").join(format!("{label}.json"));
    serde_json::from_slice(&fs::read(file).unwrap()).unwrap()
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    simulate(a.path());
    simulate(b.path());
    let (ta, tb) = (tree(&a.path().join("sim")), tree(&b.path().join("sim")));
    assert!(ta.len() > 15);
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (name, bytes) in &ta {
        assert!(tb[name] == *bytes, "{} differs", name.display());
    }
}

#[test]
fn pipeline_chain_reproduces_simulation() {
    let dir = TempDir::new().unwrap();
    let config = simulate(dir.path());
    let c = path(&config);
    for cmd in ["validate", "embed", "mine-and-train", "build-pools", "route", "report"] {
        ok(&["--config", c, cmd]);
    }
    let sim = dir.path().join("sim");
    let pipeline = sim.join("pipeline");
    for file in ["runs/retrieval.jsonl", "adapter.json", "pools/slm.json", "pools/llm.json"] {
        assert_eq!(fs::read(sim.join(file)).unwrap(), fs::read(pipeline.join(file)).unwrap(), "{file}");
    }

    // Routing again with the same config rewrites identical bytes.
    let before = fs::read(pipeline.join("runs/retrieval.jsonl")).unwrap();
    ok(&["--config", c, "route"]);
    assert_eq!(before, fs::read(pipeline.join("runs/retrieval.jsonl")).unwrap());

    ok(&["--config", c, "--router", "constant:slm", "route"]);
    ok(&["--config", c, "--router", "constant:slm", "report"]);
    let constant = report_json(&config, "constant-slm");
    assert_eq!(constant["assignment_ratio"]["slm"], 1.0);

    ok(&["--config", c, "--router", "oracle", "route"]);
    ok(&["--config", c, "--router", "oracle", "report"]);
    let oracle = report_json(&config, "oracle");
    let retrieval = report_json(&config, "retrieval");
    assert!(oracle["tlb_jga"].as_f64().unwrap() >= retrieval["tlb_jga"].as_f64().unwrap());

    for router in ["cascade", "classifier"] {
        ok(&["--config", c, "--router", router, "route"]);
        ok(&["--config", c, "--router", router, "report"]);
    }
    let series: Vec<serde_json::Value> =
        serde_json::from_slice(&fs::read(pipeline.join("series.json")).unwrap()).unwrap();
    let runs: Vec<&str> = series.iter().map(|p| p["run"].as_str().unwrap()).collect();
    assert_eq!(runs, ["cascade", "classifier", "constant-slm", "oracle", "retrieval"]);
}

#[test]
fn no_supervision_writes_identity_adapter() {
    let dir = TempDir::new().unwrap();
    let config = simulate(dir.path());
    let c = path(&config);
    ok(&["--config", c, "embed"]);
    let out = ok(&["--config", c, "--supervision", "none", "mine-and-train"]);
    assert!(out.contains("0 positive and 0 negative"));
    let adapter: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("sim/pipeline/adapter.json")).unwrap()).unwrap();
    let matrix = adapter["matrix"].as_array().unwrap();
    for (i, row) in matrix.iter().enumerate() {
        for (j, x) in row.as_array().unwrap().iter().enumerate() {
            assert_eq!(x.as_f64().unwrap(), if i == j { 1.0 } else { 0.0 });
        }
    }
}

#[test]
fn embed_is_deterministic_and_checks_imported_stores() {
    let dir = TempDir::new().unwrap();
    let config = simulate(dir.path());
    let c = path(&config);
    let store = dir.path().join("sim/pipeline/embeddings.jsonl");
    ok(&["--config", c, "embed"]);
    let first = fs::read(&store).unwrap();
    ok(&["--config", c, "embed"]);
    assert_eq!(first, fs::read(&store).unwrap());
    let lines = String::from_utf8(first).unwrap().lines().count();
    assert_eq!(lines, count_turns(dir.path()));

    // An imported store missing one key is rejected.
    let truncated: String = fs::read_to_string(&store).unwrap().lines().skip(1).map(|l| format!("{l}\n")).collect();
    let imported = dir.path().join("imported.jsonl");
    fs::write(&imported, truncated).unwrap();
    let text = fs::read_to_string(&config).unwrap().replace(
        "[paths]\n",
        &format!("[paths]\nembeddings = \"{}\"\n", path(&imported)),
    );
    let with_store = dir.path().join("sim/with_store.toml");
    fs::write(&with_store, text).unwrap();
    let out = orchestra(&["--config", path(&with_store), "embed"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lacks 1 turns"));
}

fn count_turns(dir: &Path) -> usize {
    ["holdout", "test"]
        .iter()
        .map(|split| {
            fs::read_to_string(dir.join(format!("sim/corpus/{split}.jsonl")))
                .unwrap()
                .lines()
                .map(|l| {
                    let v: serde_json::Value = serde_json::from_str(l).unwrap();
                    v["turns"].as_array().unwrap().len()
                })
                .sum::<usize>()
        })
        .sum()
}

#[test]
fn validate_reports_missing_prediction_by_key() {
    let dir = TempDir::new().unwrap();
    let config = simulate(dir.path());
    let preds = dir.path().join("sim/predictions/llm.jsonl");
    let text = fs::read_to_string(&preds).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let key = format!("{}:{}", first["dialogue_id"].as_str().unwrap(), first["turn_id"]);
    fs::write(&preds, text.lines().skip(1).map(|l| format!("{l}\n")).collect::<String>()).unwrap();

    let out = orchestra(&["--config", path(&config), "validate"]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains(&format!("expert `llm` has no prediction for turn `{key}`")), "{stdout}");
}

#[test]
fn validate_rejects_empty_corpus() {
    let dir = TempDir::new().unwrap();
    let config = simulate(dir.path());
    fs::write(dir.path().join("sim/corpus/test.jsonl"), "").unwrap();
    let out = orchestra(&["--config", path(&config), "validate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("test corpus has no dialogues"));
}

#[test]
fn input_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(orchestra(&["--config", path(&missing), "validate"]).status.code(), Some(1));
    assert_eq!(orchestra(&["validate"]).status.code(), Some(1));
    assert_eq!(orchestra(&["--router", "random", "simulate"]).status.code(), Some(1));

    let config = simulate(dir.path());
    // Routing before the pools exist names the missing step.
    let out = orchestra(&["--config", path(&config), "route"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run `build-pools` first"));

    let bad = dir.path().join("sim/bad.toml");
    fs::write(&bad, fs::read_to_string(&config).unwrap().replace("k = 10", "k = 0")).unwrap();
    let out = orchestra(&["--config", path(&bad), "validate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("k must be at least 1"));
}
