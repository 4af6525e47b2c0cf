use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, SystemTime};

use serde_json::Value;

mod common;
use common::{check_golden, code, run, stdout, write_fixture};

fn indexed() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    let o = run(dir.path(), &["index"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    dir
}

/// Path to (bytes, mtime) for every file under `dir`.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, (Vec<u8>, SystemTime)> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let meta = fs::metadata(&p).unwrap();
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), (fs::read(&p).unwrap(), meta.modified().unwrap()));
            }
        }
    }
    out
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    assert_eq!(code(&run(dir.path(), &["search", "dispatch"])), 3);
    assert_eq!(code(&run(dir.path(), &["align"])), 3);
    assert_eq!(code(&run(dir.path(), &["search", "("])), 2);
    assert_eq!(code(&run(&dir.path().join("missing"), &["index"])), 2);

    assert_eq!(code(&run(dir.path(), &["index"])), 0);
    let hit = run(dir.path(), &["search", "def dispatch"]);
    assert_eq!(code(&hit), 0);
    let miss = run(dir.path(), &["search", "no_such_identifier"]);
    assert_eq!(code(&miss), 1);
    assert!(stdout(&miss).is_empty());
    assert_eq!(code(&run(dir.path(), &["search", "x", "--theta", "1.5"])), 2);
    // stable across runs
    for _ in 0..3 {
        let again = run(dir.path(), &["search", "def dispatch"]);
        assert_eq!(code(&again), 0);
        assert_eq!(again.stdout, hit.stdout);
    }
}

#[test]
fn search_output_matches_golden() {
    let dir = indexed();
    let o = run(dir.path(), &["search", "def dispatch"]);
    let text = stdout(&o);
    assert!(text.contains("[Related files from dependency graph]\n"));
    assert!(text.contains("(step 2/4)"), "{text}");
    check_golden("search_dispatch.txt", &text);

    let record = run(dir.path(), &["sidecar", "shop/app.py"]);
    assert_eq!(code(&record), 0);
    check_golden("sidecar_app.json", &stdout(&record));
}

#[test]
fn no_graph_output_is_a_prefix() {
    let dir = indexed();
    for pattern in ["dispatch", "query", "def ", "import", "Connection", "zzz"] {
        let plain = run(dir.path(), &["search", pattern, "--no-graph"]);
        let full = run(dir.path(), &["search", pattern]);
        assert_eq!(code(&plain), code(&full));
        assert!(full.stdout.starts_with(&plain.stdout), "pattern {pattern}");
        assert!(!stdout(&plain).contains("[Related files"));
    }
}

#[test]
fn index_is_idempotent() {
    let dir = indexed();
    let index_dir = dir.path().join(".repograph");
    let before = snapshot(&index_dir);
    std::thread::sleep(Duration::from_millis(20));
    let o = run(dir.path(), &["index"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("up to date"));
    assert_eq!(snapshot(&index_dir), before);

    let forced = run(dir.path(), &["index", "--force"]);
    assert_eq!(code(&forced), 0);
    let after = snapshot(&index_dir);
    let bytes = |m: &BTreeMap<PathBuf, (Vec<u8>, SystemTime)>| {
        m.iter().map(|(k, v)| (k.clone(), v.0.clone())).collect::<BTreeMap<_, _>>()
    };
    assert_eq!(bytes(&after), bytes(&before));
}

#[test]
fn drop_tests_leaves_test_files_out() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    let o = run(dir.path(), &["--json", "index", "--drop-tests"]);
    assert_eq!(code(&o), 0);
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join(".repograph/manifest.json")).unwrap()).unwrap();
    let files: Vec<&String> = manifest["files"].as_object().unwrap().keys().collect();
    assert!(!files.is_empty());
    assert!(files.iter().all(|f| !f.starts_with("tests/")), "{files:?}");
    let graph = fs::read_to_string(dir.path().join(".repograph/graph.json")).unwrap();
    assert!(!graph.contains("test_handler"));
    // the flag is remembered by the index
    fs::write(dir.path().join("shop/db.py"), "def query(sql):\n    return sql\n").unwrap();
    assert_eq!(code(&run(dir.path(), &["align"])), 0);
    let graph = fs::read_to_string(dir.path().join(".repograph/graph.json")).unwrap();
    assert!(!graph.contains("test_handler"));
}

#[test]
fn align_without_changes_leaves_index_untouched() {
    let dir = indexed();
    let index_dir = dir.path().join(".repograph");
    let before = snapshot(&index_dir);
    std::thread::sleep(Duration::from_millis(20));
    let o = run(dir.path(), &["align"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "Δ=0\n");
    assert_eq!(snapshot(&index_dir), before);

    let json = run(dir.path(), &["--json", "align"]);
    let v: Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v["delta"], 0);
}

fn neighbor_files(graph: &Value, path: &str) -> Vec<String> {
    let mut out = vec![path.to_string()];
    for e in graph["edges"].as_array().unwrap() {
        let (s, d) = (e["src"].as_str().unwrap(), e["dst"].as_str().unwrap());
        let file = |key: &str| key.split_once(':').map(|(_, r)| r.split("::").next().unwrap().to_string());
        let (sf, df) = (file(s).unwrap(), file(d).unwrap());
        if sf == path {
            out.push(df.clone());
        }
        if df == path {
            out.push(sf);
        }
    }
    out
}

#[test]
fn one_modified_file_rewrites_only_nearby_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    // keep communities from being recomputed so unrelated labels cannot move
    fs::create_dir_all(dir.path().join(".repograph")).unwrap();
    fs::write(dir.path().join(".repograph/config.toml"), "[communities]\nstale_threshold = 0.9\n").unwrap();
    assert_eq!(code(&run(dir.path(), &["index"])), 0);
    let sidecars = dir.path().join(".repograph/sidecars");
    let before = snapshot(&sidecars);
    let graph_before: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join(".repograph/graph.json")).unwrap()).unwrap();
    std::thread::sleep(Duration::from_millis(20));

    fs::write(
        dir.path().join("shop/report.py"),
        "from shop.db import query\n\n\ndef monthly():\n    return query(\"select 1\")\n\n\ndef yearly():\n    return monthly()\n",
    )
    .unwrap();
    let o = run(dir.path(), &["--json", "align"]);
    assert_eq!(code(&o), 0);
    let after = snapshot(&sidecars);
    let graph_after: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join(".repograph/graph.json")).unwrap()).unwrap();

    let mut allowed = neighbor_files(&graph_before, "shop/report.py");
    allowed.extend(neighbor_files(&graph_after, "shop/report.py"));
    let rewritten: Vec<String> = after
        .iter()
        .filter(|(p, v)| before.get(*p).is_none_or(|b| b.1 != v.1))
        .map(|(p, _)| p.to_string_lossy().trim_end_matches(".graph.json").to_string())
        .collect();
    assert!(rewritten.contains(&"shop/report.py".to_string()), "{rewritten:?}");
    for p in &rewritten {
        assert!(allowed.contains(p), "{p} rewritten but not adjacent to the change");
    }
    assert!(after.contains_key(Path::new("shop/cli.py.graph.json")));
    assert_eq!(after[Path::new("shop/cli.py.graph.json")], before[Path::new("shop/cli.py.graph.json")]);
}

#[test]
fn deleted_file_yields_no_anchors() {
    let dir = indexed();
    fs::remove_file(dir.path().join("shop/db.py")).unwrap();
    let o = run(dir.path(), &["--json", "search", "query"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    for a in v["anchors"]["anchors"].as_array().unwrap() {
        assert!(!a.as_str().unwrap().contains("shop/db.py"), "{a}");
    }
    for m in v["matches"].as_array().unwrap() {
        assert_ne!(m["path"], "shop/db.py");
    }
    assert!(!dir.path().join(".repograph/sidecars/shop/db.py.graph.json").exists());

    // same output as a fresh index of the edited tree
    let fresh = tempfile::tempdir().unwrap();
    write_fixture(fresh.path());
    fs::remove_file(fresh.path().join("shop/db.py")).unwrap();
    assert_eq!(code(&run(fresh.path(), &["index"])), 0);
    let a = run(dir.path(), &["search", "query"]);
    let b = run(fresh.path(), &["search", "query"]);
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn index_dir_override_and_sidecar_command() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    let elsewhere = tempfile::tempdir().unwrap();
    let with_env = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_repograph"))
            .arg("--repo")
            .arg(dir.path())
            .args(args)
            .env("REPOGRAPH_DIR", elsewhere.path())
            .output()
            .unwrap()
    };
    assert_eq!(code(&with_env(&["index"])), 0);
    assert!(elsewhere.path().join("manifest.json").is_file());
    assert!(!dir.path().join(".repograph").exists());

    let full = with_env(&["sidecar", "shop/db.py"]);
    assert_eq!(code(&full), 0);
    let record: Value = serde_json::from_slice(&full.stdout).unwrap();
    assert_eq!(record["path"], "shop/db.py");
    assert_eq!(full.stdout, fs::read(elsewhere.path().join("sidecars/shop/db.py.graph.json")).unwrap());
    assert_eq!(code(&with_env(&["sidecar", "shop/nope.py"])), 2);
    assert_eq!(code(&with_env(&["sidecar", "../outside.py"])), 2);
    let rebuilt = with_env(&["--json", "sidecar", "--rebuild"]);
    assert_eq!(code(&rebuilt), 0);
}

#[test]
fn simulate_json_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"file_count": 16, "target_size": 4, "visibility": 0.5, "seed": 7}"#).unwrap();
    let spec = spec.to_str().unwrap();
    let a = run(dir.path(), &["--json", "simulate", "--seeds", "3", "--spec", spec]);
    let b = run(dir.path(), &["--json", "simulate", "--seeds", "3", "--spec", spec]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let runs: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(runs.as_array().unwrap().len(), 3);
    assert_eq!(runs[0]["seed"], 7);
    assert_eq!(runs[2]["seed"], 9);
}

#[test]
fn bench_align_emits_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--json", "bench-align", "--sizes", "30,60", "--reps", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["size"], 30);
    assert!(rows[1]["rebuild_ms"].as_f64().unwrap() > 0.0);
    assert_eq!(code(&run(dir.path(), &["bench-align", "--diff", "0"])), 2);
}
