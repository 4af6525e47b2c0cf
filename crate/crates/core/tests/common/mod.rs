#![allow(dead_code)]

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repograph::config::RepoConfig;
use repograph::index::Index;
use repograph::RepoGraph;

pub fn write_tree(root: &Path, files: &[(&str, &str)]) {
    for (path, text) in files {
        let full = root.join(path);
        fs::create_dir_all(full.parent().unwrap()).unwrap();
        fs::write(full, text).unwrap();
    }
}

pub fn build(root: &Path) -> Index {
    Index::build(root, &RepoConfig::default()).unwrap()
}

/// Node sets, edge multisets (with provenance and confidence) and attributes.
pub fn assert_same_graph(got: &RepoGraph, want: &RepoGraph) {
    let gn: Vec<_> = got.nodes().collect();
    let wn: Vec<_> = want.nodes().collect();
    assert_eq!(gn, wn, "node sets differ");
    let ge = got.sorted_edges();
    let we = want.sorted_edges();
    if ge != we {
        let extra: Vec<String> = ge.iter().filter(|e| !we.contains(e)).map(|e| format!("{} -{}-> {} ({:?})", e.src, e.relation.as_str(), e.dst, e.provenance)).collect();
        let missing: Vec<String> = we.iter().filter(|e| !ge.contains(e)).map(|e| format!("{} -{}-> {} ({:?})", e.src, e.relation.as_str(), e.dst, e.provenance)).collect();
        panic!("edge multisets differ\nextra: {extra:#?}\nmissing: {missing:#?}");
    }
    assert!(got.attributes().eq(want.attributes()), "attributes differ");
    assert_eq!(got.snapshot_id(), want.snapshot_id());
}

const NAMES: [&str; 12] = [
    "alpha", "beta", "gamma", "delta", "run", "load", "save", "helper", "Base", "Mixin", "Widget", "Store",
];

/// Small Python repositories exercising every resolution path: same-file
/// calls, absolute and relative imports, aliases, attribute calls,
/// inheritance, ambiguous names, docs, configs and tests.
pub struct RandomRepo {
    rng: ChaCha8Rng,
    pub files: Vec<(String, String)>,
}

impl RandomRepo {
    pub fn new(seed: u64, n_files: usize) -> Self {
        let mut r = RandomRepo {
            rng: ChaCha8Rng::seed_from_u64(seed),
            files: Vec::new(),
        };
        let paths: Vec<String> = (0..n_files).map(|i| r.fresh_path(i)).collect();
        for p in &paths {
            r.files.push((p.clone(), String::new()));
        }
        for i in 0..r.files.len() {
            let p = r.files[i].0.clone();
            let text = r.content(&p);
            r.files[i].1 = text;
        }
        let doc = r.doc();
        r.files.push(("README.md".into(), doc));
        let config = r.config();
        r.files.push(("pyproject.toml".into(), config));
        r
    }

    fn fresh_path(&mut self, i: usize) -> String {
        let pkg = ["pkg", "pkg/sub", "lib", "tests", "src/app"][self.rng.gen_range(0..5)];
        let stem = if pkg == "tests" { format!("test_m{i}") } else { format!("m{i}") };
        format!("{pkg}/{stem}.py")
    }

    fn module_of(path: &str) -> String {
        let stem = path.trim_end_matches(".py").replace('/', ".");
        stem.strip_prefix("src.").map(str::to_string).unwrap_or(stem)
    }

    fn py_paths(&self) -> Vec<String> {
        self.files.iter().map(|(p, _)| p.clone()).filter(|p| p.ends_with(".py")).collect()
    }

    fn pick_name(&mut self) -> &'static str {
        NAMES[self.rng.gen_range(0..NAMES.len())]
    }

    pub fn content(&mut self, path: &str) -> String {
        let others = self.py_paths();
        let mut out = String::new();
        for _ in 0..self.rng.gen_range(0..4) {
            let Some(target) = others.choose(&mut self.rng).cloned() else { break };
            let module = Self::module_of(&target);
            let (tdir, _) = target.rsplit_once('/').unwrap();
            let (dir, _) = path.rsplit_once('/').unwrap();
            let tstem = target.rsplit('/').next().unwrap().trim_end_matches(".py").to_string();
            let name = self.pick_name();
            match self.rng.gen_range(0..6) {
                0 => out.push_str(&format!("import {module}\n")),
                1 => out.push_str(&format!("import {module} as mod{}\n", self.rng.gen_range(0..3))),
                2 => out.push_str(&format!("from {module} import {name}\n")),
                3 if tdir == dir => out.push_str(&format!("from . import {tstem}\n")),
                4 if tdir == dir => out.push_str(&format!("from .{tstem} import {name}\n")),
                _ => out.push_str(&format!("from {module} import {name} as {name}_alias\n")),
            }
        }
        out.push('\n');
        for _ in 0..self.rng.gen_range(1..4) {
            let name = self.pick_name();
            if name.starts_with(char::is_uppercase) {
                let base = if self.rng.gen_bool(0.5) { format!("({})", self.pick_name()) } else { String::new() };
                out.push_str(&format!("class {name}{base}:\n    \"\"\"{name} docs.\"\"\"\n"));
                for _ in 0..self.rng.gen_range(1..3) {
                    let m = self.pick_name().to_lowercase();
                    let call = self.call_expr();
                    out.push_str(&format!("    def {m}(self):\n        self.{}()\n        {call}\n\n", self.pick_name().to_lowercase()));
                }
            } else {
                out.push_str(&format!("def {name}(x=None):\n"));
                for _ in 0..self.rng.gen_range(1..4) {
                    let call = self.call_expr();
                    out.push_str(&format!("    {call}\n"));
                }
                out.push('\n');
            }
        }
        if self.rng.gen_bool(0.1) {
            out.push_str("def broken(:\n");
        }
        out
    }

    fn call_expr(&mut self) -> String {
        let name = self.pick_name();
        match self.rng.gen_range(0..5) {
            0 => format!("mod{}.{name}()", self.rng.gen_range(0..3)),
            1 => format!("{name}_alias()"),
            2 => format!("pkg.m{}.{name}()", self.rng.gen_range(0..6)),
            _ => format!("{name}()"),
        }
    }

    fn doc(&mut self) -> String {
        let mut out = String::from("# Project\n\n");
        let paths = self.py_paths();
        for _ in 0..3 {
            if let Some(p) = paths.choose(&mut self.rng) {
                out.push_str(&format!("See {p} and `{}`.\n", self.pick_name()));
            }
        }
        out
    }

    fn config(&mut self) -> String {
        let paths = self.py_paths();
        match paths.choose(&mut self.rng) {
            Some(p) => format!("[tool.app]\nentry = \"{}\"\n", Self::module_of(p)),
            None => String::new(),
        }
    }

    pub fn write(&self, root: &Path) {
        for (p, text) in &self.files {
            let full = root.join(p);
            fs::create_dir_all(full.parent().unwrap()).unwrap();
            fs::write(full, text).unwrap();
        }
    }

    /// Applies a random edit script to the worktree at `root` and to `self`.
    pub fn edit(&mut self, root: &Path, steps: usize) {
        for step in 0..steps {
            let py = self.py_paths();
            match self.rng.gen_range(0..5) {
                0 | 1 if !py.is_empty() => {
                    let p = py.choose(&mut self.rng).unwrap().clone();
                    let text = self.content(&p);
                    self.set(root, &p, text);
                }
                2 if !py.is_empty() => {
                    let p = py.choose(&mut self.rng).unwrap().clone();
                    fs::remove_file(root.join(&p)).unwrap();
                    self.files.retain(|(q, _)| *q != p);
                }
                3 => {
                    let salt = self.rng.gen_range(0..1000);
                    let p = self.fresh_path(1000 + step + salt);
                    if self.files.iter().any(|(q, _)| *q == p) {
                        continue;
                    }
                    self.files.push((p.clone(), String::new()));
                    let text = self.content(&p);
                    self.set(root, &p, text);
                }
                _ => {
                    let text = if self.rng.gen_bool(0.5) { self.doc() } else { self.config() };
                    let target = if self.rng.gen_bool(0.5) { "README.md" } else { "pyproject.toml" };
                    self.set(root, target, text);
                }
            }
        }
    }

    fn set(&mut self, root: &Path, path: &str, text: String) {
        let full = root.join(path);
        fs::create_dir_all(full.parent().unwrap()).unwrap();
        fs::write(&full, &text).unwrap();
        match self.files.iter_mut().find(|(q, _)| q == path) {
            Some(slot) => slot.1 = text,
            None => self.files.push((path.to_string(), text)),
        }
    }
}
