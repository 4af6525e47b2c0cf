//! Seeded synthetic Python repositories with a planted target set.
//!
//! Files live at `src/pkgNN/mIIII.py`. Background functions are named
//! `fIIII_J` and only ever call other background functions. Planted targets
//! are `vis_*` functions, which the scripted queries can find by name, and
//! `hid_*` functions, which no query mentions. Each hidden target is invoked
//! by a visible one through an import or from the same file, so it sits one
//! hop from a lexical anchor over an edge of confidence at least 0.9.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repograph::{NodeId, RepoGraph};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const WORDS: [&str; 16] = [
    "parse", "route", "cache", "render", "token", "session", "config", "signal", "buffer", "schema",
    "socket", "index", "ledger", "filter", "bundle", "cursor",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolRange {
    pub min: usize,
    pub max: usize,
}

/// Expected cross-file relations per background symbol or file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeDensity {
    /// Calls per background function.
    pub invokes: f64,
    /// Extra module imports per file, beyond those its calls need.
    pub imports: f64,
    /// Chance that a file defines a class inheriting from another file's class.
    pub inherits: f64,
    /// Share of cross-file calls written without an import.
    pub fuzzy: f64,
    /// Chance that a file gets a test module.
    pub tests: f64,
    /// Share of call targets drawn from the caller's own package.
    pub locality: f64,
}

impl Default for EdgeDensity {
    fn default() -> Self {
        EdgeDensity {
            invokes: 1.0,
            imports: 0.3,
            inherits: 0.2,
            fuzzy: 0.3,
            tests: 0.1,
            locality: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticRepoSpec {
    pub file_count: usize,
    pub symbols_per_file: SymbolRange,
    pub density: EdgeDensity,
    /// |Y|.
    pub target_size: usize,
    /// Share of Y the scripted queries can match by name.
    pub visibility: f64,
    pub seed: u64,
    pub files_per_package: usize,
}

impl Default for SyntheticRepoSpec {
    fn default() -> Self {
        SyntheticRepoSpec {
            file_count: 40,
            symbols_per_file: SymbolRange { min: 2, max: 5 },
            density: EdgeDensity::default(),
            target_size: 6,
            visibility: 0.5,
            seed: 42,
            files_per_package: 10,
        }
    }
}

impl SyntheticRepoSpec {
    /// Visible share of Y: round(v·|Y|), at least one, and at most |Y| − 1
    /// when v < 1 so that something stays hidden.
    pub fn visible_count(&self) -> usize {
        let raw = (self.visibility * self.target_size as f64).round() as usize;
        let upper = if self.visibility < 1.0 {
            self.target_size.saturating_sub(1)
        } else {
            self.target_size
        };
        raw.clamp(1, upper.max(1))
    }

    pub fn hidden_count(&self) -> usize {
        self.target_size - self.visible_count()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasibleSpec(m));
        if self.file_count == 0 {
            return bad("file_count must be positive".into());
        }
        if self.symbols_per_file.min == 0 || self.symbols_per_file.min > self.symbols_per_file.max {
            return bad(format!("bad symbols_per_file {:?}", self.symbols_per_file));
        }
        if self.files_per_package == 0 {
            return bad("files_per_package must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return bad(format!("visibility {} outside [0, 1]", self.visibility));
        }
        let d = &self.density;
        for (name, x) in [("invokes", d.invokes), ("imports", d.imports)] {
            if !(x >= 0.0 && x.is_finite()) {
                return bad(format!("{name} density must be finite and non-negative"));
            }
        }
        for (name, p) in [("inherits", d.inherits), ("fuzzy", d.fuzzy), ("tests", d.tests), ("locality", d.locality)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1]"));
            }
        }
        if self.target_size == 0 {
            return bad("the planted set must not be empty".into());
        }
        if self.visibility < 1.0 && self.target_size < 2 {
            return bad("visibility below 1 needs at least two planted targets".into());
        }
        if self.hidden_count() > 0 && d.invokes == 0.0 {
            return bad("hidden targets need invokes edges to be reachable".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Planted {
    pub name: String,
    pub path: String,
    pub visible: bool,
    /// The visible target that invokes this one, for hidden targets.
    pub caller: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Call {
    Local(String),
    /// `stem.name()` after `from package import stem`.
    Module { path: String, name: String },
    /// A bare call to a function defined elsewhere and never imported.
    Bare(String),
}

#[derive(Debug, Clone)]
pub(crate) struct FuncModel {
    pub name: String,
    pub calls: Vec<Call>,
}

#[derive(Debug, Clone)]
pub(crate) struct ClassModel {
    pub name: String,
    pub base: Option<Call>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct FileModel {
    pub funcs: Vec<FuncModel>,
    pub classes: Vec<ClassModel>,
    /// Modules imported without being called.
    pub imports: BTreeSet<String>,
}

/// `src/pkgNN/mIIII.py` → (`pkgNN`, `mIIII`).
fn import_parts(path: &str) -> (&str, &str) {
    let rest = path.strip_prefix("src/").unwrap_or(path).trim_end_matches(".py");
    rest.rsplit_once('/').unwrap_or(("", rest))
}

impl FileModel {
    fn render(&self) -> String {
        let mut modules: BTreeSet<&str> = self.imports.iter().map(String::as_str).collect();
        let mentioned = self
            .funcs
            .iter()
            .flat_map(|f| f.calls.iter())
            .chain(self.classes.iter().filter_map(|c| c.base.as_ref()));
        for call in mentioned {
            if let Call::Module { path, .. } = call {
                modules.insert(path);
            }
        }
        let mut out = String::new();
        for m in &modules {
            let (package, stem) = import_parts(m);
            let _ = writeln!(out, "from {package} import {stem}");
        }
        for c in &self.classes {
            out.push_str("\n\n");
            let base = match &c.base {
                Some(call) => format!("({})", render_callee(call)),
                None => String::new(),
            };
            let _ = writeln!(out, "class {}{base}:", c.name);
            let _ = writeln!(out, "    \"\"\"Synthetic class {}.\"\"\"", c.name);
        }
        for f in &self.funcs {
            out.push_str("\n\n");
            let _ = writeln!(out, "def {}():", f.name);
            for call in &f.calls {
                let _ = writeln!(out, "    {}()", render_callee(call));
            }
            out.push_str("    return None\n");
        }
        out
    }

    pub fn defines(&self, name: &str) -> bool {
        self.funcs.iter().any(|f| f.name == name) || self.classes.iter().any(|c| c.name == name)
    }
}

fn render_callee(call: &Call) -> String {
    match call {
        Call::Local(name) | Call::Bare(name) => name.clone(),
        Call::Module { path, name } => format!("{}.{name}", import_parts(path).1),
    }
}

/// A generated repository: the source model, the planted targets and the
/// non-code files, all of which [`SyntheticRepo::write`] puts on disk.
#[derive(Debug, Clone)]
pub struct SyntheticRepo {
    pub spec: SyntheticRepoSpec,
    pub planted: Vec<Planted>,
    pub(crate) files: BTreeMap<String, FileModel>,
    pub(crate) extras: BTreeMap<String, String>,
    pub(crate) next_index: usize,
}

impl SyntheticRepo {
    pub fn visible_names(&self) -> Vec<String> {
        self.planted.iter().filter(|p| p.visible).map(|p| p.name.clone()).collect()
    }

    pub fn hidden_names(&self) -> Vec<String> {
        self.planted.iter().filter(|p| !p.visible).map(|p| p.name.clone()).collect()
    }

    /// Python module paths, sorted.
    pub fn module_paths(&self) -> Vec<String> {
        self.files.keys().cloned().collect()
    }

    /// Every path written by [`SyntheticRepo::write`].
    pub fn all_paths(&self) -> Vec<String> {
        self.files.keys().chain(self.extras.keys()).cloned().collect()
    }

    pub fn render(&self, path: &str) -> Option<String> {
        self.files
            .get(path)
            .map(FileModel::render)
            .or_else(|| self.extras.get(path).cloned())
    }

    pub fn write(&self, root: &Path) -> Result<()> {
        for path in self.all_paths() {
            self.write_one(root, &path)?;
        }
        Ok(())
    }

    pub(crate) fn write_one(&self, root: &Path, path: &str) -> Result<()> {
        let full = root.join(path);
        if let Some(dir) = full.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(full, self.render(path).unwrap_or_default())?;
        Ok(())
    }

    /// Graph nodes of the planted targets, in planting order.
    pub fn target_nodes(&self, g: &RepoGraph) -> Vec<NodeId> {
        self.planted
            .iter()
            .filter_map(|p| {
                g.part(&p.path)?
                    .nodes
                    .iter()
                    .find(|n| n.qualified_name == p.name)
                    .cloned()
            })
            .collect()
    }

    pub(crate) fn module_path(&self, index: usize) -> String {
        let package = index / self.spec.files_per_package;
        format!("src/pkg{package:02}/m{index:04}.py")
    }

    fn background_names(&self, path: &str) -> Vec<String> {
        self.files[path]
            .funcs
            .iter()
            .filter(|f| f.name.starts_with('f'))
            .map(|f| f.name.clone())
            .collect()
    }

    /// A call from `path` to a random background function.
    pub(crate) fn background_call(&self, rng: &mut impl Rng, path: &str, caller: &str) -> Option<Call> {
        let paths: Vec<&String> = self.files.keys().collect();
        let package = path.rsplit_once('/').map(|(d, _)| d).unwrap_or("");
        let local: Vec<&String> = paths
            .iter()
            .copied()
            .filter(|p| p.rsplit_once('/').map(|(d, _)| d) == Some(package))
            .collect();
        let pool = if rng.gen_bool(self.spec.density.locality) && !local.is_empty() {
            local
        } else {
            paths
        };
        let target = (*pool.choose(rng)?).clone();
        let names = self.background_names(&target);
        let name = names.choose(rng)?.clone();
        if target == path {
            return (name != caller).then_some(Call::Local(name));
        }
        if rng.gen_bool(self.spec.density.fuzzy) {
            Some(Call::Bare(name))
        } else {
            Some(Call::Module { path: target, name })
        }
    }

    pub(crate) fn background_calls(&self, rng: &mut impl Rng, path: &str, caller: &str) -> Vec<Call> {
        let d = self.spec.density.invokes;
        let count = d.floor() as usize + usize::from(rng.gen_bool(d.fract()));
        let mut calls = Vec::new();
        for _ in 0..count {
            if let Some(c) = self.background_call(rng, path, caller) {
                if !calls.contains(&c) {
                    calls.push(c);
                }
            }
        }
        calls
    }

    /// Adds an inheriting class to `path` when the dice say so.
    pub(crate) fn maybe_class(&mut self, rng: &mut impl Rng, path: &str, index: usize) {
        if !rng.gen_bool(self.spec.density.inherits) {
            return;
        }
        let bases: Vec<(String, String)> = self
            .files
            .iter()
            .filter(|(p, _)| p.as_str() != path)
            .flat_map(|(p, f)| f.classes.iter().map(move |c| (p.clone(), c.name.clone())))
            .collect();
        let base = bases
            .choose(rng)
            .map(|(p, name)| Call::Module { path: p.clone(), name: name.clone() });
        if let Some(file) = self.files.get_mut(path) {
            file.classes.push(ClassModel {
                name: format!("K{index:04}"),
                base,
            });
        }
    }

    pub(crate) fn extra_imports(&mut self, rng: &mut impl Rng, path: &str) {
        let d = self.spec.density.imports;
        let count = d.floor() as usize + usize::from(rng.gen_bool(d.fract()));
        let paths: Vec<String> = self.files.keys().filter(|p| p.as_str() != path).cloned().collect();
        for _ in 0..count {
            if let Some(p) = paths.choose(rng) {
                if let Some(file) = self.files.get_mut(path) {
                    file.imports.insert(p.clone());
                }
            }
        }
    }

    /// Background functions for a fresh file, without calls yet.
    pub(crate) fn empty_file(&self, rng: &mut impl Rng, index: usize) -> FileModel {
        let range = self.spec.symbols_per_file;
        let count = rng.gen_range(range.min..=range.max);
        FileModel {
            funcs: (0..count)
                .map(|j| FuncModel {
                    name: format!("f{index:04}_{j}"),
                    calls: Vec::new(),
                })
                .collect(),
            ..FileModel::default()
        }
    }

    pub(crate) fn wire_calls(&mut self, rng: &mut impl Rng, path: &str) {
        let names = self.background_names(path);
        for name in names {
            let calls = self.background_calls(rng, path, &name);
            if let Some(f) = self
                .files
                .get_mut(path)
                .and_then(|file| file.funcs.iter_mut().find(|f| f.name == name))
            {
                f.calls = calls;
            }
        }
    }

    pub(crate) fn test_module(&self, path: &str) -> Option<(String, String)> {
        let (package, stem) = import_parts(path);
        let first = self.background_names(path).into_iter().next()?;
        let text = format!("from {package} import {stem}\n\n\ndef test_{stem}():\n    {stem}.{first}()\n");
        Some((format!("tests/test_{stem}.py"), text))
    }

    pub(crate) fn readme(&self, rng: &mut impl Rng) -> String {
        let mut out = String::from("# Synthetic repository\n\nGenerated fixture for retrieval checks.\n\n");
        let paths: Vec<&String> = self.files.keys().collect();
        for _ in 0..paths.len().min(5) {
            let p = *paths.choose(rng).unwrap();
            let name = self.background_names(p).into_iter().next().unwrap_or_default();
            let _ = writeln!(out, "- `{p}` provides `{name}`.");
        }
        out
    }

    pub(crate) fn pyproject(&self, rng: &mut impl Rng) -> String {
        let paths: Vec<&String> = self.files.keys().collect();
        let (package, stem) = import_parts(paths.choose(rng).unwrap());
        format!("[project]\nname = \"synthetic\"\n\n[tool.synthetic]\nentry = \"{package}.{stem}\"\n")
    }
}

/// Generates the repository described by `spec` and writes it under `root`.
pub fn generate_repo(spec: &SyntheticRepoSpec, root: &Path) -> Result<SyntheticRepo> {
    let repo = build_model(spec)?;
    repo.write(root)?;
    Ok(repo)
}

pub(crate) fn build_model(spec: &SyntheticRepoSpec) -> Result<SyntheticRepo> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut repo = SyntheticRepo {
        spec: spec.clone(),
        planted: Vec::new(),
        files: BTreeMap::new(),
        extras: BTreeMap::new(),
        next_index: spec.file_count,
    };
    for i in 0..spec.file_count {
        let file = repo.empty_file(&mut rng, i);
        repo.files.insert(repo.module_path(i), file);
    }
    let paths = repo.module_paths();
    for (i, path) in paths.iter().enumerate() {
        repo.wire_calls(&mut rng, path);
        repo.maybe_class(&mut rng, path, i);
        repo.extra_imports(&mut rng, path);
    }
    plant_targets(&mut repo, &mut rng, &paths);
    for path in &paths {
        if rng.gen_bool(spec.density.tests) {
            if let Some((p, text)) = repo.test_module(path) {
                repo.extras.insert(p, text);
            }
        }
    }
    let readme = repo.readme(&mut rng);
    repo.extras.insert("README.md".into(), readme);
    let pyproject = repo.pyproject(&mut rng);
    repo.extras.insert("pyproject.toml".into(), pyproject);
    Ok(repo)
}

fn plant_targets(repo: &mut SyntheticRepo, rng: &mut ChaCha8Rng, paths: &[String]) {
    let spec = repo.spec.clone();
    let visible = spec.visible_count();
    let mut words: Vec<&str> = WORDS.to_vec();
    words.shuffle(rng);
    for k in 0..spec.target_size {
        let word = words[k % words.len()];
        let path = paths.choose(rng).unwrap().clone();
        let is_visible = k < visible;
        let name = if is_visible {
            format!("vis_{word}_{k}")
        } else {
            format!("hid_{word}_{k}")
        };
        let caller = (!is_visible).then(|| repo.planted[(k - visible) % visible].name.clone());
        let extra = if rng.gen_bool(0.5) {
            repo.background_call(rng, &path, &name)
        } else {
            None
        };
        repo.files.get_mut(&path).unwrap().funcs.push(FuncModel {
            name: name.clone(),
            calls: extra.into_iter().collect(),
        });
        if let Some(parent) = &caller {
            let parent_path = repo.planted.iter().find(|p| &p.name == parent).unwrap().path.clone();
            let call = if parent_path == path {
                Call::Local(name.clone())
            } else {
                Call::Module { path: path.clone(), name: name.clone() }
            };
            let file = repo.files.get_mut(&parent_path).unwrap();
            let f = file.funcs.iter_mut().find(|f| &f.name == parent).unwrap();
            f.calls.insert(0, call);
        }
        repo.planted.push(Planted {
            name,
            path,
            visible: is_visible,
            caller,
        });
    }
}
