//! Two-pass extraction: per-file analysis into [`FileFacts`], then linking
//! against a repository-wide [`SymbolTable`] into confidence-weighted edges.

mod link;
mod python;
mod regex_imports;

use imbl::OrdMap;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use globset::{Glob, GlobSet, GlobSetBuilder};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::graph::{Edge, NodeId, NodeKind, Part, Provenance, RepoGraph, ROOT_DIR};

pub use link::{resolve_reference, LinkOutput, Resolution, SymbolTable};

/// Confidence attached to every edge of the given provenance.
pub fn confidence_of(p: Provenance) -> f64 {
    match p {
        Provenance::SameFileCooccurrence => 1.0,
        Provenance::ExplicitImport => 0.95,
        Provenance::ResolvedImport => 0.9,
        Provenance::Inheritance => 0.9,
        Provenance::CythonImplementation => 0.85,
        Provenance::TestLinkage => 0.75,
        Provenance::Documentation => 0.6,
        Provenance::Configuration => 0.5,
        Provenance::FuzzyNameMatch => 0.5,
        Provenance::Structural => 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub symbols: bool,
    pub imports: bool,
    pub invokes: bool,
    pub inherits: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguageAdapter {
    pub language_id: &'static str,
    pub file_extensions: &'static [&'static str],
    pub capabilities: Capabilities,
}

pub const PYTHON: LanguageAdapter = LanguageAdapter {
    language_id: "python",
    file_extensions: &["py"],
    capabilities: Capabilities {
        symbols: true,
        imports: true,
        invokes: true,
        inherits: true,
    },
};

pub const JAVASCRIPT: LanguageAdapter = LanguageAdapter {
    language_id: "javascript",
    file_extensions: &["js", "jsx", "mjs", "cjs", "ts", "tsx"],
    capabilities: Capabilities {
        symbols: false,
        imports: true,
        invokes: false,
        inherits: false,
    },
};

pub const ADAPTERS: [LanguageAdapter; 2] = [PYTHON, JAVASCRIPT];

pub const DOC_EXTENSIONS: [&str; 3] = ["md", "markdown", "rst"];
pub const CONFIG_EXTENSIONS: [&str; 6] = ["toml", "yaml", "yml", "ini", "cfg", "json"];

fn default_adapters() -> Vec<String> {
    ADAPTERS.iter().map(|a| a.language_id.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexConfig {
    pub include: Vec<String>,
    pub exclude: Vec<String>,
    pub drop_tests: bool,
    pub adapters: Vec<String>,
    /// Overrides the content-hash snapshot id, e.g. with a commit hash.
    pub snapshot_id: Option<String>,
    /// Worker threads for per-file analysis; 0 uses the global pool.
    pub threads: usize,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            include: Vec::new(),
            exclude: Vec::new(),
            drop_tests: false,
            adapters: default_adapters(),
            snapshot_id: None,
            threads: 0,
        }
    }
}

impl IndexConfig {
    fn adapter_for(&self, path: &str) -> Option<&'static LanguageAdapter> {
        let ext = extension(path)?;
        ADAPTERS.iter().find(|a| {
            a.file_extensions.contains(&ext) && self.adapters.iter().any(|id| id == a.language_id)
        })
    }

    pub(crate) fn filter(&self) -> Result<PathFilter> {
        Ok(PathFilter {
            include: build_globs(&self.include)?,
            exclude: build_globs(&self.exclude)?,
            drop_tests: self.drop_tests,
        })
    }

    /// Runs `f` on a dedicated pool when `threads` is set.
    pub(crate) fn run<T: Send>(&self, f: impl FnOnce() -> T + Send) -> T {
        if self.threads == 0 {
            return f();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(self.threads).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
}

fn build_globs(patterns: &[String]) -> Result<Option<GlobSet>> {
    if patterns.is_empty() {
        return Ok(None);
    }
    let mut b = GlobSetBuilder::new();
    for p in patterns {
        b.add(Glob::new(p).map_err(|e| Error::Config(format!("bad glob {p:?}: {e}")))?);
    }
    b.build()
        .map(Some)
        .map_err(|e| Error::Config(e.to_string()))
}

pub(crate) struct PathFilter {
    include: Option<GlobSet>,
    exclude: Option<GlobSet>,
    drop_tests: bool,
}

impl PathFilter {
    fn accepts(&self, rel: &str) -> bool {
        if let Some(inc) = &self.include {
            if !inc.is_match(rel) {
                return false;
            }
        }
        if let Some(exc) = &self.exclude {
            if exc.is_match(rel) {
                return false;
            }
        }
        !(self.drop_tests && is_test_path(rel))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub files_parsed: usize,
    pub files_skipped: usize,
    pub edges_by_provenance: BTreeMap<Provenance, usize>,
    pub unresolved_references: usize,
    pub parse_failures: Vec<String>,
}

impl ExtractionReport {
    pub fn files_visited(&self) -> usize {
        self.files_parsed + self.files_skipped
    }
}

// ---------------------------------------------------------------------------
// Per-file facts

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolDef {
    pub qualified_name: String,
    pub kind: NodeKind,
    pub span: (u32, u32),
    /// Qualified name of the containing class, or `None` when the file contains it.
    pub parent: Option<String>,
    pub signature: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportName {
    pub name: String,
    pub asname: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ImportRef {
    /// `import a.b [as x], c`
    Module { names: Vec<ImportName> },
    /// `from [.]*module import n [as x], ...`
    From {
        level: u32,
        module: Option<String>,
        names: Vec<ImportName>,
    },
    /// A path-style import such as `require('./x')`.
    Path { spec: String },
}

/// A referenced name as written: `name`, `base.name` or `<expr>.name`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Target {
    /// Dotted base of an attribute reference; empty string when the base is
    /// not a plain dotted name.
    pub base: Option<String>,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CallRef {
    /// Index into `symbols` of the innermost enclosing definition.
    pub scope: Option<usize>,
    pub target: Target,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseRef {
    pub class: usize,
    pub target: Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileRole {
    Code,
    Doc,
    Config,
    Other,
}

/// Everything the linker needs to know about one file; a pure function of
/// its path and bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileFacts {
    pub path: String,
    pub hash: String,
    pub line_count: u32,
    pub language: Option<String>,
    pub role: FileRole,
    pub parse_ok: bool,
    pub symbols: Vec<SymbolDef>,
    pub imports: Vec<ImportRef>,
    pub calls: Vec<CallRef>,
    pub bases: Vec<BaseRef>,
    pub mentions: BTreeSet<String>,
}

impl FileFacts {
    pub fn file_node(&self) -> NodeId {
        NodeId::file(self.path.clone(), self.line_count)
    }

    pub fn symbol_node(&self, i: usize) -> NodeId {
        let s = &self.symbols[i];
        NodeId::symbol(self.path.clone(), s.kind, s.qualified_name.clone(), s.span)
    }

    pub fn symbol_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.symbols.len()).map(|i| self.symbol_node(i))
    }

    /// Index of the last definition carrying `qname`.
    pub fn find_symbol(&self, qname: &str) -> Option<usize> {
        self.symbols
            .iter()
            .enumerate()
            .filter(|(_, s)| s.qualified_name == qname)
            .max_by_key(|(_, s)| s.span.0)
            .map(|(i, _)| i)
    }

    /// Nodes, attributes and `contains` edges for this file.
    pub(crate) fn structural_part(&self) -> Part {
        let file = self.file_node();
        let mut part = Part::default();
        part.attributes.insert(file.clone(), self.path.clone());
        part.structural
            .push(Edge::contains(NodeId::directory(parent_dir(&self.path)), file.clone()));
        for (i, s) in self.symbols.iter().enumerate() {
            let node = self.symbol_node(i);
            let parent = match &s.parent {
                Some(q) => self
                    .find_symbol(q)
                    .map(|j| self.symbol_node(j))
                    .unwrap_or_else(|| file.clone()),
                None => file.clone(),
            };
            part.structural.push(Edge::contains(parent, node.clone()));
            part.attributes.insert(node.clone(), s.signature.clone());
            part.nodes.push(node);
        }
        part.nodes.push(file);
        part.nodes.sort();
        part.structural.sort();
        part
    }
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn extension(path: &str) -> Option<&str> {
    let base = basename(path);
    base.rsplit_once('.').map(|(_, e)| e).filter(|e| !e.is_empty())
}

pub fn basename(path: &str) -> &str {
    path.rsplit('/').next().unwrap_or(path)
}

pub fn parent_dir(path: &str) -> &str {
    match path.rsplit_once('/') {
        Some((dir, _)) => dir,
        None => ROOT_DIR,
    }
}

/// `test_*` / `*_test.*` basenames, or anything under a `tests/` directory.
pub fn is_test_path(path: &str) -> bool {
    let base = basename(path);
    let stem = base.split('.').next().unwrap_or(base);
    base.starts_with("test_")
        || stem.ends_with("_test")
        || path.split('/').rev().skip(1).any(|c| c == "tests")
}

pub fn file_role(path: &str) -> FileRole {
    match extension(path) {
        Some(e) if DOC_EXTENSIONS.contains(&e) => FileRole::Doc,
        Some(e) if CONFIG_EXTENSIONS.contains(&e) && !path.contains('/') => FileRole::Config,
        Some(e) if ADAPTERS.iter().any(|a| a.file_extensions.contains(&e)) => FileRole::Code,
        _ => FileRole::Other,
    }
}

/// Dotted module names under which a Python file can be imported.
pub fn module_names(path: &str) -> Vec<String> {
    let Some(stem) = path.strip_suffix(".py") else {
        return Vec::new();
    };
    let stem = stem.strip_suffix("/__init__").unwrap_or(stem);
    if stem == "__init__" || stem.is_empty() {
        return Vec::new();
    }
    if stem.split('/').any(|seg| !is_identifier(seg)) {
        return Vec::new();
    }
    let dotted = stem.replace('/', ".");
    let mut out = vec![dotted.clone()];
    if let Some(rest) = dotted.strip_prefix("src.") {
        out.push(rest.to_string());
    }
    out
}

/// Package that relative imports in `path` start from.
pub fn package_of(path: &str) -> String {
    let dir = parent_dir(path);
    if dir == ROOT_DIR {
        String::new()
    } else {
        dir.replace('/', ".")
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c == '_' || c.is_ascii_alphabetic())
        && chars.all(|c| c == '_' || c.is_ascii_alphanumeric())
}

/// Analyzes one file's bytes. Never fails: unparseable sources degrade to
/// regex-extracted imports.
pub fn analyze_file(path: &str, bytes: &[u8], config: &IndexConfig) -> FileFacts {
    let text = String::from_utf8_lossy(bytes);
    let line_count = text.lines().count() as u32;
    let role = file_role(path);
    let mut facts = FileFacts {
        path: path.to_string(),
        hash: content_hash(bytes),
        line_count,
        language: None,
        role,
        parse_ok: true,
        symbols: Vec::new(),
        imports: Vec::new(),
        calls: Vec::new(),
        bases: Vec::new(),
        mentions: BTreeSet::new(),
    };
    match role {
        FileRole::Doc | FileRole::Config => {
            facts.mentions = regex_imports::mention_tokens(&text);
        }
        FileRole::Code => {
            if let Some(adapter) = config.adapter_for(path) {
                facts.language = Some(adapter.language_id.to_string());
                if adapter.language_id == PYTHON.language_id {
                    match python::analyze(path, &text) {
                        Ok(parsed) => {
                            facts.symbols = parsed.symbols;
                            facts.imports = parsed.imports;
                            facts.calls = parsed.calls;
                            facts.bases = parsed.bases;
                        }
                        Err(message) => {
                            tracing::debug!(path, %message, "python parse failed, degrading to regex imports");
                            facts.parse_ok = false;
                            facts.imports = regex_imports::python_imports(&text);
                        }
                    }
                } else {
                    facts.imports = regex_imports::path_imports(&text);
                }
            }
        }
        FileRole::Other => {}
    }
    facts
}

/// Relative paths of every indexable file under `root`, sorted.
pub fn list_files(root: &Path, config: &IndexConfig) -> Result<Vec<String>> {
    let meta = fs::metadata(root).map_err(|e| Error::io(root, e))?;
    if !meta.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotADirectory, "not a directory"),
        ));
    }
    fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let filter = config.filter()?;
    let mut out = Vec::new();
    let walker = WalkDir::new(root)
        .follow_links(false)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.'));
    for entry in walker {
        let entry = entry.map_err(|e| {
            let path = e.path().map(Path::to_path_buf).unwrap_or_else(|| root.to_path_buf());
            Error::io(path, e.into())
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(root)
            .unwrap_or(entry.path())
            .to_string_lossy()
            .replace('\\', "/");
        if filter.accepts(&rel) {
            out.push(rel);
        }
    }
    out.sort();
    Ok(out)
}

pub(crate) fn read_and_analyze(
    root: &Path,
    paths: &[String],
    config: &IndexConfig,
) -> Result<Vec<FileFacts>> {
    config.run(|| {
        paths
            .par_iter()
            .map(|p| {
                let full = root.join(p);
                let bytes = fs::read(&full).map_err(|e| Error::io(full, e))?;
                Ok(analyze_file(p, &bytes, config))
            })
            .collect()
    })
}

/// Snapshot id derived from the `(path, content hash)` manifest.
pub fn snapshot_hash<'a>(files: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
    let mut h = Sha256::new();
    for (path, hash) in files {
        h.update(path.as_bytes());
        h.update([0]);
        h.update(hash.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Ancestors of a file path, nearest first, ending with the root.
pub fn ancestor_dirs(path: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut cur = path;
    loop {
        let dir = parent_dir(cur);
        out.push(dir);
        if dir == ROOT_DIR {
            return out;
        }
        cur = dir;
    }
}

pub(crate) fn directory_part(dir: &str) -> Part {
    let node = NodeId::directory(dir);
    let mut part = Part::default();
    part.attributes.insert(node.clone(), dir.to_string());
    if dir != ROOT_DIR {
        part.structural
            .push(Edge::contains(NodeId::directory(parent_dir(dir)), node.clone()));
    }
    part.nodes.push(node);
    part
}

/// Output of a full two-pass build, including the per-file state that
/// alignment needs to update the graph incrementally.
#[derive(Debug, Clone)]
pub struct BuildOutput {
    pub graph: RepoGraph,
    pub report: ExtractionReport,
    pub table: SymbolTable,
    pub links: OrdMap<String, Arc<LinkOutput>>,
}

pub(crate) fn report_for(table: &SymbolTable, links: &OrdMap<String, Arc<LinkOutput>>) -> ExtractionReport {
    let mut report = ExtractionReport::default();
    for facts in table.files() {
        let analyzed = match facts.role {
            FileRole::Code => facts.language.is_some() && facts.parse_ok,
            FileRole::Doc | FileRole::Config => true,
            FileRole::Other => false,
        };
        if analyzed {
            report.files_parsed += 1;
        } else {
            report.files_skipped += 1;
        }
        if !facts.parse_ok {
            report.parse_failures.push(facts.path.clone());
        }
    }
    for link in links.values() {
        report.unresolved_references += link.unresolved;
        for e in &link.edges {
            *report.edges_by_provenance.entry(e.provenance).or_default() += 1;
        }
    }
    report
}

/// Assembles the graph parts for a complete table and its link outputs.
pub(crate) fn assemble(
    snapshot_id: String,
    table: &SymbolTable,
    links: &OrdMap<String, Arc<LinkOutput>>,
) -> RepoGraph {
    let mut parts: OrdMap<String, Arc<crate::graph::Part>> = OrdMap::new();
    let mut dirs: BTreeSet<&str> = BTreeSet::new();
    dirs.insert(ROOT_DIR);
    for facts in table.files() {
        dirs.extend(ancestor_dirs(&facts.path));
        let mut part = facts.structural_part();
        if let Some(link) = links.get(&facts.path) {
            part.semantic = link.edges.clone();
        }
        parts.insert(facts.path.clone(), Arc::new(part));
    }
    for d in dirs {
        parts.insert(d.to_string(), Arc::new(directory_part(d)));
    }
    RepoGraph::from_parts(snapshot_id, parts)
}

/// Pass 1 and pass 2 over a worktree.
pub fn build_graph(root: &Path, config: &IndexConfig) -> Result<(RepoGraph, ExtractionReport)> {
    let out = build(root, config)?;
    Ok((out.graph, out.report))
}

pub fn build(root: &Path, config: &IndexConfig) -> Result<BuildOutput> {
    let paths = list_files(root, config)?;
    let facts = read_and_analyze(root, &paths, config)?;
    let table = SymbolTable::from_facts(facts.into_iter().map(Arc::new));
    let links: OrdMap<String, Arc<LinkOutput>> = config.run(|| {
        table
            .paths()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|p| (p.to_string(), Arc::new(table.link(p))))
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    });
    let snapshot_id = config.snapshot_id.clone().unwrap_or_else(|| {
        snapshot_hash(table.files().map(|f| (f.path.as_str(), f.hash.as_str())))
    });
    let graph = assemble(snapshot_id, &table, &links);
    let report = report_for(&table, &links);
    Ok(BuildOutput {
        graph,
        report,
        table,
        links,
    })
}
