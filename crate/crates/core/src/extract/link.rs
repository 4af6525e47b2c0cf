//! Pass-1 linking and pass-2 cross-artifact heuristics.
//!
//! Every lookup a file makes against the [`SymbolTable`] is recorded as a
//! *key* (`mod:<module>`, `file:<path>`, `name:<basename>`, `path:<path>`).
//! A file's edges are a function of its own facts and the table entries
//! behind its keys, so when a file changes only the files that consulted
//! one of its keys need to be linked again.

use imbl::{OrdMap, OrdSet};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::{
    is_identifier, is_test_path, module_names, package_of, FileFacts, FileRole, ImportRef,
    Target,
};
use crate::graph::{Edge, NodeId, NodeKind, Provenance, RelationKind};

#[derive(Debug, Clone, Default)]
pub struct SymbolTable {
    files: OrdMap<String, Arc<FileFacts>>,
    modules: OrdMap<String, OrdSet<String>>,
    names: OrdMap<String, OrdSet<NodeId>>,
}

/// Edges derived from one file plus the table keys consulted to derive them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkOutput {
    pub edges: Vec<Edge>,
    pub keys: BTreeSet<String>,
    pub unresolved: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Resolution {
    Resolved(NodeId, Provenance),
    Unresolved,
}

impl SymbolTable {
    pub fn from_facts(facts: impl IntoIterator<Item = Arc<FileFacts>>) -> Self {
        let mut t = SymbolTable::default();
        for f in facts {
            t.insert(f);
        }
        t
    }

    pub fn insert(&mut self, facts: Arc<FileFacts>) {
        if self.files.contains_key(&facts.path) {
            self.remove(&facts.path.clone());
        }
        for m in module_names(&facts.path) {
            self.modules.entry(m).or_default().insert(facts.path.clone());
        }
        for node in facts.symbol_nodes() {
            self.names
                .entry(node.simple_name().to_string())
                .or_default()
                .insert(node);
        }
        self.files.insert(facts.path.clone(), facts);
    }

    pub fn remove(&mut self, path: &str) -> Option<Arc<FileFacts>> {
        let facts = self.files.remove(path)?;
        for m in module_names(path) {
            if let Some(set) = self.modules.get_mut(&m) {
                set.remove(path);
                if set.is_empty() {
                    self.modules.remove(&m);
                }
            }
        }
        for node in facts.symbol_nodes() {
            let name = node.simple_name().to_string();
            if let Some(set) = self.names.get_mut(&name) {
                set.remove(&node);
                if set.is_empty() {
                    self.names.remove(&name);
                }
            }
        }
        Some(facts)
    }

    pub fn get(&self, path: &str) -> Option<&Arc<FileFacts>> {
        self.files.get(path)
    }

    pub fn files(&self) -> impl Iterator<Item = &Arc<FileFacts>> {
        self.files.values()
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    /// Whether some file lives below directory `dir`.
    pub fn has_path_under(&self, dir: &str) -> bool {
        let prefix = format!("{dir}/");
        self.files
            .range(prefix.clone()..)
            .next()
            .is_some_and(|(p, _)| p.starts_with(&prefix))
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Keys whose lookups can change when this file appears, changes or
    /// disappears.
    pub fn keys_defined_by(facts: &FileFacts) -> BTreeSet<String> {
        let mut keys = BTreeSet::new();
        keys.insert(format!("file:{}", facts.path));
        keys.insert(format!("path:{}", facts.path));
        for m in module_names(&facts.path) {
            keys.insert(format!("mod:{m}"));
        }
        for node in facts.symbol_nodes() {
            keys.insert(format!("name:{}", node.simple_name()));
        }
        keys
    }

    /// Links one file of the table. Panics if `path` is not in the table.
    pub fn link(&self, path: &str) -> LinkOutput {
        let facts = self.files[path].clone();
        let mut linker = Linker::new(self, &facts);
        match facts.role {
            FileRole::Code => linker.link_code(),
            FileRole::Doc => linker.link_doc(),
            FileRole::Config => linker.link_config(),
            FileRole::Other => {}
        }
        linker.finish()
    }
}

/// Resolves a call-style reference (`name` or `base.name`) made from
/// `context` against the table.
pub fn resolve_reference(table: &SymbolTable, context: &NodeId, name: &str) -> Resolution {
    let Some(facts) = table.get(&context.path) else {
        return Resolution::Unresolved;
    };
    let scope = if context.kind.is_symbol() {
        facts
            .symbols
            .iter()
            .position(|s| s.qualified_name == context.qualified_name && s.span == context.span)
    } else {
        None
    };
    let target = match name.rsplit_once('.') {
        Some((base, n)) => Target {
            base: Some(base.to_string()),
            name: n.to_string(),
        },
        None => Target {
            base: None,
            name: name.to_string(),
        },
    };
    let mut linker = Linker::new(table, facts);
    match linker.resolve_target(scope, &target, RelationKind::Invokes) {
        Some((node, p)) => Resolution::Resolved(node, p),
        None => Resolution::Unresolved,
    }
}

#[derive(Debug, Clone)]
enum Binding {
    Module(String),
    Member { module: String, name: String },
}

struct Linker<'a> {
    table: &'a SymbolTable,
    facts: &'a FileFacts,
    bindings: BTreeMap<String, Binding>,
    keys: BTreeSet<String>,
    edges: Vec<Edge>,
    unresolved: usize,
}

impl<'a> Linker<'a> {
    fn new(table: &'a SymbolTable, facts: &'a FileFacts) -> Self {
        let mut l = Linker {
            table,
            facts,
            bindings: BTreeMap::new(),
            keys: BTreeSet::new(),
            edges: Vec::new(),
            unresolved: 0,
        };
        l.bind_imports();
        l
    }

    fn finish(self) -> LinkOutput {
        // one edge per (src, relation, dst): the strongest evidence wins
        let mut best: BTreeMap<(NodeId, RelationKind, NodeId), Edge> = BTreeMap::new();
        for e in self.edges {
            let key = (e.src.clone(), e.relation, e.dst.clone());
            match best.get(&key) {
                Some(old)
                    if old.confidence > e.confidence
                        || (old.confidence == e.confidence && old.provenance <= e.provenance) => {}
                _ => {
                    best.insert(key, e);
                }
            }
        }
        let mut edges: Vec<Edge> = best.into_values().collect();
        edges.sort();
        LinkOutput {
            edges,
            keys: self.keys,
            unresolved: self.unresolved,
        }
    }

    fn bind_imports(&mut self) {
        for imp in &self.facts.imports {
            match imp {
                ImportRef::Module { names } => {
                    for n in names {
                        match &n.asname {
                            Some(a) => {
                                self.bindings.insert(a.clone(), Binding::Module(n.name.clone()));
                            }
                            None => {
                                let mut prefix = String::new();
                                for seg in n.name.split('.') {
                                    if !prefix.is_empty() {
                                        prefix.push('.');
                                    }
                                    prefix.push_str(seg);
                                    self.bindings
                                        .insert(prefix.clone(), Binding::Module(prefix.clone()));
                                }
                            }
                        }
                    }
                }
                ImportRef::From { level, module, names } => {
                    let Some(abs) = absolutize(&self.facts.path, *level, module.as_deref()) else {
                        continue;
                    };
                    for n in names {
                        if n.name == "*" {
                            continue;
                        }
                        let local = n.asname.clone().unwrap_or_else(|| n.name.clone());
                        self.bindings.insert(
                            local,
                            Binding::Member {
                                module: abs.clone(),
                                name: n.name.clone(),
                            },
                        );
                    }
                }
                ImportRef::Path { .. } => {}
            }
        }
    }

    fn module_file(&mut self, module: &str) -> Option<String> {
        if module.is_empty() {
            return None;
        }
        self.keys.insert(format!("mod:{module}"));
        let paths = self.table.modules.get(module)?;
        if paths.len() == 1 {
            paths.iter().next().cloned()
        } else {
            None
        }
    }

    fn lookup_in(&mut self, path: &str, qname: &str) -> Option<NodeId> {
        self.keys.insert(format!("file:{path}"));
        let facts = self.table.files.get(path)?;
        facts.find_symbol(qname).map(|i| facts.symbol_node(i))
    }

    fn unique_name(&mut self, name: &str) -> Option<NodeId> {
        self.keys.insert(format!("name:{name}"));
        let set = self.table.names.get(name)?;
        if set.len() == 1 {
            set.iter().next().cloned()
        } else {
            None
        }
    }

    fn has_file(&mut self, path: &str) -> bool {
        self.keys.insert(format!("path:{path}"));
        self.table.files.contains_key(path)
    }

    fn file_node_of(&self, path: &str) -> NodeId {
        self.table.files[path].file_node()
    }

    fn scope_node(&self, scope: Option<usize>) -> NodeId {
        match scope {
            Some(i) => self.facts.symbol_node(i),
            None => self.facts.file_node(),
        }
    }

    /// Qualified names of the enclosing definitions, innermost first.
    fn scope_chain(&self, scope: Option<usize>) -> Vec<&'a str> {
        let Some(i) = scope else { return Vec::new() };
        let q = self.facts.symbols[i].qualified_name.as_str();
        let mut out = vec![q];
        let mut cur = q;
        while let Some((head, _)) = cur.rsplit_once('.') {
            out.push(head);
            cur = head;
        }
        out
    }

    fn local_symbol(&self, qname: &str) -> Option<(NodeId, NodeKind)> {
        self.facts
            .find_symbol(qname)
            .map(|i| (self.facts.symbol_node(i), self.facts.symbols[i].kind))
    }

    fn same_file(&self, scope: Option<usize>, name: &str) -> Option<NodeId> {
        for q in self.scope_chain(scope) {
            if let Some((_, NodeKind::Function)) = self.local_symbol(q) {
                if let Some((n, _)) = self.local_symbol(&format!("{q}.{name}")) {
                    return Some(n);
                }
            }
        }
        self.local_symbol(name).map(|(n, _)| n)
    }

    fn enclosing_class(&self, scope: Option<usize>) -> Option<&'a str> {
        self.scope_chain(scope)
            .into_iter()
            .find(|q| matches!(self.local_symbol(q), Some((_, NodeKind::Class))))
    }

    /// Module named by a dotted base, using the longest import-bound prefix.
    fn bound_module(&self, base: &str) -> Option<Option<String>> {
        let mut cut = Some(base.len());
        while let Some(end) = cut {
            let prefix = &base[..end];
            let rest = &base[end..];
            if let Some(b) = self.bindings.get(prefix) {
                let module = match b {
                    Binding::Module(m) => format!("{m}{rest}"),
                    Binding::Member { module, name } if module.is_empty() => format!("{name}{rest}"),
                    Binding::Member { module, name } => format!("{module}.{name}{rest}"),
                };
                return Some(Some(module));
            }
            cut = prefix.rfind('.');
        }
        None
    }

    fn resolve_target(
        &mut self,
        scope: Option<usize>,
        t: &Target,
        relation: RelationKind,
    ) -> Option<(NodeId, Provenance)> {
        let (exact, local) = match relation {
            RelationKind::Inherits => (Provenance::Inheritance, Provenance::Inheritance),
            _ => (Provenance::ResolvedImport, Provenance::SameFileCooccurrence),
        };
        let found = match &t.base {
            None => {
                if let Some(n) = self.same_file(scope, &t.name) {
                    Some((n, local))
                } else if let Some(b) = self.bindings.get(&t.name).cloned() {
                    return match b {
                        Binding::Member { module, name } => {
                            let m = self.module_file(&module)?;
                            self.lookup_in(&m, &name).map(|n| (n, exact))
                        }
                        Binding::Module(_) => None,
                    }
                    .filter(|(n, _)| accepts(relation, n));
                } else {
                    None
                }
            }
            Some(base) => {
                let mut hit = None;
                if base == "self" || base == "cls" {
                    if let Some(c) = self.enclosing_class(scope) {
                        hit = self.local_symbol(&format!("{c}.{}", t.name)).map(|(n, _)| (n, local));
                    }
                } else if let Some(module) = self.bound_module(base) {
                    let module = module?;
                    // `mod.attr` or `Class.attr` imported from a module
                    if let Some(m) = self.module_file(&module) {
                        return self.lookup_in(&m, &t.name).map(|n| (n, exact));
                    }
                    let (owner, member) = module.rsplit_once('.')?;
                    let m = self.module_file(owner)?;
                    return self
                        .lookup_in(&m, &format!("{member}.{}", t.name))
                        .map(|n| (n, exact))
                        .filter(|(n, _)| accepts(relation, n));
                } else if !base.is_empty() {
                    if let Some((_, NodeKind::Class)) = self.local_symbol(base) {
                        hit = self
                            .local_symbol(&format!("{base}.{}", t.name))
                            .map(|(n, _)| (n, local));
                    }
                }
                hit
            }
        };
        let found = found.or_else(|| {
            self.unique_name(&t.name)
                .map(|n| (n, Provenance::FuzzyNameMatch))
        });
        found.filter(|(n, _)| accepts(relation, n))
    }

    fn push(&mut self, src: NodeId, relation: RelationKind, dst: NodeId, p: Provenance) {
        if src != dst {
            self.edges.push(Edge::new(src, relation, dst, p));
        }
    }

    fn link_code(&mut self) {
        let file = self.facts.file_node();
        let facts = self.facts;
        for imp in &facts.imports {
            match imp {
                ImportRef::Module { names } => {
                    for n in names {
                        match self.module_file(&n.name) {
                            Some(m) => {
                                let dst = self.file_node_of(&m);
                                self.push(file.clone(), RelationKind::Imports, dst, Provenance::ExplicitImport);
                            }
                            None => self.unresolved += 1,
                        }
                    }
                }
                ImportRef::From { level, module, names } => {
                    let Some(abs) = absolutize(&facts.path, *level, module.as_deref()) else {
                        self.unresolved += 1;
                        continue;
                    };
                    let direct = if *level == 0 {
                        Provenance::ExplicitImport
                    } else {
                        Provenance::ResolvedImport
                    };
                    let mut any = false;
                    if let Some(m) = self.module_file(&abs) {
                        let dst = self.file_node_of(&m);
                        self.push(file.clone(), RelationKind::Imports, dst, direct);
                        any = true;
                    }
                    for n in names.iter().filter(|n| n.name != "*") {
                        let sub = if abs.is_empty() {
                            n.name.clone()
                        } else {
                            format!("{abs}.{}", n.name)
                        };
                        if let Some(m) = self.module_file(&sub) {
                            let dst = self.file_node_of(&m);
                            self.push(file.clone(), RelationKind::Imports, dst, Provenance::ResolvedImport);
                            any = true;
                        }
                    }
                    if !any {
                        self.unresolved += 1;
                    }
                }
                ImportRef::Path { spec } => match self.resolve_path_spec(spec) {
                    Some(p) => {
                        let dst = self.file_node_of(&p);
                        self.push(file.clone(), RelationKind::Imports, dst, Provenance::ResolvedImport);
                    }
                    None => self.unresolved += 1,
                },
            }
        }
        for call in &facts.calls {
            match self.resolve_target(call.scope, &call.target, RelationKind::Invokes) {
                Some((dst, p)) => {
                    let src = self.scope_node(call.scope);
                    self.push(src, RelationKind::Invokes, dst, p);
                }
                None => self.unresolved += 1,
            }
        }
        for base in &facts.bases {
            match self.resolve_target(Some(base.class), &base.target, RelationKind::Inherits) {
                Some((dst, p)) => {
                    let src = facts.symbol_node(base.class);
                    self.push(src, RelationKind::Inherits, dst, p);
                }
                None => self.unresolved += 1,
            }
        }
        if is_test_path(&facts.path) {
            let tested: Vec<NodeId> = self
                .edges
                .iter()
                .filter(|e| e.relation == RelationKind::Imports && !is_test_path(&e.dst.path))
                .map(|e| e.dst.clone())
                .collect();
            for target in tested {
                self.push(target, RelationKind::TestedBy, file.clone(), Provenance::TestLinkage);
            }
        }
    }

    fn resolve_path_spec(&mut self, spec: &str) -> Option<String> {
        if !spec.starts_with('.') {
            return None;
        }
        let dir = super::parent_dir(&self.facts.path);
        let joined = normalize_path(if dir == crate::graph::ROOT_DIR { "" } else { dir }, spec)?;
        for suffix in ["", ".js", ".ts", ".jsx", ".tsx", ".mjs", "/index.js", "/index.ts"] {
            let candidate = format!("{joined}{suffix}");
            if self.has_file(&candidate) {
                return Some(candidate);
            }
        }
        None
    }

    fn link_doc(&mut self) {
        let file = self.facts.file_node();
        for tok in &self.facts.mentions {
            if tok.contains(['/', '.']) && *tok != self.facts.path && self.has_file(tok) {
                let dst = self.file_node_of(tok);
                self.push(file.clone(), RelationKind::Documents, dst, Provenance::Documentation);
            }
            if is_identifier(tok) && !tok.starts_with('_') && tok.len() >= 3 {
                if let Some(n) = self.unique_name(tok) {
                    if n.qualified_name == *tok {
                        self.push(file.clone(), RelationKind::Documents, n, Provenance::Documentation);
                    }
                }
            }
        }
    }

    fn link_config(&mut self) {
        let file = self.facts.file_node();
        for tok in &self.facts.mentions {
            if !tok.split('.').all(is_identifier) {
                continue;
            }
            if let Some(m) = self.module_file(tok) {
                let dst = self.file_node_of(&m);
                self.push(file.clone(), RelationKind::Configures, dst, Provenance::Configuration);
            }
        }
    }
}

fn accepts(relation: RelationKind, node: &NodeId) -> bool {
    match relation {
        RelationKind::Inherits => node.kind == NodeKind::Class,
        _ => node.kind.is_symbol(),
    }
}

/// Absolute module for a possibly relative `from` import.
fn absolutize(path: &str, level: u32, module: Option<&str>) -> Option<String> {
    if level == 0 {
        return module.map(str::to_string);
    }
    let package = package_of(path);
    let mut parts: Vec<&str> = if package.is_empty() {
        Vec::new()
    } else {
        package.split('.').collect()
    };
    for _ in 1..level {
        parts.pop()?;
    }
    if let Some(m) = module {
        parts.push(m);
    }
    Some(parts.join("."))
}

fn normalize_path(dir: &str, spec: &str) -> Option<String> {
    let mut parts: Vec<&str> = dir.split('/').filter(|s| !s.is_empty()).collect();
    for seg in spec.split('/') {
        match seg {
            "" | "." => {}
            ".." => {
                parts.pop()?;
            }
            s => parts.push(s),
        }
    }
    Some(parts.join("/"))
}
