use rustpython_ast::Visitor;
use rustpython_parser::ast::{self, Expr, Ranged, Stmt};
use rustpython_parser::text_size::TextRange;
use rustpython_parser::Parse;

use super::{BaseRef, CallRef, ImportName, ImportRef, SymbolDef, Target};
use crate::graph::NodeKind;

pub(super) struct Parsed {
    pub symbols: Vec<SymbolDef>,
    pub imports: Vec<ImportRef>,
    pub calls: Vec<CallRef>,
    pub bases: Vec<BaseRef>,
}

pub(super) fn analyze(path: &str, source: &str) -> Result<Parsed, String> {
    let suite = ast::Suite::parse(source, path).map_err(|e| e.to_string())?;
    let mut v = Collector {
        source,
        line_starts: line_starts(source),
        scopes: Vec::new(),
        out: Parsed {
            symbols: Vec::new(),
            imports: Vec::new(),
            calls: Vec::new(),
            bases: Vec::new(),
        },
    };
    for stmt in suite {
        v.visit_stmt(stmt);
    }
    let mut out = v.out;
    out.calls.sort();
    out.calls.dedup();
    Ok(out)
}

fn line_starts(source: &str) -> Vec<usize> {
    std::iter::once(0)
        .chain(source.match_indices('\n').map(|(i, _)| i + 1))
        .collect()
}

struct Collector<'a> {
    source: &'a str,
    line_starts: Vec<usize>,
    /// Indices into `out.symbols` of the enclosing definitions.
    scopes: Vec<usize>,
    out: Parsed,
}

impl Collector<'_> {
    fn line_of(&self, offset: usize) -> u32 {
        match self.line_starts.binary_search(&offset) {
            Ok(i) => i as u32 + 1,
            Err(i) => i as u32,
        }
    }

    fn span(&self, range: TextRange) -> (u32, u32) {
        let start = self.line_of(usize::from(range.start()));
        // ranges are half-open; the last byte decides the end line
        let end_off = usize::from(range.end()).saturating_sub(1).max(usize::from(range.start()));
        (start, self.line_of(end_off).max(start))
    }

    fn signature(&self, range: TextRange, body: &[Stmt]) -> String {
        let start = usize::from(range.start());
        let line = self.source[start..].lines().next().unwrap_or("").trim();
        let mut sig: String = line.chars().take(160).collect();
        if let Some(doc) = docstring(body) {
            if let Some(first) = doc.lines().map(str::trim).find(|l| !l.is_empty()) {
                sig.push_str(" | ");
                sig.extend(first.chars().take(120));
            }
        }
        sig
    }

    fn qualify(&self, name: &str) -> String {
        match self.scopes.last() {
            Some(&i) => format!("{}.{}", self.out.symbols[i].qualified_name, name),
            None => name.to_string(),
        }
    }

    /// Only methods hang off their class; everything else hangs off the file.
    fn contains_parent(&self, kind: NodeKind) -> Option<String> {
        let &i = self.scopes.last()?;
        let enclosing = &self.out.symbols[i];
        (kind == NodeKind::Function && enclosing.kind == NodeKind::Class)
            .then(|| enclosing.qualified_name.clone())
    }

    fn define(&mut self, name: &str, kind: NodeKind, range: TextRange, body: &[Stmt]) -> usize {
        let def = SymbolDef {
            qualified_name: self.qualify(name),
            kind,
            span: self.span(range),
            parent: self.contains_parent(kind),
            signature: self.signature(range, body),
        };
        self.out.symbols.push(def);
        self.out.symbols.len() - 1
    }

    fn function(
        &mut self,
        name: &str,
        range: TextRange,
        args: ast::Arguments,
        body: Vec<Stmt>,
        decorators: Vec<Expr>,
        returns: Option<Box<Expr>>,
    ) {
        for d in decorators {
            self.visit_expr(d);
        }
        self.visit_arguments(args);
        if let Some(r) = returns {
            self.visit_expr(*r);
        }
        let idx = self.define(name, NodeKind::Function, range, &body);
        self.scopes.push(idx);
        for s in body {
            self.visit_stmt(s);
        }
        self.scopes.pop();
    }
}

fn docstring(body: &[Stmt]) -> Option<&str> {
    match body.first()? {
        Stmt::Expr(e) => match e.value.as_ref() {
            Expr::Constant(c) => match &c.value {
                ast::Constant::Str(s) => Some(s.as_str()),
                _ => None,
            },
            _ => None,
        },
        _ => None,
    }
}

/// `a.b.c` for a chain of attribute accesses on a name.
fn dotted(expr: &Expr) -> Option<String> {
    match expr {
        Expr::Name(n) => Some(n.id.to_string()),
        Expr::Attribute(a) => dotted(&a.value).map(|b| format!("{b}.{}", a.attr)),
        _ => None,
    }
}

fn target_of(expr: &Expr) -> Option<Target> {
    match expr {
        Expr::Name(n) => Some(Target {
            base: None,
            name: n.id.to_string(),
        }),
        Expr::Attribute(a) => Some(Target {
            base: Some(dotted(&a.value).unwrap_or_default()),
            name: a.attr.to_string(),
        }),
        _ => None,
    }
}

fn import_names(aliases: &[ast::Alias]) -> Vec<ImportName> {
    aliases
        .iter()
        .map(|a| ImportName {
            name: a.name.to_string(),
            asname: a.asname.as_ref().map(|n| n.to_string()),
        })
        .collect()
}

impl Visitor for Collector<'_> {
    fn visit_stmt_function_def(&mut self, node: ast::StmtFunctionDef) {
        let range = node.range();
        self.function(
            node.name.as_str(),
            range,
            *node.args,
            node.body,
            node.decorator_list,
            node.returns,
        );
    }

    fn visit_stmt_async_function_def(&mut self, node: ast::StmtAsyncFunctionDef) {
        let range = node.range();
        self.function(
            node.name.as_str(),
            range,
            *node.args,
            node.body,
            node.decorator_list,
            node.returns,
        );
    }

    fn visit_stmt_class_def(&mut self, node: ast::StmtClassDef) {
        let range = node.range();
        for d in node.decorator_list {
            self.visit_expr(d);
        }
        let idx = self.define(node.name.as_str(), NodeKind::Class, range, &node.body);
        for base in node.bases {
            if let Some(target) = target_of(&base) {
                self.out.bases.push(BaseRef { class: idx, target });
            }
            self.visit_expr(base);
        }
        for kw in node.keywords {
            self.visit_expr(kw.value);
        }
        self.scopes.push(idx);
        for s in node.body {
            self.visit_stmt(s);
        }
        self.scopes.pop();
    }

    fn visit_stmt_import(&mut self, node: ast::StmtImport) {
        self.out.imports.push(ImportRef::Module {
            names: import_names(&node.names),
        });
    }

    fn visit_stmt_import_from(&mut self, node: ast::StmtImportFrom) {
        self.out.imports.push(ImportRef::From {
            level: node.level.map(|l| l.to_u32()).unwrap_or(0),
            module: node.module.as_ref().map(|m| m.to_string()),
            names: import_names(&node.names),
        });
    }

    fn visit_expr_call(&mut self, node: ast::ExprCall) {
        if let Some(target) = target_of(&node.func) {
            self.out.calls.push(CallRef {
                scope: self.scopes.last().copied(),
                target,
            });
        }
        self.generic_visit_expr_call(node);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = r#"import os
from pkg.util import helper as h, other

class Base:
    """Base docs."""
    def run(self):
        self.step()
        h()

    def step(self):
        pass

class Child(Base, mod.Mixin):
    class Inner:
        def deep(self):
            pass

def outer(x):
    def inner():
        return outer(1)
    return inner()

@decorate(1)
async def later():
    await os.path.join("a", "b")
"#;

    #[test]
    fn collects_symbols_with_spans_and_parents() {
        let p = analyze("m.py", SRC).unwrap();
        let names: Vec<(&str, NodeKind, (u32, u32), Option<&str>)> = p
            .symbols
            .iter()
            .map(|s| (s.qualified_name.as_str(), s.kind, s.span, s.parent.as_deref()))
            .collect();
        assert_eq!(
            names,
            vec![
                ("Base", NodeKind::Class, (4, 11), None),
                ("Base.run", NodeKind::Function, (6, 8), Some("Base")),
                ("Base.step", NodeKind::Function, (10, 11), Some("Base")),
                ("Child", NodeKind::Class, (13, 16), None),
                ("Child.Inner", NodeKind::Class, (14, 16), None),
                ("Child.Inner.deep", NodeKind::Function, (15, 16), Some("Child.Inner")),
                ("outer", NodeKind::Function, (18, 21), None),
                ("outer.inner", NodeKind::Function, (19, 20), None),
                ("later", NodeKind::Function, (24, 25), None),
            ]
        );
        assert_eq!(p.symbols[0].signature, "class Base: | Base docs.");
    }

    #[test]
    fn collects_imports_calls_and_bases() {
        let p = analyze("m.py", SRC).unwrap();
        assert_eq!(p.imports.len(), 2);
        match &p.imports[1] {
            ImportRef::From { level, module, names } => {
                assert_eq!(*level, 0);
                assert_eq!(module.as_deref(), Some("pkg.util"));
                assert_eq!(names[0].asname.as_deref(), Some("h"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let bases: Vec<_> = p.bases.iter().map(|b| (b.class, b.target.clone())).collect();
        assert_eq!(bases.len(), 2);
        assert_eq!(bases[1].1.base.as_deref(), Some("mod"));
        let has_call = |scope: Option<&str>, base: Option<&str>, name: &str| {
            p.calls.iter().any(|c| {
                c.scope.map(|i| p.symbols[i].qualified_name.as_str()) == scope
                    && c.target.base.as_deref() == base
                    && c.target.name == name
            })
        };
        assert!(has_call(Some("Base.run"), Some("self"), "step"));
        assert!(has_call(Some("Base.run"), None, "h"));
        assert!(has_call(Some("outer.inner"), None, "outer"));
        assert!(has_call(Some("outer"), None, "inner"));
        assert!(has_call(None, None, "decorate"));
        assert!(has_call(Some("later"), Some("os.path"), "join"));
    }

    #[test]
    fn syntax_error_is_reported() {
        assert!(analyze("bad.py", "def broken(:\n  pass\n").is_err());
    }
}
