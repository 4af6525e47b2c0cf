//! Regex fast paths: import statements for files without a syntax tree, and
//! token extraction for documentation and configuration files.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;

use super::{is_identifier, ImportName, ImportRef};

static PY_IMPORT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^[ \t]*import[ \t]+([\w.]+(?:[ \t]+as[ \t]+\w+)?(?:[ \t]*,[ \t]*[\w.]+(?:[ \t]+as[ \t]+\w+)?)*)").unwrap());
static PY_FROM: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^[ \t]*from[ \t]+(\.*)([\w.]*)[ \t]+import[ \t]+\(?([^)\n#]+)").unwrap());
static PATH_IMPORT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?:\bfrom\s*|\bimport\s*|\brequire\(\s*)['"]([^'"\n]+)['"]"#).unwrap()
});
static TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[A-Za-z0-9_][A-Za-z0-9_./-]*").unwrap());

fn split_names(list: &str) -> Vec<ImportName> {
    list.split(',')
        .filter_map(|item| {
            let mut words = item.split_whitespace();
            let name = words.next()?.to_string();
            let asname = match (words.next(), words.next()) {
                (Some("as"), Some(a)) => Some(a.to_string()),
                _ => None,
            };
            Some(ImportName { name, asname })
        })
        .collect()
}

pub(super) fn python_imports(text: &str) -> Vec<ImportRef> {
    let mut out: Vec<(usize, ImportRef)> = Vec::new();
    for c in PY_IMPORT.captures_iter(text) {
        let start = c.get(0).map_or(0, |m| m.start());
        out.push((start, ImportRef::Module { names: split_names(&c[1]) }));
    }
    for c in PY_FROM.captures_iter(text) {
        let start = c.get(0).map_or(0, |m| m.start());
        let module = Some(c[2].to_string()).filter(|m| !m.is_empty());
        out.push((
            start,
            ImportRef::From {
                level: c[1].len() as u32,
                module,
                names: split_names(&c[3]),
            },
        ));
    }
    out.sort_by_key(|(s, _)| *s);
    out.into_iter().map(|(_, i)| i).collect()
}

pub(super) fn path_imports(text: &str) -> Vec<ImportRef> {
    PATH_IMPORT
        .captures_iter(text)
        .map(|c| ImportRef::Path {
            spec: c[1].to_string(),
        })
        .collect()
}

/// Path-like and identifier tokens mentioned in free text. Dotted and
/// slashed tokens also contribute their identifier components.
pub(super) fn mention_tokens(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for m in TOKEN.find_iter(text) {
        let tok = m.as_str().trim_end_matches(['.', '/', '-']);
        if tok.is_empty() {
            continue;
        }
        let tok = tok.strip_prefix("./").unwrap_or(tok);
        out.insert(tok.to_string());
        if tok.contains(['.', '/']) {
            for part in tok.split(['.', '/']) {
                if is_identifier(part) {
                    out.insert(part.to_string());
                }
            }
        }
    }
    out
}
