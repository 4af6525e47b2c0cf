//! Lexical search over indexed files and the evidence block appended to
//! its output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use regex::Regex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expand::{align_matches, expand, fold_context, AnchorSet, Context, ExpansionConfig, GammaEntry, LexicalMatch};
use crate::index::Index;
use crate::sidecar::{FlowStep, NeighborRef, SidecarRecord};

pub const EVIDENCE_HEADER: &str = "[Related files from dependency graph]";
const LABEL_WIDTH: usize = 10;
const ENTRY_INDENT: usize = 4 + LABEL_WIDTH;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchLine {
    #[serde(flatten)]
    pub hit: LexicalMatch,
    pub text: String,
}

/// First match of `re` on every line of every file, ordered by (path, line).
/// Files that vanished since indexing are skipped.
pub fn search_files(root: &Path, paths: &[String], re: &Regex) -> Result<Vec<MatchLine>> {
    let per_file: Vec<Vec<MatchLine>> = paths
        .par_iter()
        .map(|p| {
            let full = root.join(p);
            let bytes = match fs::read(&full) {
                Ok(b) => b,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
                Err(e) => return Err(Error::io(full, e)),
            };
            let text = String::from_utf8_lossy(&bytes);
            let mut out = Vec::new();
            for (i, line) in text.lines().enumerate() {
                if let Some(m) = re.find(line) {
                    out.push(MatchLine {
                        hit: LexicalMatch {
                            path: p.clone(),
                            line: i as u32 + 1,
                            column: m.start() as u32,
                            matched_text: m.as_str().to_string(),
                        },
                        text: line.to_string(),
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut all: Vec<MatchLine> = per_file.into_iter().flatten().collect();
    all.sort_by(|a, b| (&a.hit.path, a.hit.line).cmp(&(&b.hit.path, b.hit.line)));
    Ok(all)
}

pub fn format_match_lines(lines: &[MatchLine]) -> String {
    let mut out = String::new();
    for l in lines {
        let _ = writeln!(out, "{}:{}:{}", l.hit.path, l.hit.line, l.text);
    }
    out
}

/// Two decimals with trailing zeros trimmed, keeping one: 1.0, 0.9, 0.95.
pub fn format_confidence(c: f64) -> String {
    let s = format!("{c:.2}");
    let trimmed = s.trim_end_matches('0');
    if trimmed.ends_with('.') {
        format!("{trimmed}0")
    } else {
        trimmed.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidenceSection {
    pub path: String,
    pub cluster: String,
    pub score: f64,
    pub callers: Vec<NeighborRef>,
    pub callees: Vec<NeighborRef>,
    pub flow: Option<FlowStep>,
}

/// One section per file of the admitted Γ nodes, best-scoring file first.
/// Neighbor lists come from each file's sidecar, cut to `cap`.
pub fn evidence_sections(
    gamma: &[GammaEntry],
    ctx: &Context,
    cap: usize,
    mut sidecar: impl FnMut(&str) -> Result<SidecarRecord>,
) -> Result<Vec<EvidenceSection>> {
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for e in gamma.iter().filter(|e| ctx.contains(&e.node)) {
        let slot = best.entry(e.node.path.as_str()).or_insert(e.score);
        if e.score > *slot {
            *slot = e.score;
        }
    }
    let mut files: Vec<(&str, f64)> = best.into_iter().collect();
    files.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut out = Vec::with_capacity(files.len());
    for (path, score) in files {
        let r = sidecar(path)?.truncated(cap);
        // the longest flow through the file, by name on ties
        let flow = r
            .flows
            .iter()
            .min_by(|a, b| b.of.cmp(&a.of).then_with(|| a.name.cmp(&b.name)).then(a.step.cmp(&b.step)))
            .cloned();
        out.push(EvidenceSection {
            path: path.to_string(),
            cluster: r.community.label,
            score,
            callers: r.callers,
            callees: r.callees,
            flow,
        });
    }
    Ok(out)
}

fn neighbor_entry(n: &NeighborRef) -> String {
    if n.symbol.is_empty() {
        format!("{} [{}]", n.path, format_confidence(n.confidence))
    } else {
        format!("{}:{} [{}]", n.path, n.symbol, format_confidence(n.confidence))
    }
}

fn write_list(out: &mut String, label: &str, entries: &[String]) {
    if entries.is_empty() {
        return;
    }
    let head = format!("{label}:");
    let _ = write!(out, "    {head:<LABEL_WIDTH$}");
    for (i, e) in entries.iter().enumerate() {
        if i > 0 {
            let _ = write!(out, ",\n{:ENTRY_INDENT$}", "");
        }
        out.push_str(e);
    }
    out.push('\n');
}

pub fn render_evidence_block(sections: &[EvidenceSection]) -> String {
    let mut out = String::new();
    out.push_str(EVIDENCE_HEADER);
    out.push('\n');
    for s in sections {
        let _ = writeln!(out, "  {} (cluster: {}):", s.path, s.cluster);
        let callers: Vec<String> = s.callers.iter().map(neighbor_entry).collect();
        let callees: Vec<String> = s.callees.iter().map(neighbor_entry).collect();
        write_list(&mut out, "Callers", &callers);
        write_list(&mut out, "Callees", &callees);
        if let Some(f) = &s.flow {
            write_list(&mut out, "Flow", &[format!("{} (step {}/{})", f.name, f.step, f.of)]);
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchResult {
    pub matches: Vec<MatchLine>,
    pub anchors: AnchorSet,
    pub gamma: Vec<GammaEntry>,
    #[serde(skip)]
    pub context: Option<Context>,
    pub sections: Vec<EvidenceSection>,
}

impl SearchResult {
    /// Match lines, then a blank line and the evidence block when there is one.
    pub fn render(&self) -> String {
        let mut out = format_match_lines(&self.matches);
        if !self.sections.is_empty() {
            out.push('\n');
            out.push_str(&render_evidence_block(&self.sections));
        }
        out
    }
}

/// One search step: regex matches, then (unless `with_graph` is false)
/// anchors, expansion from an empty context and the evidence sections.
pub fn run_search(
    index: &Index,
    root: &Path,
    re: &Regex,
    cfg: &ExpansionConfig,
    with_graph: bool,
    cap: usize,
    sidecar: impl FnMut(&str) -> Result<SidecarRecord>,
) -> Result<SearchResult> {
    cfg.validate()?;
    let paths: Vec<String> = index.manifest.files.keys().cloned().collect();
    let matches = search_files(root, &paths, re)?;
    let mut result = SearchResult {
        matches,
        anchors: AnchorSet::default(),
        gamma: Vec::new(),
        context: None,
        sections: Vec::new(),
    };
    if !with_graph || result.matches.is_empty() {
        return Ok(result);
    }
    let hits: Vec<LexicalMatch> = result.matches.iter().map(|m| m.hit.clone()).collect();
    let g = &index.graph;
    let anchors = align_matches(&hits, g, cfg.anchors);
    let ctx = Context::new(cfg.budget);
    let gamma = expand(&anchors, g, &ctx, g.community(), cfg)?;
    let ctx = fold_context(&ctx, &anchors, &gamma);
    result.sections = evidence_sections(&gamma, &ctx, cap, sidecar)?;
    result.anchors = anchors;
    result.gamma = gamma;
    result.context = Some(ctx);
    Ok(result)
}
