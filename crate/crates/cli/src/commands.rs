use std::cell::OnceCell;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use regex::Regex;
use repograph::align::{align as align_index, compute_diff, recompute_if_stale};
use repograph::config::RepoConfig;
use repograph::expand::ExpansionConfig;
use repograph::index::{Index, SIDECAR_DIR};
use repograph::json::to_canonical_string;
use repograph::sidecar::{load_sidecar, refresh_sidecars, sidecar_records, SidecarRecord, COMPACT_CAP};
use repograph::search::run_search;
use repograph_sim::bench::regression_slope;
use repograph_sim::{bench_align, simulate_seed, SimReport, SyntheticRepoSpec};
use serde::Serialize;

use crate::{display, Env, Failure};

type Outcome = Result<u8, Failure>;

fn load_config(env: &Env) -> Result<RepoConfig, Failure> {
    let mut cfg = RepoConfig::load_or_default(&env.config_path())?;
    // a visible index directory inside the repository must not index itself
    let dir = env.index_dir();
    if let Ok(rel) = dir.strip_prefix(&env.root) {
        let rel = rel.to_string_lossy().replace('\\', "/");
        if !rel.is_empty() && !rel.starts_with('.') {
            cfg.index.exclude.push(format!("{rel}/**"));
        }
    }
    Ok(cfg)
}

fn load_index(env: &Env) -> Result<Index, Failure> {
    let dir = env.index_dir();
    if !Index::exists(&dir) {
        return Err(Failure {
            code: 3,
            message: format!("no index at {}; run `repograph index` first", display(&dir)),
        });
    }
    Ok(Index::load(&dir)?)
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    print!("{}", to_canonical_string(value)?);
    Ok(())
}

#[derive(Serialize)]
struct IndexSummary {
    up_to_date: bool,
    snapshot_id: String,
    files: usize,
    nodes: usize,
    edges: usize,
    communities: usize,
    sidecars: usize,
    report: repograph::extract::ExtractionReport,
}

pub fn index(env: &Env, drop_tests: bool, force: bool) -> Outcome {
    let mut cfg = load_config(env)?;
    cfg.index.drop_tests |= drop_tests;
    let dir = env.index_dir();
    if !force && Index::exists(&dir) {
        if let Ok(prev) = Index::load(&dir) {
            let same_config = prev.manifest.index_config == cfg.index;
            let complete = prev.manifest.sidecars.len() == prev.manifest.files.len();
            if same_config && complete && compute_diff(&prev.manifest, &env.root, &cfg.index)?.is_empty() {
                return report_index(env, &prev, true);
            }
        }
    }
    let mut index = Index::build(&env.root, &cfg)?;
    let sidecar_dir = dir.join(SIDECAR_DIR);
    if sidecar_dir.exists() {
        fs::remove_dir_all(&sidecar_dir).map_err(|e| repograph::Error::io(sidecar_dir.clone(), e))?;
    }
    index.save(&dir)?;
    refresh_sidecars(
        &index.graph,
        cfg.sidecars.cap,
        cfg.sidecars.flow_max_len,
        &sidecar_dir,
        &mut index.manifest,
    )?;
    index.save_manifest(&dir)?;
    report_index(env, &index, false)
}

fn report_index(env: &Env, index: &Index, up_to_date: bool) -> Outcome {
    let summary = IndexSummary {
        up_to_date,
        snapshot_id: index.snapshot_id().to_string(),
        files: index.manifest.files.len(),
        nodes: index.graph.node_count(),
        edges: index.graph.edge_count(),
        communities: index.communities()?.community_count(),
        sidecars: index.manifest.sidecars.len(),
        report: index.report.clone(),
    };
    if env.json {
        print_json(&summary)?;
        return Ok(0);
    }
    if up_to_date {
        println!("index up to date ({} files, snapshot {})", summary.files, short(&summary.snapshot_id));
        return Ok(0);
    }
    let r = &summary.report;
    println!(
        "indexed {} files ({} parsed, {} skipped, {} parse failures)",
        summary.files,
        r.files_parsed,
        r.files_skipped,
        r.parse_failures.len()
    );
    println!(
        "{} nodes, {} edges, {} unresolved references",
        summary.nodes, summary.edges, r.unresolved_references
    );
    for (p, n) in &r.edges_by_provenance {
        println!("  {:<24}{n}", p.as_str());
    }
    println!("{} communities, {} sidecars", summary.communities, summary.sidecars);
    println!("snapshot {}", short(&summary.snapshot_id));
    Ok(0)
}

fn short(id: &str) -> &str {
    &id[..id.len().min(12)]
}

#[derive(Serialize)]
struct AlignSummary {
    delta: usize,
    added: Vec<String>,
    modified: Vec<String>,
    deleted: Vec<String>,
    diff_ms: f64,
    align_ms: f64,
    communities_recomputed: bool,
    sidecars_written: usize,
    sidecars_removed: usize,
    snapshot_id: String,
}

/// Aligns the stored index with the worktree and persists the result.
fn align_stored(env: &Env, prev: Index) -> Result<(Index, AlignSummary), Failure> {
    let mut cfg = load_config(env)?;
    cfg.index = prev.manifest.index_config.clone();
    let t = Instant::now();
    let diff = compute_diff(&prev.manifest, &env.root, &cfg.index)?;
    let diff_ms = t.elapsed().as_secs_f64() * 1000.0;
    let mut summary = AlignSummary {
        delta: diff.len(),
        added: diff.added.iter().cloned().collect(),
        modified: diff.modified.iter().cloned().collect(),
        deleted: diff.deleted.iter().cloned().collect(),
        diff_ms,
        align_ms: 0.0,
        communities_recomputed: false,
        sidecars_written: 0,
        sidecars_removed: 0,
        snapshot_id: prev.snapshot_id().to_string(),
    };
    if diff.is_empty() {
        return Ok((prev, summary));
    }
    let t = Instant::now();
    let next = align_index(&prev, &diff, &env.root, &cfg)?;
    summary.align_ms = t.elapsed().as_secs_f64() * 1000.0;
    let mut next = recompute_if_stale(&next, cfg.communities.stale_threshold, &cfg.communities);
    summary.communities_recomputed = next.manifest.community_epoch_changed == 0;
    let dir = env.index_dir();
    next.save(&dir)?;
    let refresh = refresh_sidecars(
        &next.graph,
        cfg.sidecars.cap,
        cfg.sidecars.flow_max_len,
        &dir.join(SIDECAR_DIR),
        &mut next.manifest,
    )?;
    next.save_manifest(&dir)?;
    summary.sidecars_written = refresh.written.len();
    summary.sidecars_removed = refresh.removed.len();
    summary.snapshot_id = next.snapshot_id().to_string();
    Ok((next, summary))
}

pub fn align(env: &Env) -> Outcome {
    let prev = load_index(env)?;
    let (_, s) = align_stored(env, prev)?;
    if env.json {
        print_json(&s)?;
    } else if s.delta == 0 {
        println!("Δ=0");
    } else {
        println!(
            "Δ={} (added {}, modified {}, deleted {}) aligned in {:.1} ms, diff {:.1} ms",
            s.delta,
            s.added.len(),
            s.modified.len(),
            s.deleted.len(),
            s.align_ms,
            s.diff_ms
        );
        println!(
            "sidecars: {} written, {} removed; communities {}",
            s.sidecars_written,
            s.sidecars_removed,
            if s.communities_recomputed { "recomputed" } else { "carried over" }
        );
    }
    Ok(0)
}

pub struct SearchOptions {
    pub pattern: String,
    pub k: Option<usize>,
    pub theta: Option<f64>,
    pub hops: Option<u32>,
    pub anchors: Option<usize>,
    pub budget: Option<usize>,
    pub no_graph: bool,
    pub no_align: bool,
    pub compact: bool,
}

impl SearchOptions {
    fn apply(&self, cfg: &mut ExpansionConfig) {
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(t) = self.theta {
            cfg.theta = t;
        }
        if let Some(h) = self.hops {
            cfg.hops = h;
        }
        if let Some(m) = self.anchors {
            cfg.anchors = m;
        }
        if let Some(b) = self.budget {
            cfg.budget = b;
        }
    }
}

pub fn search(env: &Env, opts: &SearchOptions) -> Outcome {
    let re = Regex::new(&opts.pattern).map_err(|e| Failure {
        code: 2,
        message: format!("invalid pattern: {e}"),
    })?;
    let cfg = load_config(env)?;
    let mut expansion = cfg.search.clone();
    opts.apply(&mut expansion);
    expansion.validate()?;
    let mut index = load_index(env)?;
    if !opts.no_align {
        index = align_stored(env, index)?.0;
    }
    let cap = if opts.compact { COMPACT_CAP } else { cfg.sidecars.cap };
    let sidecar_dir = env.index_dir().join(SIDECAR_DIR);
    // records computed from the graph, for files whose sidecar is unusable
    let computed: OnceCell<BTreeMap<String, SidecarRecord>> = OnceCell::new();
    let lookup = |path: &str| -> repograph::Result<SidecarRecord> {
        match load_sidecar(&sidecar_dir, path, &index.manifest) {
            Ok(r) => Ok(r),
            Err(e) => {
                tracing::debug!(%path, error = %e, "sidecar unusable, deriving from the graph");
                if computed.get().is_none() {
                    let records = sidecar_records(&index.graph, cfg.sidecars.cap, cfg.sidecars.flow_max_len)?;
                    let _ = computed.set(records);
                }
                computed
                    .get()
                    .and_then(|m| m.get(path).cloned())
                    .ok_or_else(|| repograph::Error::SidecarNotFound(path.to_string()))
            }
        }
    };
    let result = run_search(&index, &env.root, &re, &expansion, !opts.no_graph, cap, lookup)?;
    if env.json {
        print_json(&result)?;
    } else {
        print!("{}", result.render());
    }
    Ok(if result.matches.is_empty() { 1 } else { 0 })
}

pub fn sidecar(env: &Env, path: Option<&str>, rebuild: bool, compact: bool) -> Outcome {
    let mut index = load_index(env)?;
    let cfg = load_config(env)?;
    let dir = env.index_dir();
    let sidecar_dir = dir.join(SIDECAR_DIR);
    if rebuild || path.is_none() {
        let cap = if compact { COMPACT_CAP } else { cfg.sidecars.cap };
        index.manifest.sidecars.clear();
        let report = refresh_sidecars(&index.graph, cap, cfg.sidecars.flow_max_len, &sidecar_dir, &mut index.manifest)?;
        index.save_manifest(&dir)?;
        if path.is_none() {
            if env.json {
                print_json(&report)?;
            } else {
                println!("wrote {} sidecars to {}", report.written.len(), display(&sidecar_dir));
            }
            return Ok(0);
        }
    }
    let record = load_sidecar(&sidecar_dir, path.unwrap_or_default(), &index.manifest)?;
    let record = if compact { record.truncated(COMPACT_CAP) } else { record };
    print!("{}", record.to_json()?);
    Ok(0)
}

#[derive(Serialize)]
struct BenchOutput {
    rows: Vec<repograph_sim::BenchRow>,
    rebuild_slope_ms_per_file: f64,
    align_slope_ms_per_file: f64,
}

pub fn bench(env: &Env, sizes: &[usize], diff: f64, reps: usize, seed: u64) -> Outcome {
    if sizes.is_empty() || !(diff > 0.0 && diff <= 1.0) {
        return Err(Failure {
            code: 2,
            message: "need at least one size and a diff fraction in (0, 1]".into(),
        });
    }
    let base = SyntheticRepoSpec {
        seed,
        visibility: 1.0,
        ..SyntheticRepoSpec::default()
    };
    let rows = bench_align(&base, sizes, diff, reps)?;
    let xs: Vec<f64> = rows.iter().map(|r| r.size as f64).collect();
    let out = BenchOutput {
        rebuild_slope_ms_per_file: regression_slope(&xs, &rows.iter().map(|r| r.rebuild_ms).collect::<Vec<_>>()),
        align_slope_ms_per_file: regression_slope(&xs, &rows.iter().map(|r| r.align_ms).collect::<Vec<_>>()),
        rows,
    };
    if env.json {
        print_json(&out)?;
        return Ok(0);
    }
    println!("{:>6} {:>8} {:>12} {:>10} {:>9} {:>9}", "size", "changed", "rebuild_ms", "align_ms", "diff_ms", "speedup");
    for r in &out.rows {
        println!(
            "{:>6} {:>8} {:>12.1} {:>10.2} {:>9.2} {:>8.1}x",
            r.size, r.changed, r.rebuild_ms, r.align_ms, r.diff_ms, r.speedup
        );
    }
    println!(
        "slope (ms/file): rebuild {:.4}, align {:.4}",
        out.rebuild_slope_ms_per_file, out.align_slope_ms_per_file
    );
    Ok(0)
}

pub fn simulate(env: &Env, seeds: u64, spec: Option<&Path>, budget: Option<usize>) -> Outcome {
    let base: SyntheticRepoSpec = match spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure {
                code: 2,
                message: format!("{}: {e}", display(p)),
            })?;
            serde_json::from_str(&text).map_err(|e| Failure {
                code: 2,
                message: format!("{}: {e}", display(p)),
            })?
        }
        None => SyntheticRepoSpec::default(),
    };
    let cfg = ExpansionConfig {
        budget: budget.unwrap_or(0),
        ..load_config(env).map(|c| c.search).unwrap_or_default()
    };
    let mut reports: Vec<SimReport> = Vec::with_capacity(seeds as usize);
    for i in 0..seeds {
        let spec = SyntheticRepoSpec {
            seed: base.seed.wrapping_add(i),
            ..base.clone()
        };
        reports.push(simulate_seed(&spec, &cfg)?);
    }
    let violations = reports.iter().filter(|r| !holds(r)).count();
    if env.json {
        print_json(&reports)?;
    } else {
        for r in &reports {
            let (lex, larger) = (r.lex.steps.last(), r.larger.steps.last());
            println!(
                "seed {:>6}  v={:.2}  visible {} hidden {}  recall lex {:.2} larger {:.2}  |H_T|={}  {}",
                r.seed,
                r.visibility,
                r.visible,
                r.hidden,
                lex.map_or(0.0, |s| s.recall),
                larger.map_or(0.0, |s| s.recall),
                r.checks.discovered.len(),
                if holds(r) { "ok" } else { "VIOLATION" }
            );
        }
        println!("{} runs, {} violations", reports.len(), violations);
    }
    Ok(if violations == 0 { 0 } else { 1 })
}

fn holds(r: &SimReport) -> bool {
    let c = &r.checks;
    c.subset_every_step && c.monotone && c.recall_gap_exact && c.steps_dominate && c.gamma_bounded
}
