//! Scripted search loops run in two regimes over one query stream: lexical
//! anchors only, and anchors plus graph expansion.

use std::collections::BTreeSet;
use std::path::Path;

use indexmap::IndexSet;
use regex::Regex;
use repograph::config::RepoConfig;
use repograph::expand::{
    align_matches, expand, fold_context, gamma_cost, Context, ExpansionConfig, LexicalMatch, L_NODE_MAX,
};
use repograph::index::Index;
use repograph::search::search_files;
use repograph::NodeId;
use serde::Serialize;

use crate::generate::{generate_repo, SyntheticRepoSpec};
use crate::{Error, Result};

/// Maps the set of exposed nodes to a real value.
pub trait Utility {
    fn value(&self, exposed: &IndexSet<NodeId>) -> f64;
}

/// |C ∩ Y| / |Y|.
#[derive(Debug, Clone)]
pub struct RecallUtility {
    target: BTreeSet<NodeId>,
}

impl RecallUtility {
    pub fn new(target: impl IntoIterator<Item = NodeId>) -> Self {
        RecallUtility {
            target: target.into_iter().collect(),
        }
    }

    pub fn hits(&self, exposed: &IndexSet<NodeId>) -> usize {
        self.target.iter().filter(|y| exposed.contains(*y)).count()
    }

    pub fn target_size(&self) -> usize {
        self.target.len()
    }
}

impl Utility for RecallUtility {
    fn value(&self, exposed: &IndexSet<NodeId>) -> f64 {
        if self.target.is_empty() {
            return 0.0;
        }
        self.hits(exposed) as f64 / self.target.len() as f64
    }
}

/// One regex per visible target name, in planting order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScriptedPolicy {
    pub queries: Vec<String>,
    /// Step budget T; queries repeat cyclically past their end.
    pub steps: usize,
}

impl ScriptedPolicy {
    pub fn from_names(names: &[String]) -> Self {
        ScriptedPolicy {
            queries: names.iter().map(|n| format!(r"\b{}\b", regex::escape(n))).collect(),
            steps: names.len(),
        }
    }

    pub fn query(&self, t: usize) -> &str {
        &self.queries[t % self.queries.len()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Lex,
    Larger,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    /// 1-based.
    pub step: usize,
    pub query: String,
    pub anchors: Vec<String>,
    pub gamma_size: usize,
    pub gamma_cost: usize,
    /// Context members in admission order.
    pub members: Vec<String>,
    pub hits: usize,
    pub recall: f64,
    pub units_used: usize,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace {
    pub regime: Regime,
    pub target: Vec<String>,
    pub steps: Vec<StepRecord>,
}

impl RunTrace {
    pub fn to_json(&self) -> Result<String> {
        Ok(repograph::json::to_canonical_string(self)?)
    }
}

/// Budget that no run of `policy` under `cfg` can exhaust.
pub fn non_binding_budget(policy: &ScriptedPolicy, cfg: &ExpansionConfig) -> usize {
    policy.steps.max(1) * cfg.anchors * (cfg.k + 1) * L_NODE_MAX + 1
}

/// Runs `policy` in both regimes from empty contexts. Each step matches the
/// query, aligns anchors, then folds anchors alone (lex) or anchors and the
/// expansion (larger) into that regime's context.
pub fn run_regimes(
    index: &Index,
    root: &Path,
    target: &[NodeId],
    policy: &ScriptedPolicy,
    cfg: &ExpansionConfig,
) -> Result<(RunTrace, RunTrace)> {
    cfg.validate()?;
    let g = &index.graph;
    let utility = RecallUtility::new(target.iter().cloned());
    let target_keys: Vec<String> = target.iter().map(NodeId::key).collect();
    let paths: Vec<String> = index.manifest.files.keys().cloned().collect();
    let mut lex = RunTrace {
        regime: Regime::Lex,
        target: target_keys.clone(),
        steps: Vec::new(),
    };
    let mut larger = RunTrace {
        regime: Regime::Larger,
        target: target_keys,
        steps: Vec::new(),
    };
    let mut ctx_lex = Context::new(cfg.budget);
    let mut ctx_larger = Context::new(cfg.budget);
    for t in 0..policy.steps {
        let query = policy.query(t);
        let re = Regex::new(query).map_err(|e| Error::Query(query.to_string(), e))?;
        let hits: Vec<LexicalMatch> = search_files(root, &paths, &re)?.into_iter().map(|m| m.hit).collect();
        let mut anchors = align_matches(&hits, g, cfg.anchors);
        anchors.step_index = t;

        ctx_lex = fold_context(&ctx_lex, &anchors, &[]);
        lex.steps.push(record(t, query, &anchors.anchors, &[], &ctx_lex, &utility));

        let gamma = expand(&anchors, g, &ctx_larger, g.community(), cfg)?;
        ctx_larger = fold_context(&ctx_larger, &anchors, &gamma);
        let nodes: Vec<NodeId> = gamma.iter().map(|e| e.node.clone()).collect();
        let mut r = record(t, query, &anchors.anchors, &nodes, &ctx_larger, &utility);
        r.gamma_cost = gamma_cost(&gamma);
        larger.steps.push(r);
    }
    Ok((lex, larger))
}

fn record(
    t: usize,
    query: &str,
    anchors: &[NodeId],
    gamma: &[NodeId],
    ctx: &Context,
    utility: &RecallUtility,
) -> StepRecord {
    StepRecord {
        step: t + 1,
        query: query.to_string(),
        anchors: anchors.iter().map(NodeId::key).collect(),
        gamma_size: gamma.len(),
        gamma_cost: 0,
        members: ctx.members.iter().map(NodeId::key).collect(),
        hits: utility.hits(&ctx.members),
        recall: utility.value(&ctx.members),
        units_used: ctx.units_used,
        saturated: ctx.saturated,
    }
}

/// First 1-based step whose recall reaches `r`, or `None` when no step does.
pub fn steps_to_recall(trace: &RunTrace, r: f64) -> Option<usize> {
    trace.steps.iter().find(|s| s.recall >= r).map(|s| s.step)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub delta_cap: usize,
    pub max_gamma_cost: usize,
    pub within_cap: bool,
    pub lex_gamma_zero: bool,
    pub r_star: f64,
    pub t_lex: Option<usize>,
    pub t_larger: Option<usize>,
    /// (T^lex − T^larger)/T^lex > Δ/(C_step^lex + Δ); `None` when either
    /// regime never reaches `r_star`.
    pub strict_dominance: Option<bool>,
}

/// Per-step cost bound check plus the conditional dominance inequality.
/// The inequality is only reported.
pub fn token_cost_check(
    lex: &RunTrace,
    larger: &RunTrace,
    c_step_lex: f64,
    delta_cap: usize,
    r_star: f64,
) -> CostReport {
    let max_gamma_cost = larger.steps.iter().map(|s| s.gamma_cost).max().unwrap_or(0);
    let t_lex = steps_to_recall(lex, r_star);
    let t_larger = steps_to_recall(larger, r_star);
    let strict_dominance = match (t_lex, t_larger) {
        (Some(a), Some(b)) => {
            let delta = delta_cap as f64;
            Some((a as f64 - b as f64) / a as f64 > delta / (c_step_lex + delta))
        }
        _ => None,
    };
    CostReport {
        delta_cap,
        max_gamma_cost,
        within_cap: max_gamma_cost <= delta_cap,
        lex_gamma_zero: lex.steps.iter().all(|s| s.gamma_cost == 0 && s.gamma_size == 0),
        r_star,
        t_lex,
        t_larger,
        strict_dominance,
    }
}

pub const RECALL_LEVELS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryChecks {
    /// Every lex context is contained in the larger context of the same step.
    pub subset_every_step: bool,
    /// No context ever loses a member.
    pub monotone: bool,
    /// (C_T^larger \ C_T^lex) ∩ Y.
    pub discovered: Vec<String>,
    pub recall_gap_exact: bool,
    /// (R, T^lex(R), T^larger(R)).
    pub steps_to_recall: Vec<(f64, Option<usize>, Option<usize>)>,
    pub steps_dominate: bool,
    pub gamma_bounded: bool,
    pub saturated: bool,
}

fn is_prefix(a: &[String], b: &[String]) -> bool {
    a.len() <= b.len() && a.iter().zip(b).all(|(x, y)| x == y)
}

pub fn check_theory(lex: &RunTrace, larger: &RunTrace, cfg: &ExpansionConfig) -> TheoryChecks {
    let subset_every_step = lex.steps.iter().zip(&larger.steps).all(|(a, b)| {
        let big: BTreeSet<&String> = b.members.iter().collect();
        a.members.iter().all(|m| big.contains(m))
    });
    let monotone = [lex, larger]
        .iter()
        .all(|tr| tr.steps.windows(2).all(|w| is_prefix(&w[0].members, &w[1].members)));
    let (last_lex, last_larger) = (lex.steps.last(), larger.steps.last());
    let target: BTreeSet<&String> = larger.target.iter().collect();
    let discovered: Vec<String> = match (last_lex, last_larger) {
        (Some(a), Some(b)) => {
            let small: BTreeSet<&String> = a.members.iter().collect();
            b.members
                .iter()
                .filter(|m| !small.contains(m) && target.contains(m))
                .cloned()
                .collect()
        }
        _ => Vec::new(),
    };
    let recall_gap_exact = match (last_lex, last_larger) {
        (Some(a), Some(b)) => b.hits - a.hits == discovered.len(),
        _ => true,
    };
    let steps: Vec<(f64, Option<usize>, Option<usize>)> = RECALL_LEVELS
        .iter()
        .map(|&r| (r, steps_to_recall(lex, r), steps_to_recall(larger, r)))
        .collect();
    let steps_dominate = steps.iter().all(|(_, a, b)| match (a, b) {
        (Some(a), Some(b)) => b <= a,
        (Some(_), None) => false,
        (None, _) => true,
    });
    let gamma_bounded = larger
        .steps
        .iter()
        .all(|s| s.gamma_size <= cfg.anchors * cfg.k && s.gamma_cost <= cfg.delta_cap());
    let saturated = lex.steps.iter().chain(&larger.steps).any(|s| s.saturated);
    TheoryChecks {
        subset_every_step,
        monotone,
        discovered,
        recall_gap_exact,
        steps_to_recall: steps,
        steps_dominate,
        gamma_bounded,
        saturated,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub seed: u64,
    pub visibility: f64,
    pub visible: usize,
    pub hidden: usize,
    pub lex: RunTrace,
    pub larger: RunTrace,
    pub checks: TheoryChecks,
    pub cost: CostReport,
}

/// Generates the repository for `spec` in a scratch directory, indexes it
/// and runs both regimes over its visible names. A zero `cfg.budget` is
/// replaced by a budget the run cannot exhaust.
pub fn simulate_seed(spec: &SyntheticRepoSpec, cfg: &ExpansionConfig) -> Result<SimReport> {
    let dir = tempfile::tempdir()?;
    let repo = generate_repo(spec, dir.path())?;
    let repo_cfg = RepoConfig {
        search: cfg.clone(),
        ..RepoConfig::default()
    };
    let index = Index::build(dir.path(), &repo_cfg)?;
    let policy = ScriptedPolicy::from_names(&repo.visible_names());
    let mut cfg = cfg.clone();
    if cfg.budget == 0 {
        cfg.budget = non_binding_budget(&policy, &cfg);
    }
    let target = repo.target_nodes(&index.graph);
    let (lex, larger) = run_regimes(&index, dir.path(), &target, &policy, &cfg)?;
    let checks = check_theory(&lex, &larger, &cfg);
    let c_step_lex = mean_step_cost(&lex);
    let cost = token_cost_check(&lex, &larger, c_step_lex, cfg.delta_cap(), 1.0);
    Ok(SimReport {
        seed: spec.seed,
        visibility: spec.visibility,
        visible: spec.visible_count(),
        hidden: spec.hidden_count(),
        lex,
        larger,
        checks,
        cost,
    })
}

/// Mean units the lex context grows by per step.
pub fn mean_step_cost(lex: &RunTrace) -> f64 {
    match lex.steps.last() {
        Some(last) => last.units_used as f64 / lex.steps.len() as f64,
        None => 0.0,
    }
}
