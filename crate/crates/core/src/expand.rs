//! One step of graph-augmented retrieval: lexical matches become anchors,
//! each anchor contributes its top-scoring filtered neighbors, and the
//! result is folded into a bounded context that only ever grows.

use std::collections::HashMap;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use crate::community::CommunityAssignment;
use crate::error::{Error, Result};
use crate::graph::{NodeId, RepoGraph};

/// Largest budget charge for a single rendered node.
pub const L_NODE_MAX: usize = 200;
pub const DEFAULT_BUDGET: usize = 32_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpansionConfig {
    /// Neighbors kept per anchor.
    pub k: usize,
    pub theta: f64,
    /// Hop radius K.
    pub hops: u32,
    /// Anchor cap m.
    pub anchors: usize,
    pub decay: f64,
    pub community_bonus: f64,
    pub budget: usize,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        ExpansionConfig {
            k: 10,
            theta: 0.5,
            hops: 1,
            anchors: 10,
            decay: 0.7,
            community_bonus: 0.25,
            budget: DEFAULT_BUDGET,
        }
    }
}

impl ExpansionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.hops == 0 {
            return bad("hops must be at least 1");
        }
        if self.anchors == 0 {
            return bad("anchor cap must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return bad("theta must lie in [0, 1]");
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad("decay must lie in (0, 1]");
        }
        if self.community_bonus < 0.0 || !self.community_bonus.is_finite() {
            return bad("community bonus must be non-negative");
        }
        if self.budget == 0 {
            return bad("budget must be positive");
        }
        Ok(())
    }

    /// Upper bound on the rendered cost of one step's expansion.
    pub fn delta_cap(&self) -> usize {
        self.anchors * self.k * L_NODE_MAX
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LexicalMatch {
    pub path: String,
    pub line: u32,
    pub column: u32,
    pub matched_text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AnchorSet {
    pub anchors: Vec<NodeId>,
    pub step_index: usize,
    /// Matches in files the graph does not know.
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    pub members: IndexSet<NodeId>,
    pub budget_units: usize,
    pub units_used: usize,
    /// Set when the last fold turned a node away for lack of budget.
    pub saturated: bool,
}

impl Context {
    pub fn new(budget_units: usize) -> Self {
        Context {
            members: IndexSet::new(),
            budget_units,
            units_used: 0,
            saturated: false,
        }
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        self.members.contains(node)
    }
}

/// One element of Γ: a selected neighbor, its best score and the anchor that gave it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaEntry {
    pub node: NodeId,
    pub score: f64,
    pub source: NodeId,
}

/// Budget units charged for admitting `node`: its rendered reference, at
/// most [`L_NODE_MAX`] characters.
pub fn render_cost(node: &NodeId) -> usize {
    node.display_ref().chars().count().clamp(1, L_NODE_MAX)
}

/// Maps matches to their innermost enclosing nodes, first match first.
pub fn align_matches(matches: &[LexicalMatch], g: &RepoGraph, m: usize) -> AnchorSet {
    let mut sorted: Vec<&LexicalMatch> = matches.iter().collect();
    sorted.sort_by(|a, b| (&a.path, a.line, a.column).cmp(&(&b.path, b.line, b.column)));
    let mut anchors: IndexSet<NodeId> = IndexSet::new();
    let mut dropped = 0;
    for hit in sorted {
        match g.node_for_location(&hit.path, hit.line) {
            Ok(node) => {
                anchors.insert(node.clone());
            }
            Err(_) => {
                tracing::warn!(path = %hit.path, "match in a file missing from the index");
                dropped += 1;
            }
        }
    }
    AnchorSet {
        anchors: anchors.into_iter().take(m).collect(),
        step_index: 0,
        dropped,
    }
}

fn same_community(comm: Option<&CommunityAssignment>, a: &NodeId, b: &NodeId) -> bool {
    let Some(c) = comm else { return false };
    match (c.community_of(&a.path), c.community_of(&b.path)) {
        (Some(x), Some(y)) => x == y,
        _ => false,
    }
}

/// path_conf × decay^(d−1) × (1 + bonus·[same community]), or 0 for nodes
/// already in the context.
pub fn score_neighbor(
    u: &NodeId,
    v: &NodeId,
    distance: u32,
    path_conf: f64,
    ctx: &Context,
    comm: Option<&CommunityAssignment>,
    cfg: &ExpansionConfig,
) -> f64 {
    if ctx.contains(u) {
        return 0.0;
    }
    let bonus = if same_community(comm, u, v) {
        1.0 + cfg.community_bonus
    } else {
        1.0
    };
    path_conf * cfg.decay.powi(distance.saturating_sub(1) as i32) * bonus
}

/// Descending score, then path, then qualified name, then full identity.
pub fn rank_order(a: &(NodeId, f64), b: &(NodeId, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1)
        .then_with(|| a.0.path.cmp(&b.0.path))
        .then_with(|| a.0.qualified_name.cmp(&b.0.qualified_name))
        .then_with(|| a.0.cmp(&b.0))
}

/// The `k` best-scoring members of the θ-filtered `K`-hop neighborhood.
pub fn select_neighbors(
    v: &NodeId,
    g: &RepoGraph,
    ctx: &Context,
    comm: Option<&CommunityAssignment>,
    cfg: &ExpansionConfig,
) -> Result<Vec<(NodeId, f64)>> {
    let mut scored: Vec<(NodeId, f64)> = g
        .neighborhood(v, cfg.hops, cfg.theta)?
        .into_iter()
        .map(|n| {
            let s = score_neighbor(&n.node, v, n.distance, n.path_confidence, ctx, comm, cfg);
            (n.node, s)
        })
        .filter(|(_, s)| *s > 0.0)
        .collect();
    scored.sort_by(rank_order);
    scored.truncate(cfg.k);
    Ok(scored)
}

/// Union of every anchor's selection; shared nodes keep their best score.
pub fn expand(
    anchor_set: &AnchorSet,
    g: &RepoGraph,
    ctx: &Context,
    comm: Option<&CommunityAssignment>,
    cfg: &ExpansionConfig,
) -> Result<Vec<GammaEntry>> {
    let mut best: HashMap<NodeId, GammaEntry> = HashMap::new();
    for anchor in &anchor_set.anchors {
        for (node, score) in select_neighbors(anchor, g, ctx, comm, cfg)? {
            match best.get(&node) {
                Some(prev) if prev.score >= score => {}
                _ => {
                    best.insert(
                        node.clone(),
                        GammaEntry {
                            node,
                            score,
                            source: anchor.clone(),
                        },
                    );
                }
            }
        }
    }
    let mut out: Vec<GammaEntry> = best.into_values().collect();
    out.sort_by(|a, b| rank_order(&(a.node.clone(), a.score), &(b.node.clone(), b.score)));
    Ok(out)
}

/// Admits anchors, then Γ in score order, until the first node that does
/// not fit. Existing members are never removed.
pub fn fold_context(ctx: &Context, anchor_set: &AnchorSet, gamma: &[GammaEntry]) -> Context {
    let mut next = ctx.clone();
    next.saturated = false;
    let candidates = anchor_set.anchors.iter().chain(gamma.iter().map(|e| &e.node));
    for node in candidates {
        if next.members.contains(node) {
            continue;
        }
        let cost = render_cost(node);
        if next.units_used + cost > next.budget_units {
            next.saturated = true;
            break;
        }
        next.units_used += cost;
        next.members.insert(node.clone());
    }
    next
}

/// Total rendered cost of Γ.
pub fn gamma_cost(gamma: &[GammaEntry]) -> usize {
    gamma.iter().map(|e| render_cost(&e.node)).sum()
}
