//! File-level projection of the repository graph and Leiden community
//! detection over it.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::extract::basename;
use crate::graph::RepoGraph;
use crate::json::round2;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_RESOLUTION: f64 = 1.0;

/// Community membership of every file in one snapshot, keyed by file path.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommunityAssignment {
    pub kappa: BTreeMap<String, u32>,
    pub labels: BTreeMap<u32, String>,
    pub cohesion: BTreeMap<String, f64>,
    pub stale: bool,
}

impl CommunityAssignment {
    pub fn community_of(&self, path: &str) -> Option<u32> {
        self.kappa.get(path).copied()
    }

    pub fn label(&self, id: u32) -> Option<&str> {
        self.labels.get(&id).map(String::as_str)
    }

    pub fn members(&self, id: u32) -> Vec<&str> {
        self.kappa
            .iter()
            .filter(|(_, &c)| c == id)
            .map(|(p, _)| p.as_str())
            .collect()
    }

    pub fn community_count(&self) -> usize {
        self.labels.len()
    }

    /// Carries the assignment over a diff. Surviving files keep their
    /// community and cohesion; an added file joins the community of its
    /// heaviest surviving neighbor in `local` (ties by path), else a fresh
    /// singleton.
    pub fn carry_over(
        &self,
        deleted: &BTreeSet<String>,
        added: &BTreeSet<String>,
        local: &FileGraph,
    ) -> CommunityAssignment {
        let mut out = CommunityAssignment {
            stale: self.stale,
            ..Default::default()
        };
        for (path, &c) in &self.kappa {
            if !deleted.contains(path) && !added.contains(path) {
                out.kappa.insert(path.clone(), c);
                if let Some(&h) = self.cohesion.get(path) {
                    out.cohesion.insert(path.clone(), h);
                }
            }
        }
        let mut next_id = self.labels.keys().next_back().map_or(0, |m| m + 1);
        for path in added {
            let mut best: Option<(f64, &str)> = None;
            for (other, w) in local.neighbors_of(path) {
                if !out.kappa.contains_key(other) || added.contains(other) {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bw, bp)) => w > bw || (w == bw && other < bp),
                };
                if better {
                    best = Some((w, other));
                }
            }
            match best {
                Some((_, neighbor)) => {
                    let c = out.kappa[neighbor];
                    let h = out.cohesion.get(neighbor).copied().unwrap_or(1.0);
                    out.kappa.insert(path.clone(), c);
                    out.cohesion.insert(path.clone(), h);
                }
                None => {
                    out.kappa.insert(path.clone(), next_id);
                    out.cohesion.insert(path.clone(), 1.0);
                    next_id += 1;
                }
            }
        }
        let used: BTreeSet<u32> = out.kappa.values().copied().collect();
        for c in used {
            let label = match self.labels.get(&c) {
                Some(l) => l.clone(),
                None => label_community(&out.members(c)),
            };
            out.labels.insert(c, label);
        }
        out
    }
}

/// Weighted undirected graph over file paths.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileGraph {
    pub files: Vec<String>,
    /// Keyed by `(i, j)` with `i < j` indices into `files`.
    pub weights: BTreeMap<(usize, usize), f64>,
}

impl FileGraph {
    pub fn from_edges<'a>(
        files: impl IntoIterator<Item = String>,
        edges: impl IntoIterator<Item = (&'a str, &'a str, f64)>,
    ) -> Self {
        let mut files: Vec<String> = files.into_iter().collect();
        files.sort();
        files.dedup();
        let index: HashMap<&str, usize> =
            files.iter().enumerate().map(|(i, f)| (f.as_str(), i)).collect();
        let mut weights = BTreeMap::new();
        for (a, b, w) in edges {
            let (Some(&i), Some(&j)) = (index.get(a), index.get(b)) else {
                continue;
            };
            if i != j {
                *weights.entry((i.min(j), i.max(j))).or_insert(0.0) += w;
            }
        }
        FileGraph { files, weights }
    }

    pub fn weight(&self, a: &str, b: &str) -> f64 {
        let (Ok(i), Ok(j)) = (self.files.binary_search_by(|f| f.as_str().cmp(a)), self.files.binary_search_by(|f| f.as_str().cmp(b))) else {
            return 0.0;
        };
        self.weights.get(&(i.min(j), i.max(j))).copied().unwrap_or(0.0)
    }

    pub fn neighbors_of(&self, path: &str) -> Vec<(&str, f64)> {
        let Ok(i) = self.files.binary_search_by(|f| f.as_str().cmp(path)) else {
            return Vec::new();
        };
        self.weights
            .iter()
            .filter_map(|(&(a, b), &w)| {
                if a == i {
                    Some((self.files[b].as_str(), w))
                } else if b == i {
                    Some((self.files[a].as_str(), w))
                } else {
                    None
                }
            })
            .collect()
    }

    fn to_weighted(&self) -> WGraph {
        let n = self.files.len();
        let mut adj = vec![Vec::new(); n];
        for (&(a, b), &w) in &self.weights {
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        WGraph::new(adj, vec![0.0; n])
    }
}

/// Counts cross-file semantic edges between every pair of files.
pub fn project_file_graph(g: &RepoGraph) -> FileGraph {
    FileGraph::from_edges(
        g.file_paths().map(str::to_string),
        g.semantic_edges()
            .filter(|e| e.src.path != e.dst.path)
            .map(|e| (e.src.path.as_str(), e.dst.path.as_str(), 1.0)),
    )
}

pub fn detect_communities(file_graph: &FileGraph, seed: u64) -> CommunityAssignment {
    detect_communities_with(file_graph, seed, DEFAULT_RESOLUTION)
}

pub fn detect_communities_with(file_graph: &FileGraph, seed: u64, resolution: f64) -> CommunityAssignment {
    let membership = leiden(&file_graph.to_weighted(), resolution, seed);
    assignment_from_membership(file_graph, &membership)
}

/// Builds labels and cohesion for a partition given as one community index
/// per file; ids are renumbered by first appearance in path order.
pub fn assignment_from_membership(file_graph: &FileGraph, membership: &[usize]) -> CommunityAssignment {
    let mut renumber: HashMap<usize, u32> = HashMap::new();
    let mut kappa = BTreeMap::new();
    for (i, f) in file_graph.files.iter().enumerate() {
        let next = renumber.len() as u32;
        let c = *renumber.entry(membership[i]).or_insert(next);
        kappa.insert(f.clone(), c);
    }
    let mut members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, f) in file_graph.files.iter().enumerate() {
        members.entry(kappa[f]).or_default().push(i);
    }
    let mut labels = BTreeMap::new();
    let mut cohesion = BTreeMap::new();
    for (c, idx) in &members {
        let names: Vec<&str> = idx.iter().map(|&i| file_graph.files[i].as_str()).collect();
        labels.insert(*c, label_community(&names));
        let density = density(file_graph, idx);
        for &i in idx {
            cohesion.insert(file_graph.files[i].clone(), density);
        }
    }
    CommunityAssignment {
        kappa,
        labels,
        cohesion,
        stale: false,
    }
}

/// Unweighted edge density of the subgraph induced by `idx`; 1.0 for a
/// single file.
fn density(file_graph: &FileGraph, idx: &[usize]) -> f64 {
    let n = idx.len();
    if n < 2 {
        return 1.0;
    }
    let set: BTreeSet<usize> = idx.iter().copied().collect();
    let edges = file_graph
        .weights
        .iter()
        .filter(|(&(a, b), &w)| w > 0.0 && set.contains(&a) && set.contains(&b))
        .count();
    round2(edges as f64 / (n * (n - 1) / 2) as f64)
}

/// Newman modularity of a partition at the given resolution.
pub fn modularity(file_graph: &FileGraph, membership: &[usize], resolution: f64) -> f64 {
    let total: f64 = 2.0 * file_graph.weights.values().sum::<f64>();
    if total == 0.0 {
        return 0.0;
    }
    let mut degree = vec![0.0; file_graph.files.len()];
    let mut internal: HashMap<usize, f64> = HashMap::new();
    for (&(a, b), &w) in &file_graph.weights {
        degree[a] += w;
        degree[b] += w;
        if membership[a] == membership[b] {
            *internal.entry(membership[a]).or_default() += 2.0 * w;
        }
    }
    let mut tot: HashMap<usize, f64> = HashMap::new();
    for (i, d) in degree.iter().enumerate() {
        *tot.entry(membership[i]).or_default() += d;
    }
    tot.iter()
        .map(|(c, t)| internal.get(c).copied().unwrap_or(0.0) / total - resolution * (t / total).powi(2))
        .sum()
}

/// Two most frequent basename tokens, capitalized and concatenated.
pub fn label_community(member_files: &[&str]) -> String {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for path in member_files {
        let base = basename(path);
        let stem = match base.rsplit_once('.') {
            Some((s, _)) if !s.is_empty() => s,
            _ => base,
        };
        for tok in tokens(stem) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let label: String = ranked.iter().take(2).map(|(t, _)| capitalize(t)).collect();
    if label.is_empty() {
        "Community".to_string()
    } else {
        label
    }
}

/// Lowercase tokens split on `_`, `-`, `.` and camelCase boundaries.
fn tokens(stem: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in stem.split(['_', '-', '.']) {
        let mut cur = String::new();
        let mut prev_lower = false;
        for ch in chunk.chars() {
            if ch.is_uppercase() && prev_lower && !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            prev_lower = ch.is_lowercase() || ch.is_ascii_digit();
            cur.extend(ch.to_lowercase());
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

// ---------------------------------------------------------------------------
// Leiden

#[derive(Debug, Clone)]
struct WGraph {
    adj: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
    degree: Vec<f64>,
    total: f64,
}

impl WGraph {
    fn new(adj: Vec<Vec<(usize, f64)>>, self_loops: Vec<f64>) -> Self {
        let degree: Vec<f64> = adj
            .iter()
            .zip(&self_loops)
            .map(|(a, s)| a.iter().map(|(_, w)| w).sum::<f64>() + 2.0 * s)
            .collect();
        let total = degree.iter().sum();
        WGraph {
            adj,
            self_loops,
            degree,
            total,
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }
}

const EPS: f64 = 1e-12;

fn leiden(g0: &WGraph, gamma: f64, seed: u64) -> Vec<usize> {
    let n0 = g0.len();
    if g0.total == 0.0 {
        return (0..n0).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = g0.clone();
    let mut membership: Vec<usize> = (0..n0).collect();
    let mut part: Vec<usize> = (0..n0).collect();
    for _ in 0..64 {
        local_moving(&g, &mut part, gamma, &mut rng);
        let refined = refine(&g, &part, gamma, &mut rng);
        let (agg, map) = aggregate(&g, &refined);
        if agg.len() == g.len() {
            break;
        }
        let mut dense: HashMap<usize, usize> = HashMap::new();
        let mut next_part = vec![0; agg.len()];
        for v in 0..g.len() {
            let len = dense.len();
            next_part[map[v]] = *dense.entry(part[v]).or_insert(len);
        }
        for m in membership.iter_mut() {
            *m = map[*m];
        }
        g = agg;
        part = next_part;
    }
    membership.into_iter().map(|m| part[m]).collect()
}

fn local_moving(g: &WGraph, part: &mut [usize], gamma: f64, rng: &mut ChaCha8Rng) {
    let n = g.len();
    let mut tot = vec![0.0; n];
    let mut size = vec![0usize; n];
    for v in 0..n {
        tot[part[v]] += g.degree[v];
        size[part[v]] += 1;
    }
    let mut empty: Vec<usize> = (0..n).filter(|&c| size[c] == 0).rev().collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut queue: VecDeque<usize> = order.into_iter().collect();
    let mut queued = vec![true; n];
    let mut link = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();

    while let Some(v) = queue.pop_front() {
        queued[v] = false;
        let cur = part[v];
        let kv = g.degree[v];
        for &(u, w) in &g.adj[v] {
            let c = part[u];
            if link[c] == 0.0 && !touched.contains(&c) {
                touched.push(c);
            }
            link[c] += w;
        }
        tot[cur] -= kv;
        let mut best = cur;
        let mut best_gain = link[cur] - gamma * kv * tot[cur] / g.total;
        for &c in &touched {
            let gain = link[c] - gamma * kv * tot[c] / g.total;
            if gain > best_gain + EPS {
                best = c;
                best_gain = gain;
            }
        }
        if size[cur] > 1 && 0.0 > best_gain + EPS {
            if let Some(&c) = empty.last() {
                best = c;
            }
        }
        tot[best] += kv;
        if best != cur {
            size[cur] -= 1;
            if size[cur] == 0 {
                empty.push(cur);
            }
            if size[best] == 0 {
                empty.retain(|&c| c != best);
            }
            size[best] += 1;
            part[v] = best;
            for &(u, _) in &g.adj[v] {
                if part[u] != best && !queued[u] {
                    queued[u] = true;
                    queue.push_back(u);
                }
            }
        }
        for &c in &touched {
            link[c] = 0.0;
        }
        touched.clear();
    }
}

/// Greedy refinement: singletons inside each community merge into
/// well-connected refined subcommunities when that strictly helps.
fn refine(g: &WGraph, part: &[usize], gamma: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = g.len();
    let mut comm_tot = vec![0.0; n];
    for v in 0..n {
        comm_tot[part[v]] += g.degree[v];
    }
    let mut refined: Vec<usize> = (0..n).collect();
    let mut ref_tot = g.degree.clone();
    let mut ref_size = vec![1usize; n];
    let mut external: Vec<f64> = (0..n)
        .map(|v| {
            g.adj[v]
                .iter()
                .filter(|(u, _)| part[*u] == part[v])
                .map(|(_, w)| w)
                .sum()
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut link = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    for v in order {
        let own = refined[v];
        if ref_size[own] != 1 {
            continue;
        }
        let c = part[v];
        let kv = g.degree[v];
        if external[own] < gamma * kv * (comm_tot[c] - kv) / g.total - EPS {
            continue;
        }
        for &(u, w) in &g.adj[v] {
            if part[u] != c {
                continue;
            }
            let s = refined[u];
            if link[s] == 0.0 && !touched.contains(&s) {
                touched.push(s);
            }
            link[s] += w;
        }
        let mut best: Option<usize> = None;
        let mut best_gain = 0.0;
        for &s in &touched {
            if s == own {
                continue;
            }
            let connected = external[s] >= gamma * ref_tot[s] * (comm_tot[c] - ref_tot[s]) / g.total - EPS;
            let gain = link[s] - gamma * kv * ref_tot[s] / g.total;
            if connected && gain > best_gain + EPS {
                best = Some(s);
                best_gain = gain;
            }
        }
        if let Some(s) = best {
            external[s] = external[s] + external[own] - 2.0 * link[s];
            ref_tot[s] += kv;
            ref_size[s] += 1;
            ref_size[own] = 0;
            refined[v] = s;
        }
        for &s in &touched {
            link[s] = 0.0;
        }
        touched.clear();
    }
    refined
}

/// Collapses each refined community into one node.
fn aggregate(g: &WGraph, refined: &[usize]) -> (WGraph, Vec<usize>) {
    let mut dense: HashMap<usize, usize> = HashMap::new();
    let map: Vec<usize> = refined
        .iter()
        .map(|r| {
            let len = dense.len();
            *dense.entry(*r).or_insert(len)
        })
        .collect();
    let m = dense.len();
    let mut self_loops = vec![0.0; m];
    let mut pairs: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for v in 0..g.len() {
        self_loops[map[v]] += g.self_loops[v];
        for &(u, w) in &g.adj[v] {
            if u <= v {
                continue;
            }
            let (a, b) = (map[v], map[u]);
            if a == b {
                self_loops[a] += w;
            } else {
                *pairs.entry((a.min(b), a.max(b))).or_insert(0.0) += w;
            }
        }
    }
    let mut adj = vec![Vec::new(); m];
    for ((a, b), w) in pairs {
        adj[a].push((b, w));
        adj[b].push((a, w));
    }
    (WGraph::new(adj, self_loops), map)
}
