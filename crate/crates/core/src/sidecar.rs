//! Per-file JSON sidecars: each file's typed neighbors, community and
//! flows, materialized so that search never needs the whole graph.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{NodeId, NodeKind, RelationKind, RepoGraph};
use crate::index::{write_file, Manifest};
use crate::json;

pub const DEFAULT_CAP: usize = 20;
pub const COMPACT_CAP: usize = 10;
pub const DEFAULT_FLOW_MAX_LEN: usize = 6;
const SUFFIX: &str = ".graph.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborRef {
    pub path: String,
    pub symbol: String,
    pub relation: RelationKind,
    pub confidence: f64,
}

impl NeighborRef {
    fn from_node(node: &NodeId, relation: RelationKind, confidence: f64) -> Self {
        NeighborRef {
            path: node.path.clone(),
            symbol: node.qualified_name.clone(),
            relation,
            confidence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityInfo {
    pub id: u32,
    pub label: String,
    pub cohesion: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowStep {
    pub name: String,
    pub step: u32,
    pub of: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarRecord {
    pub path: String,
    pub snapshot_id: String,
    pub community: CommunityInfo,
    pub dependents: Vec<NeighborRef>,
    pub dependencies: Vec<NeighborRef>,
    pub callers: Vec<NeighborRef>,
    pub callees: Vec<NeighborRef>,
    pub flows: Vec<FlowStep>,
    pub tests: Vec<String>,
    pub docs: Vec<String>,
    pub configs: Vec<String>,
}

impl SidecarRecord {
    pub fn to_json(&self) -> Result<String> {
        json::to_canonical_string(self)
    }

    /// Digest of the record's content, ignoring the snapshot it was written at.
    pub fn content_digest(&self) -> Result<String> {
        let mut unstamped = self.clone();
        unstamped.snapshot_id.clear();
        Ok(hex::encode(Sha256::digest(unstamped.to_json()?.as_bytes())))
    }

    /// Copy with every neighbor list cut to `cap`.
    pub fn truncated(&self, cap: usize) -> SidecarRecord {
        let mut r = self.clone();
        for list in [&mut r.dependents, &mut r.dependencies, &mut r.callers, &mut r.callees] {
            list.truncate(cap);
        }
        r
    }
}

/// Snapshot and content digest of the sidecar currently on disk for a file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidecarStamp {
    pub snapshot_id: String,
    pub digest: String,
}

/// Chains of files along greedy highest-confidence call paths, one per
/// entry-point function (a function nobody invokes).
pub fn derive_flows(g: &RepoGraph, max_len: usize) -> BTreeMap<String, Vec<FlowStep>> {
    let mut out_edges: HashMap<&NodeId, Vec<(f64, &NodeId)>> = HashMap::new();
    let mut invoked: HashSet<&NodeId> = HashSet::new();
    for e in g.semantic_edges().filter(|e| e.relation == RelationKind::Invokes) {
        out_edges.entry(&e.src).or_default().push((e.confidence, &e.dst));
        invoked.insert(&e.dst);
    }
    let mut flows: BTreeMap<String, Vec<FlowStep>> = BTreeMap::new();
    for entry in g
        .nodes()
        .filter(|n| n.kind == NodeKind::Function && !invoked.contains(n))
    {
        let mut visited: HashSet<&NodeId> = HashSet::from([entry]);
        let mut files: Vec<&str> = vec![entry.path.as_str()];
        let mut cur = entry;
        for _ in 0..max_len {
            let next = out_edges.get(cur).and_then(|outs| {
                outs.iter()
                    .max_by(|a, b| a.0.total_cmp(&b.0).then_with(|| b.1.cmp(a.1)))
                    .map(|(_, n)| *n)
            });
            let Some(next) = next else { break };
            if !visited.insert(next) {
                break;
            }
            if !files.contains(&next.path.as_str()) {
                files.push(&next.path);
            }
            cur = next;
        }
        let of = files.len() as u32;
        for (i, f) in files.into_iter().enumerate() {
            flows.entry(f.to_string()).or_default().push(FlowStep {
                name: entry.qualified_name.clone(),
                step: i as u32 + 1,
                of,
            });
        }
    }
    for list in flows.values_mut() {
        list.sort();
        list.dedup();
    }
    flows
}

fn sort_refs(list: &mut Vec<NeighborRef>, cap: usize) {
    let mut best: BTreeMap<(String, String, RelationKind), f64> = BTreeMap::new();
    for r in list.drain(..) {
        let slot = best.entry((r.path, r.symbol, r.relation)).or_insert(r.confidence);
        if r.confidence > *slot {
            *slot = r.confidence;
        }
    }
    *list = best
        .into_iter()
        .map(|((path, symbol, relation), confidence)| NeighborRef {
            path,
            symbol,
            relation,
            confidence,
        })
        .collect();
    list.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| a.path.cmp(&b.path))
            .then_with(|| a.symbol.cmp(&b.symbol))
            .then_with(|| a.relation.cmp(&b.relation))
    });
    list.truncate(cap);
}

/// In-memory sidecar records for every file of `g`.
pub fn sidecar_records(g: &RepoGraph, cap: usize, flow_max_len: usize) -> Result<BTreeMap<String, SidecarRecord>> {
    if cap == 0 {
        return Err(Error::InvalidArgument("sidecar cap must be positive".into()));
    }
    let comm = g.community().ok_or(Error::MissingCommunities)?;
    let mut records: BTreeMap<String, SidecarRecord> = BTreeMap::new();
    for path in g.file_paths() {
        let id = comm.community_of(path).unwrap_or(0);
        records.insert(
            path.to_string(),
            SidecarRecord {
                path: path.to_string(),
                snapshot_id: g.snapshot_id().to_string(),
                community: CommunityInfo {
                    id,
                    label: comm.label(id).unwrap_or_default().to_string(),
                    cohesion: comm.cohesion.get(path).copied().unwrap_or(1.0),
                },
                dependents: Vec::new(),
                dependencies: Vec::new(),
                callers: Vec::new(),
                callees: Vec::new(),
                flows: Vec::new(),
                tests: Vec::new(),
                docs: Vec::new(),
                configs: Vec::new(),
            },
        );
    }
    for e in g.semantic_edges() {
        let (a, b) = (e.src.path.as_str(), e.dst.path.as_str());
        match e.relation {
            RelationKind::Imports | RelationKind::Invokes | RelationKind::Inherits if a != b => {
                if let Some(r) = records.get_mut(a) {
                    r.dependencies.push(NeighborRef::from_node(&e.dst, e.relation, e.confidence));
                    if e.relation == RelationKind::Invokes {
                        r.callees.push(NeighborRef::from_node(&e.dst, e.relation, e.confidence));
                    }
                }
                if let Some(r) = records.get_mut(b) {
                    r.dependents.push(NeighborRef::from_node(&e.src, e.relation, e.confidence));
                    if e.relation == RelationKind::Invokes {
                        r.callers.push(NeighborRef::from_node(&e.src, e.relation, e.confidence));
                    }
                }
            }
            RelationKind::TestedBy => {
                if let Some(r) = records.get_mut(a) {
                    r.tests.push(b.to_string());
                }
            }
            RelationKind::Documents => {
                if let Some(r) = records.get_mut(b) {
                    r.docs.push(a.to_string());
                }
            }
            RelationKind::Configures => {
                if let Some(r) = records.get_mut(b) {
                    r.configs.push(a.to_string());
                }
            }
            _ => {}
        }
    }
    let mut flows = derive_flows(g, flow_max_len);
    for (path, r) in records.iter_mut() {
        for list in [&mut r.dependents, &mut r.dependencies, &mut r.callers, &mut r.callees] {
            sort_refs(list, cap);
        }
        for list in [&mut r.tests, &mut r.docs, &mut r.configs] {
            let set: BTreeSet<String> = list.drain(..).filter(|p| p != path).collect();
            list.extend(set);
        }
        r.flows = flows.remove(path).unwrap_or_default();
    }
    Ok(records)
}

/// `<out_dir>/<path>.graph.json`.
pub fn sidecar_path(out_dir: &Path, file_path: &str) -> PathBuf {
    out_dir.join(format!("{file_path}{SUFFIX}"))
}

/// Writes one record per file and returns how many were written.
pub fn build_sidecars(g: &RepoGraph, cap: usize, out_dir: &Path) -> Result<usize> {
    let records = sidecar_records(g, cap, DEFAULT_FLOW_MAX_LEN)?;
    for r in records.values() {
        write_file(&sidecar_path(out_dir, &r.path), &r.to_json()?)?;
    }
    Ok(records.len())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RefreshReport {
    pub written: Vec<String>,
    pub unchanged: usize,
    pub removed: Vec<String>,
}

/// Brings the sidecar directory up to date with `g`, rewriting only the
/// records whose content changed and deleting records of vanished files.
/// Stamps in `manifest` are updated to match.
pub fn refresh_sidecars(
    g: &RepoGraph,
    cap: usize,
    flow_max_len: usize,
    out_dir: &Path,
    manifest: &mut Manifest,
) -> Result<RefreshReport> {
    let records = sidecar_records(g, cap, flow_max_len)?;
    let mut report = RefreshReport::default();
    for (path, r) in &records {
        let digest = r.content_digest()?;
        let target = sidecar_path(out_dir, path);
        let current = manifest
            .sidecars
            .get(path)
            .is_some_and(|s| s.digest == digest)
            && target.is_file();
        if current {
            report.unchanged += 1;
            continue;
        }
        write_file(&target, &r.to_json()?)?;
        manifest.sidecars.insert(
            path.clone(),
            SidecarStamp {
                snapshot_id: r.snapshot_id.clone(),
                digest,
            },
        );
        report.written.push(path.clone());
    }
    let vanished: Vec<String> = manifest
        .sidecars
        .keys()
        .filter(|p| !records.contains_key(*p))
        .cloned()
        .collect();
    for p in vanished {
        manifest.sidecars.remove(&p);
        let target = sidecar_path(out_dir, &p);
        match fs::remove_file(&target) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(Error::io(target, e)),
        }
        report.removed.push(p);
    }
    Ok(report)
}

/// Loads the sidecar of `file_path`, checking it against the manifest.
pub fn load_sidecar(out_dir: &Path, file_path: &str, manifest: &Manifest) -> Result<SidecarRecord> {
    let inside = Path::new(file_path)
        .components()
        .all(|c| matches!(c, Component::Normal(_)));
    let target = sidecar_path(out_dir, file_path);
    if !inside || !manifest.files.contains_key(file_path) || !target.is_file() {
        return Err(Error::SidecarNotFound(file_path.to_string()));
    }
    let text = fs::read_to_string(&target).map_err(|e| Error::io(&target, e))?;
    let record: SidecarRecord =
        serde_json::from_str(&text).map_err(|e| Error::format(target.display().to_string(), e))?;
    let expected = manifest
        .sidecars
        .get(file_path)
        .map_or(manifest.snapshot_id.as_str(), |s| s.snapshot_id.as_str());
    if record.snapshot_id != expected {
        return Err(Error::StaleSidecar {
            path: file_path.to_string(),
            found: record.snapshot_id,
            expected: expected.to_string(),
        });
    }
    Ok(record)
}
