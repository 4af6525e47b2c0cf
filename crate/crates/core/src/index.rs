//! The persisted index: graph, communities, manifest and the per-file
//! facts that let alignment re-link only what a diff touches.

use imbl::{OrdMap, OrdSet};
use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::community::{detect_communities_with, project_file_graph, CommunityAssignment};
use crate::config::{CommunityConfig, RepoConfig};
use crate::error::{Error, Result};
use crate::extract::{self, BuildOutput, ExtractionReport, FileFacts, IndexConfig, LinkOutput, SymbolTable};
use crate::graph::RepoGraph;
use crate::json;
use crate::sidecar::SidecarStamp;

pub const INDEX_DIR: &str = ".repograph";
pub const CONFIG_FILE: &str = "config.toml";
pub const GRAPH_FILE: &str = "graph.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FACTS_FILE: &str = "facts.json";
pub const COMMUNITIES_FILE: &str = "communities.json";
pub const SIDECAR_DIR: &str = "sidecars";

/// Snapshot bookkeeping stored next to the graph.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub snapshot_id: String,
    /// Path to content hash.
    pub files: OrdMap<String, String>,
    /// Symbol-table key to the files whose edges consulted it.
    pub reverse_refs: OrdMap<String, OrdSet<String>>,
    pub community_epoch_diff_fraction: f64,
    /// Files changed since communities were last computed.
    pub community_epoch_changed: usize,
    /// File count when communities were last computed.
    pub community_epoch_files: usize,
    pub sidecars: OrdMap<String, SidecarStamp>,
    /// Extraction settings the index was built with.
    #[serde(default)]
    pub index_config: IndexConfig,
}

impl Manifest {
    fn from_state(snapshot_id: &str, table: &SymbolTable, links: &OrdMap<String, Arc<LinkOutput>>) -> Self {
        let files = table
            .files()
            .map(|f| (f.path.clone(), f.hash.clone()))
            .collect();
        let mut reverse_refs: OrdMap<String, OrdSet<String>> = OrdMap::new();
        for (path, link) in links {
            for key in &link.keys {
                reverse_refs.entry(key.clone()).or_default().insert(path.clone());
            }
        }
        Manifest {
            snapshot_id: snapshot_id.to_string(),
            files,
            reverse_refs,
            community_epoch_diff_fraction: 0.0,
            community_epoch_changed: 0,
            community_epoch_files: table.len(),
            sidecars: OrdMap::new(),
            index_config: IndexConfig::default(),
        }
    }

    pub(crate) fn update_epoch(&mut self, changed: usize) {
        self.community_epoch_changed += changed;
        self.community_epoch_diff_fraction =
            self.community_epoch_changed as f64 / self.community_epoch_files.max(1) as f64;
    }

    pub(crate) fn reset_epoch(&mut self, files: usize) {
        self.community_epoch_changed = 0;
        self.community_epoch_files = files;
        self.community_epoch_diff_fraction = 0.0;
    }
}

#[derive(Debug, Clone)]
pub struct Index {
    pub graph: RepoGraph,
    pub manifest: Manifest,
    pub table: SymbolTable,
    pub links: OrdMap<String, Arc<LinkOutput>>,
    pub report: ExtractionReport,
}

#[derive(Serialize, Deserialize)]
struct FactsRecord {
    facts: FileFacts,
    keys: BTreeSet<String>,
    unresolved: usize,
}

/// `<root>/.repograph`, or the `REPOGRAPH_DIR` override.
pub fn index_dir(root: &Path) -> PathBuf {
    match std::env::var_os("REPOGRAPH_DIR") {
        Some(dir) if !dir.is_empty() => {
            let dir = PathBuf::from(dir);
            if dir.is_absolute() {
                dir
            } else {
                root.join(dir)
            }
        }
        _ => root.join(INDEX_DIR),
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Communities for a graph under the given settings.
pub fn compute_communities(graph: &RepoGraph, cfg: &CommunityConfig) -> CommunityAssignment {
    detect_communities_with(&project_file_graph(graph), cfg.seed, cfg.resolution)
}

impl Index {
    /// Full build of a worktree: extraction, linking and communities.
    pub fn build(root: &Path, cfg: &RepoConfig) -> Result<Index> {
        let out = extract::build(root, &cfg.index)?;
        let mut index = Index::from_build(out, &cfg.communities);
        index.manifest.index_config = cfg.index.clone();
        Ok(index)
    }

    pub fn from_build(out: BuildOutput, cfg: &CommunityConfig) -> Index {
        let communities = compute_communities(&out.graph, cfg);
        let graph = out.graph.with_community(Some(communities));
        let manifest = Manifest::from_state(graph.snapshot_id(), &out.table, &out.links);
        Index {
            graph,
            manifest,
            table: out.table,
            links: out.links,
            report: out.report,
        }
    }

    pub fn snapshot_id(&self) -> &str {
        self.graph.snapshot_id()
    }

    pub fn communities(&self) -> Result<&CommunityAssignment> {
        self.graph.community().ok_or(Error::MissingCommunities)
    }

    pub fn exists(dir: &Path) -> bool {
        dir.join(MANIFEST_FILE).is_file() && dir.join(GRAPH_FILE).is_file()
    }

    /// Writes graph, communities, facts and manifest (sidecars are separate).
    pub fn save(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join(GRAPH_FILE), &self.graph.to_json()?)?;
        write_file(&dir.join(COMMUNITIES_FILE), &json::to_canonical_string(self.communities()?)?)?;
        let records: Vec<FactsRecord> = self
            .table
            .files()
            .map(|f| {
                let link = &self.links[&f.path];
                FactsRecord {
                    facts: (**f).clone(),
                    keys: link.keys.clone(),
                    unresolved: link.unresolved,
                }
            })
            .collect();
        let facts = serde_json::to_string(&records).map_err(|e| Error::format(FACTS_FILE, e))?;
        write_file(&dir.join(FACTS_FILE), &facts)?;
        self.save_manifest(dir)
    }

    pub fn save_manifest(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join(MANIFEST_FILE), &json::to_canonical_string(&self.manifest)?)
    }

    pub fn load(dir: &Path) -> Result<Index> {
        let manifest: Manifest = serde_json::from_str(&read_file(&dir.join(MANIFEST_FILE))?)
            .map_err(|e| Error::format(MANIFEST_FILE, e))?;
        let communities: CommunityAssignment =
            serde_json::from_str(&read_file(&dir.join(COMMUNITIES_FILE))?)
                .map_err(|e| Error::format(COMMUNITIES_FILE, e))?;
        let graph = RepoGraph::from_json(&read_file(&dir.join(GRAPH_FILE))?)?.with_community(Some(communities));
        let records: Vec<FactsRecord> = serde_json::from_str(&read_file(&dir.join(FACTS_FILE))?)
            .map_err(|e| Error::format(FACTS_FILE, e))?;
        let mut links = OrdMap::new();
        let mut facts = Vec::with_capacity(records.len());
        for r in records {
            let part = graph
                .part(&r.facts.path)
                .ok_or_else(|| Error::format(FACTS_FILE, format!("{} missing from graph", r.facts.path)))?;
            links.insert(
                r.facts.path.clone(),
                Arc::new(LinkOutput {
                    edges: part.semantic.clone(),
                    keys: r.keys,
                    unresolved: r.unresolved,
                }),
            );
            facts.push(Arc::new(r.facts));
        }
        let table = SymbolTable::from_facts(facts);
        if manifest.snapshot_id != graph.snapshot_id() {
            return Err(Error::StaleManifest(format!(
                "manifest snapshot {} but graph snapshot {}",
                manifest.snapshot_id,
                graph.snapshot_id()
            )));
        }
        let report = extract::report_for(&table, &links);
        Ok(Index {
            graph,
            manifest,
            table,
            links,
            report,
        })
    }
}
