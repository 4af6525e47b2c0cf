//! Commit-aware maintenance: file-level diffs against the manifest and the
//! alignment operator that patches a cached index at diff cost.

use imbl::{OrdMap, OrdSet};
use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{CommunityConfig, RepoConfig};
use crate::error::{Error, Result};
use crate::extract::{
    self, ancestor_dirs, content_hash, directory_part, list_files, IndexConfig, LinkOutput,
    SymbolTable,
};
use crate::community::FileGraph;
use crate::graph::{Part, RepoGraph, ROOT_DIR};
use crate::index::{compute_communities, Index, Manifest};

/// Files added, modified and deleted between the manifest and a worktree.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffSet {
    pub added: BTreeSet<String>,
    pub modified: BTreeSet<String>,
    pub deleted: BTreeSet<String>,
}

impl DiffSet {
    pub fn len(&self) -> usize {
        self.added.len() + self.modified.len() + self.deleted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Added and modified paths: the files that must be parsed again.
    pub fn changed(&self) -> BTreeSet<String> {
        self.added.union(&self.modified).cloned().collect()
    }

    /// Checks the diff against the manifest it claims to be relative to.
    pub fn check(&self, manifest: &Manifest) -> Result<()> {
        let overlap = self
            .added
            .intersection(&self.modified)
            .chain(self.added.intersection(&self.deleted))
            .chain(self.modified.intersection(&self.deleted))
            .next();
        if let Some(p) = overlap {
            return Err(Error::InvalidArgument(format!("{p} appears in more than one diff set")));
        }
        if let Some(p) = self.added.iter().find(|p| manifest.files.contains_key(*p)) {
            return Err(Error::StaleManifest(format!("{p} is added but already indexed")));
        }
        if let Some(p) = self
            .modified
            .iter()
            .chain(&self.deleted)
            .find(|p| !manifest.files.contains_key(*p))
        {
            return Err(Error::StaleManifest(format!("{p} is not in the indexed snapshot")));
        }
        Ok(())
    }
}

/// Content-hash comparison of a worktree against a manifest.
pub fn compute_diff(manifest: &Manifest, root: &Path, config: &IndexConfig) -> Result<DiffSet> {
    let paths = list_files(root, config)?;
    let hashes: Vec<(String, String)> = config.run(|| {
        paths
            .par_iter()
            .map(|p| {
                let full = root.join(p);
                let bytes = fs::read(&full).map_err(|e| Error::io(full, e))?;
                Ok((p.clone(), content_hash(&bytes)))
            })
            .collect::<Result<_>>()
    })?;
    let mut diff = DiffSet::default();
    let mut present = BTreeSet::new();
    for (path, hash) in hashes {
        match manifest.files.get(&path) {
            None => {
                diff.added.insert(path.clone());
            }
            Some(old) if *old != hash => {
                diff.modified.insert(path.clone());
            }
            Some(_) => {}
        }
        present.insert(path);
    }
    diff.deleted = manifest
        .files
        .keys()
        .filter(|p| !present.contains(*p))
        .cloned()
        .collect();
    Ok(diff)
}

fn forget_keys(reverse_refs: &mut OrdMap<String, OrdSet<String>>, path: &str, keys: &BTreeSet<String>) {
    for k in keys {
        if let Some(set) = reverse_refs.get_mut(k) {
            set.remove(path);
            if set.is_empty() {
                reverse_refs.remove(k);
            }
        }
    }
}

/// Applies `diff` to `prev`, producing the index of the worktree at `root`.
///
/// Only changed files are parsed. Files are re-linked when they changed or
/// when one of the symbol-table keys they consulted is defined by a changed
/// or deleted file. Everything else, including community labels, carries
/// over from `prev`, which is left untouched.
pub fn align(prev: &Index, diff: &DiffSet, root: &Path, cfg: &RepoConfig) -> Result<Index> {
    diff.check(&prev.manifest)?;
    let changed: Vec<String> = diff.changed().into_iter().collect();
    let new_facts = extract::read_and_analyze(root, &changed, &cfg.index)?;

    let mut table = prev.table.clone();
    let mut affected: BTreeSet<String> = BTreeSet::new();
    for p in diff.deleted.iter().chain(&diff.modified) {
        if let Some(old) = table.remove(p) {
            affected.extend(SymbolTable::keys_defined_by(&old));
        }
    }
    for f in new_facts {
        affected.extend(SymbolTable::keys_defined_by(&f));
        table.insert(Arc::new(f));
    }

    let mut relink: BTreeSet<String> = changed.iter().cloned().collect();
    for k in &affected {
        if let Some(paths) = prev.manifest.reverse_refs.get(k) {
            relink.extend(paths.iter().filter(|p| table.get(p).is_some()).cloned());
        }
    }
    let outputs: Vec<(String, LinkOutput)> = cfg.index.run(|| {
        relink
            .iter()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|p| ((*p).clone(), table.link(p)))
            .collect()
    });

    let mut manifest = prev.manifest.clone();
    let mut links = prev.links.clone();
    for p in &diff.deleted {
        if let Some(old) = links.remove(p) {
            forget_keys(&mut manifest.reverse_refs, p, &old.keys);
        }
        manifest.files.remove(p);
    }
    for (p, out) in outputs {
        if let Some(old) = links.get(&p) {
            forget_keys(&mut manifest.reverse_refs, &p, &old.keys);
        }
        for k in &out.keys {
            manifest.reverse_refs.entry(k.clone()).or_default().insert(p.clone());
        }
        links.insert(p, Arc::new(out));
    }
    for p in &changed {
        if let Some(f) = table.get(p) {
            manifest.files.insert(p.clone(), f.hash.clone());
        }
    }

    // graph parts: drop deleted, rebuild changed, swap edges of re-linked
    let mut parts = prev.graph.parts().clone();
    let mut touched_files: BTreeSet<String> = relink.clone();
    for p in diff.deleted.iter().chain(&diff.modified) {
        if let Some(old) = prev.graph.part(p) {
            for e in &old.semantic {
                touched_files.insert(e.src.path.clone());
                touched_files.insert(e.dst.path.clone());
            }
        }
    }
    for p in &diff.deleted {
        parts.remove(p);
        touched_files.insert(p.clone());
    }
    for p in &relink {
        let mut part: Part = if diff.added.contains(p) || diff.modified.contains(p) {
            table.get(p).map(|f| f.structural_part()).unwrap_or_default()
        } else {
            parts.get(p).map(|x| (**x).clone()).unwrap_or_default()
        };
        part.semantic = links[p].edges.clone();
        for e in &part.semantic {
            touched_files.insert(e.src.path.clone());
            touched_files.insert(e.dst.path.clone());
        }
        parts.insert(p.clone(), Arc::new(part));
    }
    for p in &diff.deleted {
        for d in ancestor_dirs(p) {
            if d != ROOT_DIR && !table.has_path_under(d) {
                parts.remove(d);
            }
        }
    }
    for p in &diff.added {
        for d in ancestor_dirs(p) {
            parts
                .entry(d.to_string())
                .or_insert_with(|| Arc::new(directory_part(d)));
        }
    }

    let snapshot_id = cfg.index.snapshot_id.clone().unwrap_or_else(|| {
        extract::snapshot_hash(manifest.files.iter().map(|(p, h)| (p.as_str(), h.as_str())))
    });
    manifest.snapshot_id = snapshot_id.clone();
    // deleted files keep their stamp so the next refresh removes the record
    for p in touched_files.iter().filter(|p| !diff.deleted.contains(*p)) {
        manifest.sidecars.remove(p);
    }

    let graph = RepoGraph::from_parts(snapshot_id, parts);
    let community = match prev.graph.community() {
        Some(c) => {
            let local = local_file_graph(&graph, &relink);
            let mut next = c.carry_over(&diff.deleted, &diff.added, &local);
            next.stale = c.stale || !diff.is_empty();
            next
        }
        None => compute_communities(&graph, &cfg.communities),
    };
    manifest.update_epoch(diff.len());
    let graph = graph.with_community(Some(community));
    let report = extract::report_for(&table, &links);
    Ok(Index {
        graph,
        manifest,
        table,
        links,
        report,
    })
}

/// File-level weights restricted to edges owned by `owners`, which covers
/// every edge incident to an added file.
fn local_file_graph(g: &RepoGraph, owners: &BTreeSet<String>) -> FileGraph {
    let mut files: BTreeSet<String> = owners.clone();
    let mut edges: Vec<(&str, &str, f64)> = Vec::new();
    for p in owners {
        if let Some(part) = g.part(p) {
            for e in part.semantic.iter().filter(|e| e.src.path != e.dst.path) {
                files.insert(e.src.path.clone());
                files.insert(e.dst.path.clone());
                edges.push((e.src.path.as_str(), e.dst.path.as_str(), 1.0));
            }
        }
    }
    FileGraph::from_edges(files, edges)
}

/// Recomputes communities when the changed-file fraction since the last
/// computation exceeds `threshold`, or always when `threshold` is zero.
pub fn recompute_if_stale(index: &Index, threshold: f64, cfg: &CommunityConfig) -> Index {
    let fraction = index.manifest.community_epoch_diff_fraction;
    if threshold > 0.0 && fraction <= threshold && index.graph.community().is_some() {
        return index.clone();
    }
    let mut next = index.clone();
    let communities = compute_communities(&next.graph, cfg);
    next.graph = next.graph.with_community(Some(communities));
    next.manifest.reset_epoch(next.table.len());
    next
}
