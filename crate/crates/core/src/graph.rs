//! The typed, attributed repository multigraph and its read-only queries.
//!
//! A [`RepoGraph`] is stored as a map of *parts*, one per owning path. A
//! part holds the nodes whose `path` equals the key, their attributes, the
//! `contains` edge(s) pointing at them, and the semantic edges that were
//! derived from that path's content. Alignment swaps whole parts, so the
//! unchanged portion of a graph is shared between snapshots.

use imbl::OrdMap;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::community::CommunityAssignment;
use crate::error::{Error, Result};
use crate::extract::confidence_of;
use crate::json;

pub const ROOT_DIR: &str = ".";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Directory,
    File,
    Class,
    Function,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Directory => "directory",
            NodeKind::File => "file",
            NodeKind::Class => "class",
            NodeKind::Function => "function",
        }
    }

    pub fn is_symbol(self) -> bool {
        matches!(self, NodeKind::Class | NodeKind::Function)
    }
}

/// Identity of a node within one snapshot.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    pub path: String,
    pub kind: NodeKind,
    pub qualified_name: String,
    pub span: (u32, u32),
}

impl NodeId {
    pub fn directory(path: impl Into<String>) -> Self {
        NodeId {
            path: path.into(),
            kind: NodeKind::Directory,
            qualified_name: String::new(),
            span: (0, 0),
        }
    }

    pub fn file(path: impl Into<String>, line_count: u32) -> Self {
        NodeId {
            path: path.into(),
            kind: NodeKind::File,
            qualified_name: String::new(),
            span: (1, line_count.max(1)),
        }
    }

    pub fn symbol(
        path: impl Into<String>,
        kind: NodeKind,
        qualified_name: impl Into<String>,
        span: (u32, u32),
    ) -> Self {
        NodeId {
            path: path.into(),
            kind,
            qualified_name: qualified_name.into(),
            span,
        }
    }

    /// Last dotted segment of the qualified name.
    pub fn simple_name(&self) -> &str {
        self.qualified_name
            .rsplit('.')
            .next()
            .unwrap_or(&self.qualified_name)
    }

    /// Stable textual key used in serialized files.
    pub fn key(&self) -> String {
        if self.kind.is_symbol() {
            format!(
                "{}:{}::{}@{}-{}",
                self.kind.as_str(),
                self.path,
                self.qualified_name,
                self.span.0,
                self.span.1
            )
        } else {
            format!("{}:{}", self.kind.as_str(), self.path)
        }
    }

    /// `path:symbol` for symbols, bare `path` for files and directories.
    pub fn display_ref(&self) -> String {
        if self.qualified_name.is_empty() {
            self.path.clone()
        } else {
            format!("{}:{}", self.path, self.qualified_name)
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let bad = |why: &str| Err(Error::InvalidArgument(format!("{}: {why}", self.key())));
        if self.path.contains('\\') || self.path.starts_with("./") || self.path.ends_with('/') {
            return bad("path must be normalized");
        }
        if self.kind.is_symbol() {
            if self.qualified_name.is_empty() {
                return bad("symbol without qualified name");
            }
            if self.span.0 < 1 || self.span.1 < self.span.0 {
                return bad("invalid span");
            }
        }
        Ok(())
    }
}

/// Serialized as its [`NodeId::key`].
impl Serialize for NodeId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.key())
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Contains,
    Imports,
    Invokes,
    Inherits,
    TestedBy,
    Documents,
    Configures,
}

impl RelationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::Contains => "contains",
            RelationKind::Imports => "imports",
            RelationKind::Invokes => "invokes",
            RelationKind::Inherits => "inherits",
            RelationKind::TestedBy => "tested_by",
            RelationKind::Documents => "documents",
            RelationKind::Configures => "configures",
        }
    }

    pub fn is_semantic(self) -> bool {
        self != RelationKind::Contains
    }

    /// Whether an edge of this relation may connect the given kinds.
    pub fn allows(self, src: NodeKind, dst: NodeKind) -> bool {
        use NodeKind::*;
        match self {
            RelationKind::Contains => matches!(
                (src, dst),
                (Directory, Directory)
                    | (Directory, File)
                    | (File, Class)
                    | (File, Function)
                    | (Class, Function)
                    | (Class, Class)
            ),
            RelationKind::Imports | RelationKind::Invokes | RelationKind::Inherits => {
                src != Directory && dst != Directory
            }
            RelationKind::TestedBy | RelationKind::Documents | RelationKind::Configures => {
                src != Directory && dst != Directory
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    SameFileCooccurrence,
    ExplicitImport,
    ResolvedImport,
    Inheritance,
    CythonImplementation,
    TestLinkage,
    Documentation,
    Configuration,
    FuzzyNameMatch,
    Structural,
}

impl Provenance {
    pub const ALL: [Provenance; 10] = [
        Provenance::SameFileCooccurrence,
        Provenance::ExplicitImport,
        Provenance::ResolvedImport,
        Provenance::Inheritance,
        Provenance::CythonImplementation,
        Provenance::TestLinkage,
        Provenance::Documentation,
        Provenance::Configuration,
        Provenance::FuzzyNameMatch,
        Provenance::Structural,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::SameFileCooccurrence => "same_file_cooccurrence",
            Provenance::ExplicitImport => "explicit_import",
            Provenance::ResolvedImport => "resolved_import",
            Provenance::Inheritance => "inheritance",
            Provenance::CythonImplementation => "cython_implementation",
            Provenance::TestLinkage => "test_linkage",
            Provenance::Documentation => "documentation",
            Provenance::Configuration => "configuration",
            Provenance::FuzzyNameMatch => "fuzzy_name_match",
            Provenance::Structural => "structural",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Edge {
    pub src: NodeId,
    pub relation: RelationKind,
    pub dst: NodeId,
    pub provenance: Provenance,
    pub confidence: f64,
}

impl Edge {
    /// Builds an edge whose confidence is fixed by its provenance.
    pub fn new(src: NodeId, relation: RelationKind, dst: NodeId, provenance: Provenance) -> Self {
        Edge {
            src,
            relation,
            dst,
            provenance,
            confidence: confidence_of(provenance),
        }
    }

    pub fn contains(parent: NodeId, child: NodeId) -> Self {
        Edge::new(parent, RelationKind::Contains, child, Provenance::Structural)
    }

    /// Path of the part that owns this edge.
    pub fn owner(&self) -> &str {
        match self.relation {
            RelationKind::Contains | RelationKind::TestedBy => &self.dst.path,
            _ => &self.src.path,
        }
    }

    fn sort_key(&self) -> (&NodeId, RelationKind, &NodeId, Provenance) {
        (&self.src, self.relation, &self.dst, self.provenance)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let bad = |why: &str| {
            Err(Error::InvalidArgument(format!(
                "edge {} -{}-> {}: {why}",
                self.src,
                self.relation.as_str(),
                self.dst
            )))
        };
        if self.src == self.dst {
            return bad("self loop");
        }
        if self.confidence != confidence_of(self.provenance) {
            return bad("confidence does not match provenance");
        }
        let structural = self.relation == RelationKind::Contains;
        if structural != (self.provenance == Provenance::Structural) {
            return bad("contains edges must be exactly the structural ones");
        }
        if !self.relation.allows(self.src.kind, self.dst.kind) {
            return bad("relation not allowed between these node kinds");
        }
        Ok(())
    }
}

impl PartialEq for Edge {
    fn eq(&self, other: &Self) -> bool {
        self.sort_key() == other.sort_key() && self.confidence == other.confidence
    }
}

impl Eq for Edge {}

impl PartialOrd for Edge {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Edge {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sort_key()
            .cmp(&other.sort_key())
            .then(self.confidence.total_cmp(&other.confidence))
    }
}

/// Everything the graph stores for one path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Part {
    pub nodes: Vec<NodeId>,
    pub attributes: BTreeMap<NodeId, String>,
    pub structural: Vec<Edge>,
    pub semantic: Vec<Edge>,
}

impl Part {
    fn normalize(&mut self) {
        self.nodes.sort();
        self.nodes.dedup();
        self.structural.sort();
        self.semantic.sort();
    }

    pub fn file_node(&self) -> Option<&NodeId> {
        self.nodes.iter().find(|n| n.kind == NodeKind::File)
    }
}

/// One result of [`RepoGraph::neighborhood`].
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub node: NodeId,
    pub distance: u32,
    pub path_confidence: f64,
}

#[derive(Debug, Default)]
struct Adjacency {
    index: HashMap<NodeId, usize>,
    nodes: Vec<NodeId>,
    /// Undirected semantic adjacency; parallel edges collapse to their max confidence.
    semantic: Vec<Vec<(usize, f64)>>,
}

#[derive(Debug, Clone, Default)]
pub struct RepoGraph {
    snapshot_id: String,
    parts: OrdMap<String, Arc<Part>>,
    community: Option<CommunityAssignment>,
    adjacency: OnceLock<Arc<Adjacency>>,
}

impl RepoGraph {
    pub(crate) fn from_parts(snapshot_id: String, parts: OrdMap<String, Arc<Part>>) -> Self {
        RepoGraph {
            snapshot_id,
            parts,
            community: None,
            adjacency: OnceLock::new(),
        }
    }

    /// Assembles a graph from flat node and edge lists, checking every
    /// node and edge invariant.
    pub fn from_elements(
        snapshot_id: impl Into<String>,
        nodes: impl IntoIterator<Item = NodeId>,
        edges: impl IntoIterator<Item = Edge>,
        attributes: impl IntoIterator<Item = (NodeId, String)>,
    ) -> Result<Self> {
        let mut parts: BTreeMap<String, Part> = BTreeMap::new();
        let mut all = BTreeSet::new();
        for node in nodes {
            node.validate()?;
            parts.entry(node.path.clone()).or_default().nodes.push(node.clone());
            all.insert(node);
        }
        for edge in edges {
            edge.validate()?;
            for end in [&edge.src, &edge.dst] {
                if !all.contains(end) {
                    return Err(Error::NodeNotFound(end.key()));
                }
            }
            let part = parts.entry(edge.owner().to_string()).or_default();
            if edge.relation.is_semantic() {
                part.semantic.push(edge);
            } else {
                part.structural.push(edge);
            }
        }
        for (node, text) in attributes {
            if !all.contains(&node) {
                return Err(Error::NodeNotFound(node.key()));
            }
            parts.entry(node.path.clone()).or_default().attributes.insert(node, text);
        }
        let parts = parts
            .into_iter()
            .map(|(k, mut p)| {
                p.normalize();
                (k, Arc::new(p))
            })
            .collect();
        Ok(RepoGraph::from_parts(snapshot_id.into(), parts))
    }

    pub fn snapshot_id(&self) -> &str {
        &self.snapshot_id
    }

    pub fn with_snapshot_id(mut self, snapshot_id: impl Into<String>) -> Self {
        self.snapshot_id = snapshot_id.into();
        self
    }

    pub fn community(&self) -> Option<&CommunityAssignment> {
        self.community.as_ref()
    }

    pub fn with_community(mut self, community: Option<CommunityAssignment>) -> Self {
        self.community = community;
        self
    }

    pub(crate) fn parts(&self) -> &OrdMap<String, Arc<Part>> {
        &self.parts
    }

    pub fn part(&self, path: &str) -> Option<&Part> {
        self.parts.get(path).map(|p| p.as_ref())
    }

    /// All nodes in `NodeId` order.
    pub fn nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.parts.values().flat_map(|p| p.nodes.iter())
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.parts
            .values()
            .flat_map(|p| p.structural.iter().chain(p.semantic.iter()))
    }

    pub fn semantic_edges(&self) -> impl Iterator<Item = &Edge> {
        self.parts.values().flat_map(|p| p.semantic.iter())
    }

    pub fn sorted_edges(&self) -> Vec<Edge> {
        let mut edges: Vec<Edge> = self.edges().cloned().collect();
        edges.sort();
        edges
    }

    pub fn attributes(&self) -> impl Iterator<Item = (&NodeId, &String)> {
        self.parts.values().flat_map(|p| p.attributes.iter())
    }

    pub fn attribute(&self, node: &NodeId) -> Option<&str> {
        self.parts
            .get(&node.path)
            .and_then(|p| p.attributes.get(node))
            .map(String::as_str)
    }

    pub fn node_count(&self) -> usize {
        self.parts.values().map(|p| p.nodes.len()).sum()
    }

    pub fn edge_count(&self) -> usize {
        self.parts
            .values()
            .map(|p| p.structural.len() + p.semantic.len())
            .sum()
    }

    pub fn contains_node(&self, node: &NodeId) -> bool {
        self.parts
            .get(&node.path)
            .is_some_and(|p| p.nodes.binary_search(node).is_ok())
    }

    pub fn file_node(&self, path: &str) -> Option<&NodeId> {
        self.parts.get(path).and_then(|p| p.file_node())
    }

    pub fn file_nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.parts.values().filter_map(|p| p.file_node())
    }

    pub fn file_paths(&self) -> impl Iterator<Item = &str> {
        self.file_nodes().map(|n| n.path.as_str())
    }

    /// Equal node sets, equal edge multisets, equal attributes.
    pub fn structurally_eq(&self, other: &RepoGraph) -> bool {
        self.nodes().eq(other.nodes())
            && self.sorted_edges() == other.sorted_edges()
            && self.attributes().eq(other.attributes())
    }

    fn adjacency(&self) -> &Adjacency {
        self.adjacency.get_or_init(|| {
            let nodes: Vec<NodeId> = self.nodes().cloned().collect();
            let index: HashMap<NodeId, usize> =
                nodes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
            let mut best: HashMap<(usize, usize), f64> = HashMap::new();
            for e in self.semantic_edges() {
                let (a, b) = (index[&e.src], index[&e.dst]);
                let key = (a.min(b), a.max(b));
                let slot = best.entry(key).or_insert(e.confidence);
                if e.confidence > *slot {
                    *slot = e.confidence;
                }
            }
            let mut semantic = vec![Vec::new(); nodes.len()];
            let mut pairs: Vec<_> = best.into_iter().collect();
            pairs.sort_by_key(|(k, _)| *k);
            for ((a, b), c) in pairs {
                semantic[a].push((b, c));
                semantic[b].push((a, c));
            }
            Arc::new(Adjacency {
                index,
                nodes,
                semantic,
            })
        })
    }

    /// Nodes within `hops` semantic steps of `v`, traversing edges in either
    /// direction and only when their confidence is at least `theta`.
    ///
    /// `path_confidence` is the best bottleneck confidence over all shortest
    /// admissible paths. Results are ordered by (distance, node).
    pub fn neighborhood(&self, v: &NodeId, hops: u32, theta: f64) -> Result<Vec<Neighbor>> {
        if hops == 0 {
            return Err(Error::InvalidArgument("hops must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::InvalidArgument(format!("theta {theta} outside [0,1]")));
        }
        let adj = self.adjacency();
        let start = *adj
            .index
            .get(v)
            .ok_or_else(|| Error::NodeNotFound(v.key()))?;

        let mut found: HashMap<usize, (u32, f64)> = HashMap::new();
        found.insert(start, (0, f64::INFINITY));
        let mut frontier = vec![start];
        for depth in 1..=hops {
            let mut next: Vec<usize> = Vec::new();
            for &u in &frontier {
                let via = found[&u].1;
                for &(w, c) in &adj.semantic[u] {
                    if c < theta {
                        continue;
                    }
                    let bottleneck = via.min(c);
                    match found.get_mut(&w) {
                        None => {
                            found.insert(w, (depth, bottleneck));
                            next.push(w);
                        }
                        Some((d, conf)) if *d == depth && bottleneck > *conf => *conf = bottleneck,
                        Some(_) => {}
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        found.remove(&start);
        let mut out: Vec<Neighbor> = found
            .into_iter()
            .map(|(i, (distance, path_confidence))| Neighbor {
                node: adj.nodes[i].clone(),
                distance,
                path_confidence,
            })
            .collect();
        out.sort_by(|a, b| a.distance.cmp(&b.distance).then_with(|| a.node.cmp(&b.node)));
        Ok(out)
    }

    /// Innermost class or function whose span covers `line`, else the file node.
    pub fn node_for_location(&self, path: &str, line: u32) -> Result<&NodeId> {
        let part = self
            .parts
            .get(path)
            .ok_or_else(|| Error::NodeNotFound(path.to_string()))?;
        let file = part
            .file_node()
            .ok_or_else(|| Error::NodeNotFound(path.to_string()))?;
        let best = part
            .nodes
            .iter()
            .filter(|n| n.kind.is_symbol() && n.span.0 <= line && line <= n.span.1)
            .min_by(|a, b| {
                (a.span.1 - a.span.0)
                    .cmp(&(b.span.1 - b.span.0))
                    .then(b.span.0.cmp(&a.span.0))
                    .then(a.cmp(b))
            });
        Ok(best.unwrap_or(file))
    }

    /// Subgraph induced by `nodes`: exactly those nodes, every edge with both
    /// endpoints among them, their attributes. Communities are dropped.
    pub fn induced_subgraph<'a>(&self, nodes: impl IntoIterator<Item = &'a NodeId>) -> Result<RepoGraph> {
        let keep: BTreeSet<&NodeId> = nodes.into_iter().collect();
        for n in &keep {
            if !self.contains_node(n) {
                return Err(Error::NodeNotFound(n.key()));
            }
        }
        let mut parts: BTreeMap<String, Part> = BTreeMap::new();
        for n in &keep {
            let part = parts.entry(n.path.clone()).or_default();
            part.nodes.push((*n).clone());
            if let Some(text) = self.attribute(n) {
                part.attributes.insert((*n).clone(), text.to_string());
            }
        }
        for e in self.edges() {
            if keep.contains(&e.src) && keep.contains(&e.dst) {
                let part = parts.entry(e.owner().to_string()).or_default();
                if e.relation.is_semantic() {
                    part.semantic.push(e.clone());
                } else {
                    part.structural.push(e.clone());
                }
            }
        }
        let parts = parts
            .into_iter()
            .map(|(k, mut p)| {
                p.normalize();
                (k, Arc::new(p))
            })
            .collect();
        Ok(RepoGraph::from_parts(self.snapshot_id.clone(), parts))
    }

    pub fn to_json(&self) -> Result<String> {
        json::to_canonical_string(&GraphFile::from_graph(self))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile =
            serde_json::from_str(text).map_err(|e| Error::format("graph.json", e))?;
        file.into_graph()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphFile {
    snapshot_id: String,
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
    attributes: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeRecord {
    id: String,
    path: String,
    kind: NodeKind,
    qualified_name: String,
    span: [u32; 2],
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRecord {
    src: String,
    relation: RelationKind,
    dst: String,
    provenance: Provenance,
    confidence: f64,
}

impl GraphFile {
    fn from_graph(g: &RepoGraph) -> Self {
        GraphFile {
            snapshot_id: g.snapshot_id.clone(),
            nodes: g
                .nodes()
                .map(|n| NodeRecord {
                    id: n.key(),
                    path: n.path.clone(),
                    kind: n.kind,
                    qualified_name: n.qualified_name.clone(),
                    span: [n.span.0, n.span.1],
                })
                .collect(),
            edges: g
                .sorted_edges()
                .into_iter()
                .map(|e| EdgeRecord {
                    src: e.src.key(),
                    relation: e.relation,
                    dst: e.dst.key(),
                    provenance: e.provenance,
                    confidence: e.confidence,
                })
                .collect(),
            attributes: g.attributes().map(|(n, t)| (n.key(), t.clone())).collect(),
        }
    }

    fn into_graph(self) -> Result<RepoGraph> {
        let mut by_key: HashMap<String, NodeId> = HashMap::new();
        for r in &self.nodes {
            let node = NodeId {
                path: r.path.clone(),
                kind: r.kind,
                qualified_name: r.qualified_name.clone(),
                span: (r.span[0], r.span[1]),
            };
            if node.key() != r.id {
                return Err(Error::format("graph.json", format!("node id mismatch for {}", r.id)));
            }
            by_key.insert(r.id.clone(), node);
        }
        let lookup = |k: &str| {
            by_key
                .get(k)
                .cloned()
                .ok_or_else(|| Error::NodeNotFound(k.to_string()))
        };
        let mut edges = Vec::with_capacity(self.edges.len());
        for r in &self.edges {
            let edge = Edge::new(lookup(&r.src)?, r.relation, lookup(&r.dst)?, r.provenance);
            if edge.confidence != r.confidence {
                return Err(Error::format(
                    "graph.json",
                    format!("edge confidence {} does not match its provenance", r.confidence),
                ));
            }
            edges.push(edge);
        }
        let mut attributes = Vec::with_capacity(self.attributes.len());
        for (k, v) in self.attributes {
            attributes.push((lookup(&k)?, v));
        }
        let nodes: Vec<NodeId> = self.nodes.iter().map(|r| by_key[&r.id].clone()).collect();
        RepoGraph::from_elements(self.snapshot_id, nodes, edges, attributes)
    }
}
