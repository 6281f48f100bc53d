use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{Loaded, StoreError, ENTITY_RESOLUTION_THRESHOLD};
use crate::risk::fuzzy_match_with_threshold;
use crate::trial::{normalize_name, IngestMode};

pub const HETIONET_COLUMNS: [&str; 7] =
    ["source_id", "source_kind", "source_name", "metaedge", "target_id", "target_kind", "target_name"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Compound,
    Disease,
    Gene,
    Anatomy,
    Pathway,
    SideEffect,
    Symptom,
    PharmacologicClass,
    Other,
}

impl NodeKind {
    /// Case- and space-insensitive; unrecognised labels become `Other`.
    pub fn parse(raw: &str) -> NodeKind {
        let compact: String = raw.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect();
        match compact.as_str() {
            "compound" => NodeKind::Compound,
            "disease" => NodeKind::Disease,
            "gene" => NodeKind::Gene,
            "anatomy" => NodeKind::Anatomy,
            "pathway" => NodeKind::Pathway,
            "sideeffect" => NodeKind::SideEffect,
            "symptom" => NodeKind::Symptom,
            "pharmacologicclass" => NodeKind::PharmacologicClass,
            _ => NodeKind::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Compound => "Compound",
            NodeKind::Disease => "Disease",
            NodeKind::Gene => "Gene",
            NodeKind::Anatomy => "Anatomy",
            NodeKind::Pathway => "Pathway",
            NodeKind::SideEffect => "SideEffect",
            NodeKind::Symptom => "Symptom",
            NodeKind::PharmacologicClass => "PharmacologicClass",
            NodeKind::Other => "Other",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeRef {
    pub id: String,
    pub kind: NodeKind,
    pub name: String,
}

/// Whether a step follows the stored edge (`Forward`) or walks it backwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathStep {
    pub metaedge: String,
    pub direction: Direction,
}

/// A simple path from a compound to a disease.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HetioPath {
    pub nodes: Vec<NodeRef>,
    pub steps: Vec<PathStep>,
}

impl HetioPath {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Checks the step/node arithmetic, simplicity and endpoint kinds.
    pub fn is_well_formed(&self) -> bool {
        let distinct: HashSet<&str> = self.nodes.iter().map(|n| n.id.as_str()).collect();
        !self.steps.is_empty()
            && self.nodes.len() == self.steps.len() + 1
            && distinct.len() == self.nodes.len()
            && self.nodes.first().map(|n| n.kind) == Some(NodeKind::Compound)
            && self.nodes.last().map(|n| n.kind) == Some(NodeKind::Disease)
            && self.steps.iter().all(|s| !s.metaedge.is_empty())
    }
}

/// `Name(Kind) -[metaedge>]- Name(Kind) ...`, with `<` for steps against the edge direction.
pub fn render_path(path: &HetioPath) -> String {
    let mut out = String::new();
    for (i, node) in path.nodes.iter().enumerate() {
        if i > 0 {
            let step = &path.steps[i - 1];
            let arrow = match step.direction {
                Direction::Forward => '>',
                Direction::Backward => '<',
            };
            out.push_str(&format!(" -[{}{arrow}]- ", step.metaedge));
        }
        out.push_str(&format!("{}({})", node.name, node.kind));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathBounds {
    pub max_len: usize,
    pub max_paths: usize,
}

impl Default for PathBounds {
    fn default() -> Self {
        PathBounds { max_len: 4, max_paths: 25 }
    }
}

#[derive(Debug, Clone)]
struct Node {
    id: String,
    kind: NodeKind,
    name: String,
}

#[derive(Debug, Clone)]
struct Edge {
    source: usize,
    metaedge: String,
    target: usize,
}

#[derive(Debug, Clone, Copy)]
struct Adjacent {
    node: usize,
    edge: usize,
    direction: Direction,
}

/// Typed multigraph over biomedical entities. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct HetioGraph {
    nodes: Vec<Node>,
    ids: HashMap<String, usize>,
    edges: Vec<Edge>,
    edge_keys: HashSet<(usize, String, usize)>,
    adjacency: Vec<Vec<Adjacent>>,
    names: HashMap<NodeKind, BTreeMap<String, usize>>,
}

impl HetioGraph {
    /// Reads the tab-separated edge list described by [`HETIONET_COLUMNS`].
    pub fn load<R: Read>(source: R, mode: IngestMode) -> Result<Loaded<HetioGraph>, StoreError> {
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .quoting(false)
            .flexible(true)
            .has_headers(true)
            .from_reader(source);
        let headers = reader.headers()?.clone();
        let mut columns = [0usize; 7];
        for (slot, name) in columns.iter_mut().zip(HETIONET_COLUMNS) {
            *slot = headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| StoreError::MissingColumn(name.to_string()))?;
        }

        let mut graph = HetioGraph::default();
        let mut warnings = Vec::new();
        for (index, row) in reader.records().enumerate() {
            let row_number = index + 1;
            let parsed = row.map_err(|e| e.to_string()).and_then(|row| {
                if row.len() != headers.len() {
                    return Err(format!("expected {} fields, found {}", headers.len(), row.len()));
                }
                let cell = |i: usize| row.get(columns[i]).unwrap_or("").trim().to_string();
                let fields: Vec<String> = (0..7).map(cell).collect();
                for (value, name) in fields.iter().zip(HETIONET_COLUMNS) {
                    if value.is_empty() && name != "source_name" && name != "target_name" {
                        return Err(format!("empty {name}"));
                    }
                }
                Ok(fields)
            });
            let fields = match parsed {
                Ok(fields) => fields,
                Err(message) => match mode {
                    IngestMode::Strict => return Err(StoreError::Row { row: row_number, message }),
                    IngestMode::Lenient => {
                        let warning = format!("row {row_number}: skipped ({message})");
                        log::warn!("{warning}");
                        warnings.push(warning);
                        continue;
                    }
                },
            };
            let source = graph.intern(&fields[0], NodeKind::parse(&fields[1]), &fields[2], &mut warnings);
            let target = graph.intern(&fields[4], NodeKind::parse(&fields[5]), &fields[6], &mut warnings);
            graph.connect(source, &fields[3], target);
        }
        Ok(Loaded { value: graph, warnings })
    }

    /// Adds a node; an existing id keeps its first name and kind.
    pub fn add_node(&mut self, id: &str, kind: NodeKind, name: &str) -> usize {
        let mut ignored = Vec::new();
        self.intern(id, kind, name, &mut ignored)
    }

    /// Adds a directed labelled edge between existing node ids. Duplicate edges are ignored.
    pub fn add_edge(&mut self, source_id: &str, metaedge: &str, target_id: &str) -> Result<bool, StoreError> {
        let lookup = |id: &str| {
            self.ids.get(id).copied().ok_or_else(|| StoreError::Row { row: 0, message: format!("unknown node id {id:?}") })
        };
        let (source, target) = (lookup(source_id)?, lookup(target_id)?);
        if metaedge.trim().is_empty() {
            return Err(StoreError::Row { row: 0, message: "empty metaedge".into() });
        }
        Ok(self.connect(source, metaedge.trim(), target))
    }

    fn intern(&mut self, id: &str, kind: NodeKind, name: &str, warnings: &mut Vec<String>) -> usize {
        if let Some(&index) = self.ids.get(id) {
            let node = &self.nodes[index];
            if node.name != name || node.kind != kind {
                let warning = format!(
                    "node {id}: conflicting definition {name:?} ({kind}) ignored, keeping {:?} ({})",
                    node.name, node.kind
                );
                log::warn!("{warning}");
                warnings.push(warning);
            }
            return index;
        }
        let index = self.nodes.len();
        self.nodes.push(Node { id: id.to_string(), kind, name: name.to_string() });
        self.ids.insert(id.to_string(), index);
        self.adjacency.push(Vec::new());
        self.names.entry(kind).or_default().entry(normalize_name(name)).or_insert(index);
        index
    }

    fn connect(&mut self, source: usize, metaedge: &str, target: usize) -> bool {
        if !self.edge_keys.insert((source, metaedge.to_string(), target)) {
            return false;
        }
        let edge = self.edges.len();
        self.edges.push(Edge { source, metaedge: metaedge.to_string(), target });
        if source != target {
            self.adjacency[source].push(Adjacent { node: target, edge, direction: Direction::Forward });
            self.adjacency[target].push(Adjacent { node: source, edge, direction: Direction::Backward });
        }
        true
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(source_id, metaedge, target_id)` in insertion order.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.edges
            .iter()
            .map(|e| (self.nodes[e.source].id.as_str(), e.metaedge.as_str(), self.nodes[e.target].id.as_str()))
    }

    pub fn node(&self, id: &str) -> Option<NodeRef> {
        self.ids.get(id).map(|&i| self.node_ref(i))
    }

    fn node_ref(&self, index: usize) -> NodeRef {
        let node = &self.nodes[index];
        NodeRef { id: node.id.clone(), kind: node.kind, name: node.name.clone() }
    }

    /// Resolves a name among nodes of `kind`: exact normalized match, else fuzzy at 0.6.
    pub fn resolve(&self, kind: NodeKind, name: &str) -> Option<NodeRef> {
        let names = self.names.get(&kind)?;
        let key = normalize_name(name);
        let index = match names.get(&key) {
            Some(&index) => index,
            None => {
                let (matched, _) =
                    fuzzy_match_with_threshold(&key, names.keys().map(String::as_str), ENTITY_RESOLUTION_THRESHOLD)?;
                names[matched]
            }
        };
        Some(self.node_ref(index))
    }

    /// Every simple path of at most `max_len` edges from the drug's compound
    /// node to the disease node, walking edges in either direction. Ordered by
    /// length, then node-id sequence, then step labels; cut to `max_paths`.
    pub fn find_paths(&self, drug_name: &str, disease_name: &str, bounds: PathBounds) -> Result<Vec<HetioPath>, StoreError> {
        if bounds.max_len == 0 || bounds.max_paths == 0 {
            return Err(StoreError::Bounds(format!(
                "max_len and max_paths must be >= 1 (got {} and {})",
                bounds.max_len, bounds.max_paths
            )));
        }
        let source = self
            .resolve(NodeKind::Compound, drug_name)
            .ok_or_else(|| StoreError::Unresolved { entity: "drug", name: drug_name.to_string() })?;
        let target = self
            .resolve(NodeKind::Disease, disease_name)
            .ok_or_else(|| StoreError::Unresolved { entity: "disease", name: disease_name.to_string() })?;
        Ok(self.paths_between(self.ids[&source.id], self.ids[&target.id], bounds))
    }

    fn paths_between(&self, source: usize, target: usize, bounds: PathBounds) -> Vec<HetioPath> {
        let distance = self.distances_to(target, bounds.max_len);
        let mut result = Vec::new();
        for length in 1..=bounds.max_len {
            if distance[source] > length {
                continue;
            }
            let mut found = Vec::new();
            let mut search = Search {
                graph: self,
                target,
                length,
                distance: &distance,
                on_path: vec![false; self.nodes.len()],
                nodes: vec![source],
                steps: Vec::new(),
                found: &mut found,
            };
            search.on_path[source] = true;
            search.extend(source);
            found.sort_by(|a, b| self.path_key(a).cmp(&self.path_key(b)));
            result.extend(found.into_iter().map(|raw| self.materialize(raw)));
            if result.len() >= bounds.max_paths {
                result.truncate(bounds.max_paths);
                break;
            }
        }
        result
    }

    /// Undirected hop counts to `target`, capped: unreachable within `limit` stays `usize::MAX`.
    fn distances_to(&self, target: usize, limit: usize) -> Vec<usize> {
        let mut distance = vec![usize::MAX; self.nodes.len()];
        distance[target] = 0;
        let mut queue = VecDeque::from([target]);
        while let Some(node) = queue.pop_front() {
            let next = distance[node] + 1;
            if next > limit {
                continue;
            }
            for adj in &self.adjacency[node] {
                if distance[adj.node] == usize::MAX {
                    distance[adj.node] = next;
                    queue.push_back(adj.node);
                }
            }
        }
        distance
    }

    fn path_key<'a>(&'a self, raw: &RawPath) -> (Vec<&'a str>, Vec<(&'a str, Direction)>) {
        (
            raw.nodes.iter().map(|&n| self.nodes[n].id.as_str()).collect(),
            raw.steps.iter().map(|&(e, d)| (self.edges[e].metaedge.as_str(), d)).collect(),
        )
    }

    fn materialize(&self, raw: RawPath) -> HetioPath {
        HetioPath {
            nodes: raw.nodes.iter().map(|&n| self.node_ref(n)).collect(),
            steps: raw
                .steps
                .iter()
                .map(|&(e, direction)| PathStep { metaedge: self.edges[e].metaedge.clone(), direction })
                .collect(),
        }
    }
}

/// Convenience wrapper using the default bounds (length 4, 25 paths).
pub fn find_paths_default(graph: &HetioGraph, drug_name: &str, disease_name: &str) -> Result<Vec<HetioPath>, StoreError> {
    graph.find_paths(drug_name, disease_name, PathBounds::default())
}

struct RawPath {
    nodes: Vec<usize>,
    steps: Vec<(usize, Direction)>,
}

/// Depth-first enumeration of paths with exactly `length` edges, pruned by distance to the target.
struct Search<'g, 'f> {
    graph: &'g HetioGraph,
    target: usize,
    length: usize,
    distance: &'g [usize],
    on_path: Vec<bool>,
    nodes: Vec<usize>,
    steps: Vec<(usize, Direction)>,
    found: &'f mut Vec<RawPath>,
}

impl Search<'_, '_> {
    fn extend(&mut self, node: usize) {
        let depth = self.steps.len();
        if depth == self.length {
            if node == self.target {
                self.found.push(RawPath { nodes: self.nodes.clone(), steps: self.steps.clone() });
            }
            return;
        }
        if node == self.target {
            return;
        }
        let remaining = self.length - depth - 1;
        for adj in &self.graph.adjacency[node] {
            if self.on_path[adj.node] || self.distance[adj.node] > remaining {
                continue;
            }
            self.on_path[adj.node] = true;
            self.nodes.push(adj.node);
            self.steps.push((adj.edge, adj.direction));
            self.extend(adj.node);
            self.steps.pop();
            self.nodes.pop();
            self.on_path[adj.node] = false;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "source_id\tsource_kind\tsource_name\tmetaedge\ttarget_id\ttarget_kind\ttarget_name\n";

    fn load(body: &str) -> Loaded<HetioGraph> {
        HetioGraph::load(format!("{HEADER}{body}").as_bytes(), IngestMode::Strict).unwrap()
    }

    #[test]
    fn minimal_graph() {
        let graph = load("C1\tCompound\tAspirin\ttreats\tD1\tDisease\tstroke\n").value;
        assert_eq!((graph.node_count(), graph.edge_count()), (2, 1));
        let paths = graph.find_paths("Aspirin", "stroke", PathBounds::default()).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].len(), 1);
        assert!(paths[0].is_well_formed());
        assert_eq!(render_path(&paths[0]), "Aspirin(Compound) -[treats>]- stroke(Disease)");
    }

    #[test]
    fn duplicate_edges_collapse() {
        let row = "C1\tCompound\tAspirin\ttreats\tD1\tDisease\tstroke\n";
        let graph = load(&format!("{row}{row}")).value;
        assert_eq!(graph.edge_count(), 1);
    }

    #[test]
    fn conflicting_names_first_wins() {
        let loaded = load("C1\tCompound\tAspirin\ttreats\tD1\tDisease\tstroke\nC1\tCompound\tASA\tpalliates\tD1\tDisease\tstroke\n");
        assert_eq!(loaded.value.node("C1").unwrap().name, "Aspirin");
        assert_eq!(loaded.warnings.len(), 1);
        assert_eq!(loaded.value.edge_count(), 2);
    }

    #[test]
    fn unknown_kind_maps_to_other() {
        let graph = load("C1\tCompound\tAspirin\tparticipates\tX1\tBiological Process\tplatelet aggregation\n").value;
        assert_eq!(graph.node("X1").unwrap().kind, NodeKind::Other);
        assert_eq!(NodeKind::parse("Side Effect"), NodeKind::SideEffect);
        assert_eq!(NodeKind::parse("Pharmacologic Class"), NodeKind::PharmacologicClass);
    }

    #[test]
    fn malformed_rows_strict_and_lenient() {
        let body = "C1\tCompound\tAspirin\ttreats\tD1\tDisease\tstroke\nC2\tCompound\n";
        let text = format!("{HEADER}{body}");
        assert!(matches!(
            HetioGraph::load(text.as_bytes(), IngestMode::Strict),
            Err(StoreError::Row { row: 2, .. })
        ));
        let lenient = HetioGraph::load(text.as_bytes(), IngestMode::Lenient).unwrap();
        assert_eq!(lenient.value.edge_count(), 1);
        assert_eq!(lenient.warnings.len(), 1);
    }

    #[test]
    fn missing_column() {
        let err = HetioGraph::load("source_id\tsource_kind\n".as_bytes(), IngestMode::Strict).unwrap_err();
        assert!(matches!(err, StoreError::MissingColumn(ref c) if c == "source_name"));
    }

    #[test]
    fn disconnected_components_have_no_paths() {
        let graph = load("C1\tCompound\tAspirin\tbinds\tG1\tGene\tPTGS1\nD1\tDisease\tstroke\tassociates\tG2\tGene\tF2\n").value;
        assert!(graph.find_paths("aspirin", "stroke", PathBounds::default()).unwrap().is_empty());
    }

    #[test]
    fn reversed_edges_render_with_backward_marker() {
        let graph = load("C1\tCompound\tAspirin\tbinds\tG1\tGene\tPTGS1\nD1\tDisease\tstroke\tassociates\tG1\tGene\tPTGS1\n").value;
        let paths = graph.find_paths("Aspirin", "stroke", PathBounds::default()).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(
            render_path(&paths[0]),
            "Aspirin(Compound) -[binds>]- PTGS1(Gene) -[associates<]- stroke(Disease)"
        );
    }

    #[test]
    fn unresolvable_entities_are_named() {
        let graph = load("C1\tCompound\tAspirin\ttreats\tD1\tDisease\tstroke\n").value;
        match graph.find_paths("qqqqqqqq", "stroke", PathBounds::default()) {
            Err(StoreError::Unresolved { entity, .. }) => assert_eq!(entity, "drug"),
            other => panic!("unexpected {other:?}"),
        }
        match graph.find_paths("aspirin", "qqqqqq", PathBounds::default()) {
            Err(StoreError::Unresolved { entity, .. }) => assert_eq!(entity, "disease"),
            other => panic!("unexpected {other:?}"),
        }
        // a disease name never resolves to a compound node
        assert!(graph.find_paths("stroke", "stroke", PathBounds::default()).is_err());
    }

    #[test]
    fn fuzzy_resolution() {
        let graph = load("C1\tCompound\tAggrenox capsule\ttreats\tD1\tDisease\tcerebrovascular accident\n").value;
        let paths = graph.find_paths("Aggrenox capsules", "cerebrovascular accidents", PathBounds::default()).unwrap();
        assert_eq!(paths.len(), 1);
    }

    #[test]
    fn zero_bounds_rejected() {
        let graph = load("C1\tCompound\tAspirin\ttreats\tD1\tDisease\tstroke\n").value;
        assert!(graph.find_paths("Aspirin", "stroke", PathBounds { max_len: 0, max_paths: 1 }).is_err());
        assert!(graph.find_paths("Aspirin", "stroke", PathBounds { max_len: 1, max_paths: 0 }).is_err());
    }

    #[test]
    fn truncation_keeps_prefix() {
        let mut rows = String::from("C1\tCompound\tDrug\ttreats\tD1\tDisease\tIll\n");
        for g in 0..6 {
            rows.push_str(&format!("C1\tCompound\tDrug\tbinds\tG{g}\tGene\tgene{g}\n"));
            rows.push_str(&format!("D1\tDisease\tIll\tassociates\tG{g}\tGene\tgene{g}\n"));
        }
        let graph = load(&rows).value;
        let all = graph.find_paths("Drug", "Ill", PathBounds { max_len: 4, max_paths: 1000 }).unwrap();
        for k in 1..all.len() {
            let prefix = graph.find_paths("Drug", "Ill", PathBounds { max_len: 4, max_paths: k }).unwrap();
            assert_eq!(prefix[..], all[..k]);
        }
        assert_eq!(all[0].len(), 1);
        assert!(all.windows(2).all(|w| w[0].len() <= w[1].len()));
    }
}
