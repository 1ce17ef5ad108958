//! Directed graph store, label table, text ingestion and train/test splitting.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Column separator of an edge-list or label file.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeListFormat {
    /// Any run of spaces or tabs.
    #[default]
    Whitespace,
    /// Comma separated.
    Csv,
}

impl EdgeListFormat {
    fn tokens<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self {
            EdgeListFormat::Whitespace => line.split_whitespace().collect(),
            EdgeListFormat::Csv => line.split(',').map(str::trim).collect(),
        }
    }
}

/// Immutable directed multigraph. Edges keep file order and multiplicity.
#[derive(Clone, Debug)]
pub struct DirectedGraph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    node_names: Option<Vec<String>>,
    name_index: HashMap<String, usize>,
    has_self_loops: bool,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
}

impl DirectedGraph {
    /// Graph over `num_nodes` anonymous nodes. Panics if an endpoint is out of range.
    pub fn new(num_nodes: usize, edges: Vec<(usize, usize)>) -> Self {
        Self::build(num_nodes, edges, None)
    }

    /// Graph with a name per node id.
    pub fn with_names(names: Vec<String>, edges: Vec<(usize, usize)>) -> Self {
        let n = names.len();
        Self::build(n, edges, Some(names))
    }

    fn build(
        num_nodes: usize,
        edges: Vec<(usize, usize)>,
        node_names: Option<Vec<String>>,
    ) -> Self {
        let mut out_edges = vec![Vec::new(); num_nodes];
        let mut in_edges = vec![Vec::new(); num_nodes];
        let mut has_self_loops = false;
        for (e, &(s, r)) in edges.iter().enumerate() {
            assert!(
                s < num_nodes && r < num_nodes,
                "edge ({s},{r}) outside [0,{num_nodes})"
            );
            out_edges[s].push(e);
            in_edges[r].push(e);
            has_self_loops |= s == r;
        }
        let name_index = match &node_names {
            Some(names) => names
                .iter()
                .enumerate()
                .map(|(i, n)| (n.clone(), i))
                .collect(),
            None => (0..num_nodes).map(|i| (i.to_string(), i)).collect(),
        };
        DirectedGraph {
            num_nodes,
            edges,
            node_names,
            name_index,
            has_self_loops,
            out_edges,
            in_edges,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> (usize, usize) {
        self.edges[e]
    }

    /// Ids of edges leaving `v`, in edge-list order.
    pub fn out_edges(&self, v: usize) -> &[usize] {
        &self.out_edges[v]
    }

    pub fn in_edges(&self, v: usize) -> &[usize] {
        &self.in_edges[v]
    }

    /// Number of edge endpoints at `v`; a self-loop counts twice.
    pub fn degree(&self, v: usize) -> usize {
        self.out_edges[v].len() + self.in_edges[v].len()
    }

    pub fn has_self_loops(&self) -> bool {
        self.has_self_loops
    }

    pub fn multiplicity(&self, s: usize, r: usize) -> usize {
        self.out_edges[s]
            .iter()
            .filter(|&&e| self.edges[e].1 == r)
            .count()
    }

    pub fn node_name(&self, v: usize) -> String {
        match &self.node_names {
            Some(names) => names[v].clone(),
            None => v.to_string(),
        }
    }

    pub fn node_id(&self, name: &str) -> Option<usize> {
        self.name_index.get(name).copied()
    }

    /// Distinct ordered pairs with per-node neighbour lists, the view used by
    /// the Bernoulli-link models. Self-loops are dropped unless `keep_self_loops`.
    pub fn binary_links(&self, keep_self_loops: bool) -> BinaryLinks {
        let mut out = vec![Vec::new(); self.num_nodes];
        let mut inn = vec![Vec::new(); self.num_nodes];
        let mut self_loop = vec![false; self.num_nodes];
        let mut pairs: Vec<(usize, usize)> = self.edges.clone();
        pairs.sort_unstable();
        pairs.dedup();
        let mut num_links = 0;
        for (s, r) in pairs {
            if s == r {
                if keep_self_loops {
                    self_loop[s] = true;
                    num_links += 1;
                }
                continue;
            }
            out[s].push(r);
            inn[r].push(s);
            num_links += 1;
        }
        BinaryLinks {
            out,
            inn,
            self_loop,
            num_links,
        }
    }
}

/// Deduplicated adjacency. `out`/`inn` never contain the node itself.
#[derive(Clone, Debug)]
pub struct BinaryLinks {
    pub out: Vec<Vec<usize>>,
    pub inn: Vec<Vec<usize>>,
    pub self_loop: Vec<bool>,
    pub num_links: usize,
}

/// Read a two-column edge list. Nodes get dense ids in first-appearance order.
pub fn load_edge_list(path: &Path, format: EdgeListFormat) -> Result<DirectedGraph> {
    let text = fs::read_to_string(path)?;
    parse_edge_list(&text, format).map_err(|(line, msg)| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    })
}

pub fn parse_edge_list(
    text: &str,
    format: EdgeListFormat,
) -> std::result::Result<DirectedGraph, (usize, String)> {
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut edges = Vec::new();
    let mut intern = |tok: &str| -> usize {
        if let Some(&id) = index.get(tok) {
            return id;
        }
        let id = names.len();
        names.push(tok.to_string());
        index.insert(tok.to_string(), id);
        id
    };
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks = format.tokens(line);
        if toks.len() != 2 || toks.iter().any(|t| t.is_empty()) {
            return Err((
                lineno + 1,
                format!("expected `sender receiver`, found {} field(s)", toks.len()),
            ));
        }
        let s = intern(toks[0]);
        let r = intern(toks[1]);
        edges.push((s, r));
    }
    Ok(DirectedGraph::with_names(names, edges))
}

pub fn write_edge_list(graph: &DirectedGraph, path: &Path) -> Result<()> {
    let mut out = String::new();
    for &(s, r) in graph.edges() {
        writeln!(out, "{}\t{}", graph.node_name(s), graph.node_name(r)).unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

/// Class assignment and train/test membership per node id.
#[derive(Clone, Debug)]
pub struct LabelTable {
    class_names: Vec<String>,
    labels: Vec<Option<usize>>,
    split: Vec<Split>,
}

impl LabelTable {
    /// Labelled nodes start as TRAIN, unlabelled as TEST.
    pub fn new(class_names: Vec<String>, labels: Vec<Option<usize>>) -> Self {
        let c = class_names.len();
        assert!(
            labels.iter().flatten().all(|&y| y < c),
            "class index out of range"
        );
        let split = labels
            .iter()
            .map(|l| {
                if l.is_some() {
                    Split::Train
                } else {
                    Split::Test
                }
            })
            .collect();
        LabelTable {
            class_names,
            labels,
            split,
        }
    }

    /// Classes named "0".."C-1".
    pub fn from_indices(num_classes: usize, labels: Vec<Option<usize>>) -> Self {
        Self::new((0..num_classes).map(|c| c.to_string()).collect(), labels)
    }

    pub fn with_split(mut self, split: Vec<Split>) -> Result<Self> {
        if split.len() != self.labels.len() {
            return Err(Error::Config("split length differs from node count".into()));
        }
        for (v, s) in split.iter().enumerate() {
            if *s == Split::Train && self.labels[v].is_none() {
                return Err(Error::Config(format!("TRAIN node {v} has no label")));
            }
        }
        self.split = split;
        Ok(self)
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn label(&self, v: usize) -> Option<usize> {
        self.labels[v]
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn split(&self, v: usize) -> Split {
        self.split[v]
    }

    pub fn splits(&self) -> &[Split] {
        &self.split
    }

    pub fn is_train(&self, v: usize) -> bool {
        self.split[v] == Split::Train
    }

    /// Label visible to a model: known only on TRAIN nodes.
    pub fn train_label(&self, v: usize) -> Option<usize> {
        if self.is_train(v) {
            self.labels[v]
        } else {
            None
        }
    }

    pub fn train_nodes(&self) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&v| self.is_train(v))
            .collect()
    }

    pub fn test_nodes(&self) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&v| !self.is_train(v))
            .collect()
    }

    /// TEST nodes that carry a ground-truth label, the ones that get scored.
    pub fn scored_test_nodes(&self) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&v| !self.is_train(v) && self.labels[v].is_some())
            .collect()
    }
}

/// Read `node class` lines. Classes get dense ids in first-appearance order.
pub fn load_labels(path: &Path, graph: &DirectedGraph) -> Result<LabelTable> {
    let text = fs::read_to_string(path)?;
    parse_labels(&text, graph, EdgeListFormat::Whitespace).map_err(|e| match e {
        LabelParseError::Line(line, msg) => Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        },
        LabelParseError::Other(e) => e,
    })
}

#[derive(Debug)]
pub enum LabelParseError {
    Line(usize, String),
    Other(Error),
}

pub fn parse_labels(
    text: &str,
    graph: &DirectedGraph,
    format: EdgeListFormat,
) -> std::result::Result<LabelTable, LabelParseError> {
    let mut class_names: Vec<String> = Vec::new();
    let mut labels: Vec<Option<usize>> = vec![None; graph.num_nodes()];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks = format.tokens(line);
        if toks.len() != 2 {
            return Err(LabelParseError::Line(
                lineno + 1,
                format!("expected `node class`, found {} field(s)", toks.len()),
            ));
        }
        let v = graph
            .node_id(toks[0])
            .ok_or_else(|| LabelParseError::Other(Error::UnknownNode(toks[0].to_string())))?;
        let c = match class_names.iter().position(|c| c == toks[1]) {
            Some(c) => c,
            None => {
                class_names.push(toks[1].to_string());
                class_names.len() - 1
            }
        };
        match labels[v] {
            Some(prev) if prev != c => {
                return Err(LabelParseError::Other(Error::ConflictingLabel {
                    node: toks[0].to_string(),
                    first: class_names[prev].clone(),
                    second: toks[1].to_string(),
                }))
            }
            _ => labels[v] = Some(c),
        }
    }
    Ok(LabelTable::new(class_names, labels))
}

pub fn write_labels(graph: &DirectedGraph, labels: &LabelTable, path: &Path) -> Result<()> {
    let mut out = String::new();
    for v in 0..labels.num_nodes() {
        if let Some(c) = labels.label(v) {
            writeln!(out, "{}\t{}", graph.node_name(v), labels.class_names()[c]).unwrap();
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_split(graph: &DirectedGraph, labels: &LabelTable, path: &Path) -> Result<()> {
    let mut out = String::new();
    for v in 0..labels.num_nodes() {
        let tag = match labels.split(v) {
            Split::Train => "TRAIN",
            Split::Test => "TEST",
        };
        writeln!(out, "{}\t{}", graph.node_name(v), tag).unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

/// Apply a split file written by [`write_split`]. Nodes not listed become TEST.
pub fn load_split(path: &Path, graph: &DirectedGraph, labels: LabelTable) -> Result<LabelTable> {
    let text = fs::read_to_string(path)?;
    let mut split = vec![Split::Test; graph.num_nodes()];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        if toks.len() != 2 {
            return Err(parse_err(format!(
                "expected `node TRAIN|TEST`, found {} field(s)",
                toks.len()
            )));
        }
        let v = graph
            .node_id(toks[0])
            .ok_or_else(|| Error::UnknownNode(toks[0].to_string()))?;
        split[v] = match toks[1] {
            "TRAIN" => Split::Train,
            "TEST" => Split::Test,
            other => return Err(parse_err(format!("unknown split tag `{other}`"))),
        };
    }
    labels.with_split(split)
}

/// Stratified split over labelled nodes. The TRAIN total is
/// `round(fraction * labelled)`, shared out by largest remainder so each class
/// gets within one node of `fraction * size` (and at least one node).
/// Unlabelled nodes are TEST.
pub fn split_train_test(labels: &LabelTable, train_fraction: f64, seed: u64) -> Result<LabelTable> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1], got {train_fraction}"
        )));
    }
    let mut rng = rng::substream(seed, "split", 0);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); labels.num_classes()];
    for v in 0..labels.num_nodes() {
        if let Some(c) = labels.label(v) {
            members[c].push(v);
        }
    }
    let labelled: usize = members.iter().map(Vec::len).sum();
    let target = (train_fraction * labelled as f64).round() as usize;
    let mut take: Vec<usize> = Vec::with_capacity(members.len());
    for (c, m) in members.iter().enumerate() {
        if m.is_empty() {
            log::warn!("class `{}` has no labelled nodes", labels.class_names()[c]);
        }
        take.push((train_fraction * m.len() as f64).floor() as usize);
    }
    let mut order: Vec<usize> = (0..members.len())
        .filter(|&c| !members[c].is_empty())
        .collect();
    order.shuffle(&mut rng);
    order.sort_by(|&a, &b| {
        let rem = |c: usize| train_fraction * members[c].len() as f64 - take[c] as f64;
        rem(b).total_cmp(&rem(a))
    });
    let mut spare = target.saturating_sub(take.iter().sum());
    for &c in &order {
        if spare == 0 {
            break;
        }
        if take[c] < members[c].len() {
            take[c] += 1;
            spare -= 1;
        }
    }
    let mut split = vec![Split::Test; labels.num_nodes()];
    for (c, m) in members.iter_mut().enumerate() {
        if m.is_empty() {
            continue;
        }
        m.shuffle(&mut rng);
        for &v in &m[..take[c].clamp(1, m.len())] {
            split[v] = Split::Train;
        }
    }
    labels.clone().with_split(split)
}
