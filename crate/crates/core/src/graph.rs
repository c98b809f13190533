//! Edge-weighted undirected graphs.
//!
//! Nodes are dense ids `0..n`. Each undirected edge is stored once as
//! `(u, v, p)` with `u < v`, where `p` is the probability that the edge
//! transmits a contagion in the independent cascade model.

use std::collections::HashMap;
use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An undirected graph with per-edge cascade probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    // (neighbor, edge index) per node
    adj: Vec<Vec<(usize, usize)>>,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl TryFrom<GraphRepr> for WeightedGraph {
    type Error = Error;

    fn try_from(r: GraphRepr) -> Result<Self> {
        WeightedGraph::new(r.n, r.edges)
    }
}

impl From<WeightedGraph> for GraphRepr {
    fn from(g: WeightedGraph) -> Self {
        GraphRepr { n: g.n, edges: g.edges }
    }
}

pub(crate) fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::param(format!("{name} must lie in [0, 1], got {p}")))
    }
}

impl WeightedGraph {
    /// Build a graph, validating ids, probabilities and uniqueness of
    /// unordered pairs. Edges are normalised so that `u < v`.
    pub fn new(n: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        let mut normalized = Vec::with_capacity(edges.len());
        for (u, v, p) in edges {
            if u >= n || v >= n {
                return Err(Error::param(format!("edge ({u}, {v}) out of range for n = {n}")));
            }
            if u == v {
                return Err(Error::param(format!("self-loop on node {u}")));
            }
            check_prob("edge probability", p)?;
            let (a, b) = if u < v { (u, v) } else { (v, u) };
            if !seen.insert((a, b)) {
                return Err(Error::param(format!("duplicate edge ({a}, {b})")));
            }
            normalized.push((a, b, p));
        }
        let mut adj = vec![Vec::new(); n];
        for (i, &(u, v, _)) in normalized.iter().enumerate() {
            adj[u].push((v, i));
            adj[v].push((u, i));
        }
        Ok(WeightedGraph {
            n,
            edges: normalized,
            adj,
        })
    }

    /// A graph with `n` nodes and no edges.
    pub fn empty(n: usize) -> Self {
        WeightedGraph {
            n,
            edges: Vec::new(),
            adj: vec![Vec::new(); n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Neighbors of `v` as `(neighbor, edge index)` pairs.
    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    /// Same topology with every edge weight replaced by `p`.
    pub fn with_uniform_weight(&self, p: f64) -> Result<Self> {
        check_prob("cascade probability", p)?;
        let mut g = self.clone();
        for e in &mut g.edges {
            e.2 = p;
        }
        Ok(g)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    /// Write the topology as a plain `u v` edge list that `load_edge_list`
    /// reads back with the identity remap. Node `v` is introduced through an
    /// edge to a lower id when it has one, otherwise by a `v v` line, so
    /// isolated nodes survive the round trip.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# n={} edges={}", self.n, self.edges.len())?;
        let mut written = vec![false; self.edges.len()];
        for v in 0..self.n {
            let intro = self.adj[v].iter().filter(|&&(u, _)| u < v).map(|&(_, e)| e).min();
            match intro {
                Some(e) => {
                    written[e] = true;
                    writeln!(w, "{} {}", self.edges[e].0, self.edges[e].1)?;
                }
                None => writeln!(w, "{v} {v}")?,
            }
        }
        for (e, &(u, v, _)) in self.edges.iter().enumerate() {
            if !written[e] {
                writeln!(w, "{u} {v}")?;
            }
        }
        Ok(())
    }
}

/// G(n, q) random graph where every included edge carries `cascade_prob`.
pub fn erdos_renyi<R: Rng + ?Sized>(n: usize, edge_prob: f64, cascade_prob: f64, rng: &mut R) -> Result<WeightedGraph> {
    if n == 0 {
        return Err(Error::param("erdos_renyi needs n >= 1"));
    }
    check_prob("edge probability", edge_prob)?;
    check_prob("cascade probability", cascade_prob)?;
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.gen_bool(edge_prob) {
                edges.push((u, v, cascade_prob));
            }
        }
    }
    WeightedGraph::new(n, edges)
}

/// Star on `n` nodes: every other node is joined to `center` with weight
/// `spoke_prob`.
pub fn star_graph(n: usize, center: usize, spoke_prob: f64) -> Result<WeightedGraph> {
    if n < 2 {
        return Err(Error::param("star graph needs n >= 2"));
    }
    if center >= n {
        return Err(Error::param(format!("center {center} out of range for n = {n}")));
    }
    check_prob("spoke probability", spoke_prob)?;
    let edges = (0..n)
        .filter(|&v| v != center)
        .map(|v| (center, v, spoke_prob))
        .collect();
    WeightedGraph::new(n, edges)
}

/// `l` disjoint cliques of size `n / l` with weight-1 edges. Clique `j`
/// holds nodes `j*(n/l) .. (j+1)*(n/l)`.
pub fn clique_union(n: usize, l: usize) -> Result<WeightedGraph> {
    if l == 0 || !n.is_multiple_of(l) {
        return Err(Error::param(format!("clique count {l} must divide n = {n}")));
    }
    let size = n / l;
    let mut edges = Vec::new();
    for j in 0..l {
        let base = j * size;
        for a in 0..size {
            for b in (a + 1)..size {
                edges.push((base + a, base + b, 1.0));
            }
        }
    }
    WeightedGraph::new(n, edges)
}

/// Result of reading an external edge list.
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: WeightedGraph,
    /// `external_ids[i]` is the id of dense node `i` in the source file.
    pub external_ids: Vec<u64>,
    /// Non-comment lines read, i.e. raw (possibly directed) pairs.
    pub raw_pairs: usize,
    pub self_loops: usize,
    /// Pairs dropped because their unordered pair was already present.
    pub duplicates: usize,
}

/// Read a whitespace-separated `u v` edge list. Lines starting with `#` and
/// blank lines are skipped, ids are remapped densely in first-appearance
/// order, directed pairs are symmetrized, duplicates and self-loops dropped.
pub fn load_edge_list(path: impl AsRef<Path>, cascade_prob: f64) -> Result<LoadedGraph> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(file, cascade_prob).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn parse_edge_list<R: Read>(reader: R, cascade_prob: f64) -> Result<LoadedGraph> {
    check_prob("cascade probability", cascade_prob)?;
    let mut ids: HashMap<u64, usize> = HashMap::new();
    let mut external_ids = Vec::new();
    let mut pairs = HashSet::new();
    let mut edges = Vec::new();
    let (mut raw_pairs, mut self_loops, mut duplicates) = (0, 0, 0);

    let mut intern = |x: u64, ext: &mut Vec<u64>| {
        *ids.entry(x).or_insert_with(|| {
            ext.push(x);
            ext.len() - 1
        })
    };

    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io("<edge list>", e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let mut next_id = || -> Result<u64> {
            let tok = tokens.next().ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: "expected two node ids".into(),
            })?;
            tok.parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("invalid node id {tok:?}"),
            })
        };
        let (a, b) = (next_id()?, next_id()?);
        raw_pairs += 1;
        let u = intern(a, &mut external_ids);
        let v = intern(b, &mut external_ids);
        if u == v {
            self_loops += 1;
            continue;
        }
        let key = (u.min(v), u.max(v));
        if pairs.insert(key) {
            edges.push((key.0, key.1, cascade_prob));
        } else {
            duplicates += 1;
        }
    }

    let graph = WeightedGraph::new(external_ids.len(), edges)?;
    Ok(LoadedGraph {
        graph,
        external_ids,
        raw_pairs,
        self_loops,
        duplicates,
    })
}
