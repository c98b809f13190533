//! Independent-cascade diffusion: realizations, reachability, influence
//! evaluation and influence-sample generation.

use std::collections::VecDeque;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::rng::substream;
use crate::samples::InfluenceSampleMatrix;

/// Most uncertain edges `influence_exact` will enumerate.
pub const EXACT_EDGE_LIMIT: usize = 20;

/// One realization of a weighted graph: the retained ("live") edges.
#[derive(Debug, Clone)]
pub struct RealizedGraph {
    n: usize,
    adj: Vec<Vec<usize>>,
    live: Vec<(usize, usize)>,
}

impl RealizedGraph {
    /// Realization keeping exactly the edges of `graph` for which `keep`
    /// returns true.
    pub fn from_mask(graph: &WeightedGraph, mut keep: impl FnMut(usize) -> bool) -> Self {
        let mut adj = vec![Vec::new(); graph.n()];
        let mut live = Vec::new();
        for (i, &(u, v, _)) in graph.edges().iter().enumerate() {
            if keep(i) {
                adj[u].push(v);
                adj[v].push(u);
                live.push((u, v));
            }
        }
        RealizedGraph {
            n: graph.n(),
            adj,
            live,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn live_edges(&self) -> &[(usize, usize)] {
        &self.live
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }
}

/// Retain each edge independently with its probability.
pub fn realize<R: Rng + ?Sized>(graph: &WeightedGraph, rng: &mut R) -> RealizedGraph {
    let edges = graph.edges();
    RealizedGraph::from_mask(graph, |i| rng.gen_bool(edges[i].2))
}

fn check_nodes(n: usize, nodes: &[usize]) -> Result<()> {
    match nodes.iter().find(|&&v| v >= n) {
        Some(v) => Err(Error::param(format!("node {v} out of range for n = {n}"))),
        None => Ok(()),
    }
}

fn closure(g: &RealizedGraph, seeds: &[usize]) -> Vec<bool> {
    let mut seen = vec![false; g.n];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for &s in seeds {
        if !seen[s] {
            seen[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        for &w in &g.adj[u] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen
}

/// Nodes connected to `seeds` by live edges, including the seeds, sorted.
pub fn reachable(g: &RealizedGraph, seeds: &[usize]) -> Result<Vec<usize>> {
    check_nodes(g.n, seeds)?;
    let seen = closure(g, seeds);
    Ok((0..g.n).filter(|&v| seen[v]).collect())
}

/// `reachable(g, seeds) \ reachable(g, blockers)`, sorted.
pub fn conditional_reachable(g: &RealizedGraph, seeds: &[usize], blockers: &[usize]) -> Result<Vec<usize>> {
    check_nodes(g.n, seeds)?;
    check_nodes(g.n, blockers)?;
    let a = closure(g, seeds);
    let b = closure(g, blockers);
    Ok((0..g.n).filter(|&v| a[v] && !b[v]).collect())
}

/// Breadth-first spread from `sources`, flipping each edge's coin only when
/// the search first reaches it from the visited side. Every edge is flipped
/// at most once, so the visited set is distributed exactly as the closure in
/// a fully pre-realized graph. Returns the number of visited nodes and
/// leaves the visited flags in `seen`.
fn lazy_spread<R: Rng + ?Sized>(
    graph: &WeightedGraph,
    sources: &[usize],
    seen: &mut [bool],
    queue: &mut Vec<usize>,
    rng: &mut R,
) -> usize {
    queue.clear();
    for &s in sources {
        if !seen[s] {
            seen[s] = true;
            queue.push(s);
        }
    }
    let mut head = 0;
    while head < queue.len() {
        let u = queue[head];
        head += 1;
        for &(w, e) in graph.neighbors(u) {
            if !seen[w] && rng.gen_bool(graph.edges()[e].2) {
                seen[w] = true;
                queue.push(w);
            }
        }
    }
    queue.len()
}

/// Monte-Carlo estimate of the expected spread of `seeds`.
pub fn influence_mc<R: Rng + ?Sized>(
    graph: &WeightedGraph,
    seeds: &[usize],
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::param("influence_mc needs trials >= 1"));
    }
    check_nodes(graph.n(), seeds)?;
    let base: u64 = rng.gen();
    let total: usize = (0..trials)
        .into_par_iter()
        .map_init(
            || (vec![false; graph.n()], Vec::new()),
            |(seen, queue), t| {
                let mut r = substream(base, &[t as u64]);
                let size = lazy_spread(graph, seeds, seen, queue, &mut r);
                for &v in queue.iter() {
                    seen[v] = false;
                }
                size
            },
        )
        .sum();
    Ok(total as f64 / trials as f64)
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

/// Exact expected spread by enumerating every realization of the edges with
/// probability strictly between 0 and 1 (edges with `p = 1` are always live,
/// `p = 0` never). At most [`EXACT_EDGE_LIMIT`] such edges are allowed.
pub fn influence_exact(graph: &WeightedGraph, seeds: &[usize]) -> Result<f64> {
    check_nodes(graph.n(), seeds)?;
    let n = graph.n();
    let mut certain = DisjointSets::new(n);
    let mut uncertain = Vec::new();
    for &(u, v, p) in graph.edges() {
        if p >= 1.0 {
            certain.union(u, v);
        } else if p > 0.0 {
            uncertain.push((u, v, p));
        }
    }
    if uncertain.len() > EXACT_EDGE_LIMIT {
        return Err(Error::Capacity(format!(
            "influence_exact enumerates at most {EXACT_EDGE_LIMIT} uncertain edges, graph has {}",
            uncertain.len()
        )));
    }
    if seeds.is_empty() {
        return Ok(0.0);
    }

    // Neumaier-compensated accumulation over realizations in lexicographic
    // edge order (bit i of the mask is uncertain edge i).
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut dsu = DisjointSets::new(n);
    let mut hit = vec![false; n];
    for mask in 0u64..(1u64 << uncertain.len()) {
        let mut prob = 1.0;
        dsu.parent.clear();
        dsu.parent.extend(0..n);
        for v in 0..n {
            let r = certain.find(v);
            dsu.parent[v] = r;
        }
        for (i, &(u, v, p)) in uncertain.iter().enumerate() {
            if mask >> i & 1 == 1 {
                prob *= p;
                dsu.union(u, v);
            } else {
                prob *= 1.0 - p;
            }
        }
        hit.iter_mut().for_each(|h| *h = false);
        for &s in seeds {
            let r = dsu.find(s);
            hit[r] = true;
        }
        let size = (0..n).filter(|&v| hit[dsu.find(v)]).count() as f64;
        let term = prob * size;
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    Ok(sum + comp)
}

fn check_sample_args(graph: &WeightedGraph, m: usize) -> Result<()> {
    if graph.n() == 0 && m > 0 {
        return Err(Error::param("cannot draw influence samples on an empty graph"));
    }
    Ok(())
}

/// Draw `m` influence samples. Each sample picks a uniform target `u` and a
/// fresh realization `g`; since `g` is undirected the sample is the indicator
/// of the component of `u`, found by one lazy breadth-first search.
///
/// Samples are generated in parallel from per-sample substreams of one seed
/// drawn from `rng`, so the output does not depend on the thread count.
pub fn draw_influence_samples<R: Rng + ?Sized>(
    graph: &WeightedGraph,
    m: usize,
    rng: &mut R,
) -> Result<InfluenceSampleMatrix> {
    check_sample_args(graph, m)?;
    let n = graph.n();
    let base: u64 = rng.gen();
    let words = n.div_ceil(64);
    let columns: Vec<Vec<u64>> = (0..m)
        .into_par_iter()
        .map_init(
            || (vec![false; n], Vec::new()),
            |(seen, queue), t| {
                let mut r = substream(base, &[t as u64]);
                let target = r.gen_range(0..n);
                lazy_spread(graph, &[target], seen, queue, &mut r);
                let mut col = vec![0u64; words];
                for &v in queue.iter() {
                    col[v / 64] |= 1 << (v % 64);
                    seen[v] = false;
                }
                col
            },
        )
        .collect();
    let mut x = InfluenceSampleMatrix::new(n);
    for c in &columns {
        x.push_words(c);
    }
    Ok(x)
}

/// As [`draw_influence_samples`] but pre-realizes the full graph for every
/// sample and sets `x_v = 1[u ∈ C_g(v)]` by a reachability query from each
/// `v`. Slow; exists to check the lazy path.
pub fn draw_influence_samples_strict<R: Rng + ?Sized>(
    graph: &WeightedGraph,
    m: usize,
    rng: &mut R,
) -> Result<InfluenceSampleMatrix> {
    check_sample_args(graph, m)?;
    let n = graph.n();
    let mut x = InfluenceSampleMatrix::new(n);
    for _ in 0..m {
        let target = rng.gen_range(0..n);
        let g = realize(graph, rng);
        let col: Vec<usize> = (0..n).filter(|&v| closure(&g, &[v])[target]).collect();
        x.push_column(&col)?;
    }
    Ok(x)
}

/// A fixed set of realizations summarised by their connected components, so
/// the spread of any seed set can be averaged over the same draws.
#[derive(Debug, Clone)]
pub struct RealizationEnsemble {
    n: usize,
    labels: Vec<Vec<u32>>,
    sizes: Vec<Vec<u32>>,
}

impl RealizationEnsemble {
    pub fn sample<R: Rng + ?Sized>(graph: &WeightedGraph, trials: usize, rng: &mut R) -> Result<Self> {
        if trials == 0 {
            return Err(Error::param("ensemble needs trials >= 1"));
        }
        let n = graph.n();
        let base: u64 = rng.gen();
        let (labels, sizes) = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut r = substream(base, &[t as u64]);
                let g = realize(graph, &mut r);
                let mut dsu = DisjointSets::new(n);
                for &(u, v) in g.live_edges() {
                    dsu.union(u, v);
                }
                let mut label = vec![u32::MAX; n];
                let mut size = Vec::new();
                for v in 0..n {
                    let root = dsu.find(v);
                    if label[root] == u32::MAX {
                        label[root] = size.len() as u32;
                        size.push(0);
                    }
                    label[v] = label[root];
                    size[label[v] as usize] += 1;
                }
                (label, size)
            })
            .unzip();
        Ok(RealizationEnsemble { n, labels, sizes })
    }

    pub fn trials(&self) -> usize {
        self.labels.len()
    }

    /// Mean spread of `seeds` over the ensemble.
    pub fn spread(&self, seeds: &[usize]) -> Result<f64> {
        check_nodes(self.n, seeds)?;
        let mut comps: Vec<u32> = Vec::with_capacity(seeds.len());
        let mut total = 0u64;
        for (label, size) in self.labels.iter().zip(&self.sizes) {
            comps.clear();
            for &s in seeds {
                let c = label[s];
                if !comps.contains(&c) {
                    comps.push(c);
                    total += size[c as usize] as u64;
                }
            }
        }
        Ok(total as f64 / self.trials() as f64)
    }
}
