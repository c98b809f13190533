//! Config-driven experiment sweeps.
//!
//! A sweep runs every configured mechanism over an (ε, m) grid. For each
//! grid point it draws `collections` independent sample collections of size
//! `m`, runs the mechanism `reruns` times on each, and scores every output by
//! its empirical influence on fresh held-out samples.
//!
//! Randomness is partitioned into substreams of `master_seed`:
//!
//! - sample collection `(m, c)` is shared by all mechanisms and budgets,
//! - evaluation samples for `(m, c, r)` are shared likewise, so mechanisms
//!   are compared on paired draws,
//! - the mechanism's own randomness is private to `(mechanism, ε, m, c, r)`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{draw_influence_samples, influence_exact};
use crate::error::{Error, Result};
use crate::estimator::empirical_influence;
use crate::graph::{clique_union, erdos_renyi, load_edge_list, star_graph, WeightedGraph};
use crate::rng::substream;
use crate::samples::InfluenceSampleMatrix;
use crate::seeding::{full_info_greedy, Mechanism, Seeder};

const TAG_GRAPH: u64 = 1;
const TAG_DATA: u64 = 2;
const TAG_MECH: u64 = 3;
const TAG_EVAL: u64 = 4;
const TAG_FULL: u64 = 5;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Where the experiment graph comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum GraphSource {
    /// Erdős–Rényi graph drawn from the master seed.
    Er { n: usize, edge_prob: f64 },
    /// Star whose spokes carry the cascade probability.
    Star { n: usize, center: usize },
    /// Disjoint weight-1 cliques; ignores the cascade probability.
    CliqueUnion { n: usize, l: usize },
    /// Whitespace-separated edge list.
    EdgeList { path: PathBuf },
    /// Graph JSON as written by `WeightedGraph::save_json`, weights kept.
    Json { path: PathBuf },
}

fn default_full_info_trials() -> usize {
    1000
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSource,
    pub cascade_prob: f64,
    pub k: usize,
    pub epsilon_grid: Vec<f64>,
    pub m_grid: Vec<usize>,
    pub mechanisms: Vec<Mechanism>,
    pub collections: usize,
    pub reruns: usize,
    pub eval_samples: usize,
    pub master_seed: u64,
    /// Realizations averaged by the full-information baseline.
    #[serde(default = "default_full_info_trials")]
    pub full_info_trials: usize,
    /// Score outputs with exact influence instead of held-out samples.
    #[serde(default)]
    pub exact_eval: bool,
    /// When false the `wall_ms` column is written as 0, which makes the
    /// results file a pure function of the config.
    #[serde(default = "default_true")]
    pub record_wall_time: bool,
    /// Worker threads; `None` uses the global pool, `Some(1)` runs serially.
    #[serde(default)]
    pub jobs: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon_grid.is_empty() || self.m_grid.is_empty() || self.mechanisms.is_empty() {
            return Err(Error::param("epsilon_grid, m_grid and mechanisms must be nonempty"));
        }
        if self.collections == 0 || self.reruns == 0 || self.eval_samples == 0 {
            return Err(Error::param("collections, reruns and eval_samples must be >= 1"));
        }
        if self.k == 0 {
            return Err(Error::param("k must be >= 1"));
        }
        if let Some(e) = self.epsilon_grid.iter().find(|e| e.is_nan() || **e <= 0.0) {
            return Err(Error::param(format!("epsilon values must be > 0, got {e}")));
        }
        if self.full_info_trials == 0 {
            return Err(Error::param("full_info_trials must be >= 1"));
        }
        if self.jobs == Some(0) {
            return Err(Error::param("jobs must be >= 1"));
        }
        crate::graph::check_prob("cascade probability", self.cascade_prob)
    }

    /// Build the experiment graph.
    pub fn build_graph(&self) -> Result<WeightedGraph> {
        match &self.graph {
            GraphSource::Er { n, edge_prob } => {
                let mut rng = substream(self.master_seed, &[TAG_GRAPH]);
                erdos_renyi(*n, *edge_prob, self.cascade_prob, &mut rng)
            }
            GraphSource::Star { n, center } => star_graph(*n, *center, self.cascade_prob),
            GraphSource::CliqueUnion { n, l } => clique_union(*n, *l),
            GraphSource::EdgeList { path } => Ok(load_edge_list(path, self.cascade_prob)?.graph),
            GraphSource::Json { path } => WeightedGraph::load_json(path),
        }
    }
}

/// One mechanism run on one collection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub mechanism: Mechanism,
    pub epsilon: f64,
    pub m: usize,
    pub collection: usize,
    pub rerun: usize,
    /// Estimated spread of the output, or the error that prevented it.
    pub spread: std::result::Result<f64, String>,
    pub seeds: Vec<usize>,
    pub wall_ms: f64,
}

/// Mean spread of one (mechanism, ε, m) cell with a normal-approximation
/// 95% interval. Cells with any failed trial carry `errors > 0` and no mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub mechanism: Mechanism,
    pub epsilon: f64,
    pub m: usize,
    pub mean_spread: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
    pub trials: usize,
    pub errors: usize,
}

impl CellSummary {
    pub fn flagged(&self) -> bool {
        self.errors > 0
    }

    pub fn half_width(&self) -> f64 {
        (self.ci95_hi - self.ci95_lo) / 2.0
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub n: usize,
    pub records: Vec<ExperimentRecord>,
    pub summary: Vec<CellSummary>,
}

impl ExperimentOutput {
    pub fn cell(&self, mechanism: Mechanism, epsilon: f64, m: usize) -> Option<&CellSummary> {
        self.summary
            .iter()
            .find(|c| c.mechanism == mechanism && c.epsilon == epsilon && c.m == m)
    }
}

/// Empirical influence of `seeds` on `eval_samples` fresh influence samples.
pub fn evaluate_spread<R: Rng + ?Sized>(
    graph: &WeightedGraph,
    seeds: &[usize],
    eval_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if eval_samples == 0 {
        return Err(Error::param("eval_samples must be >= 1"));
    }
    let x = draw_influence_samples(graph, eval_samples, rng)?;
    empirical_influence(&x, seeds)
}

/// Mean and normal-approximation 95% interval of `values`.
pub fn mean_ci95(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, mean, mean);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let half = Z95 * (var / n).sqrt();
    (mean, mean - half, mean + half)
}

struct Cell {
    mechanism: Mechanism,
    eps_idx: usize,
    m_idx: usize,
}

/// Run the full sweep, collecting every record.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    run_experiment_with(config, |_| Ok(()))
}

/// Run the full sweep, passing each cell's records to `sink` as soon as the
/// cell completes. Records arrive in a fixed order: mechanisms, then ε, then
/// m, as listed in the config, then collection and rerun.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    sink: impl FnMut(&[ExperimentRecord]) -> Result<()> + Send,
) -> Result<ExperimentOutput> {
    config.validate()?;
    match config.jobs {
        Some(jobs) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| Error::param(format!("cannot build thread pool: {e}")))?;
            pool.install(|| sweep(config, sink))
        }
        None => sweep(config, sink),
    }
}

fn sweep(
    config: &ExperimentConfig,
    mut sink: impl FnMut(&[ExperimentRecord]) -> Result<()>,
) -> Result<ExperimentOutput> {
    let graph = config.build_graph()?;
    let n = graph.n();
    if config.k > n {
        return Err(Error::param(format!("k = {} exceeds n = {n}", config.k)));
    }
    let seed = config.master_seed;

    let collections: Vec<Vec<std::result::Result<InfluenceSampleMatrix, String>>> = config
        .m_grid
        .iter()
        .enumerate()
        .map(|(j, &m)| {
            (0..config.collections)
                .into_par_iter()
                .map(|c| {
                    let mut rng = substream(seed, &[TAG_DATA, j as u64, c as u64]);
                    draw_influence_samples(&graph, m, &mut rng).map_err(|e| e.to_string())
                })
                .collect()
        })
        .collect();

    let full_info = if config.mechanisms.contains(&Mechanism::FullInfo) {
        let mut rng = substream(seed, &[TAG_FULL]);
        Some(full_info_greedy(&graph, config.k, config.full_info_trials, &mut rng).map_err(|e| e.to_string()))
    } else {
        None
    };

    let mut cells = Vec::new();
    for &mechanism in &config.mechanisms {
        for eps_idx in 0..config.epsilon_grid.len() {
            for m_idx in 0..config.m_grid.len() {
                cells.push(Cell {
                    mechanism,
                    eps_idx,
                    m_idx,
                });
            }
        }
    }

    let mut records = Vec::new();
    let mut summary = Vec::new();
    for cell in &cells {
        let epsilon = config.epsilon_grid[cell.eps_idx];
        let m = config.m_grid[cell.m_idx];
        let trials: Vec<(usize, usize)> = (0..config.collections)
            .flat_map(|c| (0..config.reruns).map(move |r| (c, r)))
            .collect();
        let cell_records: Vec<ExperimentRecord> = trials
            .into_par_iter()
            .map(|(c, r)| {
                let started = Instant::now();
                let coords = [cell.m_idx as u64, c as u64, r as u64];
                let outcome = (|| -> std::result::Result<(Vec<usize>, f64), String> {
                    let seeds = match cell.mechanism {
                        Mechanism::FullInfo => full_info.clone().expect("computed above")?.seeds,
                        other => {
                            let x = collections[cell.m_idx][c].as_ref().map_err(Clone::clone)?;
                            let seeder = Seeder::from_mechanism(other, epsilon).map_err(|e| e.to_string())?;
                            // ε-free mechanisms reuse one stream across the ε grid
                            let eps_key = if other.is_private() { cell.eps_idx as u64 } else { 0 };
                            let mut rng = substream(
                                seed,
                                &[TAG_MECH, other as u64, eps_key, coords[0], coords[1], coords[2]],
                            );
                            seeder.run(x, config.k, &mut rng).map_err(|e| e.to_string())?.seeds
                        }
                    };
                    let spread = if config.exact_eval {
                        influence_exact(&graph, &seeds)
                    } else {
                        let mut rng = substream(seed, &[TAG_EVAL, coords[0], coords[1], coords[2]]);
                        evaluate_spread(&graph, &seeds, config.eval_samples, &mut rng)
                    }
                    .map_err(|e| e.to_string())?;
                    Ok((seeds, spread))
                })();
                // covers seeding and evaluation
                let wall_ms = if config.record_wall_time {
                    started.elapsed().as_secs_f64() * 1e3
                } else {
                    0.0
                };
                let (seeds, spread) = match outcome {
                    Ok((s, v)) => (s, Ok(v)),
                    Err(e) => (Vec::new(), Err(e)),
                };
                ExperimentRecord {
                    mechanism: cell.mechanism,
                    epsilon,
                    m,
                    collection: c,
                    rerun: r,
                    spread,
                    seeds,
                    wall_ms,
                }
            })
            .collect();
        sink(&cell_records)?;
        summary.push(summarize_cell(cell.mechanism, epsilon, m, &cell_records));
        records.extend(cell_records);
    }
    Ok(ExperimentOutput { n, records, summary })
}

fn summarize_cell(mechanism: Mechanism, epsilon: f64, m: usize, records: &[ExperimentRecord]) -> CellSummary {
    let values: Vec<f64> = records.iter().filter_map(|r| r.spread.as_ref().ok().copied()).collect();
    let errors = records.len() - values.len();
    let (mean, lo, hi) = if errors > 0 {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        mean_ci95(&values)
    };
    CellSummary {
        mechanism,
        epsilon,
        m,
        mean_spread: mean,
        ci95_lo: lo,
        ci95_hi: hi,
        trials: values.len(),
        errors,
    }
}

pub const RESULTS_HEADER: [&str; 8] = [
    "mechanism",
    "epsilon",
    "m",
    "collection",
    "rerun",
    "spread",
    "ci_not_applicable_at_row_level",
    "wall_ms",
];

pub const SUMMARY_HEADER: [&str; 7] = [
    "mechanism",
    "epsilon",
    "m",
    "mean_spread",
    "ci95_lo",
    "ci95_hi",
    "trials",
];

/// Streaming writer for the per-trial results file.
pub struct ResultsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> ResultsWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(RESULTS_HEADER)?;
        Ok(ResultsWriter { inner })
    }

    pub fn write(&mut self, records: &[ExperimentRecord]) -> Result<()> {
        for r in records {
            let spread = match &r.spread {
                Ok(v) => v.to_string(),
                Err(_) => "NaN".to_string(),
            };
            self.inner.write_record([
                r.mechanism.as_str().to_string(),
                r.epsilon.to_string(),
                r.m.to_string(),
                r.collection.to_string(),
                r.rerun.to_string(),
                spread,
                "NA".to_string(),
                format!("{:.3}", r.wall_ms),
            ])?;
        }
        self.inner.flush().map_err(|e| Error::io("<results>", e))
    }
}

pub fn write_results_csv<W: Write>(records: &[ExperimentRecord], w: W) -> Result<()> {
    ResultsWriter::new(w)?.write(records)
}

pub fn write_summary_csv<W: Write>(summary: &[CellSummary], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SUMMARY_HEADER)?;
    for c in summary {
        out.write_record([
            c.mechanism.as_str().to_string(),
            c.epsilon.to_string(),
            c.m.to_string(),
            c.mean_spread.to_string(),
            c.ci95_lo.to_string(),
            c.ci95_hi.to_string(),
            c.trials.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<summary>", e))
}
