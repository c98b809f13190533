//! Seed-selection mechanisms.
//!
//! All sample-based mechanisms run `k` sequential steps, each adding one node
//! to the seed set:
//!
//! - `greedy`: argmax of the sample marginal gain (non-private).
//! - `exp_mech`: exponential mechanism over the marginal gains with budget
//!   `ε/k` per step and sensitivity `n/m` (central privacy).
//! - `local_rr`: randomized response on the samples once, then argmax of the
//!   debiased total influence of `S ∪ {v}` (local privacy).
//!
//! With no samples (`m = 0`) they fall back to a uniformly random `k`-set.
//! `full_info` is the greedy baseline that reads the graph itself.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cascade::{influence_exact, RealizationEnsemble};
use crate::error::{Error, Result};
use crate::estimator::{build_likelihood, covered, set_mask, uncovered_counts, DebiasSolver};
use crate::graph::WeightedGraph;
use crate::privacy::{exponential_select, randomized_response, rho_from_epsilon};
use crate::samples::{ones, InfluenceSampleMatrix};

/// Uncertain-edge count up to which `full_info_greedy` uses exact influence.
pub const FULL_INFO_EXACT_EDGES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Greedy,
    ExpMech,
    LocalRr,
    FullInfo,
    UniformRandom,
}

impl Mechanism {
    pub const ALL: [Mechanism; 5] = [
        Mechanism::Greedy,
        Mechanism::ExpMech,
        Mechanism::LocalRr,
        Mechanism::FullInfo,
        Mechanism::UniformRandom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::Greedy => "greedy",
            Mechanism::ExpMech => "exp_mech",
            Mechanism::LocalRr => "local_rr",
            Mechanism::FullInfo => "full_info",
            Mechanism::UniformRandom => "uniform_random",
        }
    }

    /// Whether the mechanism consumes a privacy budget.
    pub fn is_private(self) -> bool {
        matches!(self, Mechanism::ExpMech | Mechanism::LocalRr)
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "greedy" => Mechanism::Greedy,
            "exp" | "exp_mech" => Mechanism::ExpMech,
            "rr" | "local_rr" => Mechanism::LocalRr,
            "full_info" => Mechanism::FullInfo,
            "random" | "uniform_random" => Mechanism::UniformRandom,
            other => return Err(Error::param(format!("unknown mechanism {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedStep {
    pub node: usize,
    /// Score the step used for `node`: the marginal gain for `greedy` and
    /// `exp_mech`, the debiased total influence for `local_rr`, the estimated
    /// spread for `full_info`, none for random picks.
    pub score: Option<f64>,
    pub mechanism: Mechanism,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSelection {
    pub mechanism: Mechanism,
    pub seeds: Vec<usize>,
    pub per_step: Vec<SeedStep>,
    pub budget_spent: f64,
}

impl SeedSelection {
    fn new(mechanism: Mechanism, budget_spent: f64) -> Self {
        SeedSelection {
            mechanism,
            seeds: Vec::new(),
            per_step: Vec::new(),
            budget_spent,
        }
    }

    fn push(&mut self, node: usize, score: Option<f64>) {
        self.seeds.push(node);
        self.per_step.push(SeedStep {
            node,
            score,
            mechanism: self.mechanism,
        });
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// A sample-based seeding mechanism with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Seeder {
    Greedy,
    ExpMech { epsilon: f64 },
    LocalRr { epsilon: f64 },
    UniformRandom,
}

impl Seeder {
    /// The seeder for `mechanism`; `epsilon` is ignored by non-private ones.
    /// `full_info` is not sample based and is rejected.
    pub fn from_mechanism(mechanism: Mechanism, epsilon: f64) -> Result<Self> {
        Ok(match mechanism {
            Mechanism::Greedy => Seeder::Greedy,
            Mechanism::ExpMech => Seeder::ExpMech { epsilon },
            Mechanism::LocalRr => Seeder::LocalRr { epsilon },
            Mechanism::UniformRandom => Seeder::UniformRandom,
            Mechanism::FullInfo => return Err(Error::param("full_info reads the graph, not influence samples")),
        })
    }

    pub fn kind(&self) -> Mechanism {
        match self {
            Seeder::Greedy => Mechanism::Greedy,
            Seeder::ExpMech { .. } => Mechanism::ExpMech,
            Seeder::LocalRr { .. } => Mechanism::LocalRr,
            Seeder::UniformRandom => Mechanism::UniformRandom,
        }
    }

    pub fn run<R: Rng + ?Sized>(&self, x: &InfluenceSampleMatrix, k: usize, rng: &mut R) -> Result<SeedSelection> {
        match *self {
            Seeder::Greedy => greedy_seed(x, k, rng),
            Seeder::ExpMech { epsilon } => exp_mech_seed(x, k, epsilon, rng),
            Seeder::LocalRr { epsilon } => local_rr_seed(x, k, epsilon, rng),
            Seeder::UniformRandom => uniform_random_seed(x.n(), k, rng),
        }
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::param("k must be >= 1"));
    }
    if k > n {
        return Err(Error::param(format!("k = {k} exceeds n = {n}")));
    }
    Ok(())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::param(format!("epsilon must be > 0, got {epsilon}")));
    }
    Ok(())
}

/// Lowest-id node outside `chosen` with the largest count.
pub(crate) fn greedy_argmax(counts: &[usize], chosen: &[usize]) -> usize {
    let mut best: Option<usize> = None;
    for (v, &c) in counts.iter().enumerate() {
        if chosen.contains(&v) {
            continue;
        }
        if best.is_none_or(|b| c > counts[b]) {
            best = Some(v);
        }
    }
    best.expect("k <= n leaves a candidate")
}

/// A uniform `k`-subset without replacement, in draw order.
pub fn uniform_random_seed<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<SeedSelection> {
    if k > n {
        return Err(Error::param(format!("k = {k} exceeds n = {n}")));
    }
    let mut pool: Vec<usize> = (0..n).collect();
    let mut sel = SeedSelection::new(Mechanism::UniformRandom, 0.0);
    for i in 0..k {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
        sel.push(pool[i], None);
    }
    Ok(sel)
}

/// Greedy maximization of the sample influence, ties to the lowest id.
/// `rng` is only used for the uniform fallback when `x` has no samples.
pub fn greedy_seed<R: Rng + ?Sized>(x: &InfluenceSampleMatrix, k: usize, rng: &mut R) -> Result<SeedSelection> {
    check_k(x.n(), k)?;
    if x.m() == 0 {
        return uniform_random_seed(x.n(), k, rng);
    }
    let unit = x.n() as f64 / x.m() as f64;
    let mut cov = vec![false; x.m()];
    let mut sel = SeedSelection::new(Mechanism::Greedy, 0.0);
    for _ in 0..k {
        let counts = uncovered_counts(x, &cov);
        let v = greedy_argmax(&counts, &sel.seeds);
        sel.push(v, Some(unit * counts[v] as f64));
        mark_covered(x, v, &mut cov);
    }
    Ok(sel)
}

fn mark_covered(x: &InfluenceSampleMatrix, v: usize, cov: &mut [bool]) {
    for (t, c) in x.columns().enumerate() {
        if c[v / 64] >> (v % 64) & 1 == 1 {
            cov[t] = true;
        }
    }
}

/// Exponential-mechanism seeding: each of the `k` steps draws `v ∉ S` with
/// probability proportional to `exp((ε/k) · (m/2n) · I_x(v|S))`.
pub fn exp_mech_seed<R: Rng + ?Sized>(
    x: &InfluenceSampleMatrix,
    k: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<SeedSelection> {
    check_k(x.n(), k)?;
    check_epsilon(epsilon)?;
    if x.m() == 0 {
        return uniform_random_seed(x.n(), k, rng);
    }
    let n = x.n();
    let unit = n as f64 / x.m() as f64;
    let step_budget = epsilon / k as f64;
    let mut cov = vec![false; x.m()];
    let mut sel = SeedSelection::new(Mechanism::ExpMech, epsilon);
    for _ in 0..k {
        let counts = uncovered_counts(x, &cov);
        let candidates: Vec<usize> = (0..n).filter(|v| !sel.seeds.contains(v)).collect();
        let scores: Vec<f64> = candidates.iter().map(|&v| unit * counts[v] as f64).collect();
        let i = exponential_select(&scores, step_budget, unit, rng)?;
        sel.push(candidates[i], Some(scores[i]));
        mark_covered(x, candidates[i], &mut cov);
    }
    Ok(sel)
}

/// Randomized-response seeding: perturb `x` once with `ρ = 1/(e^ε + 1)`,
/// then greedily add the node maximizing the debiased influence
/// `J_m(S ∪ {v})` of the grown set.
pub fn local_rr_seed<R: Rng + ?Sized>(
    x: &InfluenceSampleMatrix,
    k: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<SeedSelection> {
    check_k(x.n(), k)?;
    check_epsilon(epsilon)?;
    if x.m() == 0 {
        return uniform_random_seed(x.n(), k, rng);
    }
    let rho = rho_from_epsilon(epsilon)?;
    let perturbed = randomized_response(x, rho, rng)?;
    let mut sel = SeedSelection::new(Mechanism::LocalRr, epsilon);
    for step in 0..k {
        let (v, j) = best_debiased_extension(&perturbed, &sel.seeds, rho).map_err(|e| match e {
            Error::Conditioning { rho, l, detail, .. } => Error::Conditioning {
                rho,
                l,
                step: Some(step),
                detail,
            },
            other => other,
        })?;
        sel.push(v, Some(j));
    }
    Ok(sel)
}

/// `argmax_{v ∉ S} J_m(S ∪ {v})` over perturbed samples, ties to the lowest id.
fn best_debiased_extension(x: &InfluenceSampleMatrix, chosen: &[usize], rho: f64) -> Result<(usize, f64)> {
    let n = x.n();
    let l = chosen.len() + 1;
    let solver = DebiasSolver::new(build_likelihood(rho, l)?)?;

    // base[t] = |S ∩ x̃^t|; with[v][b] = #{t : v ∈ x̃^t, base[t] = b}
    let mask = set_mask(x, chosen);
    let base: Vec<usize> = x
        .columns()
        .map(|c| c.iter().zip(&mask).map(|(a, b)| (a & b).count_ones() as usize).sum())
        .collect();
    let mut base_hist = vec![0usize; l + 1];
    let mut with = vec![vec![0usize; l]; n];
    for (col, &b) in x.columns().zip(&base) {
        base_hist[b] += 1;
        for v in ones(col) {
            with[v][b] += 1;
        }
    }

    let m = x.m() as f64;
    let mut best: Option<(usize, f64)> = None;
    let mut freqs = vec![0.0; l + 1];
    for v in (0..n).filter(|v| !chosen.contains(v)) {
        for a in 0..=l {
            let moved_in = if a > 0 { with[v][a - 1] } else { 0 };
            let moved_out = if a < l { with[v][a] } else { 0 };
            freqs[a] = (base_hist[a] + moved_in - moved_out) as f64 / m;
        }
        let f = solver.solve(&freqs)?;
        let j = n as f64 * (1.0 - f[0]);
        if best.is_none_or(|(_, bj)| j > bj) {
            best = Some((v, j));
        }
    }
    Ok(best.expect("k <= n leaves a candidate"))
}

/// Greedy on the true influence function: exact when the graph has at most
/// [`FULL_INFO_EXACT_EDGES`] uncertain edges, otherwise averaged over one
/// shared ensemble of `trials_per_eval` realizations.
pub fn full_info_greedy<R: Rng + ?Sized>(
    graph: &WeightedGraph,
    k: usize,
    trials_per_eval: usize,
    rng: &mut R,
) -> Result<SeedSelection> {
    check_k(graph.n(), k)?;
    if trials_per_eval == 0 {
        return Err(Error::param("trials_per_eval must be >= 1"));
    }
    let uncertain = graph.edges().iter().filter(|e| e.2 > 0.0 && e.2 < 1.0).count();
    let ensemble = if uncertain <= FULL_INFO_EXACT_EDGES {
        None
    } else {
        Some(RealizationEnsemble::sample(graph, trials_per_eval, rng)?)
    };
    let spread = |s: &[usize]| match &ensemble {
        Some(e) => e.spread(s),
        None => influence_exact(graph, s),
    };
    let mut sel = SeedSelection::new(Mechanism::FullInfo, 0.0);
    let mut trial = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for v in (0..graph.n()).filter(|v| !sel.seeds.contains(v)) {
            trial.clear();
            trial.extend_from_slice(&sel.seeds);
            trial.push(v);
            let s = spread(&trial)?;
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((v, s));
            }
        }
        let (v, s) = best.expect("k <= n leaves a candidate");
        sel.push(v, Some(s));
    }
    Ok(sel)
}

/// Number of samples in `x` hit by `set`, as the sample influence `I_x`.
pub fn sample_influence(x: &InfluenceSampleMatrix, set: &[usize]) -> f64 {
    if x.m() == 0 {
        return 0.0;
    }
    let hits = covered(x, set).into_iter().filter(|&c| c).count();
    x.n() as f64 / x.m() as f64 * hits as f64
}
