//! Sample-based influence estimation and randomized-response debiasing.
//!
//! For clean samples `x` the estimate of `I_G(S)` is `(n/m)` times the number
//! of samples that intersect `S`. For samples perturbed by independent bit
//! flips with probability `rho`, the overlap `|S ∩ x̃|` is a noisy channel
//! output of the true overlap `|S ∩ x|`. The channel is the likelihood matrix
//! built here; solving it against the observed overlap frequencies yields an
//! unbiased estimate of the true overlap distribution and, through its zero
//! entry, of the influence.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::{dot2, Lu, Matrix, PIVOT_FLOOR};
use crate::samples::InfluenceSampleMatrix;

/// Default largest set size for which likelihood matrices are built.
pub const DEFAULT_L_MAX: usize = 25;

/// Largest residual `‖C f − f̃‖_∞` accepted from the debias solve.
pub const SOLVE_TOLERANCE: f64 = 1e-8;

const REFINE_ROUNDS: usize = 3;

fn check_set(n: usize, set: &[usize]) -> Result<()> {
    match set.iter().find(|&&v| v >= n) {
        Some(v) => Err(Error::param(format!("node {v} out of range for n = {n}"))),
        None => Ok(()),
    }
}

/// Packed bitset of `set` with the row width of `x`.
pub(crate) fn set_mask(x: &InfluenceSampleMatrix, set: &[usize]) -> Vec<u64> {
    let mut mask = vec![0u64; x.n().div_ceil(64)];
    for &v in set {
        mask[v / 64] |= 1 << (v % 64);
    }
    mask
}

fn intersects(col: &[u64], mask: &[u64]) -> bool {
    col.iter().zip(mask).any(|(a, b)| a & b != 0)
}

fn overlap(col: &[u64], mask: &[u64]) -> usize {
    col.iter().zip(mask).map(|(a, b)| (a & b).count_ones() as usize).sum()
}

/// Indices of samples that contain at least one node of `set`.
pub fn reachable_sample_indices(x: &InfluenceSampleMatrix, set: &[usize]) -> Result<Vec<usize>> {
    check_set(x.n(), set)?;
    let mask = set_mask(x, set);
    Ok(x.columns()
        .enumerate()
        .filter(|(_, c)| intersects(c, &mask))
        .map(|(t, _)| t)
        .collect())
}

/// `(n/m) · |{t : set ∩ x^t ≠ ∅}|`.
pub fn empirical_influence(x: &InfluenceSampleMatrix, set: &[usize]) -> Result<f64> {
    if x.m() == 0 {
        return Err(Error::EmptySamples);
    }
    let hits = reachable_sample_indices(x, set)?.len();
    Ok(x.n() as f64 / x.m() as f64 * hits as f64)
}

/// Which samples already intersect `set`.
pub(crate) fn covered(x: &InfluenceSampleMatrix, set: &[usize]) -> Vec<bool> {
    let mask = set_mask(x, set);
    x.columns().map(|c| intersects(c, &mask)).collect()
}

/// For every node `v`, the number of samples containing `v` and not covered.
pub(crate) fn uncovered_counts(x: &InfluenceSampleMatrix, covered: &[bool]) -> Vec<usize> {
    let mut counts = vec![0usize; x.n()];
    for (col, &c) in x.columns().zip(covered) {
        if !c {
            for v in crate::samples::ones(col) {
                counts[v] += 1;
            }
        }
    }
    counts
}

/// `(n/m) · |{t : v ∈ x^t, set ∩ x^t = ∅}|`, the sample marginal gain of `v`.
pub fn marginal_influence(x: &InfluenceSampleMatrix, v: usize, set: &[usize]) -> Result<f64> {
    check_set(x.n(), set)?;
    check_set(x.n(), &[v])?;
    if set.contains(&v) {
        return Err(Error::param(format!("node {v} is already in the seed set")));
    }
    if x.m() == 0 {
        return Err(Error::EmptySamples);
    }
    let mask = set_mask(x, set);
    let gained = x
        .columns()
        .filter(|c| c[v / 64] >> (v % 64) & 1 == 1 && !intersects(c, &mask))
        .count();
    Ok(x.n() as f64 / x.m() as f64 * gained as f64)
}

fn check_rho(rho: f64) -> Result<()> {
    if rho.is_nan() || rho < 0.0 {
        return Err(Error::param(format!("flip probability must be >= 0, got {rho}")));
    }
    if rho >= 0.5 {
        return Err(Error::Singular { rho });
    }
    Ok(())
}

fn pascal(l: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = vec![vec![1.0]];
    for i in 1..=l {
        let prev = &rows[i - 1];
        let mut row = vec![1.0; i + 1];
        for j in 1..i {
            row[j] = prev[j - 1] + prev[j];
        }
        rows.push(row);
    }
    rows
}

/// The `(l+1)×(l+1)` channel from true overlap `b = |S ∩ x|` to perturbed
/// overlap `a = |S ∩ x̃|`, entry `(a, b) = Pr[Bin(b, 1−ρ) + Bin(l−b, ρ) = a]`.
#[derive(Debug, Clone)]
pub struct LikelihoodMatrix {
    rho: f64,
    l: usize,
    entries: Matrix,
}

impl LikelihoodMatrix {
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn entry(&self, a: usize, b: usize) -> f64 {
        self.entries.get(a, b)
    }

    pub fn column(&self, b: usize) -> Vec<f64> {
        (0..=self.l).map(|a| self.entry(a, b)).collect()
    }

    /// Row `a` of the matrix.
    pub fn row(&self, a: usize) -> &[f64] {
        self.entries.row(a)
    }

    /// `C · v` with compensated dot products.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..=self.l).map(|a| dot2(self.row(a), v)).collect()
    }

    fn factor(&self) -> Result<Lu> {
        Lu::factor(&self.entries).map_err(|p| Error::Conditioning {
            rho: self.rho,
            l: self.l,
            step: None,
            detail: format!("pivot {} has magnitude {:.3e} < {PIVOT_FLOOR:e}", p.index, p.value),
        })
    }

    /// Numerical inverse, column by column, through the debias solver.
    pub fn inverse(&self) -> Result<Vec<Vec<f64>>> {
        let solver = DebiasSolver::new(self.clone())?;
        let size = self.l + 1;
        let cols = (0..size)
            .map(|j| {
                let mut e = vec![0.0; size];
                e[j] = 1.0;
                solver.solve(&e)
            })
            .collect::<Result<Vec<_>>>()?;
        // cols[j] is column j; transpose to row-major rows
        Ok((0..size).map(|i| cols.iter().map(|c| c[i]).collect()).collect())
    }

    /// Comma-separated rows, for debugging.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for a in 0..=self.l {
            for b in 0..=self.l {
                if b > 0 {
                    s.push(',');
                }
                write!(s, "{:e}", self.entry(a, b)).unwrap();
            }
            s.push('\n');
        }
        s
    }
}

pub fn build_likelihood(rho: f64, l: usize) -> Result<LikelihoodMatrix> {
    build_likelihood_with_limit(rho, l, DEFAULT_L_MAX)
}

pub fn build_likelihood_with_limit(rho: f64, l: usize, l_max: usize) -> Result<LikelihoodMatrix> {
    check_rho(rho)?;
    if l == 0 {
        return Err(Error::param("likelihood matrix needs set size l >= 1"));
    }
    if l > l_max {
        return Err(Error::Capacity(format!("set size {l} exceeds l_max = {l_max}")));
    }
    let binom = pascal(l);
    let q = 1.0 - rho;
    let size = l + 1;
    let mut data = vec![0.0; size * size];
    for a in 0..=l {
        for b in 0..=l {
            // `kept_off`: how many of the b true members flipped out.
            let lo = b.saturating_sub(a);
            let hi = (l - a).min(b);
            let mut sum = 0.0;
            for off in lo..=hi {
                let on = a + off - b;
                let flips = (on + off) as i32;
                let stays = (l - on - off) as i32;
                sum += binom[b][off] * binom[l - b][on] * rho.powi(flips) * q.powi(stays);
            }
            data[a * size + b] = sum;
        }
    }
    Ok(LikelihoodMatrix {
        rho,
        l,
        entries: Matrix { n: size, data },
    })
}

/// Factored likelihood matrix, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct DebiasSolver {
    c: LikelihoodMatrix,
    lu: Lu,
}

impl DebiasSolver {
    pub fn new(c: LikelihoodMatrix) -> Result<Self> {
        let lu = c.factor()?;
        Ok(DebiasSolver { c, lu })
    }

    pub fn matrix(&self) -> &LikelihoodMatrix {
        &self.c
    }

    /// Solve `C f = f̃`.
    pub fn solve(&self, f_tilde: &[f64]) -> Result<Vec<f64>> {
        let size = self.c.l + 1;
        if f_tilde.len() != size {
            return Err(Error::param(format!(
                "overlap vector has length {}, expected {size}",
                f_tilde.len()
            )));
        }
        let f = self.lu.solve_refined(&self.c.entries, f_tilde, REFINE_ROUNDS);
        let resid = self
            .c
            .apply(&f)
            .iter()
            .zip(f_tilde)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if resid.is_nan() || resid > SOLVE_TOLERANCE {
            return Err(Error::Conditioning {
                rho: self.c.rho,
                l: self.c.l,
                step: None,
                detail: format!("residual {resid:.3e} exceeds {SOLVE_TOLERANCE:e}"),
            });
        }
        Ok(f)
    }
}

/// Observed distribution of `|S ∩ x̃^t|` over the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalOverlap {
    l: usize,
    counts: Vec<usize>,
}

impl EmpiricalOverlap {
    pub fn from_counts(counts: Vec<usize>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::param("overlap counts need l >= 1"));
        }
        Ok(EmpiricalOverlap {
            l: counts.len() - 1,
            counts,
        })
    }

    pub fn from_samples(x: &InfluenceSampleMatrix, set: &[usize]) -> Result<Self> {
        check_set(x.n(), set)?;
        let mut set: Vec<usize> = set.to_vec();
        set.sort_unstable();
        set.dedup();
        let mask = set_mask(x, &set);
        let mut counts = vec![0usize; set.len() + 1];
        for c in x.columns() {
            counts[overlap(c, &mask)] += 1;
        }
        Self::from_counts(counts)
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn m(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn freqs(&self) -> Vec<f64> {
        let m = self.m();
        if m == 0 {
            return vec![0.0; self.l + 1];
        }
        self.counts.iter().map(|&c| c as f64 / m as f64).collect()
    }
}

/// Solve `C f = f̃` for the unbiased estimate `f` of the true overlap
/// distribution. Entries of `f` sum to one but may leave `[0, 1]`.
pub fn solve_debias(c: &LikelihoodMatrix, f_tilde: &EmpiricalOverlap) -> Result<Vec<f64>> {
    if f_tilde.l() != c.l() {
        return Err(Error::param(format!(
            "overlap has l = {}, matrix has l = {}",
            f_tilde.l(),
            c.l()
        )));
    }
    DebiasSolver::new(c.clone())?.solve(&f_tilde.freqs())
}

/// Unbiased influence estimate `n (1 − f_0)` from perturbed samples. Not
/// clamped: the value may fall below 0 or above `n`.
pub fn debiased_influence(x_tilde: &InfluenceSampleMatrix, set: &[usize], rho: f64) -> Result<f64> {
    check_rho(rho)?;
    if x_tilde.m() == 0 {
        return Err(Error::EmptySamples);
    }
    if set.is_empty() {
        return Err(Error::param("debiased influence needs a nonempty set"));
    }
    let overlap = EmpiricalOverlap::from_samples(x_tilde, set)?;
    let c = build_likelihood(rho, overlap.l())?;
    let f = solve_debias(&c, &overlap)?;
    Ok(x_tilde.n() as f64 * (1.0 - f[0]))
}

/// [`debiased_influence`] clamped to `[0, n]`. Biased.
pub fn debiased_influence_clamped(x_tilde: &InfluenceSampleMatrix, set: &[usize], rho: f64) -> Result<f64> {
    Ok(debiased_influence(x_tilde, set, rho)?.clamp(0.0, x_tilde.n() as f64))
}
