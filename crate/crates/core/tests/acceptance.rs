//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

#![allow(clippy::needless_range_loop)]

use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;

use dpseed_core::cascade::{draw_influence_samples, influence_exact};
use dpseed_core::estimator::{build_likelihood, debiased_influence};
use dpseed_core::graph::{clique_union, erdos_renyi, star_graph};
use dpseed_core::harness::{evaluate_spread, run_experiment, write_results_csv, ExperimentConfig, GraphSource};
use dpseed_core::privacy::{randomized_response, rho_from_epsilon, verify_isdp_exact};
use dpseed_core::rng::{stream, substream};
use dpseed_core::seeding::{exp_mech_seed, greedy_seed, sample_influence, Mechanism, Seeder};
use dpseed_core::{InfluenceSampleMatrix, WeightedGraph};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_matrix<R: Rng>(n: usize, m: usize, density: f64, rng: &mut R) -> InfluenceSampleMatrix {
    let cols: Vec<Vec<usize>> = (0..m)
        .map(|_| (0..n).filter(|_| rng.gen_bool(density)).collect())
        .collect();
    InfluenceSampleMatrix::from_columns(n, &cols).unwrap()
}

/// Dot product with error-free transformations, independent of the library's.
fn compensated_dot(a: &[f64], b: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let p = x * y;
        let pe = x.mul_add(y, -p);
        let t = s + p;
        let z = t - s;
        c += (s - (t - z)) + (p - z) + pe;
        s = t;
    }
    s + c
}

/// Two-sided tail mass of a normal deviate beyond 4.
const FOUR_SIGMA_P: f64 = 6.334e-5;

/// Exact two-sided binomial p-value of `count` successes in `n` trials,
/// for cells too rare for the normal approximation.
fn binomial_two_sided_p(count: u64, n: u64, p: f64) -> f64 {
    // pmf by recurrence from Pr[X = 0]; only used when n·p is small
    let mut pmf = (1.0 - p).powf(n as f64);
    let mut below = 0.0;
    let upper = (n as f64 * p).ceil() as u64 + 200;
    let mut at = 0.0;
    let mut total = 0.0;
    for i in 0..=upper.min(n) {
        if i < count {
            below += pmf;
        }
        if i == count {
            at = pmf;
        }
        total += pmf;
        pmf *= (n - i) as f64 / (i + 1) as f64 * p / (1.0 - p);
    }
    let lower_tail = below + at;
    let upper_tail = (total - below).max(at);
    (2.0 * lower_tail.min(upper_tail)).min(1.0)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn k_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for v in start..n {
            cur.push(v);
            rec(v + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut rng = stream(101);
    let mats: Vec<InfluenceSampleMatrix> = (0..200).map(|_| random_matrix(4, 3, 0.5, &mut rng)).collect();
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for eps in [0.5, 1.0] {
        for x in &mats {
            let r = verify_isdp_exact(&Seeder::ExpMech { epsilon: eps }, x, 2, eps).unwrap();
            worst = worst.max(r.max_log_ratio - eps);
            if !(r.pass && r.max_log_ratio <= eps + 1e-9) {
                failures += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    outcome(
        failures == 0 && elapsed <= Duration::from_secs(120),
        format!("400 checks, {failures} failures, max(log-ratio - eps) = {worst:.3e}, {elapsed:.1?}"),
    )
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    for eps in [0.1f64, 1.0, 4.0] {
        let rho = 1.0 / (eps.exp() + 1.0);
        let lib_rho = rho_from_epsilon(eps).unwrap();
        worst = worst.max((rho - lib_rho).abs() * 1e6);
        // channel rows: Pr[out | in] for in, out in {0, 1}
        let ch = |input: bool, out: bool| if input == out { 1.0 - lib_rho } else { lib_rho };
        for out in [false, true] {
            let ratio = (ch(false, out) / ch(true, out)).ln().abs();
            worst = worst.max((ratio - eps).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max |log-ratio - eps| = {worst:.3e}"))
}

fn criterion_3() -> Outcome {
    let mut stoch: f64 = 0.0;
    let mut inv: f64 = 0.0;
    let mut induced: f64 = 0.0;
    let mut worst_z: f64 = 0.0;
    let mut rare_fail = false;
    let trials = 100_000u64;
    for (ri, rho) in [0.1, 0.25, 0.4].into_iter().enumerate() {
        for l in 1..=12usize {
            let c = build_likelihood(rho, l).unwrap();
            for b in 0..=l {
                let col = c.column(b);
                stoch = stoch.max((col.iter().sum::<f64>() - 1.0).abs());
            }
            let ci = c.inverse().unwrap();
            for i in 0..=l {
                let row: Vec<f64> = (0..=l).map(|j| c.entry(i, j)).collect();
                let mut abs_row = 0.0;
                for j in 0..=l {
                    let col: Vec<f64> = (0..=l).map(|t| ci[t][j]).collect();
                    let delta = if i == j { 1.0 } else { 0.0 };
                    let r = (compensated_dot(&row, &col) - delta).abs();
                    inv = inv.max(r);
                    abs_row += r;
                }
                induced = induced.max(abs_row);
            }
            let (z, rare_ok) = (0..=l)
                .into_par_iter()
                .map(|b| {
                    let mut rng = substream(303, &[ri as u64, l as u64, b as u64]);
                    let mut hist = vec![0u64; l + 1];
                    for _ in 0..trials {
                        let ones = (0..l).filter(|&i| (i < b) != rng.gen_bool(rho)).count();
                        hist[ones] += 1;
                    }
                    let mut z: f64 = 0.0;
                    let mut ok = true;
                    for a in 0..=l {
                        let p = c.entry(a, b);
                        let var = trials as f64 * p * (1.0 - p);
                        if var >= 10.0 {
                            let se = (var).sqrt() / trials as f64;
                            z = z.max((hist[a] as f64 / trials as f64 - p).abs() / se);
                        } else {
                            ok &= binomial_two_sided_p(hist[a], trials, p) >= FOUR_SIGMA_P;
                        }
                    }
                    (z, ok)
                })
                .reduce(|| (0.0, true), |x, y| (x.0.max(y.0), x.1 && y.1));
            worst_z = worst_z.max(z);
            rare_fail |= !rare_ok;
        }
    }
    outcome(
        stoch <= 1e-12 && inv <= 1e-8 && worst_z <= 4.0 && !rare_fail,
        format!(
            "column-sum error {stoch:.2e}, max entry of C C^-1 - I {inv:.2e} (max row sum {induced:.2e}), \
             worst flip z-score {worst_z:.2}, rare cells within 4-sigma tail: {}",
            !rare_fail
        ),
    )
}

fn fixture_graphs() -> Vec<WeightedGraph> {
    vec![
        WeightedGraph::new(5, vec![(0, 1, 0.5), (1, 2, 0.4), (2, 3, 0.6), (3, 4, 0.3)]).unwrap(),
        star_graph(6, 0, 0.5).unwrap(),
        WeightedGraph::new(5, vec![(0, 1, 0.7), (1, 2, 0.3), (0, 2, 0.5), (2, 3, 0.4), (3, 4, 0.6)]).unwrap(),
        WeightedGraph::new(6, (0..6).map(|i| (i, (i + 1) % 6, 0.35)).collect()).unwrap(),
        WeightedGraph::new(
            8,
            vec![
                (0, 1, 0.25),
                (0, 2, 0.25),
                (0, 3, 0.25),
                (1, 2, 0.25),
                (1, 3, 0.25),
                (2, 3, 0.25),
                (3, 4, 0.6),
                (4, 5, 0.2),
                (5, 6, 0.8),
                (6, 7, 0.45),
                (4, 7, 0.1),
                (2, 6, 0.3),
            ],
        )
        .unwrap(),
    ]
}

fn criterion_4() -> Outcome {
    let started = Instant::now();
    let sets: [&[usize]; 3] = [&[0], &[0, 2], &[1, 3, 4]];
    let collections = 100_000u64;
    let (m, rho) = (50, 0.25);
    let mut worst_z: f64 = 0.0;
    for (gi, g) in fixture_graphs().iter().enumerate() {
        assert!(g.edge_count() <= 12);
        let exact: Vec<f64> = sets.iter().map(|s| influence_exact(g, s).unwrap()).collect();
        // per set: (sum, sum of squares)
        let sums = (0..collections)
            .into_par_iter()
            .map(|c| {
                let mut rng = substream(404, &[gi as u64, c]);
                let x = draw_influence_samples(g, m, &mut rng).unwrap();
                let xt = randomized_response(&x, rho, &mut rng).unwrap();
                let mut acc = [0.0f64; 6];
                for (i, s) in sets.iter().enumerate() {
                    let j = debiased_influence(&xt, s, rho).unwrap();
                    acc[2 * i] = j;
                    acc[2 * i + 1] = j * j;
                }
                acc
            })
            .reduce(
                || [0.0; 6],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        let nf = collections as f64;
        for i in 0..sets.len() {
            let mean = sums[2 * i] / nf;
            let var = (sums[2 * i + 1] / nf - mean * mean) * nf / (nf - 1.0);
            let se = (var / nf).sqrt();
            worst_z = worst_z.max((mean - exact[i]).abs() / se);
        }
    }
    let elapsed = started.elapsed();
    outcome(
        worst_z <= 3.0 && elapsed <= Duration::from_secs(300),
        format!("15 (graph, S) pairs, worst |mean J - I| / SE = {worst_z:.2}, {elapsed:.1?}"),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = stream(505);
    let bound = 1.0 - (-1.0f64).exp();
    let mut violations = 0;
    for _ in 0..100 {
        let n = rng.gen_range(2..=10);
        let m = rng.gen_range(1..=8);
        let k = rng.gen_range(1..=3.min(n));
        let density = rng.gen_range(0.05..0.6);
        let x = random_matrix(n, m, density, &mut rng);
        let greedy = sample_influence(&x, &greedy_seed(&x, k, &mut rng).unwrap().seeds);
        let best = k_subsets(n, k)
            .iter()
            .map(|s| sample_influence(&x, s))
            .fold(0.0, f64::max);
        if greedy < bound * best - 1e-12 {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("100 instances, {violations} violations"))
}

fn criterion_6() -> Outcome {
    let (n, m, k, eps, t) = (50usize, 200usize, 3usize, 1.0f64, 2.0f64);
    let mut rng = stream(606);
    let g = erdos_renyi(n, 0.08, 0.3, &mut rng).unwrap();
    let x = draw_influence_samples(&g, m, &mut rng).unwrap();
    let best = k_subsets(n, k)
        .par_iter()
        .map(|s| sample_influence(&x, s))
        .reduce(|| 0.0, f64::max);
    let threshold =
        (1.0 - (-1.0f64).exp()) * best - 2.0 * (k * k * n) as f64 / (eps * m as f64) * ((n as f64).ln() + t);
    let runs = 10_000u64;
    let violations = (0..runs)
        .into_par_iter()
        .filter(|&r| {
            let mut rng = substream(607, &[r]);
            let sel = exp_mech_seed(&x, k, eps, &mut rng).unwrap();
            sample_influence(&x, &sel.seeds) <= threshold
        })
        .count();
    let rate = violations as f64 / runs as f64;
    let allowed = k as f64 * (-t).exp() + 0.02;
    outcome(
        rate <= allowed,
        format!("max I_x = {best:.2}, threshold {threshold:.2}, violation rate {rate:.4} <= {allowed:.4}"),
    )
}

fn trend_config() -> ExperimentConfig {
    ExperimentConfig {
        graph: GraphSource::Er {
            n: 200,
            edge_prob: 0.15,
        },
        cascade_prob: 0.03,
        k: 4,
        epsilon_grid: vec![0.1, 1.0],
        m_grid: vec![0, 50, 150, 300, 500],
        mechanisms: vec![Mechanism::Greedy, Mechanism::ExpMech, Mechanism::LocalRr],
        collections: 20,
        reruns: 5,
        eval_samples: 1000,
        master_seed: 707,
        full_info_trials: 1000,
        exact_eval: false,
        record_wall_time: false,
        jobs: None,
    }
}

fn criterion_7_and_8() -> (Outcome, Outcome) {
    let config = trend_config();
    let started = Instant::now();
    let out = run_experiment(&config).unwrap();
    let elapsed = started.elapsed();
    let cell = |mech, eps, m| out.cell(mech, eps, m).unwrap();
    let mut notes = Vec::new();

    for c in &out.summary {
        println!(
            "    {:<8} eps={:<4} m={:<4} mean={:>7.3} ci=[{:.3}, {:.3}]",
            c.mechanism.as_str(),
            c.epsilon,
            c.m,
            c.mean_spread,
            c.ci95_lo,
            c.ci95_hi
        );
    }
    let flagged = out.summary.iter().filter(|c| c.flagged()).count();

    // (a) non-decreasing in m at eps = 1, one overlapping dip tolerated
    let exp1: Vec<_> = config
        .m_grid
        .iter()
        .map(|&m| cell(Mechanism::ExpMech, 1.0, m))
        .collect();
    let dips: Vec<_> = exp1
        .windows(2)
        .filter(|w| w[1].mean_spread < w[0].mean_spread)
        .collect();
    let a = dips.is_empty() || (dips.len() == 1 && dips[0][1].ci95_hi >= dips[0][0].ci95_lo);
    notes.push(format!("(a) {} dip(s)", dips.len()));

    // (b) exp_mech >= local_rr for m >= 150, CI-separated at eps = 0.1, m = 500
    let mut b = true;
    for &eps in &config.epsilon_grid {
        for &m in config.m_grid.iter().filter(|&&m| m >= 150) {
            if cell(Mechanism::ExpMech, eps, m).mean_spread < cell(Mechanism::LocalRr, eps, m).mean_spread {
                b = false;
                notes.push(format!("(b) exp < rr at eps={eps}, m={m}"));
            }
        }
    }
    let (e, r) = (cell(Mechanism::ExpMech, 0.1, 500), cell(Mechanism::LocalRr, 0.1, 500));
    let separated = e.ci95_lo > r.ci95_hi;
    b &= separated;
    notes.push(format!(
        "(b) eps=0.1 m=500 exp lo {:.3} vs rr hi {:.3}",
        e.ci95_lo, r.ci95_hi
    ));

    // (c) both private mechanisms within 90% of greedy at eps = 1, m = 500
    let greedy = cell(Mechanism::Greedy, 1.0, 500).mean_spread;
    let ratio_e = cell(Mechanism::ExpMech, 1.0, 500).mean_spread / greedy;
    let ratio_r = cell(Mechanism::LocalRr, 1.0, 500).mean_spread / greedy;
    let c = ratio_e >= 0.9 && ratio_r >= 0.9;
    notes.push(format!("(c) exp/greedy {ratio_e:.3}, rr/greedy {ratio_r:.3}"));

    let in_time = elapsed <= Duration::from_secs(30 * 60);
    let seven = outcome(
        flagged == 0 && a && b && c && in_time,
        format!("a={a} b={b} c={c}; {}; {elapsed:.1?}", notes.join("; ")),
    );

    let mut first = Vec::new();
    write_results_csv(&out.records, &mut first).unwrap();
    let again = run_experiment(&config).unwrap();
    let mut second = Vec::new();
    write_results_csv(&again.records, &mut second).unwrap();
    let eight = outcome(
        first == second,
        format!(
            "{} rows, {} bytes, identical = {}",
            out.records.len(),
            first.len(),
            first == second
        ),
    );
    (seven, eight)
}

fn criterion_9() -> Outcome {
    let n = 100;
    let center = 37;
    let g = star_graph(n, center, 0.5).unwrap();
    let samples = 200_000;
    let est = evaluate_spread(&g, &[center], samples, &mut stream(909)).unwrap();
    let target = (n as f64 + 1.0) / 2.0;
    // each sample covers the center with probability target / n
    let p = target / n as f64;
    let se = n as f64 * (p * (1.0 - p) / samples as f64).sqrt();
    let z = (est - target).abs() / se;

    let cliques = clique_union(n, 10).unwrap();
    let worst = (0..n)
        .map(|v| (influence_exact(&cliques, &[v]).unwrap() - 10.0).abs())
        .fold(0.0, f64::max);
    outcome(
        z <= 3.0 && worst == 0.0,
        format!("star estimate {est:.3} vs {target} (z = {z:.2}); clique max deviation {worst:e}"),
    )
}

fn main() {
    // cheap sanity check on the combinatorics helper
    assert_eq!(k_subsets(50, 3).len() as f64, binomial(50, 3));

    let report = |id: usize, name: &str, o: Outcome| {
        println!(
            "criterion {id} {name}: {} ({})",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        (id, o.pass)
    };
    let mut results = vec![
        report(1, "exact central privacy", criterion_1()),
        report(2, "exact local privacy", criterion_2()),
        report(3, "debiasing correctness", criterion_3()),
        report(4, "unbiased debiased estimate", criterion_4()),
        report(5, "greedy guarantee", criterion_5()),
        report(6, "exponential mechanism utility tail", criterion_6()),
    ];
    let (seven, eight) = criterion_7_and_8();
    results.push(report(7, "trend reproduction", seven));
    results.push(report(8, "determinism", eight));
    results.push(report(9, "hardness fixtures", criterion_9()));

    let failed: Vec<usize> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
