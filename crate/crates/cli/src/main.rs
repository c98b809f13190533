//! `dpseed`: influence-sample generation, private seed selection and
//! experiment sweeps from the command line.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;

use dpseed_core::cascade::draw_influence_samples;
use dpseed_core::graph::{clique_union, erdos_renyi, load_edge_list, star_graph};
use dpseed_core::harness::{run_experiment_with, write_summary_csv, ExperimentConfig, ResultsWriter};
use dpseed_core::privacy::verify_isdp_exact;
use dpseed_core::rng::stream;
use dpseed_core::seeding::{full_info_greedy, Seeder};
use dpseed_core::{Error, InfluenceSampleMatrix, Mechanism, Result, WeightedGraph};

#[derive(Parser)]
#[command(
    name = "dpseed",
    version,
    about = "Privacy-preserving seed selection from influence samples"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic graph as JSON.
    Gen(GenArgs),
    /// Convert a whitespace-separated edge list to graph JSON.
    Load(LoadArgs),
    /// Draw influence samples from a graph.
    Sample(SampleArgs),
    /// Select seeds from an influence-sample file.
    Seed(SeedArgs),
    /// Check a mechanism's privacy exactly on a random small sample matrix.
    Verify(VerifyArgs),
    /// Run a configured sweep and write results.csv and summary.csv.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Er,
    Star,
    #[value(alias = "clique_union")]
    CliqueUnion,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    model: Model,
    #[arg(long)]
    n: usize,
    /// Edge presence probability (er).
    #[arg(long, default_value_t = 0.1)]
    edge_prob: f64,
    /// Cascade probability on every edge (er, star).
    #[arg(long, default_value_t = 0.5)]
    cascade_p: f64,
    /// Star center.
    #[arg(long, default_value_t = 0)]
    center: usize,
    /// Number of cliques (clique-union).
    #[arg(long, default_value_t = 1)]
    cliques: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct LoadArgs {
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    cascade_p: f64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(short)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SeedArgs {
    /// Expected node count; checked against the sample file header.
    #[arg(long)]
    graph_n: Option<usize>,
    #[arg(long, required_unless_present = "graph")]
    samples: Option<PathBuf>,
    /// greedy, exp, rr, random, or full_info (which needs --graph).
    #[arg(long)]
    mech: String,
    #[arg(short)]
    k: usize,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Graph JSON for full_info.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Realizations averaged by full_info.
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    mech: String,
    #[arg(long)]
    n: usize,
    #[arg(short)]
    m: usize,
    #[arg(short)]
    k: usize,
    /// Budget to verify against.
    #[arg(long)]
    eps: f64,
    /// Budget the mechanism runs with; defaults to --eps.
    #[arg(long)]
    mech_eps: Option<f64>,
    /// Probability of a one entry in the random matrix.
    #[arg(long, default_value_t = 0.5)]
    density: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(short, long, default_value = "results.csv")]
    output: PathBuf,
    /// Defaults to summary.csv next to the results file.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Worker threads; overrides the config.
    #[arg(long)]
    jobs: Option<usize>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    let io = |path: &Path, e| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    match output {
        Some(path) => {
            let mut w = create(path)?;
            w.write_all(text.as_bytes())
                .and_then(|_| w.flush())
                .map_err(|e| io(path, e))
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn gen(a: GenArgs) -> Result<()> {
    let g = match a.model {
        Model::Er => erdos_renyi(a.n, a.edge_prob, a.cascade_p, &mut stream(a.seed))?,
        Model::Star => star_graph(a.n, a.center, a.cascade_p)?,
        Model::CliqueUnion => clique_union(a.n, a.cliques)?,
    };
    eprintln!("generated {} nodes, {} edges", g.n(), g.edge_count());
    emit(a.output.as_deref(), &g.to_json()?)
}

fn load(a: LoadArgs) -> Result<()> {
    let loaded = load_edge_list(&a.edges, a.cascade_p)?;
    eprintln!(
        "read {} pairs: {} self-loops and {} duplicates dropped; {} nodes, {} undirected edges",
        loaded.raw_pairs,
        loaded.self_loops,
        loaded.duplicates,
        loaded.graph.n(),
        loaded.graph.edge_count()
    );
    emit(a.output.as_deref(), &loaded.graph.to_json()?)
}

fn sample(a: SampleArgs) -> Result<()> {
    let g = WeightedGraph::load_json(&a.graph)?;
    let x = draw_influence_samples(&g, a.m, &mut stream(a.seed))?;
    let text = x.to_text();
    emit(a.output.as_deref(), text.trim_end_matches('\n'))
}

fn seed(a: SeedArgs) -> Result<()> {
    let mechanism: Mechanism = a.mech.parse()?;
    let mut rng = stream(a.seed);
    let selection = if mechanism == Mechanism::FullInfo {
        let path = a
            .graph
            .as_ref()
            .ok_or_else(|| Error::Parameter("full_info needs --graph".into()))?;
        let g = WeightedGraph::load_json(path)?;
        full_info_greedy(&g, a.k, a.trials, &mut rng)?
    } else {
        let path = a
            .samples
            .as_ref()
            .ok_or_else(|| Error::Parameter("--samples is required".into()))?;
        let x = InfluenceSampleMatrix::load(path)?;
        if let Some(n) = a.graph_n {
            if n != x.n() {
                return Err(Error::Parameter(format!(
                    "--graph-n {n} does not match the sample file's n = {}",
                    x.n()
                )));
            }
        }
        let eps = match (mechanism.is_private(), a.eps) {
            (true, None) => return Err(Error::Parameter(format!("{mechanism} needs --eps"))),
            (_, eps) => eps.unwrap_or(0.0),
        };
        Seeder::from_mechanism(mechanism, eps)?.run(&x, a.k, &mut rng)?
    };
    emit(a.output.as_deref(), &selection.to_json()?)
}

/// Exit status 1 reports a failed check rather than an error.
fn verify(a: VerifyArgs) -> Result<bool> {
    let mechanism: Mechanism = a.mech.parse()?;
    if !(0.0..=1.0).contains(&a.density) {
        return Err(Error::Parameter(format!(
            "density must lie in [0, 1], got {}",
            a.density
        )));
    }
    let seeder = Seeder::from_mechanism(mechanism, a.mech_eps.unwrap_or(a.eps))?;
    let mut rng = stream(a.seed);
    let cols: Vec<Vec<usize>> = (0..a.m)
        .map(|_| (0..a.n).filter(|_| rng.gen_bool(a.density)).collect())
        .collect();
    let x = InfluenceSampleMatrix::from_columns(a.n, &cols)?;
    let report = verify_isdp_exact(&seeder, &x, a.k, a.eps)?;
    eprintln!("{}", if report.pass { "PASS" } else { "FAIL" });
    println!("{}", report.to_json()?);
    Ok(report.pass)
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let mut config = ExperimentConfig::load(&a.config)?;
    if a.jobs.is_some() {
        config.jobs = a.jobs;
        config.validate()?;
    }
    let summary_path = a.summary.clone().unwrap_or_else(|| {
        a.output
            .parent()
            .map(|p| p.join("summary.csv"))
            .unwrap_or_else(|| PathBuf::from("summary.csv"))
    });
    let mut results = ResultsWriter::new(create(&a.output)?)?;
    let out = run_experiment_with(&config, |records| results.write(records))?;
    write_summary_csv(&out.summary, create(&summary_path)?)?;
    let flagged = out.summary.iter().filter(|c| c.flagged()).count();
    eprintln!(
        "{} trials in {} cells ({} flagged) -> {}, {}",
        out.records.len(),
        out.summary.len(),
        flagged,
        a.output.display(),
        summary_path.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(a) => gen(a).map(|_| true),
        Command::Load(a) => load(a).map(|_| true),
        Command::Sample(a) => sample(a).map(|_| true),
        Command::Seed(a) => seed(a).map(|_| true),
        Command::Verify(a) => verify(a),
        Command::Experiment(a) => experiment(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
