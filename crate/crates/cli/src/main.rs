use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use rankwalk::linext::sampled_average_ranks;
use rankwalk::report::{
    correlate, run_cutoffs, top_k_common_players, LabeledAvgRanks, PipelineError, PosetDocument,
    RunManifest,
};
use rankwalk::{Error, ExtensionSamplerConfig, InitialState, SourceFormat};

#[derive(Parser, Debug)]
#[command(name = "rankwalk", version, about = "Partial orders of players from historical ranking snapshots")]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// RNG seed for the walk and the extension sampler.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Rank cutoff κ; repeat or comma-separate to run several.
    #[arg(long, global = true, value_delimiter = ',')]
    cutoff: Vec<u32>,

    /// Number of thinned walk samples (verify: sample count of each check).
    #[arg(long, global = true, default_value_t = 100_000)]
    samples: usize,

    /// Dominance slack ε.
    #[arg(long, global = true, default_value_t = 0.0)]
    epsilon: f64,

    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Log stage diagnostics to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ingest rankings, run the walk and write poset, Hasse and average-rank artifacts.
    BuildPoset(BuildPoset),
    /// Recompute average ranks from a stored poset JSON.
    AvgRanks(AvgRanks),
    /// Fit average ranks across cutoffs over their common top-k players.
    Correlate(Correlate),
    /// Run the small-n oracle checks.
    Verify,
}

#[derive(Args, Debug)]
struct BuildPoset {
    /// Ranking files or glob patterns.
    #[arg(long, required = true, num_args = 1..)]
    rankings: Vec<String>,

    /// Player file mapping ids to display names.
    #[arg(long)]
    players: Option<PathBuf>,

    #[arg(long, default_value = "sackmann")]
    format: SourceFormat,

    /// Burn-in steps (default 50·n·(n−1)).
    #[arg(long)]
    burn_in: Option<u64>,

    /// Steps between samples (default 2(n−1)).
    #[arg(long)]
    thin: Option<u64>,

    #[arg(long, default_value_t = 1)]
    chains: usize,

    #[arg(long, default_value = "prevalence-sorted")]
    initial_state: InitialState,

    /// Linear extensions sampled for average ranks.
    #[arg(long, default_value_t = 100_000)]
    extensions: usize,

    /// Include the rank CDF matrix in the poset JSON.
    #[arg(long)]
    emit_cdf: bool,

    /// Write the weight matrix as weights-k{κ}.csv.
    #[arg(long)]
    dump_weights: bool,

    /// Write the thinned samples as samples-k{κ}.txt.
    #[arg(long)]
    write_samples: bool,

    /// Also copy the average-rank CSV here (single cutoff only).
    #[arg(long)]
    avg_ranks_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AvgRanks {
    /// Poset JSON written by build-poset.
    #[arg(long)]
    poset: PathBuf,

    #[arg(long, default_value_t = 100_000)]
    extensions: usize,

    /// Output CSV (default: avg-ranks-k{κ}.csv in the output directory).
    #[arg(long)]
    avg_ranks_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Correlate {
    /// Average-rank CSVs, one per cutoff.
    #[arg(required = true, num_args = 2..)]
    reports: Vec<PathBuf>,

    /// Players must be in the best k of every report.
    #[arg(long, default_value_t = 50)]
    top_k: usize,
}

fn expand(patterns: &[String]) -> anyhow::Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for pattern in patterns {
        if Path::new(pattern).exists() {
            paths.push(PathBuf::from(pattern));
            continue;
        }
        let mut matched: Vec<PathBuf> = glob::glob(pattern)
            .map_err(|e| Error::Contract(format!("bad pattern {pattern}: {e}")))?
            .filter_map(|p| p.ok())
            .collect();
        if matched.is_empty() {
            return Err(Error::Data(format!("no ranking files match {pattern}")).into());
        }
        matched.sort();
        paths.extend(matched);
    }
    Ok(paths)
}

fn build_poset(g: &Global, a: &BuildPoset) -> anyhow::Result<()> {
    if g.cutoff.is_empty() {
        return Err(Error::Contract("build-poset needs --cutoff".into()).into());
    }
    if a.avg_ranks_out.is_some() && g.cutoff.len() > 1 {
        return Err(Error::Contract("--avg-ranks-out takes a single --cutoff".into()).into());
    }
    let mut manifest = RunManifest::new(expand(&a.rankings)?, g.cutoff[0], g.out_dir.clone());
    manifest.players = a.players.clone();
    manifest.format = a.format;
    manifest.walk.seed = g.seed;
    manifest.walk.samples = g.samples;
    manifest.walk.burn_in = a.burn_in;
    manifest.walk.thin = a.thin;
    manifest.walk.chains = a.chains;
    manifest.walk.initial_state = a.initial_state;
    manifest.epsilon = g.epsilon;
    manifest.extensions.count = a.extensions;
    manifest.emit_cdf = a.emit_cdf;
    manifest.dump_weights = a.dump_weights;
    manifest.write_samples = a.write_samples;

    let mut first_error = None;
    for (k, result) in g.cutoff.iter().zip(run_cutoffs(&manifest, &g.cutoff)) {
        match result {
            Ok(out) => {
                println!(
                    "cutoff {k}: n={} cover_edges={} maximal=[{}]",
                    out.roster.len(),
                    out.poset.cover_edges.len(),
                    out.maximal_names().join(", ")
                );
                println!("  {}", out.poset_path.display());
                println!("  {}", out.dot_path.display());
                println!("  {}", out.avg_ranks_path.display());
                if let Some(dest) = &a.avg_ranks_out {
                    std::fs::copy(&out.avg_ranks_path, dest)
                        .map_err(|e| Error::Io { path: dest.clone(), source: e })?;
                    println!("  {}", dest.display());
                }
            }
            Err(e) => {
                if g.cutoff.len() > 1 {
                    eprintln!("cutoff {k}: {e}: {}", e.source);
                }
                first_error.get_or_insert(e);
            }
        }
    }
    match first_error {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn avg_ranks(g: &Global, a: &AvgRanks) -> anyhow::Result<()> {
    let doc = PosetDocument::read(&a.poset)?;
    let poset = doc.to_poset()?;
    let cfg = ExtensionSamplerConfig::for_poset(poset.n(), a.extensions, g.seed);
    let report = sampled_average_ranks(&poset, &cfg)?;
    let labeled = LabeledAvgRanks {
        cutoff: Some(doc.cutoff),
        fingerprint: Some(doc.manifest_fingerprint.clone()),
        players: doc.players(),
        avg_rank: report.avg_rank,
        extensions_sampled: report.extensions_sampled,
    };
    let path = match &a.avg_ranks_out {
        Some(p) => p.clone(),
        None => {
            std::fs::create_dir_all(&g.out_dir).map_err(|e| Error::Io {
                path: g.out_dir.clone(),
                source: e,
            })?;
            g.out_dir.join(format!("avg-ranks-k{}.csv", doc.cutoff))
        }
    };
    labeled.write_csv(&path)?;
    println!("{}", path.display());
    Ok(())
}

fn run_correlate(g: &Global, a: &Correlate) -> anyhow::Result<()> {
    let reports = a
        .reports
        .iter()
        .map(|p| LabeledAvgRanks::read_csv(p))
        .collect::<rankwalk::Result<Vec<_>>>()?;
    let subset = top_k_common_players(&reports, a.top_k)?;
    println!("{} players in the top {} of every report", subset.len(), a.top_k);
    let result = correlate(&reports, &subset)?;
    let (fits, scatter) = result.write(&g.out_dir)?;
    for p in &result.pairs {
        let label = |c: Option<u32>| c.map_or("?".to_string(), |c| c.to_string());
        match p.fit {
            Some(f) => println!(
                "cutoff {} vs {}: slope={:.6} intercept={:.6} r2={}",
                label(p.predictor_cutoff),
                label(p.response_cutoff),
                f.slope,
                f.intercept,
                f.r_squared.map_or("undefined".to_string(), |r| format!("{r:.6}"))
            ),
            None => println!(
                "cutoff {} vs {}: undefined (constant predictor)",
                label(p.predictor_cutoff),
                label(p.response_cutoff)
            ),
        }
    }
    println!("{}\n{}", fits.display(), scatter.display());
    Ok(())
}

fn verify(g: &Global) -> anyhow::Result<()> {
    let checks = rankwalk::verify::run_checks(g.seed, g.samples)?;
    for c in &checks {
        println!("{c}");
    }
    if checks.iter().any(|c| !c.passed) {
        bail!(Error::Numerical("verification failed".into()));
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let core = err
        .downcast_ref::<Error>()
        .or_else(|| err.downcast_ref::<PipelineError>().map(|p| &p.source));
    match core {
        Some(Error::Contract(_)) => 1,
        Some(e) if e.is_data_error() => 2,
        Some(_) => 3,
        None => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.global.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let g = &cli.global;
    let result = match &cli.command {
        Command::BuildPoset(a) => build_poset(g, a),
        Command::AvgRanks(a) => avg_ranks(g, a).context("avg-ranks"),
        Command::Correlate(a) => run_correlate(g, a).context("correlate"),
        Command::Verify => verify(g),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
