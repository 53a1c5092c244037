use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use treebridge::chain::{run_chain, ChainConfig, Observer, TraceRow, DEFAULT_PATH_CAP};
use treebridge::data::{load_and_preprocess, ColumnFilter, PreprocessOptions};
use treebridge::diagnostics::{map_sequence, scale_tmrca, TmrcaSummary, TreeSequence};
use treebridge::init::initial_state;
use treebridge::output::{self, config_text, read_samples_file, write_map, FileObserver};
use treebridge::smc::{simulate_smc, ModelParams};
use treebridge::state::ChainState;
use treebridge::suites;

#[derive(Parser)]
#[command(name = "treebridge", version, about = "Bridging MCMC sampler for ancestral recombination graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sampler on a binary haplotype matrix.
    Sample(SampleArgs),
    /// Simulate a haplotype matrix under the sequentially Markov coalescent.
    Simulate(SimulateArgs),
    /// Run a property suite against the reference oracles.
    Verify(VerifyArgs),
    /// Summarise a samples file: MAP tree sequence and scaled TMRCAs.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    data: PathBuf,
    /// One original coordinate per input column.
    #[arg(long)]
    positions: Option<PathBuf>,
    #[arg(long)]
    theta: f64,
    #[arg(long)]
    rho: f64,
    /// Segregating sites on each side of a bridge's interior.
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    burnin: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads for segment waves; 0 is sequential.
    #[arg(long, default_value_t = 0)]
    parallel: usize,
    #[arg(long, default_value_t = DEFAULT_PATH_CAP)]
    path_cap: usize,
    #[arg(long)]
    dedupe_rows: bool,
    #[arg(long, default_value_t = 2)]
    min_minor: usize,
    /// Delete low-frequency columns instead of treating them as monomorphic.
    #[arg(long)]
    drop_filtered: bool,
    /// Report progress on stderr every this many iterations (0: never).
    #[arg(long, default_value_t = 1000)]
    progress: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    sites: usize,
    #[arg(long)]
    theta: f64,
    #[arg(long)]
    rho: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file; standard output if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Theorem1,
    Kernels,
    Scan,
    Compat,
    All,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    suite: Suite,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Run directory holding samples.trees; outputs are written beside it.
    #[arg(long)]
    out: PathBuf,
    /// Leading samples to discard.
    #[arg(long, default_value_t = 0)]
    burnin: usize,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<treebridge::Error> for Failure {
    fn from(e: treebridge::Error) -> Self {
        match e {
            treebridge::Error::Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn read_input(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

struct Progress<'a> {
    inner: &'a mut FileObserver,
    every: usize,
    total: usize,
}

impl Observer for Progress<'_> {
    fn trace(&mut self, row: &TraceRow) -> treebridge::Result<()> {
        if self.every > 0 && row.iter % self.every == 0 {
            eprintln!(
                "iter {}/{}  log posterior {:.4}  recombinations {}",
                row.iter, self.total, row.log_posterior, row.n_recomb
            );
        }
        self.inner.trace(row)
    }

    fn sample(&mut self, sample_id: usize, state: &ChainState) -> treebridge::Result<()> {
        self.inner.sample(sample_id, state)
    }
}

fn sample(args: SampleArgs) -> Result<(), Failure> {
    let params = ModelParams::new(args.theta, args.rho).map_err(|e| Failure::Usage(e.to_string()))?;
    let text = read_input(&args.data)?;
    let positions = args.positions.as_deref().map(read_input).transpose()?;
    let opts = PreprocessOptions {
        dedupe_rows: args.dedupe_rows,
        min_minor_count: args.min_minor,
        filter: if args.drop_filtered {
            ColumnFilter::Drop
        } else {
            ColumnFilter::Mask
        },
    };
    let data = load_and_preprocess(&text, positions.as_deref(), &opts)?;
    let config = ChainConfig {
        m: args.m,
        iterations: args.iters,
        seed: args.seed,
        burn_in: args.burnin,
        thin: args.thin,
        parallel: args.parallel,
        path_cap: args.path_cap,
        ..ChainConfig::new(params)
    };
    config.validate()?;
    fs::create_dir_all(&args.out)?;
    let described = [
        ("data", args.data.display().to_string()),
        ("sequences", data.n_sequences().to_string()),
        ("sites", data.n_sites().to_string()),
        ("segregating", data.segregating().len().to_string()),
        ("dedupe_rows", args.dedupe_rows.to_string()),
        ("min_minor", args.min_minor.to_string()),
        ("filtered_columns", if args.drop_filtered { "drop" } else { "mask" }.to_string()),
    ];
    fs::write(args.out.join(output::CONFIG_FILE), config_text(&config, &described))?;
    eprintln!(
        "{} sequences, {} sites, {} segregating",
        data.n_sequences(),
        data.n_sites(),
        data.segregating().len()
    );
    let init = initial_state(&data)?;
    eprintln!("initial state: {} recombinations", init.n_recombinations());
    let mut files = FileObserver::create(&args.out)?;
    let mut observer = Progress {
        inner: &mut files,
        every: args.progress,
        total: args.iters,
    };
    let result = run_chain(&data, &config, init, &mut observer);
    files.flush()?;
    let summary = result?;
    eprintln!(
        "done: {} samples, bridges accepted {} rejected {} skipped {}, times accepted {} rejected {}",
        summary.samples,
        summary.accepted,
        summary.rejected,
        summary.skipped,
        summary.time_accepted,
        summary.time_rejected
    );
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let params = ModelParams::new(args.theta, args.rho).map_err(|e| Failure::Usage(e.to_string()))?;
    if args.n < 2 || args.sites == 0 {
        return Err(Failure::Usage("need --n >= 2 and --sites >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let sim = simulate_smc(&mut rng, args.n, args.sites, &params)?;
    let text = format!(
        "# simulated: n={} sites={} theta={} rho={} seed={}\n{}",
        args.n,
        args.sites,
        args.theta,
        args.rho,
        args.seed,
        sim.data.to_text()
    );
    match args.out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn verify(args: VerifyArgs) -> Result<(), Failure> {
    let s = args.seed;
    let checks = match args.suite {
        Suite::Theorem1 => vec![suites::theorem1(6, 500, s)],
        Suite::Kernels => vec![
            suites::regraft_density_integrals(100, s),
            suites::recombination_split(1_000_000, s),
            suites::initial_topology_frequencies(1_000_000, s),
        ],
        Suite::Scan => vec![suites::scan_against_exhaustive(200, s)],
        Suite::Compat => vec![suites::compatibility_sweep(10_000, s)],
        Suite::All => vec![
            suites::theorem1(6, 500, s),
            suites::regraft_density_integrals(100, s),
            suites::recombination_split(1_000_000, s),
            suites::initial_topology_frequencies(1_000_000, s),
            suites::scan_against_exhaustive(200, s),
            suites::compatibility_sweep(10_000, s),
        ],
    };
    let mut failed = 0;
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        failed += usize::from(!c.passed);
    }
    if failed > 0 {
        return Err(Failure::Runtime(format!("{failed} suite(s) failed")));
    }
    Ok(())
}

fn summarize(args: SummarizeArgs) -> Result<(), Failure> {
    let path = args.out.join(output::SAMPLES_FILE);
    if !path.exists() {
        return Err(Failure::Usage(format!("{} not found", path.display())));
    }
    let samples: Vec<TreeSequence> = read_samples_file(&path)?
        .into_iter()
        .skip(args.burnin)
        .map(|(_, s)| s)
        .collect();
    let map = map_sequence(&samples)?;
    let mut buf = Vec::new();
    write_map(&mut buf, &map)?;
    fs::write(args.out.join(output::MAP_FILE), buf)?;
    let tm: Vec<TmrcaSummary> = samples.iter().map(TmrcaSummary::of).collect();
    let scaled = scale_tmrca(&tm)?;
    let mut buf = format!("{}\n", output::TMRCA_HEADER).into_bytes();
    for (i, s) in scaled.iter().enumerate() {
        output::write_tmrca_rows(&mut buf, i + 1 + args.burnin, s)?;
    }
    fs::write(args.out.join("tmrca_scaled.csv"), buf)?;
    eprintln!(
        "{} samples; MAP structure has {} blocks and support {}",
        samples.len(),
        map.blocks.len(),
        map.support
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sample(a) => sample(a),
        Command::Simulate(a) => simulate(a),
        Command::Verify(a) => verify(a),
        Command::Summarize(a) => summarize(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
