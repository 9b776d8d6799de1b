use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use memexperts::harness::record::run_on_stream;
use memexperts::harness::{classify_blocks, run_sweep, stay_bound, variant_spec, Cell, SweepConfig, Variant};
use memexperts::params::DEFAULT_K_OFFSET;
use memexperts::pool::SamplingTrace;
use memexperts::{generate, Error, HierarchyConfig, LearnerSpec, StreamSpec};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "memexperts", version, about = "Memory-bounded prediction with expert advice")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one learner on one stream.
    Run(RunArgs),
    /// Run a grid of cells, variants and trials in parallel.
    Sweep(SweepArgs),
    /// Label stay and evict blocks from a saved sampling trace.
    Diagnose(DiagnoseArgs),
    /// Write a generated stream as CSV (one row per day).
    Stream(StreamArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long = "T")]
    horizon: u64,
    #[arg(long, default_value = "drift")]
    stream: String,
    #[arg(long, default_value = "hier")]
    algo: Variant,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Run the doubling wrapper instead of a fixed-horizon learner.
    #[arg(long)]
    unknown_horizon: bool,
    #[arg(long, default_value_t = DEFAULT_K_OFFSET)]
    k_offset: u32,
    /// JSON file holding a learner description; overrides --algo.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON sweep description (cells, variants, trials, seed).
    #[arg(long, conflicts_with_all = ["n", "m", "horizon", "stream"])]
    grid: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    m: Vec<usize>,
    #[arg(long = "T", value_delimiter = ',')]
    horizon: Vec<u64>,
    #[arg(long, value_delimiter = ',')]
    stream: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    variants: Vec<Variant>,
    #[arg(long)]
    trials: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k_offset: Option<u32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
}

#[derive(Args)]
struct StreamArgs {
    #[arg(long)]
    n: usize,
    #[arg(long = "T")]
    horizon: u64,
    #[arg(long, default_value = "drift")]
    stream: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

/// What `run` saves for `diagnose`: enough to regenerate the stream and
/// replay the pools.
#[derive(Serialize, Deserialize)]
struct TraceFile {
    config: HierarchyConfig,
    stream: StreamSpec,
    trace: SamplingTrace,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn seed_or_entropy(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn run(args: RunArgs) -> CliResult<()> {
    let seed = seed_or_entropy(args.seed);
    let stream_spec = StreamSpec::parse(&args.stream, args.n, args.horizon, seed)?;
    let learner = if let Some(path) = &args.config {
        read_json::<LearnerSpec>(path)?
    } else if args.unknown_horizon {
        LearnerSpec::UnknownHorizon { n: args.n, m: args.m, k_offset: args.k_offset }
    } else {
        variant_spec(args.algo, args.n, args.m, args.horizon, args.k_offset)?
    };
    let stream = generate(&stream_spec)?;
    let record = run_on_stream(&learner, &stream_spec, &stream, seed)?;

    fs::create_dir_all(&args.out)?;
    let mut out = create(&args.out.join("run.jsonl"))?;
    serde_json::to_writer(&mut out, &record.without_trace())?;
    writeln!(out)?;
    out.flush()?;

    let mut out = create(&args.out.join("regret.csv"))?;
    writeln!(out, "day,regret")?;
    for (d, r) in record.regret_curve(&stream)?.iter().enumerate() {
        writeln!(out, "{},{r}", d + 1)?;
    }
    out.flush()?;

    if let (LearnerSpec::Hierarchical { config, .. }, Some(trace)) = (&learner, &record.trace) {
        let file = TraceFile { config: config.clone(), stream: stream_spec.clone(), trace: trace.clone() };
        let mut out = create(&args.out.join("trace.json"))?;
        serde_json::to_writer(&mut out, &file)?;
        out.flush()?;
    }

    println!("regret {:.4}", record.regret);
    println!("peak words {}", record.peak_words);
    Ok(())
}

fn sweep(args: SweepArgs) -> CliResult<()> {
    let mut config = if let Some(path) = &args.grid {
        read_json::<SweepConfig>(path)?
    } else {
        if args.n.is_empty() || args.horizon.is_empty() {
            return Err(Failure::Usage("either --grid or both --n and --T are required".into()));
        }
        let ms = if args.m.is_empty() { vec![1] } else { args.m.clone() };
        let streams = if args.stream.is_empty() { vec!["drift".to_string()] } else { args.stream.clone() };
        let mut cells = Vec::new();
        for &n in &args.n {
            for &m in &ms {
                for &horizon in &args.horizon {
                    for stream in &streams {
                        cells.push(Cell { n, m, horizon, stream: stream.clone() });
                    }
                }
            }
        }
        SweepConfig { cells, variants: Variant::ALL.to_vec(), trials: 10, seed: 0, k_offset: DEFAULT_K_OFFSET }
    };
    if !args.variants.is_empty() {
        config.variants = args.variants.clone();
    }
    if let Some(t) = args.trials {
        config.trials = t;
    }
    if let Some(k) = args.k_offset {
        config.k_offset = k;
    }
    if args.seed.is_some() || args.grid.is_none() {
        config.seed = seed_or_entropy(args.seed);
    }
    let result = run_sweep(&config)?;
    fs::create_dir_all(&args.out)?;
    let mut out = create(&args.out.join("sweep.jsonl"))?;
    result.write_jsonl(&mut out)?;
    out.flush()?;
    let mut out = create(&args.out.join("summary.csv"))?;
    result.write_summary_csv(&mut out)?;
    out.flush()?;
    println!("{} rows over {} cells", result.rows.len(), result.summaries.len());
    for s in &result.summaries {
        let cols: Vec<String> =
            s.stats.iter().map(|v| format!("{}={:.1}", v.variant, v.median_regret)).collect();
        println!("cell {} n={} m={} T={} {}: median regret {}", s.cell, s.n, s.m, s.horizon, s.stream, cols.join(" "));
    }
    Ok(())
}

fn diagnose(args: DiagnoseArgs) -> CliResult<()> {
    if !(args.delta > 0.0 && args.delta < 1.0) {
        return Err(Failure::Usage(format!("--delta must lie in (0, 1), got {}", args.delta)));
    }
    let file: TraceFile = read_json(&args.trace)?;
    let stream = generate(&file.stream)?;
    let report = classify_blocks(&file.trace, &stream, &file.config)?;
    println!("best expert {} with loss {:.4}", report.e_star, report.e_star_loss);
    println!("level,block,stay,evict,actualized");
    for level in 0..file.config.levels() {
        let (stay, evict, act) = report.counts(level);
        println!("{level},{},{stay},{evict},{act}", file.config.block_size(level));
    }
    let bound = stay_bound(file.config.n(), file.config.m(), args.delta);
    println!("stay blocks before actualization {}", report.walk.stays_before_actualization);
    println!("actualized {}", report.walk.actualized);
    println!("bound (n/m) ln(1/delta) {bound:.4}");
    Ok(())
}

fn stream(args: StreamArgs) -> CliResult<()> {
    let seed = seed_or_entropy(args.seed);
    let spec = StreamSpec::parse(&args.stream, args.n, args.horizon, seed)?;
    let stream = generate(&spec)?;
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    stream.write_csv(create(&args.out)?)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Stream(a) => stream(a),
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
