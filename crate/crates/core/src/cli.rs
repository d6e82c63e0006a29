//! Command-line front end: `factor`, `analyze`, `simulate`, `eig`, `bench`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::dag::{sweep_theta, sweep_theta_parallel, write_theta_csv};
use crate::dense::{read_matrix_market, write_matrix_market, Matrix};
use crate::eig::qr_eigenvalues;
use crate::error::Error;
use crate::rng::{random_matrix, PRNG_ALGORITHM};
use crate::routine::{check_factorization, Routine, DEFAULT_BLOCK_SIZE};
use crate::sim::{calibrate_report, simulate_gemm, simulate_pe_with_block, tile_array_sweep, CostConfig};

/// Version of every CSV and JSON document the tool emits.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "hqr", version, about = "Householder QR: factorization, DAG parallelism analysis and PE cycle simulation")]
pub struct Cli {
    /// Seed for random matrices.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Output file (a directory for `factor`); stdout when omitted.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Run independent cells on several threads.
    #[arg(long, global = true)]
    pub parallel: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Factor a matrix and write Q, R and a residual report.
    Factor(FactorArgs),
    /// Sweep theta and beta over square sizes.
    Analyze(AnalyzeArgs),
    /// Cycle simulation on one PE or a tile array.
    Simulate(SimulateArgs),
    /// Eigenvalues by unshifted QR iteration.
    Eig(EigArgs),
    /// Wall-clock timings of the library routines.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct FactorArgs {
    /// Matrix Market input.
    #[arg(long, conflicts_with = "random", required_unless_present = "random")]
    pub input: Option<PathBuf>,
    /// Random M x N matrix with entries uniform in [-1, 1].
    #[arg(long, num_args = 2, value_names = ["M", "N"])]
    pub random: Option<Vec<usize>>,
    #[arg(long, default_value = "mht")]
    pub routine: Routine,
    #[arg(long, default_value_t = DEFAULT_BLOCK_SIZE)]
    pub block: usize,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Comma-separated square sizes.
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32,64,128,256,512")]
    pub sizes: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "mht")]
    pub routine: Routine,
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    /// Rows for the single-PE run (defaults to n).
    #[arg(long)]
    pub m: Option<usize>,
    /// Tile array dimension.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// JSON cost configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub block: Option<usize>,
    /// Simulate an n x n GEMM instead of a factorization.
    #[arg(long, conflicts_with = "calibrate")]
    pub gemm: bool,
    /// Emit the model's headline ratios at size n.
    #[arg(long)]
    pub calibrate: bool,
}

#[derive(Debug, Args)]
pub struct EigArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub iters: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "ht,mht,blocked-ht,blocked-mht")]
    pub routines: Vec<Routine>,
    #[arg(long, value_delimiter = ',', default_value = "64,128,256")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = DEFAULT_BLOCK_SIZE)]
    pub block: usize,
}

/// A failed command and the exit status it maps to.
#[derive(Debug)]
pub struct CliError {
    pub status: u8,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::WideMatrix { .. } => 2,
            _ => 1,
        };
        CliError {
            status,
            message: e.to_string(),
        }
    }
}

fn fail(message: impl Into<String>) -> CliError {
    CliError {
        status: 1,
        message: message.into(),
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn emit(output: Option<&Path>, text: &str) -> CliResult<()> {
    match output {
        Some(path) => fs::write(path, text).map_err(|e| Error::io(path, e).into()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| fail(format!("cannot write to stdout: {e}")))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| fail(format!("json encoding failed: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// CSV text with a leading schema comment line.
fn csv_text(header: &[&str], rows: &[Vec<String>]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| fail(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        w.write_record(row).map_err(to_err)?;
    }
    let body = w.into_inner().map_err(|e| fail(format!("csv encoding failed: {e}")))?;
    Ok(format!("# schema_version: {SCHEMA_VERSION}\n{}", String::from_utf8_lossy(&body)))
}

fn threads(parallel: bool) -> usize {
    if parallel {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        1
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let output = cli.output.as_deref();
    match &cli.command {
        Command::Factor(args) => factor(cli, args),
        Command::Analyze(args) => analyze(cli, args, output),
        Command::Simulate(args) => simulate(cli, args, output),
        Command::Eig(args) => eig(cli, args, output),
        Command::Bench(args) => bench(cli, args, output),
    }
}

fn factor(cli: &Cli, args: &FactorArgs) -> CliResult<()> {
    let (a, source) = match (&args.input, &args.random) {
        (Some(path), _) => (read_matrix_market(path)?, json!({ "input": path })),
        (None, Some(dims)) => {
            let (m, n) = (dims[0], dims[1]);
            (
                random_matrix(m, n, cli.seed),
                json!({ "random": [m, n], "seed": cli.seed, "prng": PRNG_ALGORITHM }),
            )
        }
        (None, None) => return Err(fail("either --input or --random is required")),
    };
    if a.rows() < a.cols() {
        return Err(Error::WideMatrix {
            rows: a.rows(),
            cols: a.cols(),
        }
        .into());
    }
    if args.block == 0 {
        return Err(Error::BlockSize {
            block_size: 0,
            cols: a.cols(),
        }
        .into());
    }
    let f = args.routine.factor(&a, args.block)?;
    let check = check_factorization(&a, &f)?;
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "routine": args.routine,
        "m": a.rows(),
        "n": a.cols(),
        "block_size": args.routine.is_blocked().then_some(args.block.min(a.cols())),
        "source": source,
        "residual": check.residual,
        "orthogonality": check.orthogonality,
        "triangular_ok": check.triangular_ok,
    });
    let text = to_json(&report)?;
    match &cli.output {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            write_matrix_market(&f.form_q(), dir.join("q.mtx"))?;
            write_matrix_market(&f.r(), dir.join("r.mtx"))?;
            emit(Some(&dir.join("report.json")), &text)?;
        }
        None => emit(None, &text)?,
    }
    let bound = 64.0 * a.rows().max(a.cols()) as f64 * f64::EPSILON;
    if !check.triangular_ok || check.residual > bound || check.orthogonality > bound {
        return Err(fail(format!(
            "factorization check failed: residual {:e}, orthogonality {:e}",
            check.residual, check.orthogonality
        )));
    }
    Ok(())
}

fn analyze(cli: &Cli, args: &AnalyzeArgs, output: Option<&Path>) -> CliResult<()> {
    if let Some(&bad) = args.sizes.iter().find(|&&n| n < 2) {
        return Err(fail(format!("sizes must be at least 2, got {bad}")));
    }
    let rows = match threads(cli.parallel) {
        1 => sweep_theta(&args.sizes)?,
        t => sweep_theta_parallel(&args.sizes, t)?,
    };
    let last = rows.last().expect("nonempty sweep");
    eprintln!("theta asymptote estimate (n = {}): {:.4}", last.n, last.theta);
    let text = match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut buf = format!("# schema_version: {SCHEMA_VERSION}\n").into_bytes();
            write_theta_csv(&rows, &mut buf)?;
            String::from_utf8_lossy(&buf).into_owned()
        }
        Format::Json => to_json(&json!({
            "schema_version": SCHEMA_VERSION,
            "rows": rows,
            "theta_asymptote": last.theta,
        }))?,
    };
    emit(output, &text)
}

fn simulate(cli: &Cli, args: &SimulateArgs, output: Option<&Path>) -> CliResult<()> {
    let cfg = match &args.config {
        Some(path) => CostConfig::load(path)?,
        None => CostConfig::default(),
    };
    let format = cli.format.unwrap_or(Format::Json);
    if args.calibrate {
        let rep = calibrate_report(&cfg, args.n)?;
        return emit(output, &to_json(&json!({ "schema_version": SCHEMA_VERSION, "calibration": rep }))?);
    }
    if args.gemm {
        let rep = simulate_gemm(args.n, &cfg)?;
        let text = match format {
            Format::Json => to_json(&json!({ "schema_version": SCHEMA_VERSION, "config": cfg, "report": rep }))?,
            Format::Csv => csv_text(
                &["kernel", "n", "total_cycles", "flops", "utilization"],
                &[vec![
                    rep.routine.clone(),
                    rep.n.to_string(),
                    rep.total_cycles.to_string(),
                    rep.flops.to_string(),
                    rep.utilization.to_string(),
                ]],
            )?,
        };
        return emit(output, &text);
    }

    let m = args.m.unwrap_or(args.n);
    let pe = simulate_pe_with_block(args.routine, m, args.n, &cfg, args.block)?;
    let tile = if m == args.n {
        Some(tile_array_sweep(args.routine, args.n, &[args.k], &cfg, args.block)?.remove(0))
    } else if args.k != 1 {
        return Err(fail("tile arrays need a square matrix"));
    } else {
        None
    };
    if let Some(t) = &tile {
        eprintln!("k = {}: speedup {:.3}, efficiency {:.3}", t.k, t.speedup, t.efficiency);
    }
    let text = match format {
        Format::Json => to_json(&json!({
            "schema_version": SCHEMA_VERSION,
            "config": cfg,
            "pe": pe,
            "tile_array": tile,
        }))?,
        Format::Csv => {
            let (k, cycles, speedup, eff, util) = match &tile {
                Some(t) => (t.k, t.total_cycles, t.speedup, t.efficiency, t.utilization),
                None => (1, pe.total_cycles, 1.0, 1.0, pe.utilization),
            };
            csv_text(
                &["routine", "m", "n", "k", "pe_cycles", "total_cycles", "speedup", "efficiency", "utilization"],
                &[vec![
                    args.routine.to_string(),
                    m.to_string(),
                    args.n.to_string(),
                    k.to_string(),
                    pe.total_cycles.to_string(),
                    cycles.to_string(),
                    speedup.to_string(),
                    eff.to_string(),
                    util.to_string(),
                ]],
            )?
        }
    };
    emit(output, &text)
}

fn eig(cli: &Cli, args: &EigArgs, output: Option<&Path>) -> CliResult<()> {
    let a: Matrix = read_matrix_market(&args.input)?;
    let rep = qr_eigenvalues(&a, args.iters, args.tol)?;
    if !rep.symmetric {
        eprintln!("warning: input is not symmetric; estimates may be unreliable");
    }
    let text = match cli.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&json!({ "schema_version": SCHEMA_VERSION, "result": rep }))?,
        Format::Csv => csv_text(
            &["index", "eigenvalue"],
            &rep.eigenvalues
                .iter()
                .enumerate()
                .map(|(i, v)| vec![i.to_string(), v.to_string()])
                .collect::<Vec<_>>(),
        )?,
    };
    emit(output, &text)?;
    if !rep.converged {
        return Err(fail(format!(
            "no convergence after {} iterations (off-diagonal {:e})",
            rep.iterations, rep.off_diagonal
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct BenchRow {
    routine: Routine,
    n: usize,
    repeats: usize,
    median_s: f64,
    min_s: f64,
    max_s: f64,
}

fn time_cell(routine: Routine, n: usize, repeats: usize, block: usize, seed: u64) -> Result<BenchRow, Error> {
    let a = random_matrix(n, n, seed);
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let f = routine.factor(&a, block)?;
        times.push(start.elapsed().as_secs_f64());
        std::hint::black_box(f);
    }
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    let median = if times.len() % 2 == 1 {
        times[mid]
    } else {
        0.5 * (times[mid - 1] + times[mid])
    };
    Ok(BenchRow {
        routine,
        n,
        repeats,
        median_s: median,
        min_s: times[0],
        max_s: times[times.len() - 1],
    })
}

fn bench(cli: &Cli, args: &BenchArgs, output: Option<&Path>) -> CliResult<()> {
    if args.repeats == 0 || args.block == 0 {
        return Err(fail("repeats and block must be positive"));
    }
    if args.sizes.contains(&0) {
        return Err(fail("sizes must be positive"));
    }
    let cells: Vec<(Routine, usize)> = args
        .routines
        .iter()
        .flat_map(|&r| args.sizes.iter().map(move |&n| (r, n)))
        .collect();
    let workers = threads(cli.parallel).min(cells.len()).max(1);
    let mut results: Vec<Option<Result<BenchRow, Error>>> = (0..cells.len()).map(|_| None).collect();
    let per = cells.len().div_ceil(workers);
    std::thread::scope(|scope| {
        for (slots, chunk) in results.chunks_mut(per).zip(cells.chunks(per)) {
            scope.spawn(move || {
                for (slot, &(r, n)) in slots.iter_mut().zip(chunk) {
                    *slot = Some(time_cell(r, n, args.repeats, args.block, cli.seed));
                }
            });
        }
    });
    let rows = results
        .into_iter()
        .map(|r| r.expect("cell ran"))
        .collect::<Result<Vec<_>, _>>()?;
    let text = match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => csv_text(
            &["routine", "n", "repeats", "median_s", "min_s", "max_s"],
            &rows
                .iter()
                .map(|r| {
                    vec![
                        r.routine.to_string(),
                        r.n.to_string(),
                        r.repeats.to_string(),
                        r.median_s.to_string(),
                        r.min_s.to_string(),
                        r.max_s.to_string(),
                    ]
                })
                .collect::<Vec<_>>(),
        )?,
        Format::Json => to_json(&json!({
            "schema_version": SCHEMA_VERSION,
            "seed": cli.seed,
            "prng": PRNG_ALGORITHM,
            "rows": rows,
        }))?,
    };
    emit(output, &text)
}

/// Parses the process arguments, runs the command and maps failures to exit
/// codes (2 for usage errors and wide matrices, 1 otherwise).
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.status)
        }
    }
}
