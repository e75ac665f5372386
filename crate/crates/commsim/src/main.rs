use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use commsim::checks::{run_suite, Suite};
use commsim::eval::cell_seed;
use commsim::sweep::{emit_csv, preset, SweepSpec};
use commsim::{run_cell, Cell, Error, Family, FamilyKind};
use commsim_core::bounds::{l1_risk_bound, l2_risk_bound};
use commsim_core::{ComplexityProfile, Scheme};
use serde::Serialize;

const EXIT_USAGE: u8 = 1;
const EXIT_CHECK_FAILED: u8 = 2;

/// Simulate distribution estimation from clients that may send only b bits each.
#[derive(Debug, Parser)]
#[command(name = "commsim", version)]
struct Cli {
    /// Worker threads (default: available parallelism). COMMSIM_THREADS takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo estimate of one cell; prints a JSON summary.
    Simulate(SimulateArgs),
    /// Run a sweep spec or preset and write a CSV file.
    Sweep(SweepArgs),
    /// Print norms, Renyi entropy and the h* functional of a distribution.
    Complexity(ComplexityArgs),
    /// Run the self-check suite.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
struct FamilyArgs {
    #[arg(long)]
    family: FamilyKind,
    /// Family parameter: beta, lambda, support size or 1-based symbol.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    param: f64,
    #[arg(long)]
    d: usize,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    scheme: Scheme,
    #[command(flatten)]
    family: FamilyArgs,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    b: u32,
    #[arg(long, default_value_t = 2.0)]
    q: f64,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// JSON sweep spec.
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    spec: Option<PathBuf>,
    /// fig1-left or fig1-right.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the spec's base seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ComplexityArgs {
    #[command(flatten)]
    family: FamilyArgs,
    /// With --b, also report the risk bounds at this many clients.
    #[arg(long, requires = "b")]
    n: Option<usize>,
    #[arg(long, requires = "n")]
    b: Option<u32>,
    /// Seeds the support of sparse distributions.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(long, default_value = "fast")]
    suite: Suite,
}

#[derive(Debug, Serialize)]
struct ComplexityReport {
    family: FamilyKind,
    param: f64,
    d: usize,
    #[serde(flatten)]
    profile: ComplexityProfile,
    closed_form_half_norm: Option<f64>,
    half_norm_abs_diff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bounds: Option<Bounds>,
}

#[derive(Debug, Serialize)]
struct Bounds {
    n: usize,
    b: u32,
    l2: f64,
    l1: f64,
}

#[derive(Debug, Serialize)]
struct CheckRecord<'a> {
    id: &'a str,
    title: &'a str,
    passed: bool,
    detail: &'a str,
}

enum Failure {
    Usage(String),
    Check,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string(value).map_err(Error::from)?;
    println!("{text}");
    Ok(())
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    match std::env::var("COMMSIM_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Failure::Usage(format!(
                "COMMSIM_THREADS must be a positive integer, got `{v}`"
            ))),
        },
        Err(_) => match flag {
            Some(0) => Err(Failure::Usage("--threads must be positive".into())),
            other => Ok(other),
        },
    }
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let family = Family::new(args.family.family, args.family.param);
    let cell = Cell {
        scheme: args.scheme,
        family,
        d: args.family.d,
        n: args.n,
        b: args.b,
        q: args.q,
        trials: args.trials,
        seed: args.seed,
    };
    print_json(&run_cell(&cell)?)
}

fn sweep(args: SweepArgs) -> Result<(), Failure> {
    let mut spec = match (&args.spec, &args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            SweepSpec::from_json(&text)?
        }
        (None, Some(name)) => preset(name).ok_or_else(|| {
            Failure::Usage(format!(
                "unknown preset `{name}` (expected fig1-left or fig1-right)"
            ))
        })?,
        (None, None) => unreachable!("clap requires --spec or --preset"),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let rows = spec.run()?;
    emit_csv(&rows, &args.out)?;
    eprintln!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn complexity(args: ComplexityArgs) -> Result<(), Failure> {
    let family = Family::new(args.family.family, args.family.param);
    let d = args.family.d;
    let p = family.build(d, cell_seed(args.seed, d, 0, 0))?;
    let profile = p.complexity_profile();
    let closed = family.closed_form_half_norm(d);
    let bounds = match (args.n, args.b) {
        (Some(n), Some(b)) => {
            commsim_core::Round1Plan::new(n, d, b).map_err(Error::from)?;
            Some(Bounds {
                n,
                b,
                l2: l2_risk_bound(&p, n, b),
                l1: l1_risk_bound(&p, n, b),
            })
        }
        _ => None,
    };
    print_json(&ComplexityReport {
        family: family.kind,
        param: family.param,
        d,
        profile,
        closed_form_half_norm: closed,
        half_norm_abs_diff: closed.map(|c| (c - profile.half_norm).abs()),
        bounds,
    })
}

fn check(args: CheckArgs) -> Result<(), Failure> {
    let outcomes = run_suite(args.suite);
    for o in &outcomes {
        eprintln!("{o}");
    }
    let records: Vec<CheckRecord> = outcomes
        .iter()
        .map(|o| CheckRecord {
            id: o.id,
            title: o.title,
            passed: o.passed,
            detail: &o.detail,
        })
        .collect();
    print_json(&records)?;
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    eprintln!("{} passed, {failed} failed", outcomes.len() - failed);
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = threads(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Complexity(a) => complexity(a),
        Command::Check(a) => check(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Check) => ExitCode::from(EXIT_CHECK_FAILED),
    }
}
