use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::rngs::StdRng;
use rand::SeedableRng;

use satmap::dimacs::{format_solution, parse_cnf, write_cnf};
use satmap::external::ExternalSolver;
use satmap::format::{dfg_to_dot, dfg_to_json, mapping_to_json, parse_arch, parse_dfg, parse_mapping};
use satmap::WallClock;
use satmap_core::arch::CgraArchitecture;
use satmap_core::budget::{Budget, Clock};
use satmap_core::dfg::DataFlowGraph;
use satmap_core::driver::{run_toolchain, CompileOutcome, DriverConfig, DriverObserver, IiAttempt};
use satmap_core::encode::{AmoEncoding, MappingFormula};
use satmap_core::mapping::fingerprint;
use satmap_core::random::random_inputs;
use satmap_core::regalloc::{check_register_pressure, compute_lifetimes};
use satmap_core::sat::{Cdcl, SatBackend, SolveStatus, SolverConfig};
use satmap_core::schedule::{build_kms, compute_mii, SlackPolicy};
use satmap_core::verify::{check_mapping, interpret, simulate};

const EXIT_NO_MAPPING: u8 = 2;
const EXIT_TIMEOUT: u8 = 3;

#[derive(Parser)]
#[command(name = "satmap", version, about = "Map loop data-flow graphs onto CGRAs at the lowest iteration interval")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Search for the lowest-II mapping.
    Map(MapArgs),
    /// Check a mapping: placement rules, register pressure and simulation against the interpreter.
    Check(CheckArgs),
    /// Print the lower bounds on the iteration interval.
    Mii(Inputs),
    /// Print the kernel mobility schedule at one interval.
    Kms(KmsArgs),
    /// Re-emit a graph as JSON or Graphviz.
    Export(ExportArgs),
    /// Solve a DIMACS file with the embedded solver, printing `s`/`v` lines.
    Solve(SolveArgs),
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    dfg: PathBuf,
    #[arg(long)]
    arch: PathBuf,
}

#[derive(Args)]
struct MapArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    ii_start: Option<u32>,
    #[arg(long, default_value_t = 50)]
    ii_max: u32,
    /// Total seconds across all intervals; 0 disables the limit.
    #[arg(long, default_value_t = 4000.0)]
    timeout: f64,
    /// Extra schedule slack: `auto` (ii - 1) or a fixed count.
    #[arg(long, default_value = "auto", value_parser = parse_slack)]
    slack: SlackPolicy,
    /// `embedded`, or `cmd:<template>` with `{cnf}` standing for the DIMACS path.
    #[arg(long, default_value = "embedded")]
    solver: String,
    /// Same as `--solver cmd:<template>`.
    #[arg(long, conflicts_with = "solver")]
    solver_cmd: Option<String>,
    /// Randomizes the embedded solver's initial branching order.
    #[arg(long)]
    seed: Option<u64>,
    /// Write each interval's formula here as `ii<N>.cnf`.
    #[arg(long)]
    emit_cnf: Option<PathBuf>,
    /// Simulate the mapping and print the per-cycle grid.
    #[arg(long)]
    emit_trace: bool,
    /// Iterations simulated for --emit-trace.
    #[arg(long, default_value_t = 4)]
    iterations: u32,
    /// Re-solve with the last placement excluded this many times before raising the interval.
    #[arg(long, default_value_t = 0)]
    regalloc_retries: u32,
    #[arg(long, value_enum, default_value_t = Amo::Pairwise)]
    amo: Amo,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Amo {
    Pairwise,
    Sequential,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    mapping: PathBuf,
    #[arg(long, default_value_t = 16)]
    iterations: u32,
    /// Number of random input sets simulated.
    #[arg(long, default_value_t = 8)]
    trials: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct KmsArgs {
    #[arg(long)]
    dfg: PathBuf,
    #[arg(long)]
    ii: u32,
    #[arg(long, default_value = "auto", value_parser = parse_slack)]
    slack: SlackPolicy,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportFormat {
    Dot,
    Json,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    dfg: PathBuf,
    #[arg(long, value_enum, default_value_t = ExportFormat::Dot)]
    format: ExportFormat,
}

#[derive(Args)]
struct SolveArgs {
    cnf: PathBuf,
    /// Seconds; 0 disables the limit.
    #[arg(long, default_value_t = 0.0)]
    timeout: f64,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_slack(s: &str) -> Result<SlackPolicy, String> {
    if s == "auto" {
        return Ok(SlackPolicy::Auto);
    }
    s.parse().map(SlackPolicy::Fixed).map_err(|_| format!("expected `auto` or a count, got {s:?}"))
}

fn seconds(s: f64) -> Result<Option<Duration>> {
    if !(s >= 0.0 && s.is_finite()) {
        bail!("timeout must be a non-negative number of seconds");
    }
    Ok((s > 0.0).then(|| Duration::from_secs_f64(s)))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load(inputs: &Inputs) -> Result<(DataFlowGraph, CgraArchitecture)> {
    let g = parse_dfg(&read(&inputs.dfg)?).with_context(|| inputs.dfg.display().to_string())?;
    let a = parse_arch(&read(&inputs.arch)?).with_context(|| inputs.arch.display().to_string())?;
    Ok((g, a))
}

struct Logger {
    emit_cnf: Option<PathBuf>,
    error: Option<anyhow::Error>,
}

impl DriverObserver for Logger {
    fn formula_built(&mut self, ii: u32, formula: &MappingFormula) {
        let Some(dir) = &self.emit_cnf else { return };
        if self.error.is_some() {
            return;
        }
        let path = dir.join(format!("ii{ii}.cnf"));
        let res = fs::File::create(&path)
            .and_then(|file| write_cnf(&formula.cnf, formula.var_comments(), std::io::BufWriter::new(file)));
        if let Err(e) = res {
            self.error = Some(anyhow::Error::new(e).context(format!("writing {}", path.display())));
        }
    }

    fn attempt_done(&mut self, a: &IiAttempt) {
        eprintln!("event=attempt {a}");
    }
}

fn map(args: MapArgs) -> Result<ExitCode> {
    let (g, a) = load(&args.inputs)?;
    let cfg = DriverConfig {
        ii_start: args.ii_start,
        ii_max: args.ii_max,
        timeout: seconds(args.timeout)?,
        slack: args.slack,
        regalloc_retries: args.regalloc_retries,
        amo: match args.amo {
            Amo::Pairwise => AmoEncoding::Pairwise,
            Amo::Sequential => AmoEncoding::Sequential,
        },
    };
    let template = match (&args.solver_cmd, args.solver.as_str()) {
        (Some(t), _) => Some(t.clone()),
        (None, "embedded") => None,
        (None, s) => match s.strip_prefix("cmd:") {
            Some(t) => Some(t.to_string()),
            None => bail!("unknown solver {s:?}; expected `embedded` or `cmd:<template>`"),
        },
    };
    let mut backend: Box<dyn SatBackend> = match template {
        Some(t) => Box::new(ExternalSolver::new(t)?),
        None => Box::new(Cdcl::new(SolverConfig { seed: args.seed, ..SolverConfig::default() })),
    };
    if let Some(dir) = &args.emit_cnf {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let clock = WallClock::start();
    let mut logger = Logger { emit_cnf: args.emit_cnf.clone(), error: None };
    let result = run_toolchain(&g, &a, &cfg, backend.as_mut(), &clock, &mut logger)?;
    if let Some(e) = logger.error {
        return Err(e);
    }
    let last = result.last_ii().map_or("-".to_string(), |ii| ii.to_string());
    eprintln!(
        "event=result outcome={} ii={} {} solver={} attempts={} time_ms={}",
        result.outcome.tag(),
        result.mapping.as_ref().map_or(last, |m| m.ii().to_string()),
        result.bounds,
        backend.name(),
        result.attempts.len(),
        clock.elapsed().as_millis()
    );
    match result.outcome {
        CompileOutcome::Mapped => {}
        CompileOutcome::NoMappingUpToIiMax => return Ok(ExitCode::from(EXIT_NO_MAPPING)),
        CompileOutcome::TimedOut => return Ok(ExitCode::from(EXIT_TIMEOUT)),
    }
    let m = result.mapping.expect("mapped outcome carries a mapping");
    let json = mapping_to_json(&m, result.register_report.as_ref());
    match &args.output {
        Some(p) => fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{json}"),
    }
    if args.emit_trace {
        let mut rng = StdRng::seed_from_u64(args.seed.unwrap_or(0));
        let inputs = random_inputs(&mut rng, &g, args.iterations);
        let trace = simulate(&g, &a, &m, args.iterations, &inputs)?;
        print!("{trace}");
    }
    Ok(ExitCode::SUCCESS)
}

fn check(args: CheckArgs) -> Result<ExitCode> {
    let (g, a) = load(&args.inputs)?;
    let m = parse_mapping(&read(&args.mapping)?).with_context(|| args.mapping.display().to_string())?;
    let mut ok = true;
    if m.fingerprint() != 0 && m.fingerprint() != fingerprint(&g, &a) {
        eprintln!("event=warning fingerprint=mismatch");
    }
    let violations = check_mapping(&g, &a, &m);
    for v in &violations {
        println!("event=violation kind={v}");
    }
    println!("event=rules ok={} violations={}", violations.is_empty(), violations.len());
    if !violations.is_empty() {
        return Ok(ExitCode::FAILURE);
    }
    let lifetimes = compute_lifetimes(&g, &m)?;
    let report = check_register_pressure(&lifetimes, &a, m.ii());
    for v in &report.violations {
        println!("event=pressure pe={} slot={} live={} capacity={}", v.pe, v.slot, v.pressure, v.capacity);
    }
    println!("event=registers ok={} max_live={} capacity={}", report.ok, report.max_pressure(), report.capacity);
    ok &= report.ok;
    if report.ok && args.iterations > 0 {
        let mut rng = StdRng::seed_from_u64(args.seed);
        let mut matched = 0;
        for _ in 0..args.trials {
            let inputs = random_inputs(&mut rng, &g, args.iterations);
            let expected = interpret(&g, args.iterations, &inputs)?;
            let trace = simulate(&g, &a, &m, args.iterations, &inputs)?;
            matched += u32::from(trace.outputs == expected);
        }
        println!("event=simulation trials={} matched={matched} iterations={}", args.trials, args.iterations);
        ok &= matched == args.trials;
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn solve(args: SolveArgs) -> Result<ExitCode> {
    let f = parse_cnf(&read(&args.cnf)?).with_context(|| args.cnf.display().to_string())?;
    let clock = WallClock::start();
    let budget = match seconds(args.timeout)? {
        Some(t) => Budget::until(&clock, t),
        None => Budget::measured(&clock),
    };
    let out = Cdcl::new(SolverConfig { seed: args.seed, ..SolverConfig::default() }).solve(&f, &budget)?;
    let s = &out.stats;
    println!(
        "c decisions={} conflicts={} propagations={} restarts={} time_ms={}",
        s.decisions,
        s.conflicts,
        s.propagations,
        s.restarts,
        s.wall_time.as_millis()
    );
    print!("{}", format_solution(&out));
    std::io::stdout().flush()?;
    Ok(ExitCode::from(match out.status {
        SolveStatus::Sat => 10,
        SolveStatus::Unsat => 20,
        SolveStatus::Timeout => 0,
    }))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Cmd::Map(args) => map(args),
        Cmd::Check(args) => check(args),
        Cmd::Mii(inputs) => {
            let (g, a) = load(&inputs)?;
            println!("{}", compute_mii(&g, &a)?);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Kms(args) => {
            let g = parse_dfg(&read(&args.dfg)?).with_context(|| args.dfg.display().to_string())?;
            if args.ii == 0 {
                bail!("--ii must be positive");
            }
            print!("{}", build_kms(&g, args.ii, args.slack)?);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Export(args) => {
            let g = parse_dfg(&read(&args.dfg)?).with_context(|| args.dfg.display().to_string())?;
            match args.format {
                ExportFormat::Dot => print!("{}", dfg_to_dot(&g)),
                ExportFormat::Json => println!("{}", dfg_to_json(&g)),
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Solve(args) => solve(args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("event=error message={:?}", format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}
