//! `dcra`: solve binary ℓ1-type problems, run benchmark suites, sweep BCS
//! grids, export MILP models and run the hashing demo.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dcra_bench::baseline::BaselineConfig;
use dcra_bench::generators::{gen_bcs, gen_random_l1, zero_one_transform, BcsSpec};
use dcra_bench::harness::{
    rows_csv, run_bench, sweep_bcs, sweep_csv, BcsGrid, Method, SuiteSpec, BCS_RHO0,
};
use dcra_bench::hashing::{alternate, planted_hashing, trace_csv as hashing_csv, HashingConfig, HashingProblem};
use dcra_bench::milp::milp_export;
use dcra_core::io::{read_instance, trace_csv, write_instance, SCHEMA_VERSION};
use dcra_core::{certify, solve, Certificate, Error, ProblemInstance, SolverConfig, Termination};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "dcra", version, about = "Penalized low-rank relaxation solver for binary problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance, round it and print the certified result as JSON.
    ///
    /// Exit code 0: feasibility gap reached; 2: outer iteration cap hit;
    /// 3: inner loop stalled; 1: error.
    Solve(SolveArgs),
    /// Write a generated instance as JSON.
    Gen(GenArgs),
    /// Run a benchmark suite and write rows.csv and report.json.
    Bench(BenchArgs),
    /// Binary compressed-sensing sweep in long CSV format.
    SweepBcs(SweepArgs),
    /// Export the mixed-integer reformulation in LP format.
    ExportMilp(ExportArgs),
    /// Alternating hashing demo on a planted synthetic model.
    Hashing(HashingArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Generator {
    Random,
    Bcs,
}

#[derive(Args, Debug)]
struct InstanceArgs {
    /// Instance JSON file; conflicts with --gen.
    #[arg(long, conflicts_with = "gen")]
    instance: Option<PathBuf>,
    /// Instance generator.
    #[arg(long, value_enum)]
    gen: Option<Generator>,
    /// Number of binary variables (signal dimension for bcs).
    #[arg(long, default_value_t = 50)]
    n: usize,
    /// Number of residual rows for random instances.
    #[arg(long, default_value_t = 30)]
    r: usize,
    /// Seed for the generator and the solver's starting point.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// BCS compression ratio M/N.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// BCS probability that a signal entry is 1.
    #[arg(long, default_value_t = 0.1)]
    sparsity_rho: f64,
    /// BCS mean shift of the sensing entries.
    #[arg(long, default_value_t = 0.0)]
    mu: f64,
    /// BCS sparsity weight.
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
}

/// Loaded problem plus the constant that maps its objective back to the 0/1 form.
struct Loaded {
    instance: ProblemInstance,
    offset: f64,
}

impl InstanceArgs {
    fn load(&self) -> Result<Loaded, Error> {
        match (&self.instance, self.gen) {
            (Some(path), _) => Ok(Loaded { instance: read_instance(path)?, offset: 0.0 }),
            (None, Some(Generator::Random)) => Ok(Loaded {
                instance: gen_random_l1(self.r, self.n, self.seed)?,
                offset: 0.0,
            }),
            (None, Some(Generator::Bcs)) => {
                let spec = BcsSpec {
                    n: self.n,
                    alpha: self.alpha,
                    sparsity_rho: self.sparsity_rho,
                    mu: self.mu,
                    lambda: self.lambda,
                    seed: self.seed,
                };
                let signed = zero_one_transform(&gen_bcs(&spec)?)?;
                Ok(Loaded { instance: signed.instance, offset: signed.offset })
            }
            (None, None) => Err(Error::InvalidConfig("give either --instance or --gen".into())),
        }
    }
}

#[derive(Args, Debug)]
struct SolverArgs {
    /// Rows of the factor V.
    #[arg(long, default_value_t = 5)]
    m: usize,
    /// Initial penalty weight [default: 1, or 0.02 for BCS instances].
    #[arg(long)]
    rho0: Option<f64>,
    /// Penalty growth factor.
    #[arg(long, default_value_t = 1.2)]
    sigma: f64,
    #[arg(long, default_value_t = 1e6)]
    rho_max: f64,
    /// Moreau parameter [default: 0.1·(median|b| + 1)].
    #[arg(long)]
    delta: Option<f64>,
    /// Stop once the feasibility gap falls below this.
    #[arg(long, default_value_t = 1e-3)]
    eps_outer: f64,
    /// Inner stop tolerance on the step norm.
    #[arg(long, default_value_t = 1e-6)]
    eps_inner: f64,
    /// Outer iteration cap.
    #[arg(long, default_value_t = 200)]
    k_max: usize,
    /// Inner iteration cap per outer step.
    #[arg(long, default_value_t = 2000)]
    l_max: usize,
}

impl SolverArgs {
    fn config(&self, seed: u64, default_rho0: f64) -> SolverConfig {
        SolverConfig {
            m: self.m,
            rho0: self.rho0.unwrap_or(default_rho0),
            sigma: self.sigma,
            rho_max: self.rho_max,
            delta: self.delta,
            eps_outer: self.eps_outer,
            eps_inner: self.eps_inner,
            k_max: self.k_max,
            l_max: self.l_max,
            seed,
            ..Default::default()
        }
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Write the result JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the per-outer-iteration trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write zeros in every timing field.
    #[arg(long)]
    omit_timing: bool,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Suite JSON file.
    suite: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    omit_timing: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Signal dimension.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.6")]
    alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.5")]
    sparsity_rhos: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    mus: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    /// Seeds 0..seeds.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, value_delimiter = ',', default_value = "dcra,baseline")]
    methods: Vec<String>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    solver: SolverArgs,
    /// Baseline iterations.
    #[arg(long, default_value_t = 1000)]
    baseline_iters: usize,
    /// Output CSV [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    omit_timing: bool,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// LP file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct HashingArgs {
    /// Rows of the data matrix.
    #[arg(long, default_value_t = 8)]
    d: usize,
    /// Columns of the data matrix.
    #[arg(long, default_value_t = 30)]
    n: usize,
    /// Code length.
    #[arg(long, default_value_t = 6)]
    bits: usize,
    /// Alternation rounds.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Huber parameter of the W-step.
    #[arg(long, default_value_t = 0.1)]
    mu: f64,
    /// Ridge weight on W.
    #[arg(long, default_value_t = 1.0)]
    delta_reg: f64,
    /// Fraction of entries hit by noise.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Timings {
    solve_seconds: f64,
    certify_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TraceSummary {
    termination: Termination,
    outer_iterations: usize,
    inner_iterations: usize,
    final_rho: Option<f64>,
    final_gap: f64,
    delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct RunResult {
    schema_version: String,
    label: Option<String>,
    config: SolverConfig,
    /// True objective of the rounded point, in the original variables.
    objective: f64,
    certificate: Certificate,
    trace: TraceSummary,
    timings: Timings,
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| Error::Format(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>, Error> {
    names
        .iter()
        .map(|s| {
            serde_json::from_value(serde_json::Value::String(s.trim().to_owned()))
                .map_err(|_| Error::InvalidConfig(format!("unknown method '{s}' (dcra, baseline, oracle)")))
        })
        .collect()
}

fn cmd_solve(args: &SolveArgs) -> Result<ExitCode, Error> {
    let loaded = args.instance.load()?;
    let inst = &loaded.instance;
    let default_rho0 = if args.instance.gen == Some(Generator::Bcs) && args.instance.instance.is_none() {
        BCS_RHO0
    } else {
        SolverConfig::default().rho0
    };
    let cfg = args.solver.config(args.instance.seed, default_rho0);
    let clock = Instant::now();
    let out = solve(inst, &cfg)?;
    let solve_seconds = clock.elapsed().as_secs_f64();
    let clock = Instant::now();
    let certificate = certify(inst, &out)?;
    let certify_seconds = clock.elapsed().as_secs_f64();
    let trace = &out.trace;
    let timings = if args.omit_timing {
        Timings { solve_seconds: 0.0, certify_seconds: 0.0 }
    } else {
        Timings { solve_seconds, certify_seconds }
    };
    let result = RunResult {
        schema_version: SCHEMA_VERSION.into(),
        label: inst.label().map(str::to_owned),
        config: cfg,
        objective: certificate.true_obj + loaded.offset,
        certificate,
        trace: TraceSummary {
            termination: trace.termination,
            outer_iterations: trace.final_index(),
            inner_iterations: trace.total_inner(),
            final_rho: trace.records.last().map(|r| r.rho),
            final_gap: trace.final_gap(),
            delta: trace.delta,
        },
        timings,
    };
    let mut text = serde_json::to_string_pretty(&result).expect("result serialization cannot fail");
    text.push('\n');
    write_or_print(args.out.as_deref(), &text)?;
    if let Some(p) = &args.trace {
        write_or_print(Some(p), &trace_csv(trace, args.omit_timing))?;
    }
    Ok(match trace.termination {
        Termination::GapReached => ExitCode::SUCCESS,
        Termination::KMaxExceeded => ExitCode::from(2),
        Termination::InnerStall => ExitCode::from(3),
    })
}

fn cmd_bench(args: &BenchArgs) -> Result<ExitCode, Error> {
    let text = std::fs::read_to_string(&args.suite)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", args.suite.display())))?;
    let suite = SuiteSpec::from_json(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", args.suite.display())))?;
    let mut report = run_bench(&suite, args.jobs)?;
    if args.omit_timing {
        report = report.without_timing();
    }
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::Format(format!("cannot create {}: {e}", args.out.display())))?;
    write_or_print(Some(&args.out.join("rows.csv")), &rows_csv(&report.rows))?;
    write_or_print(Some(&args.out.join("report.json")), &report.to_json())?;
    let failed = report.rows.iter().filter(|r| !r.ok()).count();
    if failed > 0 {
        log::warn!("{failed} of {} runs failed", report.rows.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: &SweepArgs) -> Result<ExitCode, Error> {
    let grid = BcsGrid {
        n: args.n,
        alphas: args.alphas.clone(),
        sparsity_rhos: args.sparsity_rhos.clone(),
        mus: args.mus.clone(),
        lambda: args.lambda,
    };
    let seeds: Vec<u64> = (0..args.seeds).collect();
    let methods = parse_methods(&args.methods)?;
    let baseline = BaselineConfig { iters: args.baseline_iters, ..Default::default() };
    let rows = sweep_bcs(&grid, &seeds, &methods, &args.solver.config(0, BCS_RHO0), &baseline, args.jobs)?;
    write_or_print(args.out.as_deref(), &sweep_csv(&rows, args.omit_timing))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_hashing(args: &HashingArgs) -> Result<ExitCode, Error> {
    let planted = planted_hashing(args.d, args.n, args.bits, args.noise, args.seed)?;
    let prob = HashingProblem::new(planted.b.clone(), args.bits, args.delta_reg, args.mu, args.k)?;
    let reference = prob.objective(&planted.w, &planted.x)?;
    let run = alternate(&prob, &HashingConfig::default(), args.seed)?;
    let last = run.final_objective();
    eprintln!("final objective {last:.6}, planted {reference:.6}, ratio {:.3}", last / reference);
    write_or_print(args.out.as_deref(), &hashing_csv(&run.trace))?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Solve(a) => cmd_solve(&a),
        Command::Gen(a) => {
            write_instance(&a.out, &a.instance.load()?.instance)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench(a) => cmd_bench(&a),
        Command::SweepBcs(a) => cmd_sweep(&a),
        Command::ExportMilp(a) => {
            milp_export(&a.instance.load()?.instance, &a.out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Hashing(a) => cmd_hashing(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
