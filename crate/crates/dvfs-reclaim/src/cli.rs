//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for domain errors (infeasible windows, invalid
//! models, failed verification), 2 for usage errors (clap's default).

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::experiment::{
    aggregate, aggregate_to_csv, default_plan, metadata_json, records_to_csv, run_plan,
};
use crate::power::{find_builtin, instantiate_cubic, task_energy, CubicPowerModel, ProcessorModel};
use crate::reclaim::{
    baseline_report, continuous_optimum_energy, ideal_frequency, reclaim_schedule, Algorithm,
    ReclaimRequest,
};
use crate::schedule::{extract_slack_windows, list_schedule, Policy};
use crate::task::{TaskGraph, WorkloadKind, WorkloadSpec};
use crate::verify::run_verification;

type CliError = Box<dyn std::error::Error>;

#[derive(Parser)]
#[command(
    name = "dvfs-reclaim",
    version,
    about = "Energy-aware slack reclamation for DAG schedules on DVFS processors"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal frequency allocation for a single task's cycles and window
    Reclaim(ReclaimArgs),
    /// Generate a workload, schedule it, and reclaim its slack
    Simulate(SimulateArgs),
    /// Run a full factorial energy-savings sweep
    Sweep(SweepArgs),
    /// Run the randomized self-checks
    Verify(VerifyArgs),
    /// Emit a generated task graph
    Generate(GenerateArgs),
    /// List the builtin processor models
    Catalog(CatalogArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct ReclaimArgs {
    /// Cycle count of the task (e.g. 7e6)
    #[arg(long)]
    cycles: f64,
    /// Window length; supports s/ms/us suffixes (e.g. 130ms)
    #[arg(long)]
    window: String,
    /// Builtin name, "cubic:50MHz,60MHz" shorthand, or a JSON model file
    #[arg(
        long,
        default_value = "cubic:500MHz,600MHz,700MHz,800MHz,900MHz,1000MHz"
    )]
    processor: String,
    /// Cubic coefficient for "cubic:" processors (watts per cubic hertz)
    #[arg(long, default_value_t = 1.367e-24)]
    lambda: f64,
    /// Idle power override in watts
    #[arg(long)]
    idle_power: Option<f64>,
    /// rdvfs, mmf, smfs, mvfs or all
    #[arg(long, default_value = "all")]
    algorithm: String,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct SimulateArgs {
    /// random, gauss_jordan or lu
    #[arg(long)]
    workload: String,
    #[arg(long, default_value_t = 100)]
    tasks: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Layer count for random workloads (default: sqrt of task count)
    #[arg(long)]
    layers: Option<usize>,
    /// Edge probability for random workloads
    #[arg(long)]
    edge_probability: Option<f64>,
    #[arg(long, default_value_t = 4)]
    processors: usize,
    /// fifo, lpt or spt
    #[arg(long, default_value = "lpt")]
    policy: String,
    #[arg(
        long,
        default_value = "cubic:500MHz,600MHz,700MHz,800MHz,900MHz,1000MHz"
    )]
    processor: String,
    #[arg(long, default_value_t = 1.367e-24)]
    lambda: f64,
    #[arg(long)]
    idle_power: Option<f64>,
    #[arg(long, default_value = "mvfs")]
    algorithm: String,
    /// Print the schedule as text instead of the energy report
    #[arg(long)]
    gantt: bool,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON plan file (same shape as the metadata.json "plan" section);
    /// other flags override its fields
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Master seed for workload generation
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    /// Target task counts (comma separated)
    #[arg(long, value_delimiter = ',')]
    tasks: Vec<usize>,
    /// Processor counts (comma separated)
    #[arg(long, value_delimiter = ',')]
    processors: Vec<usize>,
    /// Directory for records.csv, aggregate.csv and metadata.json; without
    /// it the aggregate goes to stdout
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 20260823)]
    seed: u64,
    /// Random cases per check
    #[arg(long, default_value_t = 40)]
    cases: usize,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    workload: String,
    #[arg(long, default_value_t = 100)]
    tasks: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    edge_probability: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args)]
struct CatalogArgs {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

/// Parses a frequency with an optional GHz/MHz/kHz/Hz suffix; bare numbers
/// are hertz.
pub fn parse_frequency(s: &str) -> Result<f64, String> {
    let t = s.trim();
    let lower = t.to_ascii_lowercase();
    let (digits, scale) = if let Some(d) = lower.strip_suffix("ghz") {
        (d, 1e9)
    } else if let Some(d) = lower.strip_suffix("mhz") {
        (d, 1e6)
    } else if let Some(d) = lower.strip_suffix("khz") {
        (d, 1e3)
    } else if let Some(d) = lower.strip_suffix("hz") {
        (d, 1.0)
    } else {
        (lower.as_str(), 1.0)
    };
    let value: f64 = digits
        .trim()
        .parse()
        .map_err(|_| format!("cannot parse frequency '{s}'"))?;
    if !(value.is_finite() && value > 0.0) {
        return Err(format!("frequency '{s}' must be positive"));
    }
    Ok(value * scale)
}

/// Parses a duration with an optional s/ms/us suffix; bare numbers are
/// seconds.
pub fn parse_duration(s: &str) -> Result<f64, String> {
    let t = s.trim();
    let lower = t.to_ascii_lowercase();
    let (digits, scale) = if let Some(d) = lower.strip_suffix("ms") {
        (d, 1e-3)
    } else if let Some(d) = lower.strip_suffix("us") {
        (d, 1e-6)
    } else if let Some(d) = lower.strip_suffix('s') {
        (d, 1.0)
    } else {
        (lower.as_str(), 1.0)
    };
    let value: f64 = digits
        .trim()
        .parse()
        .map_err(|_| format!("cannot parse duration '{s}'"))?;
    if !(value.is_finite() && value > 0.0) {
        return Err(format!("duration '{s}' must be positive"));
    }
    Ok(value * scale)
}

/// Resolves a processor argument: builtin name, `cubic:<freq,...>` shorthand
/// (using `lambda`), or a path to a JSON model.
pub fn parse_processor(
    spec: &str,
    lambda: f64,
    idle_power: Option<f64>,
) -> Result<ProcessorModel<f64>, CliError> {
    let proc = if let Some(list) = spec.strip_prefix("cubic:") {
        let freqs = list
            .split(',')
            .map(parse_frequency)
            .collect::<Result<Vec<f64>, String>>()?;
        let model = CubicPowerModel::new(lambda)?;
        instantiate_cubic(&freqs, model, idle_power.unwrap_or(0.0))?
    } else if spec.ends_with(".json") {
        let text = std::fs::read_to_string(spec)?;
        let proc: ProcessorModel<f64> = serde_json::from_str(&text)?;
        match idle_power {
            Some(idle) => proc.with_idle_power(idle)?,
            None => proc,
        }
    } else {
        let proc = find_builtin::<f64>(spec)?;
        match idle_power {
            Some(idle) => proc.with_idle_power(idle)?,
            None => proc,
        }
    };
    Ok(proc)
}

fn parse_algorithms(s: &str) -> Result<Vec<Algorithm>, String> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(Algorithm::ALL.to_vec());
    }
    s.split(',').map(|part| part.trim().parse()).collect()
}

fn workload_spec(
    workload: &str,
    tasks: usize,
    seed: u64,
    layers: Option<usize>,
    edge_probability: Option<f64>,
) -> Result<WorkloadSpec, CliError> {
    let kind: WorkloadKind = workload.parse()?;
    let mut spec = crate::task::scale_to_task_count(kind, tasks);
    spec.seed = seed;
    if let Some(l) = layers {
        spec.layers = l;
    }
    if let Some(p) = edge_probability {
        spec.edge_probability = p;
    }
    Ok(spec)
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    print!("{s}");
    Ok(())
}

#[derive(Serialize)]
struct ReclaimRow {
    algorithm: String,
    f_ideal_hz: f64,
    f_lo_hz: f64,
    t_lo_s: f64,
    f_hi_hz: f64,
    t_hi_s: f64,
    energy_j: f64,
}

fn cmd_reclaim(args: &ReclaimArgs) -> Result<(), CliError> {
    let window = parse_duration(&args.window)?;
    let proc = parse_processor(&args.processor, args.lambda, args.idle_power)?;
    let req = ReclaimRequest::new(args.cycles, window)?;
    let f_ideal = ideal_frequency(&req);
    let algorithms = parse_algorithms(&args.algorithm)?;

    let mut rows = Vec::new();
    for algorithm in &algorithms {
        let alloc = algorithm.select(&req, &proc)?;
        let energy = task_energy(&alloc, window, &proc)?;
        let mut segs: Vec<(f64, f64)> = alloc
            .segments()
            .iter()
            .map(|(l, d)| (l.frequency, *d))
            .collect();
        segs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let (f_lo, t_lo, f_hi, t_hi) = match segs.as_slice() {
            [(f, t)] => (*f, *t, *f, 0.0),
            [(fl, tl), (fh, th)] => (*fl, *tl, *fh, *th),
            _ => (0.0, 0.0, 0.0, 0.0),
        };
        rows.push(ReclaimRow {
            algorithm: algorithm.name().to_string(),
            f_ideal_hz: f_ideal,
            f_lo_hz: f_lo,
            t_lo_s: t_lo,
            f_hi_hz: f_hi,
            t_hi_s: t_hi,
            energy_j: energy,
        });
    }
    if let Some(model) = CubicPowerModel::fit(&proc) {
        let (f, energy) = continuous_optimum_energy(&req, model, proc.idle_power());
        rows.push(ReclaimRow {
            algorithm: "continuous".to_string(),
            f_ideal_hz: f_ideal,
            f_lo_hz: f,
            t_lo_s: window,
            f_hi_hz: f,
            t_hi_s: 0.0,
            energy_j: energy,
        });
    }

    match args.format {
        Format::Json => print_json(&rows)?,
        Format::Csv => {
            let mut out =
                String::from("algorithm,f_ideal_hz,f_lo_hz,t_lo_s,f_hi_hz,t_hi_s,energy_j\n");
            for r in &rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    r.algorithm, r.f_ideal_hz, r.f_lo_hz, r.t_lo_s, r.f_hi_hz, r.t_hi_s, r.energy_j
                )
                .unwrap();
            }
            print!("{out}");
        }
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let spec = workload_spec(
        &args.workload,
        args.tasks,
        args.seed,
        args.layers,
        args.edge_probability,
    )?;
    let graph: TaskGraph = spec.generate()?;
    let proc = parse_processor(&args.processor, args.lambda, args.idle_power)?;
    let policy: Policy = args.policy.parse()?;
    let schedule = list_schedule(&graph, args.processors, policy, &proc)?;
    let windowed = extract_slack_windows(&schedule, &graph)?;

    if args.gantt {
        print!("{}", windowed.gantt_text());
        return Ok(());
    }

    let algorithms = parse_algorithms(&args.algorithm)?;
    let baseline = baseline_report(&windowed, &graph, &proc)?;
    let mut reports = vec![baseline];
    for algorithm in algorithms {
        let (_, report) = reclaim_schedule(&windowed, &graph, &proc, algorithm)?;
        reports.push(report);
    }
    match args.format {
        Format::Json => print_json(&reports)?,
        Format::Csv => {
            print!("{}", reports[0].to_csv());
            for report in &reports[1..] {
                // Skip the repeated header when concatenating reports.
                let csv = report.to_csv();
                let body = csv.split_once('\n').map(|(_, b)| b).unwrap_or("");
                print!("{body}");
            }
        }
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let mut plan = match &args.plan {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| format!("invalid plan file {}: {e}", path.display()))?,
        None => default_plan(),
    };
    if let Some(seed) = args.seed {
        plan.master_seed = seed;
    }
    if let Some(reps) = args.replications {
        plan.replications = reps;
    }
    if !args.tasks.is_empty() {
        plan.task_counts = args.tasks.clone();
    }
    if !args.processors.is_empty() {
        plan.processor_counts = args.processors.clone();
    }
    let outcome = run_plan(&plan)?;
    let rows = aggregate(&outcome.records);

    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("records.csv"), records_to_csv(&outcome.records)?)?;
        std::fs::write(dir.join("aggregate.csv"), aggregate_to_csv(&rows)?)?;
        std::fs::write(dir.join("metadata.json"), metadata_json(&plan, &outcome)?)?;
        eprintln!(
            "wrote {} records ({} failed cells) to {}",
            outcome.records.len(),
            outcome.failures.len(),
            dir.display()
        );
    } else {
        match args.format {
            Format::Json => print_json(&rows)?,
            Format::Csv => print!("{}", aggregate_to_csv(&rows)?),
        }
    }
    if !outcome.failures.is_empty() {
        for f in &outcome.failures {
            eprintln!(
                "failed cell {}/{} tasks/{}/{} procs rep {}: {}",
                f.kind, f.task_count, f.policy, f.processors, f.replication, f.message
            );
        }
        return Err(format!("{} sweep cells failed", outcome.failures.len()).into());
    }
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> Result<(), CliError> {
    let report = run_verification(args.seed, args.cases);
    print!("{}", report.render());
    if report.passed() {
        Ok(())
    } else {
        Err("verification failed".into())
    }
}

fn cmd_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let spec = workload_spec(
        &args.workload,
        args.tasks,
        args.seed,
        args.layers,
        args.edge_probability,
    )?;
    let graph = spec.generate()?;
    match args.format {
        Format::Json => print_json(&graph)?,
        Format::Csv => {
            let mut out = String::from("id,cycles\n");
            for t in graph.tasks() {
                writeln!(out, "{},{}", t.id, t.cycles).unwrap();
            }
            out.push_str("\npred,succ,comm_cost_s\n");
            for e in graph.edges() {
                writeln!(out, "{},{},{}", e.pred, e.succ, e.comm_cost).unwrap();
            }
            print!("{out}");
        }
    }
    Ok(())
}

fn cmd_catalog(args: &CatalogArgs) -> Result<(), CliError> {
    let catalog = crate::power::builtin_catalog::<f64>();
    match args.format {
        Format::Json => print_json(&catalog)?,
        Format::Csv => {
            let mut out = String::from("name,idle_power_w,freq_hz,voltage_v,power_w\n");
            for p in &catalog {
                for l in p.levels() {
                    writeln!(
                        out,
                        "{},{},{},{},{}",
                        p.name(),
                        p.idle_power(),
                        l.frequency,
                        l.voltage,
                        l.power
                    )
                    .unwrap();
                }
            }
            print!("{out}");
        }
    }
    Ok(())
}

/// Entry point for the binary.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Reclaim(args) => cmd_reclaim(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Generate(args) => cmd_generate(args),
        Command::Catalog(args) => cmd_catalog(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
