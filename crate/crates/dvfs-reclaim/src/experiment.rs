//! Sweep harness: runs every (workload kind, size, policy, processor count)
//! cell of a plan, applies each reclamation algorithm to the resulting
//! schedule, and reports energy savings against the run-everything-at-f_max
//! baseline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::power::{CubicPowerModel, ProcessorModel};
use crate::reclaim::{
    baseline_report, ideal_frequency, reclaim_schedule, Algorithm, ReclaimRequest,
};
use crate::rng::SplitMix64;
use crate::schedule::{
    extract_slack_windows, list_schedule, stretch_to_windows, validate_schedule, Policy,
};
use crate::task::{scale_to_task_count, WorkloadKind};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("plan must list at least one {0}")]
    EmptyAxis(&'static str),
    #[error("replications must be >= 1")]
    NoReplications,
    #[error("csv serialization failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("json serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

/// Full factorial sweep description. Every cell derives its workload seed
/// from `master_seed` and its position, so re-running a plan reproduces the
/// records byte for byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub kinds: Vec<WorkloadKind>,
    pub task_counts: Vec<usize>,
    pub policies: Vec<Policy>,
    pub processor_counts: Vec<usize>,
    pub processor: ProcessorModel<f64>,
    pub replications: usize,
    pub master_seed: u64,
}

/// One (cell, algorithm) result row.
#[derive(Debug, Clone, Serialize)]
pub struct SavingsRecord {
    pub kind: String,
    pub task_count: usize,
    pub policy: String,
    pub processors: usize,
    pub replication: usize,
    pub seed: u64,
    pub algorithm: String,
    pub makespan_s: f64,
    pub baseline_energy_j: f64,
    pub energy_j: f64,
    pub savings_pct: f64,
}

/// A cell that could not be evaluated, with the reason; the sweep continues
/// past it.
#[derive(Debug, Clone, Serialize)]
pub struct CellFailure {
    pub kind: String,
    pub task_count: usize,
    pub policy: String,
    pub processors: usize,
    pub replication: usize,
    pub message: String,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub records: Vec<SavingsRecord>,
    pub failures: Vec<CellFailure>,
}

/// Aggregate of `savings_pct` over one (kind, algorithm) group.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub kind: String,
    pub algorithm: String,
    pub count: usize,
    pub mean_savings_pct: f64,
    pub min_savings_pct: f64,
    pub max_savings_pct: f64,
}

impl ExperimentPlan {
    fn validate(&self) -> Result<(), ExperimentError> {
        if self.kinds.is_empty() {
            return Err(ExperimentError::EmptyAxis("workload kind"));
        }
        if self.task_counts.is_empty() {
            return Err(ExperimentError::EmptyAxis("task count"));
        }
        if self.policies.is_empty() {
            return Err(ExperimentError::EmptyAxis("policy"));
        }
        if self.processor_counts.is_empty() || self.processor_counts.contains(&0) {
            return Err(ExperimentError::EmptyAxis("processor count"));
        }
        if self.replications == 0 {
            return Err(ExperimentError::NoReplications);
        }
        Ok(())
    }
}

/// The sweep used by `sweep` when no plan file is given: all three workload
/// shapes and scheduling policies on a six-level 500-1000 MHz cubic
/// processor, across 2..32 processors.
pub fn default_plan() -> ExperimentPlan {
    let model = CubicPowerModel::new(1.367e-24).unwrap();
    let processor =
        crate::power::instantiate_cubic(&[500e6, 600e6, 700e6, 800e6, 900e6, 1000e6], model, 0.0)
            .unwrap();
    ExperimentPlan {
        kinds: vec![
            WorkloadKind::Random,
            WorkloadKind::GaussJordan,
            WorkloadKind::Lu,
        ],
        task_counts: vec![100, 200, 300, 400, 500],
        policies: vec![Policy::Fifo, Policy::Lpt, Policy::Spt],
        processor_counts: vec![2, 4, 8, 16, 32],
        processor,
        replications: 4,
        master_seed: 20140905,
    }
}

/// Schedule-level sanity: the schedule is valid and remains valid when every
/// task is stretched to its full window (the property reclamation relies on).
pub fn audit_cell(
    schedule: &crate::schedule::Schedule,
    graph: &crate::task::TaskGraph,
) -> Result<(), String> {
    let violations = validate_schedule(schedule, graph);
    if let Some(v) = violations.first() {
        return Err(format!("schedule invalid: {v}"));
    }
    let stretched = stretch_to_windows(schedule);
    let violations = validate_schedule(&stretched, graph);
    if let Some(v) = violations.first() {
        return Err(format!("window stretch broke the schedule: {v}"));
    }
    Ok(())
}

/// Total energy of the idealized continuous-frequency processor: each task
/// runs at exactly K/T for its whole window under the cubic model.
fn continuous_total(
    schedule: &crate::schedule::Schedule,
    graph: &crate::task::TaskGraph,
    model: CubicPowerModel<f64>,
) -> f64 {
    schedule
        .entries
        .iter()
        .map(|e| {
            let task = graph.task(e.task_id).unwrap();
            let req = ReclaimRequest::new(task.cycles, e.window).unwrap();
            let f = ideal_frequency(&req);
            e.window * model.power(f)
        })
        .sum()
}

pub fn run_plan(plan: &ExperimentPlan) -> Result<ExperimentOutcome, ExperimentError> {
    plan.validate()?;
    let cubic = CubicPowerModel::fit(&plan.processor);
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut cell_index: u64 = 0;

    for &kind in &plan.kinds {
        for &task_count in &plan.task_counts {
            for &policy in &plan.policies {
                for &processors in &plan.processor_counts {
                    for replication in 0..plan.replications {
                        let seed = SplitMix64::new(plan.master_seed ^ cell_index).next_u64();
                        cell_index += 1;
                        let fail = |message: String| CellFailure {
                            kind: kind.to_string(),
                            task_count,
                            policy: policy.to_string(),
                            processors,
                            replication,
                            message,
                        };

                        let mut spec = scale_to_task_count(kind, task_count);
                        spec.seed = seed;
                        let graph = match spec.generate() {
                            Ok(g) => g,
                            Err(e) => {
                                failures.push(fail(format!("generation failed: {e}")));
                                continue;
                            }
                        };
                        let schedule =
                            match list_schedule(&graph, processors, policy, &plan.processor) {
                                Ok(s) => s,
                                Err(e) => {
                                    failures.push(fail(format!("scheduling failed: {e}")));
                                    continue;
                                }
                            };
                        let windowed = match extract_slack_windows(&schedule, &graph) {
                            Ok(w) => w,
                            Err(e) => {
                                failures.push(fail(format!("window extraction failed: {e}")));
                                continue;
                            }
                        };
                        if let Err(msg) = audit_cell(&windowed, &graph) {
                            failures.push(fail(msg));
                            continue;
                        }
                        let baseline = match baseline_report(&windowed, &graph, &plan.processor) {
                            Ok(b) => b.total_energy_j,
                            Err(e) => {
                                failures.push(fail(format!("baseline energy failed: {e}")));
                                continue;
                            }
                        };

                        let mut push = |algorithm: &str, energy: f64| {
                            records.push(SavingsRecord {
                                kind: kind.to_string(),
                                task_count: graph.tasks().len(),
                                policy: policy.to_string(),
                                processors,
                                replication,
                                seed,
                                algorithm: algorithm.to_string(),
                                makespan_s: windowed.makespan,
                                baseline_energy_j: baseline,
                                energy_j: energy,
                                savings_pct: 100.0 * (baseline - energy) / baseline,
                            });
                        };

                        let mut algorithms =
                            vec![Algorithm::Rdvfs, Algorithm::Mmf, Algorithm::Mvfs];
                        if cubic.is_some() {
                            algorithms.push(Algorithm::Smfs);
                        }
                        let mut failed = false;
                        for algorithm in algorithms {
                            match reclaim_schedule(&windowed, &graph, &plan.processor, algorithm) {
                                Ok((_, report)) => push(algorithm.name(), report.total_energy_j),
                                Err(e) => {
                                    failures.push(fail(format!("{algorithm} failed: {e}")));
                                    failed = true;
                                    break;
                                }
                            }
                        }
                        if failed {
                            continue;
                        }
                        if let Some(model) = cubic {
                            push("continuous", continuous_total(&windowed, &graph, model));
                        }
                    }
                }
            }
        }
    }
    Ok(ExperimentOutcome { records, failures })
}

/// Mean/min/max savings per (kind, algorithm), kinds and algorithms in
/// lexicographic order.
pub fn aggregate(records: &[SavingsRecord]) -> Vec<AggregateRow> {
    let mut keys: Vec<(String, String)> = records
        .iter()
        .map(|r| (r.kind.clone(), r.algorithm.clone()))
        .collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(kind, algorithm)| {
            let group: Vec<f64> = records
                .iter()
                .filter(|r| r.kind == kind && r.algorithm == algorithm)
                .map(|r| r.savings_pct)
                .collect();
            let count = group.len();
            let mean = group.iter().sum::<f64>() / count as f64;
            AggregateRow {
                kind,
                algorithm,
                count,
                mean_savings_pct: mean,
                min_savings_pct: group.iter().copied().fold(f64::INFINITY, f64::min),
                max_savings_pct: group.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

/// Kendall rank correlation (tau-b, tie-corrected) between paired samples.
pub fn kendall_tau(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len();
    if n < 2 {
        return 0.0;
    }
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    let mut ties_x = 0i64;
    let mut ties_y = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = pairs[i].0 - pairs[j].0;
            let dy = pairs[i].1 - pairs[j].1;
            if dx == 0.0 && dy == 0.0 {
                ties_x += 1;
                ties_y += 1;
            } else if dx == 0.0 {
                ties_x += 1;
            } else if dy == 0.0 {
                ties_y += 1;
            } else if dx * dy > 0.0 {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom = (((n0 - ties_x) as f64) * ((n0 - ties_y) as f64)).sqrt();
    if denom == 0.0 {
        return 0.0;
    }
    (concordant - discordant) as f64 / denom
}

fn csv_string<T: Serialize>(rows: &[T]) -> Result<String, ExperimentError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row)?;
    }
    let bytes = writer.into_inner().expect("vec sink cannot fail");
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn records_to_csv(records: &[SavingsRecord]) -> Result<String, ExperimentError> {
    csv_string(records)
}

pub fn aggregate_to_csv(rows: &[AggregateRow]) -> Result<String, ExperimentError> {
    csv_string(rows)
}

/// Reproducibility header stored next to the records: the full plan plus
/// counts, pretty-printed JSON with a trailing newline.
pub fn metadata_json(
    plan: &ExperimentPlan,
    outcome: &ExperimentOutcome,
) -> Result<String, ExperimentError> {
    #[derive(Serialize)]
    struct Metadata<'a> {
        generator: &'static str,
        version: &'static str,
        baseline: &'static str,
        plan: &'a ExperimentPlan,
        record_count: usize,
        failure_count: usize,
        failures: &'a [CellFailure],
    }
    let mut s = serde_json::to_string_pretty(&Metadata {
        generator: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        baseline: "every task at f_max for cycles/f_max seconds, idle power for \
                   the rest of its window",
        plan,
        record_count: outcome.records.len(),
        failure_count: outcome.failures.len(),
        failures: &outcome.failures,
    })?;
    s.push('\n');
    Ok(s)
}
