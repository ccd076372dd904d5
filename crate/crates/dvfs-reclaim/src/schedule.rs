//! List scheduling at maximum frequency and per-task slack window extraction.
//!
//! The scheduler produces the "original" schedule the reclamation algorithms
//! start from: every task runs at f_max, windows are measured before any
//! frequency change.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::power::ProcessorModel;
use crate::task::TaskGraph;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("processor count must be >= 1")]
    NoProcessors,
    #[error("schedule references unknown task id {0}")]
    UnknownTaskId(u64),
}

/// Ready-queue ordering policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Ascending task id.
    Fifo,
    /// Longest processing time first, ties by id.
    Lpt,
    /// Shortest processing time first, ties by id.
    Spt,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Policy::Fifo => "fifo",
            Policy::Lpt => "lpt",
            Policy::Spt => "spt",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Policy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fifo" => Ok(Policy::Fifo),
            "lpt" => Ok(Policy::Lpt),
            "spt" => Ok(Policy::Spt),
            other => Err(format!(
                "unknown policy '{other}' (expected fifo, lpt or spt)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledTask {
    pub task_id: u64,
    pub processor: usize,
    #[serde(rename = "start_s")]
    pub start: f64,
    /// Execution time at f_max (t_OS).
    #[serde(rename = "exec_os_s")]
    pub exec_time_os: f64,
    /// Whole time available to the task: execution plus slack.
    #[serde(rename = "window_s")]
    pub window: f64,
}

impl ScheduledTask {
    pub fn finish(&self) -> f64 {
        self.start + self.exec_time_os
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schedule {
    pub entries: Vec<ScheduledTask>,
    pub processor_count: usize,
    #[serde(rename = "makespan_s")]
    pub makespan: f64,
}

impl Schedule {
    pub fn entry(&self, task_id: u64) -> Option<&ScheduledTask> {
        self.entries.iter().find(|e| e.task_id == task_id)
    }

    /// One line per processor, entries in start order.
    pub fn gantt_text(&self) -> String {
        let mut rows: Vec<Vec<&ScheduledTask>> = vec![Vec::new(); self.processor_count];
        for e in &self.entries {
            rows[e.processor].push(e);
        }
        let mut out = String::new();
        for (p, mut row) in rows.into_iter().enumerate() {
            row.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap());
            out.push_str(&format!("P{p} |"));
            for e in row {
                out.push_str(&format!(
                    " {}@[{:.6},{:.6})",
                    e.task_id,
                    e.start,
                    e.finish()
                ));
            }
            out.push('\n');
        }
        out.push_str(&format!("makespan {:.6}\n", self.makespan));
        out
    }
}

/// Classic list scheduling: repeatedly order the ready set by `policy` and
/// place its head on the processor giving the earliest start, honoring
/// cross-processor communication delays. Every task runs at f_max.
/// Deterministic: ready ties break by ascending id, processor ties by index.
pub fn list_schedule(
    graph: &TaskGraph,
    processors: usize,
    policy: Policy,
    proc: &ProcessorModel<f64>,
) -> Result<Schedule, ScheduleError> {
    if processors == 0 {
        return Err(ScheduleError::NoProcessors);
    }
    let f_max = proc.f_max();
    let exec: HashMap<u64, f64> = graph
        .tasks()
        .iter()
        .map(|t| (t.id, t.cycles / f_max))
        .collect();
    let preds = graph.predecessors();

    let mut placed: HashMap<u64, (usize, f64)> = HashMap::new(); // id -> (proc, finish)
    let mut proc_free = vec![0.0f64; processors];
    let mut entries = Vec::with_capacity(graph.tasks().len());
    let mut remaining: Vec<u64> = graph.tasks().iter().map(|t| t.id).collect();
    remaining.sort_unstable();

    while !remaining.is_empty() {
        let mut ready: Vec<u64> = remaining
            .iter()
            .copied()
            .filter(|id| preds[id].iter().all(|(p, _)| placed.contains_key(p)))
            .collect();
        debug_assert!(!ready.is_empty(), "DAG guarantees progress");
        ready.sort_by(|a, b| {
            let key = |id: &u64| match policy {
                Policy::Fifo => (0.0, *id),
                Policy::Lpt => (-exec[id], *id),
                Policy::Spt => (exec[id], *id),
            };
            key(a).partial_cmp(&key(b)).unwrap()
        });
        let id = ready[0];
        remaining.retain(|&x| x != id);

        let mut best: Option<(f64, usize)> = None;
        for (p, &free) in proc_free.iter().enumerate() {
            let mut est = free;
            for (pred, comm) in &preds[&id] {
                let (pp, fin) = placed[pred];
                let arrival = if pp == p { fin } else { fin + comm };
                est = est.max(arrival);
            }
            if best.is_none_or(|(t, _)| est < t) {
                best = Some((est, p));
            }
        }
        let (start, p) = best.unwrap();
        let fin = start + exec[&id];
        proc_free[p] = fin;
        placed.insert(id, (p, fin));
        entries.push(ScheduledTask {
            task_id: id,
            processor: p,
            start,
            exec_time_os: exec[&id],
            window: exec[&id],
        });
    }

    let makespan = entries.iter().map(|e| e.finish()).fold(0.0, f64::max);
    entries.sort_by_key(|e| e.task_id);
    Ok(Schedule {
        entries,
        processor_count: processors,
        makespan,
    })
}

/// Populates each task's window T: the time from its start until the
/// earliest of (a) the next task on the same processor, (b) each successor's
/// start minus its communication cost when placed on another processor (or
/// the bare start on the same processor), and (c) the schedule makespan.
/// Windows never shrink below the task's own execution time.
pub fn extract_slack_windows(
    schedule: &Schedule,
    graph: &TaskGraph,
) -> Result<Schedule, ScheduleError> {
    let mut out = schedule.clone();
    let by_id: HashMap<u64, &ScheduledTask> =
        schedule.entries.iter().map(|e| (e.task_id, e)).collect();
    for e in &schedule.entries {
        if graph.task(e.task_id).is_none() {
            return Err(ScheduleError::UnknownTaskId(e.task_id));
        }
    }

    // Next-start per processor.
    let mut per_proc: Vec<Vec<&ScheduledTask>> = vec![Vec::new(); schedule.processor_count];
    for e in &schedule.entries {
        per_proc[e.processor].push(e);
    }
    for row in &mut per_proc {
        row.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap());
    }
    let mut next_start: HashMap<u64, f64> = HashMap::new();
    for row in &per_proc {
        for pair in row.windows(2) {
            next_start.insert(pair[0].task_id, pair[1].start);
        }
    }

    let succs = graph.successors();
    for e in &mut out.entries {
        let mut deadline = schedule.makespan;
        if let Some(&ns) = next_start.get(&e.task_id) {
            deadline = deadline.min(ns);
        }
        if let Some(list) = succs.get(&e.task_id) {
            for (s, comm) in list {
                let se = by_id.get(s).ok_or(ScheduleError::UnknownTaskId(*s))?;
                let bound = if se.processor == e.processor {
                    se.start
                } else {
                    se.start - comm
                };
                deadline = deadline.min(bound);
            }
        }
        e.window = (deadline - e.start).max(e.exec_time_os);
    }
    Ok(out)
}

/// One detected invariant violation.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Overlap {
        processor: usize,
        first: u64,
        second: u64,
    },
    Precedence {
        pred: u64,
        succ: u64,
        required_start: f64,
        actual_start: f64,
    },
    BadEntry {
        task_id: u64,
        reason: String,
    },
    MakespanMismatch {
        declared: f64,
        actual: f64,
    },
    MissingTask(u64),
    ForeignTask(u64),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Overlap {
                processor,
                first,
                second,
            } => write!(
                f,
                "tasks {first} and {second} overlap on processor {processor}"
            ),
            Violation::Precedence {
                pred,
                succ,
                required_start,
                actual_start,
            } => write!(
                f,
                "edge {pred} -> {succ}: start {actual_start} < required {required_start}"
            ),
            Violation::BadEntry { task_id, reason } => {
                write!(f, "entry for task {task_id}: {reason}")
            }
            Violation::MakespanMismatch { declared, actual } => {
                write!(f, "makespan {declared} != max finish {actual}")
            }
            Violation::MissingTask(id) => write!(f, "task {id} is not scheduled"),
            Violation::ForeignTask(id) => write!(f, "scheduled task {id} is not in the graph"),
        }
    }
}

/// Checks all schedule invariants; empty result means the schedule is valid.
pub fn validate_schedule(schedule: &Schedule, graph: &TaskGraph) -> Vec<Violation> {
    let mut violations = Vec::new();
    let tol = 1e-9 * (1.0 + schedule.makespan.abs());

    let by_id: HashMap<u64, &ScheduledTask> =
        schedule.entries.iter().map(|e| (e.task_id, e)).collect();
    for t in graph.tasks() {
        if !by_id.contains_key(&t.id) {
            violations.push(Violation::MissingTask(t.id));
        }
    }
    for e in &schedule.entries {
        if graph.task(e.task_id).is_none() {
            violations.push(Violation::ForeignTask(e.task_id));
        }
        if e.start < 0.0 {
            violations.push(Violation::BadEntry {
                task_id: e.task_id,
                reason: format!("negative start {}", e.start),
            });
        }
        if e.exec_time_os <= 0.0 {
            violations.push(Violation::BadEntry {
                task_id: e.task_id,
                reason: format!("non-positive execution time {}", e.exec_time_os),
            });
        }
        if e.window < e.exec_time_os - tol {
            violations.push(Violation::BadEntry {
                task_id: e.task_id,
                reason: format!(
                    "window {} below execution time {}",
                    e.window, e.exec_time_os
                ),
            });
        }
        if e.processor >= schedule.processor_count {
            violations.push(Violation::BadEntry {
                task_id: e.task_id,
                reason: format!("processor index {} out of range", e.processor),
            });
        }
    }

    let mut per_proc: Vec<Vec<&ScheduledTask>> = vec![Vec::new(); schedule.processor_count];
    for e in &schedule.entries {
        if e.processor < schedule.processor_count {
            per_proc[e.processor].push(e);
        }
    }
    for (p, row) in per_proc.iter_mut().enumerate() {
        row.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap());
        for pair in row.windows(2) {
            if pair[1].start < pair[0].finish() - tol {
                violations.push(Violation::Overlap {
                    processor: p,
                    first: pair[0].task_id,
                    second: pair[1].task_id,
                });
            }
        }
    }

    for edge in graph.edges() {
        let (Some(a), Some(b)) = (by_id.get(&edge.pred), by_id.get(&edge.succ)) else {
            continue;
        };
        let required = if a.processor == b.processor {
            a.finish()
        } else {
            a.finish() + edge.comm_cost
        };
        if b.start < required - tol {
            violations.push(Violation::Precedence {
                pred: edge.pred,
                succ: edge.succ,
                required_start: required,
                actual_start: b.start,
            });
        }
    }

    let actual = schedule
        .entries
        .iter()
        .map(|e| e.finish())
        .fold(0.0, f64::max);
    if (actual - schedule.makespan).abs() > tol {
        violations.push(Violation::MakespanMismatch {
            declared: schedule.makespan,
            actual,
        });
    }
    violations
}

/// Replaces every execution time with the task's full window; used to test
/// the safety property slack reclamation relies on.
pub fn stretch_to_windows(schedule: &Schedule) -> Schedule {
    let mut out = schedule.clone();
    for e in &mut out.entries {
        e.exec_time_os = e.window;
    }
    out
}
