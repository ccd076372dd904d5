//! Per-task slack reclamation: mapping (cycles, window, processor) to the
//! frequency allocation each algorithm would execute the task with.
//!
//! Selectors:
//! - `rdvfs_select`: the whole task at the smallest level at or above the
//!   ideal frequency K/T.
//! - `mmf_select`: a combination of the processor's lowest and highest
//!   frequencies filling the window exactly.
//! - `smfs_select`: the two adjacent levels bracketing K/T (optimal when
//!   power is cubic in frequency).
//! - `mvfs_select`: searches every (below, above) pair around K/T plus the
//!   single-level candidates, optimal for any monotone power table.

use serde::Serialize;
use thiserror::Error;

use crate::num::{approx_eq, rel_gap, Real};
use crate::power::{task_energy, CubicPowerModel, FrequencyLevel, PowerModelError, ProcessorModel};
use crate::schedule::Schedule;
use crate::task::TaskGraph;

#[derive(Debug, Error)]
pub enum ReclaimError {
    #[error("request needs cycles > 0 and window > 0 (got K={cycles}, T={window_s} s)")]
    InvalidRequest { cycles: f64, window_s: f64 },
    #[error("window {window_s} s is too short: {cycles} cycles need at least {min_s} s at f_max {f_max_hz} Hz")]
    InfeasibleWindow {
        cycles: f64,
        window_s: f64,
        min_s: f64,
        f_max_hz: f64,
    },
    #[error("bracket violated: need f_lo <= K/T <= f_hi, got lo={lo_hz} Hz, ideal={ideal_hz} Hz, hi={hi_hz} Hz")]
    BracketViolation {
        lo_hz: f64,
        ideal_hz: f64,
        hi_hz: f64,
    },
    #[error("processor '{0}' does not follow the cubic power model")]
    NonCubicProcessor(String),
    #[error("task {id}: {source}")]
    Task {
        id: u64,
        #[source]
        source: Box<ReclaimError>,
    },
    #[error(transparent)]
    Power(#[from] PowerModelError),
    #[error("schedule windows are not populated (task {0} has zero slack metadata)")]
    WindowsMissing(u64),
}

/// How a task is executed inside its window: (level, duration) segments.
/// Zero-duration segments are dropped at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyAllocation<R = f64> {
    segments: Vec<(FrequencyLevel<R>, R)>,
}

impl<R: Real> FrequencyAllocation<R> {
    pub fn from_segments(segments: Vec<(FrequencyLevel<R>, R)>) -> Self {
        let segments = segments
            .into_iter()
            .filter(|(_, d)| *d > R::zero())
            .collect();
        Self { segments }
    }

    pub fn segments(&self) -> &[(FrequencyLevel<R>, R)] {
        &self.segments
    }

    pub fn total_time(&self) -> R {
        self.segments.iter().map(|(_, d)| *d).sum()
    }

    pub fn total_cycles(&self) -> R {
        self.segments.iter().map(|(l, d)| l.frequency * *d).sum()
    }

    /// Checks the allocation constraints against a request: durations
    /// nonnegative, total time within the window and cycles matched to
    /// relative tolerance.
    pub fn satisfies(&self, req: &ReclaimRequest<R>) -> bool {
        let time_ok = self.total_time() <= req.window * (R::one() + R::check_tol());
        let cycles_ok = approx_eq(self.total_cycles(), req.cycles) || self.segments.is_empty();
        time_ok && cycles_ok
    }
}

/// A task's reclamation input: required cycles K and available window T.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReclaimRequest<R = f64> {
    pub cycles: R,
    pub window: R,
}

impl<R: Real> ReclaimRequest<R> {
    pub fn new(cycles: R, window: R) -> Result<Self, ReclaimError> {
        if !(cycles.is_finite() && cycles > R::zero() && window.is_finite() && window > R::zero()) {
            return Err(ReclaimError::InvalidRequest {
                cycles: cycles.as_f64(),
                window_s: window.as_f64(),
            });
        }
        Ok(Self { cycles, window })
    }

    /// K/T must not exceed the processor's top frequency.
    pub fn check_feasible(&self, proc: &ProcessorModel<R>) -> Result<(), ReclaimError> {
        let f_max = proc.f_max();
        let ideal = self.cycles / self.window;
        if ideal > f_max * (R::one() + R::check_tol()) {
            return Err(ReclaimError::InfeasibleWindow {
                cycles: self.cycles.as_f64(),
                window_s: self.window.as_f64(),
                min_s: (self.cycles / f_max).as_f64(),
                f_max_hz: f_max.as_f64(),
            });
        }
        Ok(())
    }
}

/// The continuous frequency that exactly fills the window: K/T.
pub fn ideal_frequency<R: Real>(req: &ReclaimRequest<R>) -> R {
    req.cycles / req.window
}

/// Lower bound from a continuous frequency range: run at K/T for the whole
/// window. Only defined for analytic (cubic) power models; returns the ideal
/// frequency and its energy. Not an executable allocation.
pub fn continuous_optimum_energy<R: Real>(
    req: &ReclaimRequest<R>,
    model: CubicPowerModel<R>,
    idle_power: R,
) -> (R, R) {
    let f = ideal_frequency(req);
    // Window fully used, so the idle term vanishes; the parameter is kept so
    // non-zero idle processors report the same accounting shape.
    let _ = idle_power;
    (f, req.window * model.power(f))
}

fn single_segment<R: Real>(level: FrequencyLevel<R>, duration: R) -> FrequencyAllocation<R> {
    FrequencyAllocation::from_segments(vec![(level, duration)])
}

/// Smallest level at or above K/T, run for K/f; the window remainder idles.
pub fn rdvfs_select<R: Real>(
    req: &ReclaimRequest<R>,
    proc: &ProcessorModel<R>,
) -> Result<FrequencyAllocation<R>, ReclaimError> {
    req.check_feasible(proc)?;
    let ideal = ideal_frequency(req);
    let level = proc
        .levels()
        .iter()
        .find(|l| l.frequency >= ideal || approx_eq(l.frequency, ideal))
        .copied()
        .unwrap_or(*proc.max_level());
    Ok(single_segment(level, req.cycles / level.frequency))
}

/// Maximum-minimum-frequency baseline: fill the window with the processor's
/// extreme levels; if even the lowest level overshoots, run it with idle
/// remainder.
pub fn mmf_select<R: Real>(
    req: &ReclaimRequest<R>,
    proc: &ProcessorModel<R>,
) -> Result<FrequencyAllocation<R>, ReclaimError> {
    req.check_feasible(proc)?;
    let ideal = ideal_frequency(req);
    let lo = proc.levels()[0];
    let hi = *proc.max_level();
    if ideal < lo.frequency && !approx_eq(ideal, lo.frequency) {
        return Ok(single_segment(lo, req.cycles / lo.frequency));
    }
    pair_allocation(req, &lo, &hi)
}

/// Optimal split of the window between a bracketing pair: t_lo and t_hi fill
/// T exactly and meet the cycle constraint exactly.
pub fn pair_allocation<R: Real>(
    req: &ReclaimRequest<R>,
    lo: &FrequencyLevel<R>,
    hi: &FrequencyLevel<R>,
) -> Result<FrequencyAllocation<R>, ReclaimError> {
    let ideal = ideal_frequency(req);
    let bracket_err = || ReclaimError::BracketViolation {
        lo_hz: lo.frequency.as_f64(),
        ideal_hz: ideal.as_f64(),
        hi_hz: hi.frequency.as_f64(),
    };
    if approx_eq(lo.frequency, hi.frequency) {
        if !approx_eq(ideal, lo.frequency) {
            return Err(bracket_err());
        }
        return Ok(single_segment(*lo, req.window));
    }
    let (lo, hi) = if lo.frequency < hi.frequency {
        (lo, hi)
    } else {
        (hi, lo)
    };
    let tol = R::check_tol();
    if ideal < lo.frequency * (R::one() - tol) || ideal > hi.frequency * (R::one() + tol) {
        return Err(bracket_err());
    }
    let span = hi.frequency - lo.frequency;
    let t_lo = ((req.window * hi.frequency - req.cycles) / span).max(R::zero());
    let t_hi = ((req.cycles - req.window * lo.frequency) / span).max(R::zero());
    Ok(FrequencyAllocation::from_segments(vec![
        (*lo, t_lo),
        (*hi, t_hi),
    ]))
}

/// Closed-form energy of the optimal bracketing-pair split:
/// ((T f_hi - K) P_lo + (K - T f_lo) P_hi) / (f_hi - f_lo).
pub fn pair_energy<R: Real>(
    req: &ReclaimRequest<R>,
    lo: &FrequencyLevel<R>,
    hi: &FrequencyLevel<R>,
    _proc: &ProcessorModel<R>,
) -> Result<R, ReclaimError> {
    let ideal = ideal_frequency(req);
    if approx_eq(lo.frequency, hi.frequency) {
        if !approx_eq(ideal, lo.frequency) {
            return Err(ReclaimError::BracketViolation {
                lo_hz: lo.frequency.as_f64(),
                ideal_hz: ideal.as_f64(),
                hi_hz: hi.frequency.as_f64(),
            });
        }
        return Ok(req.window * lo.power);
    }
    let (lo, hi) = if lo.frequency < hi.frequency {
        (lo, hi)
    } else {
        (hi, lo)
    };
    let tol = R::check_tol();
    if ideal < lo.frequency * (R::one() - tol) || ideal > hi.frequency * (R::one() + tol) {
        return Err(ReclaimError::BracketViolation {
            lo_hz: lo.frequency.as_f64(),
            ideal_hz: ideal.as_f64(),
            hi_hz: hi.frequency.as_f64(),
        });
    }
    let span = hi.frequency - lo.frequency;
    Ok(((req.window * hi.frequency - req.cycles) * lo.power
        + (req.cycles - req.window * lo.frequency) * hi.power)
        / span)
}

/// Energy of a candidate allocation including idle power over the unused
/// window. Used for candidate comparison inside the selectors.
fn candidate_energy<R: Real>(
    alloc: &FrequencyAllocation<R>,
    req: &ReclaimRequest<R>,
    proc: &ProcessorModel<R>,
) -> R {
    let active: R = alloc.total_time();
    let exec: R = alloc.segments().iter().map(|(l, d)| *d * l.power).sum();
    exec + proc.idle_power() * (req.window - active).max(R::zero())
}

/// Multiple voltage-frequency selection: the minimum-energy way to execute
/// the task within its window.
///
/// Candidates are every pair (f_lo below K/T, f_hi above K/T) filling the
/// window, plus every single level at or above K/T run for K/f with idle
/// remainder. The single-level candidates extend the published pair-only
/// search: on tables where energy per cycle is not monotone in frequency
/// (Intel XScale's 150 -> 400 MHz step) the best single level beats every
/// pair, and including it keeps this selector exactly optimal for any
/// monotone power table. On cubic models the pair always wins, so published
/// worked examples are unchanged. Ties break toward smaller f_hi, then
/// smaller f_lo.
pub fn mvfs_select<R: Real>(
    req: &ReclaimRequest<R>,
    proc: &ProcessorModel<R>,
) -> Result<FrequencyAllocation<R>, ReclaimError> {
    req.check_feasible(proc)?;
    let ideal = ideal_frequency(req);

    if let Some(level) = proc.levels().iter().find(|l| approx_eq(l.frequency, ideal)) {
        let duration = (req.cycles / level.frequency).min(req.window);
        return Ok(single_segment(*level, duration));
    }

    let lower: Vec<&FrequencyLevel<R>> = proc
        .levels()
        .iter()
        .filter(|l| l.frequency < ideal)
        .collect();
    let upper: Vec<&FrequencyLevel<R>> = proc
        .levels()
        .iter()
        .filter(|l| l.frequency > ideal)
        .collect();

    // (energy, f_hi, f_lo) ordering; levels are iterated ascending so the
    // first strict minimum realizes the tie-break.
    let mut best: Option<(R, R, R, FrequencyAllocation<R>)> = None;
    let mut consider =
        |alloc: FrequencyAllocation<R>, f_hi: R, f_lo: R, req: &ReclaimRequest<R>| {
            let e = candidate_energy(&alloc, req, proc);
            let better = match &best {
                None => true,
                Some((be, bhi, blo, _)) => {
                    e < *be || (e == *be && (f_hi < *bhi || (f_hi == *bhi && f_lo < *blo)))
                }
            };
            if better {
                best = Some((e, f_hi, f_lo, alloc));
            }
        };

    for hi in &upper {
        for lo in &lower {
            let alloc = pair_allocation(req, lo, hi)?;
            consider(alloc, hi.frequency, lo.frequency, req);
        }
    }
    for hi in &upper {
        let alloc = single_segment(**hi, req.cycles / hi.frequency);
        consider(alloc, hi.frequency, hi.frequency, req);
    }

    Ok(best.expect("feasible request always has a candidate").3)
}

/// Simplified selector for cubic power models: the two adjacent levels
/// bracketing K/T. Refuses processors whose table does not follow
/// `lambda * f^3` (adjacency requires convexity).
pub fn smfs_select<R: Real>(
    req: &ReclaimRequest<R>,
    proc: &ProcessorModel<R>,
    model: CubicPowerModel<R>,
) -> Result<FrequencyAllocation<R>, ReclaimError> {
    req.check_feasible(proc)?;
    let tol = R::lit(1e-6);
    for l in proc.levels() {
        if ((model.power(l.frequency) - l.power) / l.power).abs() > tol {
            return Err(ReclaimError::NonCubicProcessor(proc.name().to_string()));
        }
    }
    let ideal = ideal_frequency(req);
    if ideal < proc.f_min() && !approx_eq(ideal, proc.f_min()) {
        return Ok(single_segment(proc.levels()[0], req.cycles / proc.f_min()));
    }
    if let Some(level) = proc.levels().iter().find(|l| approx_eq(l.frequency, ideal)) {
        let duration = (req.cycles / level.frequency).min(req.window);
        return Ok(single_segment(*level, duration));
    }
    let hi_idx = proc
        .levels()
        .iter()
        .position(|l| l.frequency > ideal)
        .expect("feasibility guarantees a level above K/T");
    debug_assert!(hi_idx > 0, "K/T below f_min handled above");
    pair_allocation(req, &proc.levels()[hi_idx - 1], &proc.levels()[hi_idx])
}

/// Cubic closed form for the optimal bracketing-pair energy:
/// lambda * (K (f_lo^2 + f_lo f_hi + f_hi^2) - T f_lo f_hi (f_lo + f_hi)).
pub fn smfs_energy_closed_form<R: Real>(
    req: &ReclaimRequest<R>,
    lo_f: R,
    hi_f: R,
    model: CubicPowerModel<R>,
) -> Result<R, ReclaimError> {
    let ideal = ideal_frequency(req);
    let (lo_f, hi_f) = if lo_f <= hi_f {
        (lo_f, hi_f)
    } else {
        (hi_f, lo_f)
    };
    let tol = R::check_tol();
    if ideal < lo_f * (R::one() - tol) || ideal > hi_f * (R::one() + tol) {
        return Err(ReclaimError::BracketViolation {
            lo_hz: lo_f.as_f64(),
            ideal_hz: ideal.as_f64(),
            hi_hz: hi_f.as_f64(),
        });
    }
    let k = req.cycles;
    let t = req.window;
    Ok(model.lambda()
        * (k * (lo_f * lo_f + lo_f * hi_f + hi_f * hi_f) - t * lo_f * hi_f * (lo_f + hi_f)))
}

/// The reclamation algorithms applicable to a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Rdvfs,
    Mmf,
    Smfs,
    Mvfs,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Rdvfs,
        Algorithm::Mmf,
        Algorithm::Smfs,
        Algorithm::Mvfs,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Rdvfs => "rdvfs",
            Algorithm::Mmf => "mmf",
            Algorithm::Smfs => "smfs",
            Algorithm::Mvfs => "mvfs",
        }
    }

    pub fn select(
        &self,
        req: &ReclaimRequest<f64>,
        proc: &ProcessorModel<f64>,
    ) -> Result<FrequencyAllocation<f64>, ReclaimError> {
        match self {
            Algorithm::Rdvfs => rdvfs_select(req, proc),
            Algorithm::Mmf => mmf_select(req, proc),
            Algorithm::Mvfs => mvfs_select(req, proc),
            Algorithm::Smfs => {
                let model = CubicPowerModel::fit(proc)
                    .ok_or_else(|| ReclaimError::NonCubicProcessor(proc.name().to_string()))?;
                smfs_select(req, proc, model)
            }
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rdvfs" => Ok(Algorithm::Rdvfs),
            "mmf" | "mmf-dvfs" => Ok(Algorithm::Mmf),
            "smfs" | "smfs-dvfs" => Ok(Algorithm::Smfs),
            "mvfs" | "mvfs-dvfs" => Ok(Algorithm::Mvfs),
            other => Err(format!("unknown algorithm '{other}'")),
        }
    }
}

/// Per-task energy row of a report. Single-segment allocations repeat the
/// level in both frequency columns with t_hi = 0.
#[derive(Debug, Clone, Serialize)]
pub struct TaskEnergyRow {
    pub task_id: u64,
    pub algorithm: String,
    pub f_lo_hz: f64,
    pub t_lo_s: f64,
    pub f_hi_hz: f64,
    pub t_hi_s: f64,
    pub energy_j: f64,
}

/// Per-task and aggregate energy for one (schedule, algorithm) pair.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub algorithm: String,
    pub rows: Vec<TaskEnergyRow>,
    pub total_energy_j: f64,
}

impl EnergyReport {
    /// CSV with the fixed column order
    /// `task_id,algorithm,f_lo_hz,t_lo_s,f_hi_hz,t_hi_s,energy_j` and a
    /// trailing totals row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("task_id,algorithm,f_lo_hz,t_lo_s,f_hi_hz,t_hi_s,energy_j\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.task_id, r.algorithm, r.f_lo_hz, r.t_lo_s, r.f_hi_hz, r.t_hi_s, r.energy_j
            ));
        }
        out.push_str(&format!(
            "total,{},,,,,{}\n",
            self.algorithm, self.total_energy_j
        ));
        out
    }
}

fn row_from_allocation(
    task_id: u64,
    algorithm: &str,
    alloc: &FrequencyAllocation<f64>,
    energy: f64,
) -> TaskEnergyRow {
    let mut segs: Vec<(f64, f64)> = alloc
        .segments()
        .iter()
        .map(|(l, d)| (l.frequency, *d))
        .collect();
    segs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let (f_lo, t_lo, f_hi, t_hi) = match segs.as_slice() {
        [] => (0.0, 0.0, 0.0, 0.0),
        [(f, t)] => (*f, *t, *f, 0.0),
        [(fl, tl), (fh, th)] => (*fl, *tl, *fh, *th),
        _ => unreachable!("selectors emit at most two segments"),
    };
    TaskEnergyRow {
        task_id,
        algorithm: algorithm.to_string(),
        f_lo_hz: f_lo,
        t_lo_s: t_lo,
        f_hi_hz: f_hi,
        t_hi_s: t_hi,
        energy_j: energy,
    }
}

/// Applies `algorithm` to every scheduled task independently (start times
/// unchanged) and reports per-task allocations and energies. Totals are
/// summed in ascending task id.
pub fn reclaim_schedule(
    schedule: &Schedule,
    graph: &TaskGraph,
    proc: &ProcessorModel<f64>,
    algorithm: Algorithm,
) -> Result<(Schedule, EnergyReport), ReclaimError> {
    let mut rows = Vec::with_capacity(schedule.entries.len());
    let mut entries = schedule.entries.clone();
    entries.sort_by_key(|e| e.task_id);
    let mut total = 0.0;
    for entry in &entries {
        let task = graph
            .task(entry.task_id)
            .ok_or(ReclaimError::WindowsMissing(entry.task_id))?;
        let req =
            ReclaimRequest::new(task.cycles, entry.window).map_err(|e| ReclaimError::Task {
                id: entry.task_id,
                source: Box::new(e),
            })?;
        let alloc = algorithm
            .select(&req, proc)
            .map_err(|e| ReclaimError::Task {
                id: entry.task_id,
                source: Box::new(e),
            })?;
        let energy = task_energy(&alloc, entry.window, proc).map_err(|e| ReclaimError::Task {
            id: entry.task_id,
            source: Box::new(ReclaimError::Power(e)),
        })?;
        total += energy;
        rows.push(row_from_allocation(
            entry.task_id,
            algorithm.name(),
            &alloc,
            energy,
        ));
    }
    Ok((
        schedule.clone(),
        EnergyReport {
            algorithm: algorithm.name().to_string(),
            rows,
            total_energy_j: total,
        },
    ))
}

/// Energy of the original schedule: every task at f_max for t_OS, idle power
/// over the window remainder.
pub fn baseline_report(
    schedule: &Schedule,
    graph: &TaskGraph,
    proc: &ProcessorModel<f64>,
) -> Result<EnergyReport, ReclaimError> {
    let mut entries = schedule.entries.clone();
    entries.sort_by_key(|e| e.task_id);
    let top = *proc.max_level();
    let mut rows = Vec::with_capacity(entries.len());
    let mut total = 0.0;
    for entry in &entries {
        let task = graph
            .task(entry.task_id)
            .ok_or(ReclaimError::WindowsMissing(entry.task_id))?;
        let alloc = single_segment(top, task.cycles / top.frequency);
        let energy = task_energy(&alloc, entry.window, proc)?;
        total += energy;
        rows.push(row_from_allocation(
            entry.task_id,
            "baseline",
            &alloc,
            energy,
        ));
    }
    Ok(EnergyReport {
        algorithm: "baseline".to_string(),
        rows,
        total_energy_j: total,
    })
}

/// Asserts `rel_gap(a, b)` is within the crate check tolerance (test helper
/// shared by unit, property and acceptance suites).
pub fn energies_agree<R: Real>(a: R, b: R) -> bool {
    rel_gap(a, b) <= R::check_tol()
}
