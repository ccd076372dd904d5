//! Independent cross-checks for the closed-form selectors.
//!
//! Two oracles deliberately avoid the closed forms in `reclaim`:
//! `pairwise_optimal` solves the two-segment linear system directly and
//! compares candidate energies by brute enumeration; `grid_optimal` searches
//! integer compositions of a discretized window with no structural assumption
//! at all. Agreement between the three paths is what the verification suite
//! asserts.

use thiserror::Error;

use crate::power::{FrequencyLevel, ProcessorModel};
use crate::reclaim::{ReclaimError, ReclaimRequest};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("grid search needs at least 10 steps, got {0}")]
    TooFewSteps(usize),
    #[error("grid search over {levels} levels exceeds the limit of {max}")]
    TooManyLevels { levels: usize, max: usize },
    #[error("grid with {steps} steps is too coarse to hit the cycle target")]
    ResolutionTooCoarse { steps: usize },
    #[error(transparent)]
    Reclaim(#[from] ReclaimError),
}

/// An oracle's best allocation: (level, duration) segments and total energy
/// over the window including idle.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub segments: Vec<(FrequencyLevel<f64>, f64)>,
    pub energy_j: f64,
}

impl OracleSolution {
    /// Number of distinct levels with nonzero duration.
    pub fn distinct_levels(&self) -> usize {
        self.segments.iter().filter(|(_, d)| *d > 0.0).count()
    }
}

fn window_energy(segments: &[(FrequencyLevel<f64>, f64)], window: f64, idle: f64) -> f64 {
    let active: f64 = segments.iter().map(|(_, d)| d).sum();
    let exec: f64 = segments.iter().map(|(l, d)| l.power * d).sum();
    exec + idle * (window - active).max(0.0)
}

/// Exact optimum by enumerating the vertex solutions of the per-task linear
/// program: every bracketing pair filling the window, every single level at
/// or above K/T with idle remainder, and the lowest level alone when K/T
/// falls below it.
pub fn pairwise_optimal(
    req: &ReclaimRequest<f64>,
    proc: &ProcessorModel<f64>,
) -> Result<OracleSolution, OracleError> {
    req.check_feasible(proc)?;
    let ideal = req.cycles / req.window;
    let idle = proc.idle_power();

    let mut candidates: Vec<Vec<(FrequencyLevel<f64>, f64)>> = Vec::new();
    if ideal <= proc.f_min() {
        candidates.push(vec![(proc.levels()[0], req.cycles / proc.f_min())]);
    }
    for hi in proc.levels() {
        if hi.frequency < ideal {
            continue;
        }
        candidates.push(vec![(*hi, req.cycles / hi.frequency)]);
        for lo in proc.levels() {
            if lo.frequency >= hi.frequency || lo.frequency > ideal {
                continue;
            }
            // Two unknowns, two constraints: t_lo + t_hi = T and
            // t_lo f_lo + t_hi f_hi = K.
            let span = hi.frequency - lo.frequency;
            let t_hi = (req.cycles - req.window * lo.frequency) / span;
            let t_lo = req.window - t_hi;
            if t_lo < -1e-12 || t_hi < -1e-12 {
                continue;
            }
            candidates.push(vec![(*lo, t_lo.max(0.0)), (*hi, t_hi.max(0.0))]);
        }
    }

    let best = candidates
        .into_iter()
        .map(|segments| {
            let e = window_energy(&segments, req.window, idle);
            (e, segments)
        })
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .expect("a feasible request always has at least one candidate");

    Ok(OracleSolution {
        segments: best.1.into_iter().filter(|(_, d)| *d > 0.0).collect(),
        energy_j: best.0,
    })
}

/// Grid-search configuration: the window is cut into `steps` equal slices,
/// each assigned to one level.
#[derive(Debug, Clone, Copy)]
pub struct GridSearchConfig {
    pub steps: usize,
    pub max_levels: usize,
}

impl Default for GridSearchConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            max_levels: 8,
        }
    }
}

/// Best lower bound on the energy (above idle) needed to push `cycles`
/// through `levels` within `time`: Lagrangian relaxation of the time
/// constraint evaluated at its crossing points. `f64::INFINITY` when even
/// the fastest level cannot make it.
fn completion_bound(levels: &[(f64, f64)], cycles: f64, time: f64) -> f64 {
    if cycles <= 0.0 {
        return 0.0;
    }
    let f_best = levels.iter().map(|(f, _)| *f).fold(0.0, f64::max);
    if levels.is_empty() || time <= 0.0 || cycles > f_best * time * (1.0 + 1e-12) {
        return f64::INFINITY;
    }
    let value = |mu: f64| -> f64 {
        let gamma = levels
            .iter()
            .map(|(f, p)| (p + mu) / f)
            .fold(f64::INFINITY, f64::min);
        cycles * gamma - mu * time
    };
    let mut best = value(0.0);
    for (i, (fi, pi)) in levels.iter().enumerate() {
        for (fj, pj) in &levels[i + 1..] {
            if (fj - fi).abs() < 1e-30 {
                continue;
            }
            let mu = (pj * fi - pi * fj) / (fj - fi);
            if mu > 0.0 && mu.is_finite() {
                best = best.max(value(mu));
            }
        }
    }
    best.max(0.0)
}

struct GridSearch<'a> {
    levels: &'a [(f64, f64)],
    dt: f64,
    window: f64,
    cycles: f64,
    cyc_tol: f64,
    /// How much repairing a leaf can lower its energy: one cycle-tolerance
    /// worth of the most expensive joules-per-cycle level. Subtracted from
    /// the pruning bound so post-repair scoring stays sound.
    margin: f64,
    counts: Vec<usize>,
    best: Option<(f64, Vec<f64>)>,
}

impl GridSearch<'_> {
    /// Scores a complete composition after shrinking it onto the exact cycle
    /// target, so leaves compete on the energy the caller will actually see.
    fn score_leaf(&mut self) {
        let mut durations: Vec<f64> = self.counts.iter().map(|&n| n as f64 * self.dt).collect();
        if repair(&mut durations, self.levels, self.cycles, self.window).is_err() {
            return;
        }
        let e: f64 = durations
            .iter()
            .zip(self.levels)
            .map(|(t, (_, p))| t * p)
            .sum();
        if self.best.as_ref().is_none_or(|(b, _)| e < *b) {
            self.best = Some((e, durations));
        }
    }

    /// Depth-first over per-level slice counts in ascending level order and
    /// ascending count, so the first solution at any score is kept and the
    /// result is deterministic. The final level's count is pinned by the
    /// cycle target instead of enumerated.
    fn descend(&mut self, i: usize, steps_left: usize, time: f64, cyc: f64, energy: f64) {
        let (f, _) = self.levels[i];
        if i + 1 == self.levels.len() {
            let lo = ((self.cycles - cyc) / (self.dt * f)).ceil().max(0.0);
            let hi = ((self.cycles + self.cyc_tol - cyc) / (self.dt * f)).floor();
            let time_cap = ((self.window - time) / self.dt * (1.0 + 1e-12)).floor();
            let hi = hi.min(time_cap).min(steps_left as f64);
            let mut n = lo as usize;
            while (n as f64) <= hi {
                self.counts[i] = n;
                self.score_leaf();
                n += 1;
            }
            self.counts[i] = 0;
            return;
        }
        let f_max = self.levels.last().unwrap().0;
        let p = self.levels[i].1;
        for c in 0..=steps_left {
            let time2 = time + c as f64 * self.dt;
            if time2 > self.window * (1.0 + 1e-12) {
                break;
            }
            let cyc2 = cyc + c as f64 * self.dt * f;
            if cyc2 > self.cycles + self.cyc_tol {
                break;
            }
            // Even all-remaining-slices-at-f_max cannot reach the target:
            // raising this count further only makes it worse.
            let reach = cyc2 + (steps_left - c) as f64 * self.dt * f_max;
            if reach < self.cycles {
                break;
            }
            let e2 = energy + c as f64 * self.dt * p;
            let need = (self.cycles - cyc2).max(0.0);
            let bound = e2 + completion_bound(&self.levels[i + 1..], need, self.window - time2);
            if let Some((b, _)) = &self.best {
                if bound - self.margin >= *b {
                    continue;
                }
            }
            self.counts[i] = c;
            self.descend(i + 1, steps_left - c, time2, cyc2, e2);
        }
        self.counts[i] = 0;
    }
}

/// Moves the coarse grid solution onto the exact cycle target: shrink a
/// segment when the grid overshot, grow or rebalance toward the top level
/// when it undershot. The result satisfies the constraints exactly, so its
/// energy upper-bounds the true optimum.
fn repair(
    durations: &mut [f64],
    levels: &[(f64, f64)],
    cycles: f64,
    window: f64,
) -> Result<(), ()> {
    let delivered: f64 = durations.iter().zip(levels).map(|(t, (f, _))| t * f).sum();
    let mut delta = cycles - delivered;
    if delta.abs() <= cycles * 1e-12 {
        return Ok(());
    }
    if delta < 0.0 {
        // Too many cycles: shorten segments, most expensive joules-per-cycle
        // first (time only shrinks, so feasibility is preserved).
        let mut order: Vec<usize> = (0..levels.len()).collect();
        order.sort_by(|&a, &b| {
            let ga = levels[a].1 / levels[a].0;
            let gb = levels[b].1 / levels[b].0;
            gb.partial_cmp(&ga).unwrap()
        });
        for i in order {
            let (f, _) = levels[i];
            if durations[i] <= 0.0 {
                continue;
            }
            let cut = ((-delta) / f).min(durations[i]);
            durations[i] -= cut;
            delta += cut * f;
            if delta >= -cycles * 1e-12 {
                return Ok(());
            }
        }
        return Err(());
    }
    // Too few cycles: extend the top level if the window allows...
    let top = levels.len() - 1;
    let total: f64 = durations.iter().sum();
    let (f_top, _) = levels[top];
    let grow = delta / f_top;
    if total + grow <= window * (1.0 + 1e-12) {
        durations[top] += grow;
        return Ok(());
    }
    // ...otherwise trade time from slower segments to the top level.
    for i in 0..top {
        let (f, _) = levels[i];
        if durations[i] <= 0.0 {
            continue;
        }
        let shift = (delta / (f_top - f)).min(durations[i]);
        durations[i] -= shift;
        durations[top] += shift;
        delta -= shift * (f_top - f);
        if delta <= cycles * 1e-12 {
            return Ok(());
        }
    }
    Err(())
}

/// Brute-force reference: assigns each of `config.steps` equal window slices
/// to a level, keeps compositions whose cycle total meets the target without
/// exceeding it by more than one top-frequency slice, scores them by energy,
/// and shrinks the winner onto the exact target. Branch-and-bound pruning
/// keeps the search tractable; the returned energy converges to the true
/// optimum from above as `steps` grows.
pub fn grid_optimal(
    req: &ReclaimRequest<f64>,
    proc: &ProcessorModel<f64>,
    config: &GridSearchConfig,
) -> Result<OracleSolution, OracleError> {
    if config.steps < 10 {
        return Err(OracleError::TooFewSteps(config.steps));
    }
    if proc.levels().len() > config.max_levels {
        return Err(OracleError::TooManyLevels {
            levels: proc.levels().len(),
            max: config.max_levels,
        });
    }
    req.check_feasible(proc)?;

    let idle = proc.idle_power();
    // Search on power above idle; the constant idle * window is added back at
    // the end, keeping the bound arithmetic simple.
    let levels: Vec<(f64, f64)> = proc
        .levels()
        .iter()
        .map(|l| (l.frequency, l.power - idle))
        .collect();
    let dt = req.window / config.steps as f64;
    let cyc_tol = dt * proc.f_max();
    let gamma_max = levels.iter().map(|(f, p)| p / f).fold(0.0, f64::max);
    let mut search = GridSearch {
        levels: &levels,
        dt,
        window: req.window,
        cycles: req.cycles,
        cyc_tol,
        margin: cyc_tol * gamma_max,
        counts: vec![0; levels.len()],
        best: None,
    };
    search.descend(0, config.steps, 0.0, 0.0, 0.0);
    let (_, durations) = search.best.ok_or(OracleError::ResolutionTooCoarse {
        steps: config.steps,
    })?;

    let segments: Vec<(FrequencyLevel<f64>, f64)> = proc
        .levels()
        .iter()
        .zip(&durations)
        .filter(|(_, d)| **d > 0.0)
        .map(|(l, d)| (*l, *d))
        .collect();
    let energy = window_energy(&segments, req.window, idle);
    Ok(OracleSolution {
        segments,
        energy_j: energy,
    })
}
