//! Randomized self-checks tying the closed forms, the selectors, the oracles
//! and the scheduler together. The CLI exposes them as `verify`; the test
//! suite reuses them as its integration gate.

use crate::num::rel_gap;
use crate::oracle::{grid_optimal, pairwise_optimal, GridSearchConfig};
use crate::power::{
    builtin_catalog, instantiate_cubic, task_energy, CubicPowerModel, ProcessorModel,
};
use crate::reclaim::{
    continuous_optimum_energy, ideal_frequency, mmf_select, mvfs_select, pair_allocation,
    pair_energy, rdvfs_select, smfs_energy_closed_form, smfs_select, FrequencyAllocation,
    ReclaimRequest,
};
use crate::rng::SplitMix64;
use crate::schedule::{
    extract_slack_windows, list_schedule, stretch_to_windows, validate_schedule, Policy,
};
use crate::task::{WorkloadKind, WorkloadSpec};

/// Outcome of one named check over many random cases.
#[derive(Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub cases: usize,
    pub failures: Vec<String>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    /// One line per check; failures carry the first offending case.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            if c.passed() {
                out.push_str(&format!("ok   {} ({} cases)\n", c.name, c.cases));
            } else {
                out.push_str(&format!(
                    "FAIL {} ({} of {} cases): {}\n",
                    c.name,
                    c.failures.len(),
                    c.cases,
                    c.failures[0]
                ));
            }
        }
        out
    }
}

const LAMBDA: f64 = 1.367e-24;

fn cubic_procs() -> Vec<ProcessorModel<f64>> {
    let model = CubicPowerModel::new(LAMBDA).unwrap();
    vec![
        instantiate_cubic(&[50e6, 60e6], model, 0.0).unwrap(),
        instantiate_cubic(&[150e6, 400e6, 600e6, 800e6, 1000e6], model, 0.0).unwrap(),
        instantiate_cubic(&[500e6, 600e6, 700e6, 800e6, 900e6, 1000e6], model, 0.0).unwrap(),
    ]
}

fn all_procs() -> Vec<ProcessorModel<f64>> {
    let mut v = builtin_catalog::<f64>();
    v.extend(cubic_procs());
    v
}

/// Draws a feasible (cycles, window) for the processor; the target K/T
/// ranges from well below f_min up to f_max.
fn draw_request(rng: &mut SplitMix64, proc: &ProcessorModel<f64>) -> ReclaimRequest<f64> {
    let window = rng.uniform(1e-3, 0.2);
    let f_target = rng.uniform(0.3 * proc.f_min(), proc.f_max());
    ReclaimRequest::new(f_target * window, window).unwrap()
}

fn energy(
    alloc: &FrequencyAllocation<f64>,
    req: &ReclaimRequest<f64>,
    proc: &ProcessorModel<f64>,
) -> f64 {
    task_energy(alloc, req.window, proc).unwrap()
}

type Check = fn(&mut SplitMix64, usize) -> CheckResult;

fn check_allocation_feasibility(rng: &mut SplitMix64, cases: usize) -> CheckResult {
    let procs = all_procs();
    let mut failures = Vec::new();
    for i in 0..cases {
        let proc = &procs[(rng.below(procs.len() as u64)) as usize];
        let req = draw_request(rng, proc);
        for (name, alloc) in [
            ("rdvfs", rdvfs_select(&req, proc)),
            ("mmf", mmf_select(&req, proc)),
            ("mvfs", mvfs_select(&req, proc)),
        ] {
            match alloc {
                Ok(a) if a.satisfies(&req) => {}
                Ok(a) => failures.push(format!(
                    "case {i} {name} on {}: allocation {:?} violates K={} T={}",
                    proc.name(),
                    a.segments(),
                    req.cycles,
                    req.window
                )),
                Err(e) => failures.push(format!("case {i} {name} on {}: {e}", proc.name())),
            }
        }
    }
    CheckResult {
        name: "allocations meet cycles within the window",
        cases,
        failures,
    }
}

fn check_pair_brackets_ideal(rng: &mut SplitMix64, cases: usize) -> CheckResult {
    let procs = all_procs();
    let mut failures = Vec::new();
    for i in 0..cases {
        let proc = &procs[(rng.below(procs.len() as u64)) as usize];
        let req = draw_request(rng, proc);
        let ideal = ideal_frequency(&req);
        let alloc = match mvfs_select(&req, proc) {
            Ok(a) => a,
            Err(e) => {
                failures.push(format!("case {i}: {e}"));
                continue;
            }
        };
        if alloc.segments().len() == 2 {
            let lo = alloc.segments()[0].0.frequency;
            let hi = alloc.segments()[1].0.frequency;
            if !(lo <= ideal * (1.0 + 1e-9) && ideal <= hi * (1.0 + 1e-9)) {
                failures.push(format!(
                    "case {i} on {}: pair ({lo}, {hi}) does not bracket {ideal}",
                    proc.name()
                ));
            }
        }
    }
    CheckResult {
        name: "two-level selections bracket the ideal frequency",
        cases,
        failures,
    }
}

fn check_dominance(rng: &mut SplitMix64, cases: usize) -> CheckResult {
    let procs = all_procs();
    let mut failures = Vec::new();
    for i in 0..cases {
        let proc = &procs[(rng.below(procs.len() as u64)) as usize];
        let req = draw_request(rng, proc);
        let mv = mvfs_select(&req, proc).map(|a| energy(&a, &req, proc));
        let rd = rdvfs_select(&req, proc).map(|a| energy(&a, &req, proc));
        let mm = mmf_select(&req, proc).map(|a| energy(&a, &req, proc));
        let (Ok(mv), Ok(rd), Ok(mm)) = (mv, rd, mm) else {
            failures.push(format!("case {i} on {}: selector failed", proc.name()));
            continue;
        };
        let tol = 1e-9 * mv.max(1e-15);
        if mv > rd + tol || mv > mm + tol {
            failures.push(format!(
                "case {i} on {}: mvfs {mv} above rdvfs {rd} or mmf {mm}",
                proc.name()
            ));
        }
    }
    CheckResult {
        name: "best selection never loses to either baseline",
        cases,
        failures,
    }
}

fn check_cubic_consistency(rng: &mut SplitMix64, cases: usize) -> CheckResult {
    let procs = cubic_procs();
    let model = CubicPowerModel::new(LAMBDA).unwrap();
    let mut failures = Vec::new();
    for i in 0..cases {
        let proc = &procs[(rng.below(procs.len() as u64)) as usize];
        let req = draw_request(rng, proc);
        let sm = match smfs_select(&req, proc, model) {
            Ok(a) => a,
            Err(e) => {
                failures.push(format!("case {i}: smfs failed: {e}"));
                continue;
            }
        };
        let mv = mvfs_select(&req, proc).unwrap();
        let e_sm = energy(&sm, &req, proc);
        let e_mv = energy(&mv, &req, proc);
        if rel_gap(e_sm, e_mv) > 1e-9 {
            failures.push(format!(
                "case {i} on {}: adjacent-pair energy {e_sm} != full search {e_mv}",
                proc.name()
            ));
            continue;
        }
        // Continuous relaxation lower-bounds both.
        let (_, e_cont) = continuous_optimum_energy(&req, model, 0.0);
        if e_cont > e_mv * (1.0 + 1e-9) {
            failures.push(format!(
                "case {i} on {}: continuous bound {e_cont} above discrete {e_mv}",
                proc.name()
            ));
            continue;
        }
        // Closed form vs general pair formula vs direct accounting.
        if sm.segments().len() == 2 {
            let lo = sm.segments()[0].0;
            let hi = sm.segments()[1].0;
            let via_closed =
                smfs_energy_closed_form(&req, lo.frequency, hi.frequency, model).unwrap();
            let via_pair = pair_energy(&req, &lo, &hi, proc).unwrap();
            let via_direct = energy(&pair_allocation(&req, &lo, &hi).unwrap(), &req, proc);
            if rel_gap(via_closed, via_pair) > 1e-9 || rel_gap(via_pair, via_direct) > 1e-9 {
                failures.push(format!(
                    "case {i}: formulas disagree: {via_closed} / {via_pair} / {via_direct}"
                ));
            }
        }
    }
    CheckResult {
        name: "cubic closed forms agree with direct accounting",
        cases,
        failures,
    }
}

fn check_adjacency_on_cubic(rng: &mut SplitMix64, cases: usize) -> CheckResult {
    let procs = cubic_procs();
    let mut failures = Vec::new();
    for i in 0..cases {
        let proc = &procs[(rng.below(procs.len() as u64)) as usize];
        let req = draw_request(rng, proc);
        let mv = mvfs_select(&req, proc).unwrap();
        if mv.segments().len() == 2 {
            let lo = mv.segments()[0].0.frequency;
            let hi = mv.segments()[1].0.frequency;
            let pos = proc.levels().iter().position(|l| l.frequency == lo);
            let adjacent = pos
                .map(|p| p + 1 < proc.levels().len() && proc.levels()[p + 1].frequency == hi)
                .unwrap_or(false);
            if !adjacent {
                failures.push(format!(
                    "case {i} on {}: optimal pair ({lo}, {hi}) is not adjacent",
                    proc.name()
                ));
            }
        }
    }
    CheckResult {
        name: "optimal pairs are adjacent under cubic power",
        cases,
        failures,
    }
}

fn check_pairwise_oracle_agreement(rng: &mut SplitMix64, cases: usize) -> CheckResult {
    let procs = all_procs();
    let mut failures = Vec::new();
    for i in 0..cases {
        let proc = &procs[(rng.below(procs.len() as u64)) as usize];
        let req = draw_request(rng, proc);
        let mv = energy(&mvfs_select(&req, proc).unwrap(), &req, proc);
        let oracle = pairwise_optimal(&req, proc).unwrap().energy_j;
        if rel_gap(mv, oracle) > 1e-9 {
            failures.push(format!(
                "case {i} on {} (K={}, T={}): selector {mv} != oracle {oracle}",
                proc.name(),
                req.cycles,
                req.window
            ));
        }
    }
    CheckResult {
        name: "selector matches the exact enumeration oracle",
        cases,
        failures,
    }
}

fn check_grid_oracle_bound(rng: &mut SplitMix64, cases: usize) -> CheckResult {
    let procs = all_procs();
    let config = GridSearchConfig {
        steps: 150,
        max_levels: 8,
    };
    let mut failures = Vec::new();
    for i in 0..cases {
        let proc = &procs[(rng.below(procs.len() as u64)) as usize];
        let req = draw_request(rng, proc);
        let exact = pairwise_optimal(&req, proc).unwrap().energy_j;
        let grid = match grid_optimal(&req, proc, &config) {
            Ok(s) => s.energy_j,
            Err(e) => {
                failures.push(format!("case {i} on {}: {e}", proc.name()));
                continue;
            }
        };
        if grid < exact * (1.0 - 1e-9) {
            failures.push(format!(
                "case {i} on {}: grid {grid} undercuts the exact optimum {exact}",
                proc.name()
            ));
        } else if rel_gap(grid, exact) > 5e-2 {
            failures.push(format!(
                "case {i} on {}: grid {grid} too far from exact {exact}",
                proc.name()
            ));
        }
    }
    CheckResult {
        name: "discretized search stays above and near the exact optimum",
        cases,
        failures,
    }
}

fn check_schedule_safety(rng: &mut SplitMix64, cases: usize) -> CheckResult {
    let procs = builtin_catalog::<f64>();
    let kinds = [
        WorkloadKind::Random,
        WorkloadKind::GaussJordan,
        WorkloadKind::Lu,
    ];
    let policies = [Policy::Fifo, Policy::Lpt, Policy::Spt];
    let mut failures = Vec::new();
    for i in 0..cases {
        let kind = kinds[(rng.below(3)) as usize];
        let spec = WorkloadSpec {
            kind,
            task_count: 20 + rng.below(60) as usize,
            seed: rng.next_u64(),
            cycle_range: (5e6, 1e7),
            comm_cost_range: (0.0, 0.01),
            layers: 2 + rng.below(6) as usize,
            edge_probability: rng.uniform(0.1, 0.6),
        };
        let graph = spec.generate().unwrap();
        let proc = &procs[(rng.below(procs.len() as u64)) as usize];
        let policy = policies[(rng.below(3)) as usize];
        let processors = 1 + rng.below(8) as usize;
        let schedule = list_schedule(&graph, processors, policy, proc).unwrap();
        let violations = validate_schedule(&schedule, &graph);
        if !violations.is_empty() {
            failures.push(format!("case {i}: schedule invalid: {}", violations[0]));
            continue;
        }
        let windowed = extract_slack_windows(&schedule, &graph).unwrap();
        let stretched = stretch_to_windows(&windowed);
        let violations = validate_schedule(&stretched, &graph);
        if !violations.is_empty() {
            failures.push(format!(
                "case {i}: stretching tasks to their windows broke the schedule: {}",
                violations[0]
            ));
        }
    }
    CheckResult {
        name: "schedules stay valid when every task fills its window",
        cases,
        failures,
    }
}

fn check_generation_determinism(rng: &mut SplitMix64, cases: usize) -> CheckResult {
    let mut failures = Vec::new();
    for i in 0..cases {
        let spec = WorkloadSpec {
            kind: [
                WorkloadKind::Random,
                WorkloadKind::GaussJordan,
                WorkloadKind::Lu,
            ][(rng.below(3)) as usize],
            task_count: 10 + rng.below(90) as usize,
            seed: rng.next_u64(),
            cycle_range: (5e6, 1e7),
            comm_cost_range: (0.005, 0.02),
            layers: 1 + rng.below(9) as usize,
            edge_probability: rng.uniform(0.0, 1.0),
        };
        let a = spec.generate().unwrap();
        let b = spec.generate().unwrap();
        if a.tasks() != b.tasks() || a.edges() != b.edges() {
            failures.push(format!(
                "case {i}: spec {spec:?} generated two different graphs"
            ));
        }
    }
    CheckResult {
        name: "workload generation is a pure function of its spec",
        cases,
        failures,
    }
}

/// Runs every check with `cases` random cases each, all seeded from `seed`.
pub fn run_verification(seed: u64, cases: usize) -> VerifyReport {
    let checks: &[Check] = &[
        check_allocation_feasibility,
        check_pair_brackets_ideal,
        check_dominance,
        check_cubic_consistency,
        check_adjacency_on_cubic,
        check_pairwise_oracle_agreement,
        check_grid_oracle_bound,
        check_schedule_safety,
        check_generation_determinism,
    ];
    let results = checks
        .iter()
        .enumerate()
        .map(|(i, check)| {
            let mut rng = SplitMix64::new(seed ^ ((i as u64 + 1) * 0x9E37_79B9));
            // The grid oracle is the slow path; cap its case count.
            let n = if i == 6 { cases.min(12) } else { cases };
            check(&mut rng, n)
        })
        .collect();
    VerifyReport { checks: results }
}
