//! End-to-end acceptance gate. Each numbered criterion prints exactly one
//! PASS/FAIL line; the test fails if any criterion fails. Budgets are
//! wall-clock, so run with `--release`-grade optimization (the workspace test
//! profile already opts in).

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use dvfs_reclaim::experiment::{
    aggregate, default_plan, kendall_tau, records_to_csv, run_plan, SavingsRecord,
};
use dvfs_reclaim::num::rel_gap;
use dvfs_reclaim::oracle::{grid_optimal, pairwise_optimal, GridSearchConfig};
use dvfs_reclaim::power::{builtin_catalog, instantiate_cubic, task_energy};
use dvfs_reclaim::reclaim::{
    continuous_optimum_energy, ideal_frequency, mvfs_select, rdvfs_select, smfs_select,
};
use dvfs_reclaim::rng::SplitMix64;
use dvfs_reclaim::verify::run_verification;
use dvfs_reclaim::{CubicPowerModel, ProcessorModel, ReclaimRequest};

const LAMBDA: f64 = 1.367e-24;

struct Criterion {
    name: &'static str,
    problems: Vec<String>,
    elapsed: Duration,
}

impl Criterion {
    fn run(name: &'static str, body: impl FnOnce(&mut Vec<String>)) -> Self {
        let start = Instant::now();
        let mut problems = Vec::new();
        body(&mut problems);
        Self {
            name,
            problems,
            elapsed: start.elapsed(),
        }
    }

    fn line(&self) -> String {
        if self.problems.is_empty() {
            format!("PASS {} ({:.1?})", self.name, self.elapsed)
        } else {
            format!(
                "FAIL {} ({:.1?}): {}",
                self.name,
                self.elapsed,
                self.problems.join("; ")
            )
        }
    }
}

fn check(problems: &mut Vec<String>, ok: bool, msg: impl FnOnce() -> String) {
    if !ok {
        problems.push(msg());
    }
}

fn budget(problems: &mut Vec<String>, start: Instant, limit: Duration) {
    let used = start.elapsed();
    check(problems, used <= limit, || {
        format!("runtime {used:.1?} exceeds the {limit:.0?} budget")
    });
}

/// Golden single-task example: K = 7e6 cycles in a 130 ms window on a
/// two-level 50/60 MHz cubic processor with zero idle power.
fn criterion_golden_values() -> Criterion {
    Criterion::run("criterion 1: golden single-task values", |problems| {
        let start = Instant::now();
        let model = CubicPowerModel::new(LAMBDA).unwrap();
        let proc = instantiate_cubic(&[50e6, 60e6], model, 0.0).unwrap();
        let req = ReclaimRequest::new(7e6, 0.130).unwrap();

        let f_ideal = ideal_frequency(&req);
        check(problems, (f_ideal - 53.84e6).abs() <= 0.01e6, || {
            format!("f_ideal {f_ideal} not within 53.84 MHz +- 0.01 MHz")
        });

        let (_, e_cont) = continuous_optimum_energy(&req, model, 0.0);
        check(problems, rel_gap(e_cont, 27.73e-3) <= 1e-2, || {
            format!("continuous optimum {e_cont} J not within 1% of 27.73 mJ")
        });

        for (name, alloc) in [
            ("mvfs", mvfs_select(&req, &proc).unwrap()),
            ("smfs", smfs_select(&req, &proc, model).unwrap()),
        ] {
            let e = task_energy(&alloc, req.window, &proc).unwrap();
            check(problems, rel_gap(e, 28.43e-3) <= 1e-3, || {
                format!("{name} energy {e} J not within 0.1% of 28.43 mJ")
            });
            let segs = alloc.segments();
            let shape_ok = segs.len() == 2
                && segs[0].0.frequency == 50e6
                && (segs[0].1 - 0.080).abs() <= 1e-4
                && segs[1].0.frequency == 60e6
                && (segs[1].1 - 0.050).abs() <= 1e-4;
            check(problems, shape_ok, || {
                format!("{name} segments {segs:?} differ from (50 MHz, 80 ms), (60 MHz, 50 ms)")
            });
        }

        let rd = rdvfs_select(&req, &proc).unwrap();
        let segs = rd.segments();
        let shape_ok = segs.len() == 1
            && segs[0].0.frequency == 60e6
            && (segs[0].1 - 116.67e-3).abs() <= 0.01e-3;
        check(problems, shape_ok, || {
            format!("single-level pick {segs:?} differs from 60 MHz for 116.67 ms")
        });
        let e_rd = task_energy(&rd, req.window, &proc).unwrap();
        check(
            problems,
            (34.25e-3 * 0.99..=34.45e-3 * 1.01).contains(&e_rd),
            || format!("single-level energy {e_rd} J outside [34.25, 34.45] mJ +- 1%"),
        );

        budget(problems, start, Duration::from_secs(1));
    })
}

fn property_processors() -> Vec<ProcessorModel> {
    let model = CubicPowerModel::new(LAMBDA).unwrap();
    let mut procs = builtin_catalog::<f64>();
    procs.push(instantiate_cubic(&[50e6, 60e6], model, 0.0).unwrap());
    procs.push(instantiate_cubic(&[150e6, 400e6, 600e6, 800e6, 1000e6], model, 0.0).unwrap());
    procs
        .push(instantiate_cubic(&[500e6, 600e6, 700e6, 800e6, 900e6, 1000e6], model, 0.0).unwrap());
    procs
}

fn draw_request(rng: &mut SplitMix64, proc: &ProcessorModel) -> ReclaimRequest {
    let window = rng.uniform(1e-3, 0.2);
    let f_target = rng.uniform(0.3 * proc.f_min(), proc.f_max());
    ReclaimRequest::new(f_target * window, window).unwrap()
}

/// Property suite: the nine randomized checks, plus 1000 selector-vs-oracle
/// instances per processor and a steps = 1000 grid-vs-exact comparison.
fn criterion_property_suite() -> Criterion {
    Criterion::run("criterion 2: theorem property suite", |problems| {
        let start = Instant::now();

        let report = run_verification(20260823, 1000);
        check(problems, report.passed(), || {
            format!(
                "property checks failed:\n{}",
                report
                    .render()
                    .lines()
                    .filter(|l| l.starts_with("FAIL"))
                    .collect::<Vec<_>>()
                    .join("\n")
            )
        });

        // Selector vs exact pairwise enumeration, 1000 instances per
        // processor (catalog entries plus cubic instantiations).
        for proc in property_processors() {
            let mut rng = SplitMix64::new(0x5EED ^ proc.levels().len() as u64);
            let mut worst: f64 = 0.0;
            for _ in 0..1000 {
                let req = draw_request(&mut rng, &proc);
                let alloc = mvfs_select(&req, &proc).unwrap();
                let e = task_energy(&alloc, req.window, &proc).unwrap();
                let exact = pairwise_optimal(&req, &proc).unwrap().energy_j;
                worst = worst.max(rel_gap(e, exact));
            }
            check(problems, worst <= 1e-9, || {
                format!(
                    "selector strays {worst:.2e} from the enumeration oracle on {}",
                    proc.name()
                )
            });
        }

        // Fine-grained discretized search never beats the exact optimum and
        // lands within 1% of it.
        let config = GridSearchConfig {
            steps: 1000,
            max_levels: 6,
        };
        for proc in property_processors() {
            if proc.levels().len() > config.max_levels {
                continue;
            }
            let mut rng = SplitMix64::new(0x6123D ^ proc.levels().len() as u64);
            for i in 0..3 {
                let req = draw_request(&mut rng, &proc);
                let exact = pairwise_optimal(&req, &proc).unwrap().energy_j;
                let grid = grid_optimal(&req, &proc, &config).unwrap().energy_j;
                check(problems, grid >= exact * (1.0 - 1e-9), || {
                    format!(
                        "grid {grid} undercuts exact {exact} on {} case {i}",
                        proc.name()
                    )
                });
                check(problems, grid <= exact * 1.01, || {
                    format!(
                        "grid {grid} more than 1% above exact {exact} on {} case {i}",
                        proc.name()
                    )
                });
            }
        }

        budget(problems, start, Duration::from_secs(120));
    })
}

type CellKey = (String, usize, String, usize, usize);

fn cells(records: &[SavingsRecord]) -> BTreeMap<CellKey, BTreeMap<String, f64>> {
    let mut map: BTreeMap<CellKey, BTreeMap<String, f64>> = BTreeMap::new();
    for r in records {
        map.entry((
            r.kind.clone(),
            r.task_count,
            r.policy.clone(),
            r.processors,
            r.replication,
        ))
        .or_default()
        .insert(r.algorithm.clone(), r.energy_j);
    }
    map
}

fn mean_mvfs_savings(records: &[SavingsRecord], kind: &str) -> f64 {
    let group: Vec<f64> = records
        .iter()
        .filter(|r| r.kind == kind && r.algorithm == "mvfs")
        .map(|r| r.savings_pct)
        .collect();
    group.iter().sum::<f64>() / group.len() as f64
}

/// Savings bands and per-cell energy ordering on the default sweep.
fn criterion_savings_bands(records: &[SavingsRecord], sweep_elapsed: Duration) -> Criterion {
    Criterion::run("criterion 3: savings bands and ordering", |problems| {
        // Per-cell energy ordering: continuous <= mvfs <= mmf and
        // mvfs <= rdvfs, with a 1e-9 relative tie tolerance.
        let mut ordering_violations = 0usize;
        for (key, algs) in cells(records) {
            let e = |name: &str| algs[name];
            let tol = 1e-9 * e("mvfs").abs().max(1e-15);
            if e("continuous") > e("mvfs") + tol
                || e("mvfs") > e("mmf") + tol
                || e("mvfs") > e("rdvfs") + tol
            {
                ordering_violations += 1;
                if ordering_violations == 1 {
                    problems.push(format!(
                        "energy ordering violated in cell {key:?}: {algs:?}"
                    ));
                }
            }
        }
        check(problems, ordering_violations == 0, || {
            format!("{ordering_violations} cells violate the energy ordering")
        });

        // Mean savings ordering over the whole sweep.
        let mean = |alg: &str| {
            let group: Vec<f64> = records
                .iter()
                .filter(|r| r.algorithm == alg)
                .map(|r| r.savings_pct)
                .collect();
            group.iter().sum::<f64>() / group.len() as f64
        };
        let (cont, mv, mm, rd) = (mean("continuous"), mean("mvfs"), mean("mmf"), mean("rdvfs"));
        check(
            problems,
            cont >= mv - 1e-9 && mv >= mm - 1e-9 && mm >= rd - 1e-9,
            || format!("mean savings not ordered: continuous {cont} mvfs {mv} mmf {mm} rdvfs {rd}"),
        );

        let random = mean_mvfs_savings(records, "random");
        check(problems, (8.0..=22.0).contains(&random), || {
            format!("mean savings on random workloads {random:.2}% outside [8%, 22%]")
        });
        let lu = mean_mvfs_savings(records, "lu");
        check(problems, (15.0..=35.0).contains(&lu), || {
            format!("mean savings on LU workloads {lu:.2}% outside [15%, 35%]")
        });
        let gj = mean_mvfs_savings(records, "gauss_jordan");
        check(problems, gj < 2.0, || {
            format!("mean savings on Gauss-Jordan workloads {gj:.2}% not below 2%")
        });

        check(problems, sweep_elapsed <= Duration::from_secs(600), || {
            format!("sweep took {sweep_elapsed:.1?}, over the 10 min budget")
        });
    })
}

/// Savings grow with processor count on the LU sweep.
fn criterion_processor_trend(records: &[SavingsRecord]) -> Criterion {
    Criterion::run(
        "criterion 4: savings trend over processor count",
        |problems| {
            let mut by_procs: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            for r in records {
                if r.kind == "lu" && r.algorithm == "mvfs" {
                    by_procs
                        .entry(r.processors)
                        .or_default()
                        .push(r.savings_pct);
                }
            }
            let pairs: Vec<(f64, f64)> = by_procs
                .iter()
                .map(|(p, v)| (*p as f64, v.iter().sum::<f64>() / v.len() as f64))
                .collect();
            check(problems, pairs.len() >= 5, || {
                format!("expected 5 processor counts, saw {}", pairs.len())
            });
            let tau = kendall_tau(&pairs);
            check(problems, tau >= 0.6, || {
                format!("Kendall tau between processor count and mean savings is {tau:.2} < 0.6")
            });
        },
    )
}

/// Every schedule in the sweep validated, including after stretching each
/// task to its window (the sweep audits both per cell and records a failure
/// otherwise).
fn criterion_schedule_safety(records: &[SavingsRecord], failures: &[String]) -> Criterion {
    Criterion::run(
        "criterion 5: schedule validity and stretch safety",
        |problems| {
            check(problems, failures.is_empty(), || {
                format!(
                    "{} sweep cells failed audit: {}",
                    failures.len(),
                    failures[0]
                )
            });
            // 3 kinds x 5 sizes x 3 policies x 5 processor counts x 4 replications
            // cells, 5 algorithm rows each.
            check(problems, records.len() == 900 * 5, || {
                format!("expected 4500 records, saw {}", records.len())
            });
        },
    )
}

/// Re-running the sweep with the same master seed reproduces the CSV byte
/// for byte.
fn criterion_determinism(first_csv: &str) -> Criterion {
    Criterion::run("criterion 6: sweep determinism", |problems| {
        let rerun = run_plan(&default_plan()).unwrap();
        let second_csv = records_to_csv(&rerun.records).unwrap();
        check(problems, first_csv == second_csv, || {
            "re-running the default sweep changed the records CSV".to_string()
        });
    })
}

#[test]
fn acceptance() {
    let mut results = vec![criterion_golden_values(), criterion_property_suite()];

    let sweep_start = Instant::now();
    let outcome = run_plan(&default_plan()).unwrap();
    let sweep_elapsed = sweep_start.elapsed();
    let failure_messages: Vec<String> = outcome
        .failures
        .iter()
        .map(|f| {
            format!(
                "{}/{} tasks/{}/{} procs rep {}: {}",
                f.kind, f.task_count, f.policy, f.processors, f.replication, f.message
            )
        })
        .collect();
    let first_csv = records_to_csv(&outcome.records).unwrap();
    // Aggregate must be computable for every sweep (used by the CLI output).
    assert!(!aggregate(&outcome.records).is_empty());

    results.push(criterion_savings_bands(&outcome.records, sweep_elapsed));
    results.push(criterion_processor_trend(&outcome.records));
    results.push(criterion_schedule_safety(
        &outcome.records,
        &failure_messages,
    ));
    results.push(criterion_determinism(&first_csv));

    let mut all_ok = true;
    let mut lines = String::new();
    for r in &results {
        all_ok &= r.problems.is_empty();
        lines.push_str(&r.line());
        lines.push('\n');
    }
    println!("{lines}");
    assert!(all_ok, "\n{lines}");
}
