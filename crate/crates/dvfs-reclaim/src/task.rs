//! Task and DAG types plus the workload generators: random layered graphs,
//! Gauss-Jordan elimination DAGs and LU-decomposition DAGs.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("task {0} has non-positive cycle count")]
    InvalidCycles(u64),
    #[error("duplicate task id {0}")]
    DuplicateTaskId(u64),
    #[error("edge references unknown task id {0}")]
    UnknownTaskId(u64),
    #[error("self edge on task {0}")]
    SelfEdge(u64),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(u64, u64),
    #[error("edge {0} -> {1} has negative communication cost")]
    NegativeCommCost(u64, u64),
    #[error("graph contains a cycle")]
    Cyclic,
    #[error("invalid workload spec: {0}")]
    InvalidSpec(String),
}

/// A task requiring `cycles` clock ticks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: u64,
    pub cycles: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub pred: u64,
    pub succ: u64,
    #[serde(rename = "comm_cost_s")]
    pub comm_cost: f64,
}

/// Directed acyclic task graph with per-edge communication costs.
#[derive(Debug, Clone, Serialize)]
pub struct TaskGraph {
    tasks: Vec<Task>,
    edges: Vec<Edge>,
}

#[derive(Deserialize)]
struct RawTaskGraph {
    tasks: Vec<Task>,
    edges: Vec<Edge>,
}

impl<'de> Deserialize<'de> for TaskGraph {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let raw = RawTaskGraph::deserialize(deserializer)?;
        TaskGraph::new(raw.tasks, raw.edges).map_err(serde::de::Error::custom)
    }
}

impl TaskGraph {
    pub fn new(tasks: Vec<Task>, edges: Vec<Edge>) -> Result<Self, GraphError> {
        let mut ids = HashSet::with_capacity(tasks.len());
        for t in &tasks {
            if !(t.cycles.is_finite() && t.cycles > 0.0) {
                return Err(GraphError::InvalidCycles(t.id));
            }
            if !ids.insert(t.id) {
                return Err(GraphError::DuplicateTaskId(t.id));
            }
        }
        let mut seen = HashSet::with_capacity(edges.len());
        for e in &edges {
            if e.pred == e.succ {
                return Err(GraphError::SelfEdge(e.pred));
            }
            for id in [e.pred, e.succ] {
                if !ids.contains(&id) {
                    return Err(GraphError::UnknownTaskId(id));
                }
            }
            if !seen.insert((e.pred, e.succ)) {
                return Err(GraphError::DuplicateEdge(e.pred, e.succ));
            }
            if !(e.comm_cost.is_finite() && e.comm_cost >= 0.0) {
                return Err(GraphError::NegativeCommCost(e.pred, e.succ));
            }
        }
        let graph = Self { tasks, edges };
        graph.topological_order()?;
        Ok(graph)
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn task(&self, id: u64) -> Option<&Task> {
        self.tasks.iter().find(|t| t.id == id)
    }

    /// Predecessor list per task id, with communication costs.
    pub fn predecessors(&self) -> HashMap<u64, Vec<(u64, f64)>> {
        let mut map: HashMap<u64, Vec<(u64, f64)>> =
            self.tasks.iter().map(|t| (t.id, Vec::new())).collect();
        for e in &self.edges {
            map.get_mut(&e.succ).unwrap().push((e.pred, e.comm_cost));
        }
        map
    }

    /// Successor list per task id, with communication costs.
    pub fn successors(&self) -> HashMap<u64, Vec<(u64, f64)>> {
        let mut map: HashMap<u64, Vec<(u64, f64)>> =
            self.tasks.iter().map(|t| (t.id, Vec::new())).collect();
        for e in &self.edges {
            map.get_mut(&e.pred).unwrap().push((e.succ, e.comm_cost));
        }
        map
    }

    /// Kahn topological sort; `Err(Cyclic)` if no order exists. Ties are
    /// broken by ascending task id so the order is deterministic.
    pub fn topological_order(&self) -> Result<Vec<u64>, GraphError> {
        let mut indegree: HashMap<u64, usize> = self.tasks.iter().map(|t| (t.id, 0)).collect();
        for e in &self.edges {
            *indegree.get_mut(&e.succ).unwrap() += 1;
        }
        let succs = self.successors();
        let mut ready: Vec<u64> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(id, _)| *id)
            .collect();
        ready.sort_unstable();
        let mut order = Vec::with_capacity(self.tasks.len());
        while let Some(&id) = ready.first() {
            ready.remove(0);
            order.push(id);
            let mut unlocked = Vec::new();
            for (s, _) in &succs[&id] {
                let d = indegree.get_mut(s).unwrap();
                *d -= 1;
                if *d == 0 {
                    unlocked.push(*s);
                }
            }
            unlocked.sort_unstable();
            for u in unlocked {
                let pos = ready.partition_point(|&x| x < u);
                ready.insert(pos, u);
            }
        }
        if order.len() != self.tasks.len() {
            return Err(GraphError::Cyclic);
        }
        Ok(order)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadKind {
    Random,
    GaussJordan,
    Lu,
}

impl std::fmt::Display for WorkloadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            WorkloadKind::Random => "random",
            WorkloadKind::GaussJordan => "gauss_jordan",
            WorkloadKind::Lu => "lu",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for WorkloadKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "random" => Ok(WorkloadKind::Random),
            "gauss_jordan" | "gaussjordan" | "gj" => Ok(WorkloadKind::GaussJordan),
            "lu" => Ok(WorkloadKind::Lu),
            other => Err(format!(
                "unknown workload '{other}' (expected random, gauss_jordan or lu)"
            )),
        }
    }
}

fn default_cycle_range() -> (f64, f64) {
    (5e6, 1e7)
}

fn default_comm_range() -> (f64, f64) {
    (0.005, 0.020)
}

fn default_edge_probability() -> f64 {
    0.3
}

fn default_layers() -> usize {
    1
}

/// Parameters for one generated workload. Generation is a pure function of
/// the spec: identical specs give byte-identical graphs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    pub task_count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_cycle_range")]
    pub cycle_range: (f64, f64),
    #[serde(default = "default_comm_range")]
    pub comm_cost_range: (f64, f64),
    /// Layer count (random workloads only).
    #[serde(default = "default_layers")]
    pub layers: usize,
    /// Probability of each cross-layer edge (random workloads only).
    #[serde(default = "default_edge_probability")]
    pub edge_probability: f64,
}

impl WorkloadSpec {
    fn validate(&self) -> Result<(), GraphError> {
        let range_ok =
            |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi;
        if self.task_count < 1 {
            return Err(GraphError::InvalidSpec("task_count must be >= 1".into()));
        }
        if !range_ok(self.cycle_range) || self.cycle_range.0 <= 0.0 {
            return Err(GraphError::InvalidSpec(
                "cycle_range must be positive with lo <= hi".into(),
            ));
        }
        if !range_ok(self.comm_cost_range) {
            return Err(GraphError::InvalidSpec(
                "comm_cost_range must be nonnegative with lo <= hi".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.edge_probability) {
            return Err(GraphError::InvalidSpec(
                "edge_probability must be in [0, 1]".into(),
            ));
        }
        if self.layers < 1 {
            return Err(GraphError::InvalidSpec("layers must be >= 1".into()));
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<TaskGraph, GraphError> {
        self.validate()?;
        match self.kind {
            WorkloadKind::Random => generate_random(self),
            WorkloadKind::GaussJordan => {
                let levels = levels_for_task_count(self.task_count);
                Ok(generate_gauss_jordan(
                    levels,
                    self.cycle_range.0,
                    self.comm_cost_range.0,
                ))
            }
            WorkloadKind::Lu => {
                let levels = levels_for_task_count(self.task_count);
                Ok(generate_lu(
                    levels,
                    self.cycle_range.0,
                    self.comm_cost_range.0,
                ))
            }
        }
    }
}

/// Layered random DAG. Tasks 0..n are assigned to layers round-robin
/// (`layer(i) = i mod layers`); cycle counts are drawn first for all tasks in
/// id order, then edges layer by layer in ascending (succ, pred) id order,
/// each accepted edge immediately drawing its communication cost. A parentless
/// task outside the first layer gets one forced predecessor from the previous
/// layer. One SplitMix64 stream seeded with `spec.seed` drives everything.
pub fn generate_random(spec: &WorkloadSpec) -> Result<TaskGraph, GraphError> {
    spec.validate()?;
    if spec.kind != WorkloadKind::Random {
        return Err(GraphError::InvalidSpec("spec.kind must be random".into()));
    }
    let n = spec.task_count;
    let layers = spec.layers.min(n);
    let mut rng = SplitMix64::new(spec.seed);

    let tasks: Vec<Task> = (0..n as u64)
        .map(|id| Task {
            id,
            cycles: rng.uniform(spec.cycle_range.0, spec.cycle_range.1),
        })
        .collect();

    let layer_of = |id: usize| id % layers;
    let mut by_layer: Vec<Vec<u64>> = vec![Vec::new(); layers];
    for id in 0..n {
        by_layer[layer_of(id)].push(id as u64);
    }

    let mut edges = Vec::new();
    for v in 0..n {
        let lv = layer_of(v);
        if lv == 0 {
            continue;
        }
        let mut has_parent = false;
        for &u in &by_layer[lv - 1] {
            let r = rng.next_f64();
            if r < spec.edge_probability {
                let comm = rng.uniform(spec.comm_cost_range.0, spec.comm_cost_range.1);
                edges.push(Edge {
                    pred: u,
                    succ: v as u64,
                    comm_cost: comm,
                });
                has_parent = true;
            }
        }
        if !has_parent {
            let prev = &by_layer[lv - 1];
            let u = prev[rng.below(prev.len() as u64) as usize];
            let comm = rng.uniform(spec.comm_cost_range.0, spec.comm_cost_range.1);
            edges.push(Edge {
                pred: u,
                succ: v as u64,
                comm_cost: comm,
            });
        }
    }
    TaskGraph::new(tasks, edges)
}

/// Gauss-Jordan elimination DAG.
///
/// Tasks are indexed (k, j) for 1 <= k <= levels, k <= j <= levels; task
/// (k, j) is the state of row j after elimination step k. Step k+1 eliminates
/// with pivot row k+1, which was fully produced at step k, so (k+1, j) depends
/// on the row's previous state (k, j) and on the pivot source (k, k+1):
/// edges (k, j) -> (k+1, j) for j > k and (k, k+1) -> (k+1, j) for j > k+1.
/// Unlike LU decomposition there is no separate pivot task serializing
/// consecutive levels, so the critical path has length `levels` (LU's
/// alternating pivot/update chain has length 2*levels - 1) and update waves
/// pipeline tightly. Total task count = levels*(levels+1)/2; all tasks carry
/// `cycles` ticks, all edges `comm_cost` seconds.
pub fn generate_gauss_jordan(levels: usize, cycles: f64, comm_cost: f64) -> TaskGraph {
    assert!(levels >= 1);
    let mut id_of = HashMap::new();
    let mut tasks = Vec::new();
    for k in 1..=levels {
        for j in k..=levels {
            let id = tasks.len() as u64;
            id_of.insert((k, j), id);
            tasks.push(Task { id, cycles });
        }
    }
    let mut edges = Vec::new();
    for k in 1..levels {
        for j in (k + 1)..=levels {
            edges.push(Edge {
                pred: id_of[&(k, j)],
                succ: id_of[&(k + 1, j)],
                comm_cost,
            });
        }
        for j in (k + 2)..=levels {
            edges.push(Edge {
                pred: id_of[&(k, k + 1)],
                succ: id_of[&(k + 1, j)],
                comm_cost,
            });
        }
    }
    TaskGraph::new(tasks, edges).expect("construction rule is acyclic")
}

/// LU-decomposition DAG.
///
/// Pivot tasks p(k) for k <= levels and column tasks c(k, j) for k < j <=
/// levels. Edges: p(k) -> c(k, j) for j > k; c(k, k+1) -> p(k+1); and
/// c(k, j) -> c(k+1, j) for j > k+1.
pub fn generate_lu(levels: usize, cycles: f64, comm_cost: f64) -> TaskGraph {
    assert!(levels >= 1);
    let mut pivot = HashMap::new();
    let mut col = HashMap::new();
    let mut tasks = Vec::new();
    for k in 1..=levels {
        let id = tasks.len() as u64;
        pivot.insert(k, id);
        tasks.push(Task { id, cycles });
        for j in (k + 1)..=levels {
            let id = tasks.len() as u64;
            col.insert((k, j), id);
            tasks.push(Task { id, cycles });
        }
    }
    let mut edges = Vec::new();
    for k in 1..=levels {
        for j in (k + 1)..=levels {
            edges.push(Edge {
                pred: pivot[&k],
                succ: col[&(k, j)],
                comm_cost,
            });
        }
        if k < levels {
            edges.push(Edge {
                pred: col[&(k, k + 1)],
                succ: pivot[&(k + 1)],
                comm_cost,
            });
            for j in (k + 2)..=levels {
                edges.push(Edge {
                    pred: col[&(k, j)],
                    succ: col[&(k + 1, j)],
                    comm_cost,
                });
            }
        }
    }
    TaskGraph::new(tasks, edges).expect("construction rule is acyclic")
}

/// Largest L with L(L+1)/2 <= target (triangular task counts of the
/// Gauss-Jordan and LU shapes).
pub fn levels_for_task_count(target: usize) -> usize {
    let mut l = 1usize;
    while (l + 1) * (l + 2) / 2 <= target {
        l += 1;
    }
    l
}

/// Maps a target task count onto a workload spec: triangular levels for
/// Gauss-Jordan/LU (uniform 5e6-cycle tasks), `sqrt(n)` layers for random.
pub fn scale_to_task_count(kind: WorkloadKind, target_count: usize) -> WorkloadSpec {
    assert!(target_count >= 1);
    match kind {
        WorkloadKind::Random => WorkloadSpec {
            kind,
            task_count: target_count,
            seed: 0,
            cycle_range: default_cycle_range(),
            comm_cost_range: default_comm_range(),
            layers: ((target_count as f64).sqrt().round() as usize).max(1),
            edge_probability: default_edge_probability(),
        },
        WorkloadKind::GaussJordan | WorkloadKind::Lu => WorkloadSpec {
            kind,
            task_count: target_count,
            seed: 0,
            cycle_range: (5e6, 5e6),
            comm_cost_range: (0.0001, 0.0001),
            layers: 1,
            edge_probability: 0.0,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_spec(n: usize, layers: usize, p: f64, seed: u64) -> WorkloadSpec {
        WorkloadSpec {
            kind: WorkloadKind::Random,
            task_count: n,
            seed,
            cycle_range: (5e6, 1e7),
            comm_cost_range: (0.005, 0.020),
            layers,
            edge_probability: p,
        }
    }

    #[test]
    fn single_task_graph() {
        let g = generate_random(&random_spec(1, 1, 0.5, 7)).unwrap();
        assert_eq!(g.tasks().len(), 1);
        assert!(g.edges().is_empty());
    }

    #[test]
    fn random_graph_structure() {
        let spec = random_spec(100, 10, 0.3, 42);
        let g = generate_random(&spec).unwrap();
        assert_eq!(g.tasks().len(), 100);
        g.topological_order().unwrap();
        // Every node outside layer 0 has at least one predecessor.
        let preds = g.predecessors();
        for t in g.tasks() {
            if !(t.id as usize).is_multiple_of(10) {
                assert!(!preds[&t.id].is_empty(), "task {} is parentless", t.id);
            }
        }
        for t in g.tasks() {
            assert!((5e6..=1e7).contains(&t.cycles));
        }
        for e in g.edges() {
            assert!((0.005..=0.020).contains(&e.comm_cost));
        }
    }

    #[test]
    fn random_generation_is_deterministic() {
        let spec = random_spec(60, 6, 0.25, 4242);
        let a = generate_random(&spec).unwrap();
        let b = generate_random(&spec).unwrap();
        assert_eq!(a.tasks(), b.tasks());
        assert_eq!(a.edges(), b.edges());
        let c = generate_random(&random_spec(60, 6, 0.25, 4243)).unwrap();
        assert_ne!(a.edges(), c.edges());
    }

    #[test]
    fn rejects_bad_edge_probability() {
        let mut spec = random_spec(10, 2, 1.5, 1);
        assert!(generate_random(&spec).is_err());
        spec.edge_probability = -0.1;
        assert!(generate_random(&spec).is_err());
    }

    #[test]
    fn gauss_jordan_shape() {
        let g1 = generate_gauss_jordan(1, 5e6, 10.0);
        assert_eq!(g1.tasks().len(), 1);
        assert!(g1.edges().is_empty());

        let g3 = generate_gauss_jordan(3, 5e6, 10.0);
        assert_eq!(g3.tasks().len(), 6);
        // Ids are level-major: (1,1)=0, (1,2)=1, (1,3)=2, (2,2)=3, (2,3)=4,
        // (3,3)=5. Row edges (1,2)->(2,2), (1,3)->(2,3), (2,3)->(3,3) plus the
        // pivot fan-out (1,2)->(2,3).
        let mut pairs: Vec<(u64, u64)> = g3.edges().iter().map(|e| (e.pred, e.succ)).collect();
        pairs.sort_unstable();
        assert_eq!(pairs, vec![(1, 3), (1, 4), (2, 4), (4, 5)]);
        assert!(g3.edges().iter().all(|e| e.comm_cost == 10.0));
        assert!(g3.tasks().iter().all(|t| t.cycles == 5e6));
        g3.topological_order().unwrap();
    }

    #[test]
    fn gauss_jordan_counts_by_enumeration() {
        for levels in 1..=12usize {
            let g = generate_gauss_jordan(levels, 1e6, 0.0);
            assert_eq!(g.tasks().len(), levels * (levels + 1) / 2);
            // Per step k: (levels - k) row edges plus (levels - k - 1) pivot
            // edges, summing to (levels - 1)^2.
            assert_eq!(g.edges().len(), (levels - 1) * (levels - 1));
        }
    }

    #[test]
    fn lu_shape() {
        let g1 = generate_lu(1, 5e6, 1.0);
        assert_eq!(g1.tasks().len(), 1);
        assert!(g1.edges().is_empty());

        let g2 = generate_lu(2, 5e6, 1.0);
        // p1 (id 0), c12 (id 1), p2 (id 2); edges p1->c12, c12->p2.
        assert_eq!(g2.tasks().len(), 3);
        let mut pairs: Vec<(u64, u64)> = g2.edges().iter().map(|e| (e.pred, e.succ)).collect();
        pairs.sort_unstable();
        assert_eq!(pairs, vec![(0, 1), (1, 2)]);

        let g3 = generate_lu(3, 5e6, 1.0);
        assert_eq!(g3.tasks().len(), 6);
        g3.topological_order().unwrap();
    }

    #[test]
    fn lu_task_count_matches_triangular_formula() {
        for levels in 1..=12 {
            let g = generate_lu(levels, 1e6, 0.0);
            assert_eq!(g.tasks().len(), levels * (levels + 1) / 2);
        }
    }

    #[test]
    fn scale_to_task_count_triangular() {
        assert_eq!(levels_for_task_count(100), 13); // 13*14/2 = 91
        assert_eq!(levels_for_task_count(1), 1);
        assert_eq!(levels_for_task_count(500), 31); // 31*32/2 = 496
        let spec = scale_to_task_count(WorkloadKind::GaussJordan, 100);
        assert_eq!(spec.generate().unwrap().tasks().len(), 91);
        let spec = scale_to_task_count(WorkloadKind::Lu, 500);
        assert_eq!(spec.generate().unwrap().tasks().len(), 496);
        let spec = scale_to_task_count(WorkloadKind::Random, 100);
        assert_eq!(spec.layers, 10);
    }

    #[test]
    fn graph_validation_rejects_cycles_and_duplicates() {
        let tasks = vec![Task { id: 0, cycles: 1.0 }, Task { id: 1, cycles: 1.0 }];
        let cyclic = vec![
            Edge {
                pred: 0,
                succ: 1,
                comm_cost: 0.0,
            },
            Edge {
                pred: 1,
                succ: 0,
                comm_cost: 0.0,
            },
        ];
        assert!(matches!(
            TaskGraph::new(tasks.clone(), cyclic),
            Err(GraphError::Cyclic)
        ));
        let dup = vec![
            Edge {
                pred: 0,
                succ: 1,
                comm_cost: 0.0,
            },
            Edge {
                pred: 0,
                succ: 1,
                comm_cost: 1.0,
            },
        ];
        assert!(matches!(
            TaskGraph::new(tasks.clone(), dup),
            Err(GraphError::DuplicateEdge(0, 1))
        ));
        assert!(matches!(
            TaskGraph::new(
                tasks,
                vec![Edge {
                    pred: 0,
                    succ: 0,
                    comm_cost: 0.0
                }]
            ),
            Err(GraphError::SelfEdge(0))
        ));
    }

    #[test]
    fn graph_json_round_trip() {
        let g = generate_gauss_jordan(3, 5e6, 0.01);
        let json = serde_json::to_string(&g).unwrap();
        let back: TaskGraph = serde_json::from_str(&json).unwrap();
        assert_eq!(back.tasks(), g.tasks());
        assert_eq!(back.edges(), g.edges());
    }
}
