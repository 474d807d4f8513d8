//! The min-max weight-learning program and its exact solver.
//!
//! ```text
//! min Q
//! s.t.  sum_i x[t,i] = 1                        for every task t
//!       z[t] >= net[t,i](w) - M (1 - x[t,i])    for every t, i
//!       z[t] <= net[t,i](w) + M (1 - x[t,i])    for every t, i
//!       z[t] <= Q                               for every t
//!       x binary, w free
//! ```
//!
//! `net[t,i](w)` is the scoring module's affine form. Branch-and-bound runs
//! depth-first over the assignment binaries with LP relaxations from the
//! dense simplex.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::simplex::{LinearProgram, LpStatus, Relation};
use crate::domain::{Ablation, AgentId, ScoringWeights, TaskId, DEFAULT_SCORE_RANGE};
use crate::error::{Error, Result};
use crate::scoring::{AffineNet, FeatureRow};

pub const DEFAULT_BIG_M: f64 = 1e4;
/// Required ratio between big-M and the largest unit-weight |C - V| bound.
pub const BIG_M_COVERAGE: f64 = 100.0;
const INTEGRALITY_TOL: f64 = 1e-6;
const PRUNE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningInstance {
    pub tasks: Vec<TaskId>,
    pub agents: Vec<AgentId>,
    pub judges: Vec<AgentId>,
    /// `rows[t][i]`: features of agent `agents[i]` on task `tasks[t]`.
    pub rows: Vec<Vec<FeatureRow>>,
    pub big_m: f64,
    /// Optional box `|w_k| <= bound` on every weight.
    #[serde(default)]
    pub weight_bound: Option<f64>,
    #[serde(default)]
    pub ablation_mask: BTreeSet<Ablation>,
    #[serde(default = "default_range")]
    pub score_range: (i32, i32),
}

fn default_range() -> (i32, i32) {
    DEFAULT_SCORE_RANGE
}

impl TuningInstance {
    /// Builds an instance from loose `(task, row)` pairs, checking that every
    /// task has a row for every agent. Judges default to the agents.
    pub fn from_rows(
        agents: Vec<AgentId>,
        judges: Option<Vec<AgentId>>,
        rows: impl IntoIterator<Item = (TaskId, FeatureRow)>,
    ) -> Result<Self> {
        let mut by_task: BTreeMap<TaskId, BTreeMap<AgentId, FeatureRow>> = BTreeMap::new();
        let mut order: Vec<TaskId> = Vec::new();
        for (task, row) in rows {
            if !agents.contains(&row.agent_id) {
                return Err(Error::UnknownAgent(row.agent_id));
            }
            let entry = by_task.entry(task.clone()).or_insert_with(|| {
                order.push(task.clone());
                BTreeMap::new()
            });
            if entry.insert(row.agent_id.clone(), row).is_some() {
                return Err(Error::Invalid(format!("duplicate feature row for task {task}")));
            }
        }
        let mut grid = Vec::with_capacity(order.len());
        for t in &order {
            let per_agent = &by_task[t];
            let row = agents
                .iter()
                .map(|a| {
                    per_agent.get(a).cloned().ok_or_else(|| {
                        Error::Invalid(format!("task {t} has no feature row for agent {a}"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            grid.push(row);
        }
        Ok(TuningInstance {
            tasks: order,
            judges: judges.unwrap_or_else(|| agents.clone()),
            agents,
            rows: grid,
            big_m: DEFAULT_BIG_M,
            weight_bound: None,
            ablation_mask: BTreeSet::new(),
            score_range: DEFAULT_SCORE_RANGE,
        })
    }

    pub fn num_weights(&self) -> usize {
        2 + self.judges.len()
    }

    /// Weight template carrying this instance's mask and score range.
    pub(crate) fn template(&self) -> ScoringWeights {
        let mut w = ScoringWeights::zero(self.judges.iter().cloned());
        w.ablation_mask = self.ablation_mask.clone();
        w.score_range = self.score_range;
        w
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() || self.agents.is_empty() {
            return Err(Error::Invalid("tuning instance needs tasks and agents".into()));
        }
        if self.rows.len() != self.tasks.len()
            || self.rows.iter().any(|r| r.len() != self.agents.len())
        {
            return Err(Error::Invalid("feature grid does not match tasks x agents".into()));
        }
        for r in &self.rows {
            for (row, agent) in r.iter().zip(&self.agents) {
                if row.agent_id != *agent {
                    return Err(Error::Invalid(format!(
                        "feature row for {} sits in the column of {agent}",
                        row.agent_id
                    )));
                }
            }
        }
        if let Some(b) = self.weight_bound {
            if !(b > 0.0) {
                return Err(Error::Invalid(format!("weight bound must be positive, got {b}")));
            }
        }
        if !(self.big_m > 0.0) || !self.big_m.is_finite() {
            return Err(Error::Invalid(format!("big-M must be positive, got {}", self.big_m)));
        }
        Ok(())
    }

    /// Affine net forms, `[task][agent]`.
    pub fn forms(&self) -> Result<Vec<Vec<AffineNet>>> {
        let template = self.template();
        self.rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|row| AffineNet::of(row, &self.judges, &template))
                    .collect()
            })
            .collect()
    }

    /// Rejects big-M values below 100x the largest unit-weight |C - V| bound.
    pub fn check_big_m(&self, forms: &[Vec<AffineNet>]) -> Result<()> {
        let mut worst: Option<(f64, usize, usize)> = None;
        for (t, r) in forms.iter().enumerate() {
            for (i, f) in r.iter().enumerate() {
                let b = f.unit_weight_bound();
                if worst.is_none_or(|(w, _, _)| b > w) {
                    worst = Some((b, t, i));
                }
            }
        }
        if let Some((bound, t, i)) = worst {
            let required = BIG_M_COVERAGE * bound;
            if self.big_m < required {
                return Err(Error::BigMTooSmall {
                    big_m: self.big_m,
                    required,
                    bound,
                    task: self.tasks[t].clone(),
                    agent: self.agents[i].clone(),
                });
            }
        }
        Ok(())
    }
}

/// Variable layout of the model: `w`, then `z`, then `Q`, then `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_weights: usize,
    pub n_tasks: usize,
    pub n_agents: usize,
}

impl Layout {
    pub fn w(&self, k: usize) -> usize {
        k
    }
    pub fn z(&self, t: usize) -> usize {
        self.n_weights + t
    }
    pub fn q(&self) -> usize {
        self.n_weights + self.n_tasks
    }
    pub fn x(&self, t: usize, i: usize) -> usize {
        self.q() + 1 + t * self.n_agents + i
    }
    pub fn num_vars(&self) -> usize {
        self.q() + 1 + self.n_tasks * self.n_agents
    }
}

#[derive(Debug, Clone)]
pub struct MilpModel {
    pub lp: LinearProgram,
    pub layout: Layout,
    /// Binary variable indices, task-major then agent.
    pub binaries: Vec<usize>,
    pub functional_constraints: usize,
    pub(crate) forms: Vec<Vec<AffineNet>>,
    pub(crate) instance: TuningInstance,
}

impl MilpModel {
    pub fn num_binaries(&self) -> usize {
        self.binaries.len()
    }

    pub fn num_continuous(&self) -> usize {
        self.layout.num_vars() - self.binaries.len()
    }
}

pub fn build_milp(instance: &TuningInstance) -> Result<MilpModel> {
    instance.validate()?;
    let forms = instance.forms()?;
    instance.check_big_m(&forms)?;

    let layout = Layout {
        n_weights: instance.num_weights(),
        n_tasks: instance.tasks.len(),
        n_agents: instance.agents.len(),
    };
    let m = instance.big_m;
    let mut lp = LinearProgram::new(layout.num_vars());
    lp.objective[layout.q()] = 1.0;
    if let Some(b) = instance.weight_bound {
        for k in 0..layout.n_weights {
            lp.set_bounds(layout.w(k), -b, b);
        }
    }
    let mut binaries = Vec::with_capacity(layout.n_tasks * layout.n_agents);
    for t in 0..layout.n_tasks {
        for i in 0..layout.n_agents {
            let x = layout.x(t, i);
            lp.set_bounds(x, 0.0, 1.0);
            binaries.push(x);
        }
    }

    for t in 0..layout.n_tasks {
        lp.add(
            (0..layout.n_agents).map(|i| (layout.x(t, i), 1.0)).collect(),
            Relation::Eq,
            1.0,
        );
    }
    for t in 0..layout.n_tasks {
        for i in 0..layout.n_agents {
            let net: Vec<(usize, f64)> = forms[t][i]
                .coefficients()
                .enumerate()
                .filter(|(_, c)| *c != 0.0)
                .map(|(k, c)| (layout.w(k), c))
                .collect();
            // net(w) - z + M x <= M
            let mut lower = net.clone();
            lower.push((layout.z(t), -1.0));
            lower.push((layout.x(t, i), m));
            lp.add(lower, Relation::Le, m);
            // z - net(w) + M x <= M
            let mut upper: Vec<(usize, f64)> = net.iter().map(|&(k, c)| (k, -c)).collect();
            upper.push((layout.z(t), 1.0));
            upper.push((layout.x(t, i), m));
            lp.add(upper, Relation::Le, m);
        }
    }
    for t in 0..layout.n_tasks {
        lp.add(vec![(layout.z(t), 1.0), (layout.q(), -1.0)], Relation::Le, 0.0);
    }
    let functional_constraints = lp.constraints.len();
    Ok(MilpModel {
        lp,
        layout,
        binaries,
        functional_constraints,
        forms,
        instance: instance.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub nodes: u64,
    pub lp_iterations: u64,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningSolution {
    pub weights: ScoringWeights,
    /// Kept for the solver report only; routing reuses the weights alone.
    pub assignments: BTreeMap<TaskId, AgentId>,
    /// Worst-case cost-minus-value `Q`.
    pub objective: f64,
    /// `z[t]`: cost-minus-value of the chosen agent per task.
    pub chosen_nets: BTreeMap<TaskId, f64>,
    /// False when a node limit cut the search short.
    pub optimal: bool,
    pub stats: SolverStats,
}

impl TuningSolution {
    /// Equality that ignores wall-clock timing.
    pub fn same_result(&self, other: &TuningSolution) -> bool {
        self.weights == other.weights
            && self.assignments == other.assignments
            && self.objective.to_bits() == other.objective.to_bits()
            && self.chosen_nets == other.chosen_nets
            && self.optimal == other.optimal
            && self.stats.nodes == other.stats.nodes
            && self.stats.lp_iterations == other.stats.lp_iterations
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveOptions {
    pub node_limit: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { node_limit: 2_000_000 }
    }
}

struct Incumbent {
    objective: f64,
    values: Vec<f64>,
}

/// Depth-first branch-and-bound over the assignment binaries.
///
/// Branches on the most fractional binary (ties by lowest task, then lowest
/// agent), exploring the `x = 1` child first. The all-zero weight vector is
/// feasible for every assignment and seeds the incumbent at `Q = 0`.
pub fn solve_exact(model: &MilpModel, options: SolveOptions) -> Result<TuningSolution> {
    let start = Instant::now();
    let layout = model.layout;
    let mut values = vec![0.0; layout.num_vars()];
    for t in 0..layout.n_tasks {
        values[layout.x(t, 0)] = 1.0;
    }
    let mut incumbent = Incumbent { objective: 0.0, values };

    let mut stack: Vec<Vec<(usize, f64)>> = vec![Vec::new()];
    let mut nodes = 0u64;
    let mut lp_iterations = 0u64;
    let mut optimal = true;
    let mut lp = model.lp.clone();

    while let Some(fixings) = stack.pop() {
        if nodes >= options.node_limit {
            optimal = false;
            break;
        }
        nodes += 1;
        for &b in &model.binaries {
            lp.set_bounds(b, 0.0, 1.0);
        }
        for &(var, v) in &fixings {
            lp.set_bounds(var, v, v);
        }
        let sol = lp.solve()?;
        lp_iterations += sol.iterations;
        match sol.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => return Err(Error::Unbounded),
            LpStatus::Optimal => {}
        }
        if sol.objective >= incumbent.objective - PRUNE_TOL {
            continue;
        }
        let mut branch: Option<(usize, f64)> = None;
        for &b in &model.binaries {
            let v = sol.x[b];
            let frac = v.min(1.0 - v);
            if frac > INTEGRALITY_TOL && branch.is_none_or(|(_, f)| frac > f) {
                branch = Some((b, frac));
            }
        }
        match branch {
            None => {
                incumbent = Incumbent {
                    objective: sol.objective,
                    values: sol.x,
                };
            }
            Some((var, _)) => {
                let mut down = fixings.clone();
                down.push((var, 0.0));
                let mut up = fixings;
                up.push((var, 1.0));
                stack.push(down);
                stack.push(up);
            }
        }
    }

    let stats = SolverStats {
        nodes,
        lp_iterations,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok(solution_from_values(model, &incumbent.values, incumbent.objective, optimal, stats))
}

fn solution_from_values(
    model: &MilpModel,
    values: &[f64],
    objective: f64,
    optimal: bool,
    stats: SolverStats,
) -> TuningSolution {
    let layout = model.layout;
    let inst = &model.instance;
    let flat: Vec<f64> = (0..layout.n_weights).map(|k| values[layout.w(k)]).collect();
    let mut assignments = BTreeMap::new();
    let mut chosen_nets = BTreeMap::new();
    for (t, task) in inst.tasks.iter().enumerate() {
        let i = (0..layout.n_agents)
            .max_by(|&a, &b| {
                values[layout.x(t, a)]
                    .total_cmp(&values[layout.x(t, b)])
                    .then(b.cmp(&a))
            })
            .unwrap_or(0);
        assignments.insert(task.clone(), inst.agents[i].clone());
        chosen_nets.insert(task.clone(), model.forms[t][i].eval(&flat));
    }
    TuningSolution {
        weights: weights_from_flat(inst, &flat),
        assignments,
        objective,
        chosen_nets,
        optimal,
        stats,
    }
}

pub(crate) fn weights_from_flat(inst: &TuningInstance, flat: &[f64]) -> ScoringWeights {
    let mut w = inst.template();
    w.w_c = flat[0];
    w.w_h = flat[1];
    for (j, judge) in inst.judges.iter().enumerate() {
        w.w_judge.insert(judge.clone(), flat[2 + j]);
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn row(agent: &str, price: f64, tokens: u64, h: f64, scores: &[(&str, i32)]) -> FeatureRow {
        FeatureRow {
            agent_id: agent.into(),
            price,
            token_count: tokens,
            entropy: h,
            jury_scores: scores.iter().map(|(j, s)| (j.to_string(), *s)).collect(),
        }
    }

    fn two_by_two() -> TuningInstance {
        let rows = vec![
            ("t1".to_string(), row("a", 0.05, 20, 0.6, &[("a", 3), ("b", 2)])),
            ("t1".to_string(), row("b", 0.36, 30, 0.4, &[("a", 4), ("b", 5)])),
            ("t2".to_string(), row("a", 0.05, 10, 0.2, &[("a", 1), ("b", 2)])),
            ("t2".to_string(), row("b", 0.36, 25, 0.7, &[("a", 5), ("b", 4)])),
        ];
        let mut inst = TuningInstance::from_rows(vec!["a".into(), "b".into()], None, rows).unwrap();
        inst.weight_bound = Some(10.0);
        inst
    }

    #[test]
    fn two_by_two_counts() {
        let m = build_milp(&two_by_two()).unwrap();
        assert_eq!(m.num_binaries(), 4);
        assert_eq!(m.num_continuous(), 3 + 4); // z1, z2, Q + (2 + |A|) weights
        assert_eq!(m.functional_constraints, 2 + 8 + 2);
    }

    #[test]
    fn single_task_single_agent_structure() {
        let rows = vec![("t".to_string(), row("a", 0.1, 10, 0.5, &[("a", 3)]))];
        let inst = TuningInstance::from_rows(vec!["a".into()], None, rows).unwrap();
        let m = build_milp(&inst).unwrap();
        assert_eq!(m.num_binaries(), 1);
        assert_eq!(m.functional_constraints, 1 + 2 + 1);
        // free weights: Q tracks net(w), which can be driven down without limit
        assert!(matches!(solve_exact(&m, SolveOptions::default()), Err(Error::Unbounded)));

        let mut boxed = inst.clone();
        boxed.weight_bound = Some(1.0);
        let s = solve_exact(&build_milp(&boxed).unwrap(), SolveOptions::default()).unwrap();
        // min over |w| <= 1 of 1.0 w_c - 0.5 w_h - 3 w_a = -4.5
        assert!((s.objective + 4.5).abs() < 1e-9, "{}", s.objective);
        assert_eq!(s.assignments["t"], "a");
    }

    #[test]
    fn zero_features_give_zero_objective() {
        let zero = |a: &str| row(a, 0.0, 1, 0.0, &[("a", 0), ("b", 0)]);
        let rows = vec![
            ("t1".to_string(), zero("a")),
            ("t1".to_string(), zero("b")),
            ("t2".to_string(), zero("a")),
            ("t2".to_string(), zero("b")),
        ];
        // no weight bound: every net is identically zero, so Q = 0 is optimal
        let inst = TuningInstance::from_rows(vec!["a".into(), "b".into()], None, rows).unwrap();
        let s = solve_exact(&build_milp(&inst).unwrap(), SolveOptions::default()).unwrap();
        assert_eq!(s.objective, 0.0);
        assert!(s.chosen_nets.values().all(|z| *z == 0.0));
    }

    #[test]
    fn big_m_guard_names_offender() {
        let rows = vec![
            ("t1".to_string(), row("a", 0.36, 1000, 0.5, &[("a", 5)])),
        ];
        let inst = TuningInstance::from_rows(vec!["a".into()], None, rows).unwrap();
        match build_milp(&inst) {
            Err(Error::BigMTooSmall { task, agent, required, .. }) => {
                assert_eq!(task, "t1");
                assert_eq!(agent, "a");
                assert!((required - 100.0 * (360.0 + 0.5 + 5.0)).abs() < 1e-6);
            }
            other => panic!("expected big-M error, got {other:?}"),
        }
    }

    #[test]
    fn incomplete_grid_rejected() {
        let rows = vec![
            ("t1".to_string(), row("a", 0.1, 10, 0.5, &[("a", 3), ("b", 3)])),
            ("t1".to_string(), row("b", 0.2, 10, 0.5, &[("a", 3), ("b", 3)])),
            ("t2".to_string(), row("a", 0.1, 10, 0.5, &[("a", 3), ("b", 3)])),
        ];
        assert!(TuningInstance::from_rows(vec!["a".into(), "b".into()], None, rows).is_err());
    }

    #[test]
    fn solution_invariants_on_two_by_two() {
        let inst = two_by_two();
        let m = build_milp(&inst).unwrap();
        let s = solve_exact(&m, SolveOptions::default()).unwrap();
        assert!(s.optimal);
        assert!(s.objective <= 0.0);
        let worst = s.chosen_nets.values().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((worst - s.objective).abs() < 1e-6);
        for (t, task) in inst.tasks.iter().enumerate() {
            let i = inst.agents.iter().position(|a| *a == s.assignments[task]).unwrap();
            let net = crate::scoring::net(&inst.rows[t][i], &s.weights).unwrap().net;
            assert!((net - s.chosen_nets[task]).abs() < 1e-6);
        }
        let again = solve_exact(&m, SolveOptions::default()).unwrap();
        assert!(s.same_result(&again));
    }
}
