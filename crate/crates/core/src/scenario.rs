//! Seeded synthetic scenarios for end-to-end simulation.
//!
//! A scenario fixes a pool of synthetic agents, a task generator, scoring
//! weights and a root seed. [`Scenario::simulate`] runs the auction over
//! several seeded permutations of the same tasks, each with a fresh memory.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::analysis::{self, binned_metrics, RoutedTask, ShapleyReport};
use crate::domain::{AgentId, Domain, ScoringWeights, Task, TaskId};
use crate::engine::{evaluate_all, AuctionConfig, Auctioneer, RunOutput, DEFAULT_RETRIEVAL_K};
use crate::error::{Error, Result};
use crate::gateway::pool::PoolSpec;
use crate::memory::{HashingEmbedder, MemoryBank};
use crate::par::{self, Execution};
use crate::seed;

const LADDER: &str = include_str!("../scenarios/ladder.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPlan {
    pub count: usize,
    pub domain: Domain,
    /// Solution times are log-uniform on this range, in minutes.
    pub tau_range: (f64, f64),
    pub words_per_prompt: usize,
    /// Each task draws its prompt words from one topic.
    pub topics: Vec<Vec<String>>,
    /// Words mixed into every prompt regardless of topic.
    #[serde(default)]
    pub filler: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbedderSpec {
    pub dim: usize,
    pub seed: u64,
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec { dim: 256, seed: 0 }
    }
}

impl EmbedderSpec {
    pub fn build(&self) -> Result<HashingEmbedder> {
        HashingEmbedder::new(self.dim, self.seed)
    }
}

fn default_runs() -> usize {
    5
}
fn default_k() -> usize {
    DEFAULT_RETRIEVAL_K
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    pub pool: PoolSpec,
    pub tasks: TaskPlan,
    pub weights: ScoringWeights,
    #[serde(default = "default_k")]
    pub retrieval_k: usize,
    #[serde(default)]
    pub embedder: EmbedderSpec,
}

/// How a coalition's performance is measured for attribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoalitionMetric {
    /// Mean pass@1 in percent.
    PassAt1,
    /// Mean of `pass@1 - lambda * $/Mt`.
    Utility { lambda: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

impl Spread {
    pub fn of(xs: &[f64]) -> Spread {
        if xs.is_empty() {
            return Spread { mean: f64::NAN, std: f64::NAN };
        }
        Spread { mean: analysis::mean(xs), std: analysis::std_dev(xs) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub index: usize,
    pub seed: u64,
    pub pass_at_1: f64,
    pub dollars_per_mtok: f64,
    pub failures: usize,
    pub selection_shares: BTreeMap<AgentId, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSpread {
    pub label: String,
    pub pass_at_1: Spread,
    pub dollars_per_mtok: Spread,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub scenario: String,
    pub memory: bool,
    pub runs: Vec<RunSummary>,
    pub pass_at_1: Spread,
    pub dollars_per_mtok: Spread,
    pub per_bin: Vec<BinSpread>,
    /// The cheapest agent and its mean cumulative selection share.
    pub smallest_agent: AgentId,
    pub smallest_agent_series: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub tasks: Vec<Task>,
    pub runs: Vec<RunOutput>,
    pub report: SimulationReport,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions {
    pub runs: usize,
    /// When off, no bidder refines: the auction runs without memory.
    pub memory: bool,
    pub execution: Execution,
}

impl Scenario {
    /// The shipped four-agent ladder scenario.
    pub fn shipped() -> Scenario {
        serde_json::from_str(LADDER).expect("shipped scenario parses")
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tasks;
        if t.count == 0 || t.words_per_prompt == 0 || t.topics.is_empty() || t.topics.iter().any(Vec::is_empty) {
            return Err(Error::Invalid("scenario task plan needs tasks, words and non-empty topics".into()));
        }
        let (lo, hi) = t.tau_range;
        if !(lo > 0.0 && lo < hi) {
            return Err(Error::Invalid(format!("tau range ({lo}, {hi}) must satisfy 0 < lo < hi")));
        }
        if self.runs == 0 {
            return Err(Error::Invalid("a scenario needs at least one run".into()));
        }
        self.weights.check_judges(self.pool.judges().iter())?;
        self.pool.profiles()?;
        Ok(())
    }

    /// Deterministic task set.
    pub fn generate_tasks(&self) -> Vec<Task> {
        let plan = &self.tasks;
        let (lo, hi) = plan.tau_range;
        let root = seed::derive(self.seed, "tasks");
        (0..plan.count)
            .map(|i| {
                let id = format!("t{i:04}");
                let pick = |label: &str, j: usize, n: usize| {
                    (seed::hash_parts(root, &[&id, label, &j.to_string()]) % n as u64) as usize
                };
                let topic = &plan.topics[pick("topic", 0, plan.topics.len())];
                let mut words: Vec<&str> = (0..plan.words_per_prompt)
                    .map(|j| topic[pick("word", j, topic.len())].as_str())
                    .collect();
                if !plan.filler.is_empty() {
                    words.push(&plan.filler[pick("filler", 0, plan.filler.len())]);
                }
                let u = seed::unit(root, &[&id, "tau"]);
                let tau = (lo.ln() + u * (hi.ln() - lo.ln())).exp();
                let mut task = Task::new(id, plan.domain, words.join(" ")).with_tau(tau);
                task.source = Some(self.name.clone());
                task
            })
            .collect()
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        seed::derive(self.seed, &format!("run{run}"))
    }

    pub fn config(&self, run: usize, memory: bool, weights: ScoringWeights, exec: Execution) -> AuctionConfig {
        let mut c = AuctionConfig::new(weights);
        c.retrieval_k = self.retrieval_k;
        c.refinement_enabled = memory;
        c.random_seed = self.run_seed(run);
        c.execution = exec;
        c
    }

    fn run_with(&self, pool: &PoolSpec, weights: &ScoringWeights, tasks: &[Task], run: usize, memory: bool, exec: Execution) -> Result<RunOutput> {
        let agents = pool.build()?;
        let embedder = self.embedder.build()?;
        let mut auctioneer = Auctioneer::new(&agents, self.config(run, memory, weights.clone(), exec), &embedder)?;
        let mut bank = MemoryBank::new(crate::memory::Embedder::tag(&embedder));
        auctioneer.run_sequence(tasks, &mut bank, true, None)
    }

    /// One seeded permutation run over the full pool.
    pub fn run(&self, tasks: &[Task], run: usize, memory: bool, exec: Execution) -> Result<RunOutput> {
        self.run_with(&self.pool, &self.weights, tasks, run, memory, exec)
    }

    pub fn simulate(&self, opts: SimulationOptions) -> Result<Simulation> {
        self.validate()?;
        let tasks = self.generate_tasks();
        let runs: Vec<RunOutput> = par::map_range(opts.execution, opts.runs, |r| {
            self.run(&tasks, r, opts.memory, opts.execution)
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let report = self.report(&tasks, &runs, opts.memory)?;
        Ok(Simulation { tasks, runs, report })
    }

    pub fn report(&self, tasks: &[Task], runs: &[RunOutput], memory: bool) -> Result<SimulationReport> {
        let by_id: BTreeMap<TaskId, Task> = tasks.iter().map(|t| (t.id.clone(), t.clone())).collect();
        let prices: BTreeMap<AgentId, f64> =
            self.pool.profiles()?.into_iter().map(|p| (p.id, p.price_per_mtok)).collect();
        let schedule = self.pool.world.as_ref().map(|w| w.bins.clone()).unwrap_or_default();
        let smallest = prices
            .iter()
            .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(b.0)))
            .map(|(a, _)| a.clone())
            .ok_or_else(|| Error::Invalid("scenario pool is empty".into()))?;

        let mut summaries = Vec::new();
        let mut per_bin: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        let mut bin_order: Vec<String> = Vec::new();
        let mut series = Vec::new();
        for (i, run) in runs.iter().enumerate() {
            let routed = RoutedTask::from_records(&run.records)?;
            let rep = binned_metrics(&routed, &by_id, &prices, &schedule, true)?;
            for label in &rep.order {
                let m = &rep.bins[label];
                let e = per_bin.entry(label.clone()).or_default();
                e.0.push(m.pass_at_1.unwrap_or(f64::NAN));
                e.1.push(m.dollars_per_mtok);
                if !bin_order.contains(label) {
                    bin_order.push(label.clone());
                }
            }
            series.push(analysis::cumulative_selection(&run.records, &smallest));
            summaries.push(RunSummary {
                index: i,
                seed: self.run_seed(i),
                pass_at_1: rep.overall.pass_at_1.unwrap_or(f64::NAN),
                dollars_per_mtok: rep.overall.dollars_per_mtok,
                failures: run.failures.len(),
                selection_shares: rep.overall.selection_shares,
            });
        }
        // schedule order, not alphabetical
        bin_order.sort_by_key(|l| schedule.bins().iter().position(|b| &b.label == l).unwrap_or(usize::MAX));
        let pass: Vec<f64> = summaries.iter().map(|s| s.pass_at_1).collect();
        let price: Vec<f64> = summaries.iter().map(|s| s.dollars_per_mtok).collect();
        Ok(SimulationReport {
            scenario: self.name.clone(),
            memory,
            pass_at_1: Spread::of(&pass),
            dollars_per_mtok: Spread::of(&price),
            per_bin: bin_order
                .iter()
                .map(|l| BinSpread {
                    label: l.clone(),
                    pass_at_1: Spread::of(&per_bin[l].0),
                    dollars_per_mtok: Spread::of(&per_bin[l].1),
                })
                .collect(),
            runs: summaries,
            smallest_agent: smallest,
            smallest_agent_series: analysis::mean_series(&series),
        })
    }

    /// Complete correctness matrix of every agent on every scenario task.
    pub fn evaluate_all(&self, exec: Execution) -> Result<(Vec<Task>, analysis::EvalMatrix)> {
        self.validate()?;
        let tasks = self.generate_tasks();
        let agents = self.pool.build()?;
        let matrix = evaluate_all(&agents, &tasks, exec)?;
        Ok((tasks, matrix))
    }

    /// Performance of the auction with participation restricted to
    /// `members` in every role, averaged over `runs` permutations.
    pub fn coalition_value(&self, tasks: &[Task], members: &BTreeSet<AgentId>, metric: CoalitionMetric, runs: usize) -> Result<f64> {
        if members.is_empty() {
            return Ok(0.0);
        }
        let pool = self.pool.restricted_to(members);
        let weights = self.weights.restricted_to(members);
        let prices: BTreeMap<AgentId, f64> = pool.profiles()?.into_iter().map(|p| (p.id, p.price_per_mtok)).collect();
        let by_id: BTreeMap<TaskId, Task> = tasks.iter().map(|t| (t.id.clone(), t.clone())).collect();
        let schedule = pool.world.as_ref().map(|w| w.bins.clone()).unwrap_or_default();
        let mut total = 0.0;
        for r in 0..runs {
            let out = self.run_with(&pool, &weights, tasks, r, true, Execution::Sequential)?;
            let rep = binned_metrics(&RoutedTask::from_records(&out.records)?, &by_id, &prices, &schedule, true)?;
            let pass = rep.overall.pass_at_1.unwrap_or(0.0);
            total += match metric {
                CoalitionMetric::PassAt1 => pass,
                CoalitionMetric::Utility { lambda } => pass - lambda * rep.overall.dollars_per_mtok,
            };
        }
        Ok(total / runs as f64)
    }

    /// Exact Shapley attribution over the pool. Coalitions run in parallel
    /// when `exec` allows; each coalition's runs are sequential.
    pub fn shapley(&self, metric: CoalitionMetric, runs: usize, exec: Execution) -> Result<ShapleyReport> {
        self.validate()?;
        let tasks = self.generate_tasks();
        let players = self.pool.agent_ids();
        let failure = std::sync::Mutex::new(None);
        let report = analysis::shapley(
            &players,
            |mask| {
                let members: BTreeSet<AgentId> =
                    players.iter().zip(mask).filter(|(_, &m)| m).map(|(p, _)| p.clone()).collect();
                self.coalition_value(&tasks, &members, metric, runs).unwrap_or_else(|e| {
                    failure.lock().expect("lock").get_or_insert(e);
                    f64::NAN
                })
            },
            exec,
        )?;
        match failure.into_inner().expect("lock") {
            Some(e) => Err(e),
            None => Ok(report),
        }
    }
}
