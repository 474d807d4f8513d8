use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::Result;
use serde::Serialize;
use serde_json::json;
use strategy_auction::analysis::{
    self, binned_metrics, diagnose, oracle_route, BinnedReport, EvalMatrix, RoutedTask,
};
use strategy_auction::domain::{AgentId, BinSchedule, Domain, Role, Task, TaskId};
use strategy_auction::engine::{self, AuctionConfig, Auctioneer, FailureMode};
use strategy_auction::gateway::pool::PoolSpec;
use strategy_auction::io::{self, FeatureRecord};
use strategy_auction::memory::{BankLog, Embedder, HashingEmbedder, MemoryBank};
use strategy_auction::optimizer::{build_milp, solve_exact, SolveOptions, TuningInstance};
use strategy_auction::scenario::{CoalitionMetric, Scenario, SimulationOptions};
use strategy_auction::wtp::WtpModel;
use strategy_auction::{Error, Execution};

use crate::manifest::RunDir;
use crate::{AnalyzeArgs, EvaluateArgs, OracleArgs, RunArgs, ShapleyArgs, SimulateArgs, StatsArgs, TuneArgs, WtpArgs};

fn by_id(tasks: &[Task]) -> BTreeMap<TaskId, Task> {
    tasks.iter().map(|t| (t.id.clone(), t.clone())).collect()
}

fn prices(pool: &PoolSpec) -> Result<BTreeMap<AgentId, f64>> {
    Ok(pool.profiles()?.into_iter().map(|p| (p.id, p.price_per_mtok)).collect())
}

fn schedule(pool: &PoolSpec) -> BinSchedule {
    pool.world.as_ref().map(|w| w.bins.clone()).unwrap_or_default()
}

fn load_scenario(run: &mut RunDir, path: Option<&Path>) -> Result<Scenario> {
    Ok(match path {
        Some(p) => {
            run.input(p);
            io::read_json(p, "scenario file")?
        }
        None => {
            run.arg("scenario", "built-in ladder");
            Scenario::shipped()
        }
    })
}

pub fn tune_weights(a: TuneArgs) -> Result<()> {
    let mut run = RunDir::create(&a.out, "tune-weights")?;
    run.input(&a.tasks).input(&a.features).input(&a.pool);
    run.arg("big_m", a.big_m).arg("node_limit", a.node_limit);
    let domain: Option<Domain> = a.domain.as_deref().map(str::parse).transpose()?;
    if let Some(d) = domain {
        run.arg("domain", d.tag());
    }
    if let Some(b) = a.weight_bound {
        run.arg("weight_bound", b);
    }
    let tasks = io::load_tasks(&a.tasks)?;
    let keep: BTreeSet<TaskId> = tasks
        .iter()
        .filter(|t| domain.is_none_or(|d| t.domain == d))
        .map(|t| t.id.clone())
        .collect();
    let known: BTreeSet<&TaskId> = tasks.iter().map(|t| &t.id).collect();
    let pool = io::load_pool(&a.pool)?;
    let prices = prices(&pool)?;
    let features: Vec<FeatureRecord> = io::read_jsonl(&a.features, "feature file")?;
    let mut rows = Vec::new();
    for f in &features {
        if !known.contains(&f.task_id) {
            return Err(Error::Invalid(format!("feature row for unknown task {}", f.task_id)).into());
        }
        if keep.contains(&f.task_id) {
            rows.push((f.task_id.clone(), f.to_row(&prices)?));
        }
    }
    if rows.is_empty() {
        return Err(Error::Invalid("no feature rows left after the domain filter".into()).into());
    }
    let bidders: Vec<AgentId> = pool.profiles()?.into_iter().filter(|p| p.has_role(Role::Bidder)).map(|p| p.id).collect();
    let mut inst = TuningInstance::from_rows(bidders, Some(pool.judges()), rows)?;
    inst.big_m = a.big_m;
    inst.weight_bound = a.weight_bound;
    inst.score_range = pool.score_range;
    let model = build_milp(&inst)?;
    let mut sol = solve_exact(&model, SolveOptions { node_limit: a.node_limit })?;
    sol.weights.tuned_on = domain.map(|d| d.tag().to_string());
    io::write_json(&run.output("weights.json"), &sol.weights)?;
    io::write_json(
        &run.output("solver_report.json"),
        &json!({
            "objective": sol.objective,
            "optimal": sol.optimal,
            "tasks": inst.tasks.len(),
            "agents": inst.agents.len(),
            "binaries": model.num_binaries(),
            "continuous": model.num_continuous(),
            "constraints": model.functional_constraints,
            "assignments": sol.assignments,
            "chosen_nets": sol.chosen_nets,
            "stats": sol.stats,
        }),
    )?;
    run.finish()?;
    println!("objective {:.6} ({})", sol.objective, if sol.optimal { "optimal" } else { "node limit reached" });
    Ok(())
}

#[derive(Serialize)]
struct RunSummary<'a> {
    tasks: usize,
    completed: usize,
    failures: usize,
    order: &'a [TaskId],
    overall: &'a analysis::BinMetrics,
}

pub fn run_auction(a: RunArgs, exec: Execution) -> Result<()> {
    let mut run = RunDir::create(&a.out, "run-auction")?;
    run.input(&a.tasks).input(&a.pool).input(&a.weights);
    run.arg("seed", a.seed)
        .arg("memory", !a.no_memory)
        .arg("permute", a.permute)
        .arg("k", a.k)
        .arg("lenient", a.lenient)
        .arg("embed_dim", a.embed.embed_dim)
        .arg("embed_seed", a.embed.embed_seed);
    let tasks = io::load_tasks(&a.tasks)?;
    let pool = io::load_pool(&a.pool)?;
    let weights = io::load_weights(&a.weights)?;
    let agents = pool.build()?;
    let embedder = HashingEmbedder::new(a.embed.embed_dim, a.embed.embed_seed)?;
    let mut bank = match &a.memory_in {
        Some(p) => {
            run.input(p).input(&strategy_auction::memory::embeddings_path(p));
            MemoryBank::load(p, &embedder.tag())?
        }
        None => MemoryBank::new(embedder.tag()),
    };
    let mut config = AuctionConfig::new(weights);
    config.retrieval_k = a.k;
    config.refinement_enabled = !a.no_memory;
    config.random_seed = a.seed;
    config.failure_mode = if a.lenient { FailureMode::Lenient } else { FailureMode::Strict };
    config.execution = exec;
    let mut auctioneer = Auctioneer::new(&agents, config, &embedder)?;
    auctioneer.remember_prompts(&tasks);
    let mut log = BankLog::create(&run.output("memory.jsonl"), &bank)?;
    run.output("memory.jsonl.embeddings");
    let out = auctioneer.run_sequence(&tasks, &mut bank, a.permute, Some(&mut log))?;

    io::write_jsonl(&run.output("transcript.jsonl"), &out.records)?;
    if !out.failures.is_empty() {
        io::write_jsonl(&run.output("failures.jsonl"), &out.failures)?;
    }
    let report = binned_metrics(&RoutedTask::from_records(&out.records)?, &by_id(&tasks), &prices(&pool)?, &schedule(&pool), true)?;
    io::write_json(
        &run.output("summary.json"),
        &RunSummary {
            tasks: tasks.len(),
            completed: out.records.len(),
            failures: out.failures.len(),
            order: &out.order,
            overall: &report.overall,
        },
    )?;
    run.finish()?;
    println!(
        "{} tasks, {} failed, pass@1 {}, $/Mt {:.4}",
        out.records.len() + out.failures.len(),
        out.failures.len(),
        report.overall.pass_at_1.map_or("n/a".into(), |p| format!("{p:.2}")),
        report.overall.dollars_per_mtok
    );
    Ok(())
}

pub fn simulate(a: SimulateArgs, exec: Execution) -> Result<()> {
    let mut run = RunDir::create(&a.out, "simulate")?;
    let scenario = load_scenario(&mut run, a.scenario.as_deref())?;
    let runs = a.runs.unwrap_or(scenario.runs);
    run.arg("runs", runs).arg("memory", !a.no_memory);
    let sim = scenario.simulate(SimulationOptions { runs, memory: !a.no_memory, execution: exec })?;

    io::write_jsonl(&run.output("tasks.jsonl"), &sim.tasks)?;
    io::write_json(&run.output("pool.json"), &scenario.pool)?;
    io::write_json(&run.output("weights.json"), &scenario.weights)?;
    let ids = scenario.pool.agent_ids();
    let prices = prices(&scenario.pool)?;
    let tasks = by_id(&sim.tasks);
    for (i, out) in sim.runs.iter().enumerate() {
        io::write_jsonl(&run.output(&format!("run{i}.transcript.jsonl")), &out.records)?;
        let rep = binned_metrics(&RoutedTask::from_records(&out.records)?, &tasks, &prices, &schedule(&scenario.pool), true)?;
        io::write_binned_csv(&run.output(&format!("run{i}.bins.csv")), &rep, &ids)?;
    }
    let r = &sim.report;
    io::write_json(&run.output("report.json"), r)?;
    io::write_series_csv(&run.output("smallest_agent_series.csv"), &r.smallest_agent, &r.smallest_agent_series)?;
    run.finish()?;
    println!(
        "{} runs: pass@1 {:.2} +/- {:.2}, $/Mt {:.4} +/- {:.4}",
        r.runs.len(),
        r.pass_at_1.mean,
        r.pass_at_1.std,
        r.dollars_per_mtok.mean,
        r.dollars_per_mtok.std
    );
    Ok(())
}

pub fn evaluate_all(a: EvaluateArgs, exec: Execution) -> Result<()> {
    let mut run = RunDir::create(&a.out, "evaluate-all")?;
    let matrix = match (&a.scenario, &a.tasks, &a.pool) {
        (_, None, None) => {
            let scenario = load_scenario(&mut run, a.scenario.as_deref())?;
            let (tasks, matrix) = scenario.evaluate_all(exec)?;
            io::write_jsonl(&run.output("tasks.jsonl"), &tasks)?;
            matrix
        }
        (None, Some(t), Some(p)) => {
            run.input(t).input(p);
            let tasks = io::load_tasks(t)?;
            let agents = io::load_pool(p)?.build()?;
            engine::evaluate_all(&agents, &tasks, exec)?
        }
        _ => unreachable!("clap requires tasks and pool together"),
    };
    io::write_json(&run.output("matrix.json"), &matrix)?;
    run.finish()?;
    println!("{} tasks x {} agents", matrix.entries.len(), matrix.prices.len());
    Ok(())
}

pub fn analyze(a: AnalyzeArgs) -> Result<()> {
    let mut run = RunDir::create(&a.out, "analyze")?;
    run.input(&a.tasks).input(&a.pool).input(&a.transcript);
    run.arg("include_overhead", !a.no_overhead);
    let tasks = io::load_tasks(&a.tasks)?;
    let pool = io::load_pool(&a.pool)?;
    let records = io::load_transcript(&a.transcript)?;
    let ids = pool.agent_ids();
    let report = binned_metrics(&RoutedTask::from_records(&records)?, &by_id(&tasks), &prices(&pool)?, &schedule(&pool), !a.no_overhead)?;
    io::write_binned_csv(&run.output("bins.csv"), &report, &ids)?;
    let series: BTreeMap<&AgentId, Vec<f64>> =
        ids.iter().map(|id| (id, analysis::cumulative_selection(&records, id))).collect();
    for (id, s) in &series {
        io::write_series_csv(&run.output(&format!("selection_{id}.csv")), id, s)?;
    }
    io::write_json(&run.output("summary.json"), &json!({ "report": report, "cumulative_selection": series }))?;
    run.finish()?;
    print_overall("routing", &report);
    Ok(())
}

fn print_overall(name: &str, r: &BinnedReport) {
    println!(
        "{name}: {} tasks, pass@1 {}, $/Mt {:.4}",
        r.overall.tasks,
        r.overall.pass_at_1.map_or("n/a".into(), |p| format!("{p:.2}")),
        r.overall.dollars_per_mtok
    );
}

pub fn shapley(a: ShapleyArgs, exec: Execution) -> Result<()> {
    let mut run = RunDir::create(&a.out, "shapley")?;
    let scenario = load_scenario(&mut run, a.scenario.as_deref())?;
    let runs = a.runs.unwrap_or(scenario.runs);
    let metric = match a.utility_lambda {
        Some(lambda) => CoalitionMetric::Utility { lambda },
        None => CoalitionMetric::PassAt1,
    };
    run.arg("runs", runs).arg("metric", serde_json::to_string(&metric)?);
    let report = scenario.shapley(metric, runs, exec)?;
    io::write_json(&run.output("shapley.json"), &report)?;
    run.finish()?;
    for p in &report.players {
        println!("{p}: {:.4} ({:.2}%)", report.raw[p], report.shares[p]);
    }
    if report.positive_part_normalized {
        println!("negative contributions present: shares normalize positive parts only");
    }
    Ok(())
}

pub fn oracle(a: OracleArgs) -> Result<()> {
    let mut run = RunDir::create(&a.out, "oracle")?;
    run.input(&a.tasks).input(&a.matrix);
    let tasks = by_id(&io::load_tasks(&a.tasks)?);
    let matrix: EvalMatrix = io::read_json(&a.matrix, "correctness matrix")?;
    let schedule = BinSchedule::default();
    let choices = oracle_route(&matrix)?;
    let report = binned_metrics(&matrix.route(choices.clone())?, &tasks, &matrix.prices, &schedule, false)?;
    let ids: Vec<AgentId> = matrix.by_price().into_iter().cloned().collect();
    io::write_binned_csv(&run.output("oracle_bins.csv"), &report, &ids)?;
    let mut singles = BTreeMap::new();
    for id in &ids {
        let r = binned_metrics(&matrix.single_agent(id)?, &tasks, &matrix.prices, &schedule, false)?;
        singles.insert(id.clone(), r.overall);
    }
    print_overall("oracle", &report);
    let mut out = json!({ "choices": choices, "oracle": report, "single_agents": singles });
    if let Some(t) = &a.transcript {
        run.input(t);
        let records = io::load_transcript(t)?;
        let chosen: Vec<(TaskId, AgentId)> = records.iter().map(|r| (r.task_id.clone(), r.final_winner.clone())).collect();
        let d = diagnose(&chosen, &choices, &matrix)?;
        io::write_confusion_csv(&run.output("confusion.csv"), &d.confusion)?;
        let on_matrix = binned_metrics(&matrix.route(chosen)?, &tasks, &matrix.prices, &schedule, false)?;
        print_overall("transcript on matrix", &on_matrix);
        for (c, p) in &d.breakdown {
            println!("  {}: {p:.2}%", c.tag());
        }
        out["transcript_on_matrix"] = serde_json::to_value(&on_matrix.overall)?;
        out["diagnostics"] = serde_json::to_value(&d)?;
    }
    io::write_json(&run.output("oracle.json"), &out)?;
    run.finish()?;
    Ok(())
}

pub fn wtp(a: WtpArgs) -> Result<()> {
    let mut run = RunDir::create(&a.out, "wtp")?;
    run.input(&a.train_tasks).input(&a.train_matrix).input(&a.tasks);
    run.arg("k", a.k).arg("wtp", a.wtp).arg("embed_dim", a.embed.embed_dim).arg("embed_seed", a.embed.embed_seed);
    let embedder = HashingEmbedder::new(a.embed.embed_dim, a.embed.embed_seed)?;
    let train = by_id(&io::load_tasks(&a.train_tasks)?);
    let train_matrix: EvalMatrix = io::read_json(&a.train_matrix, "correctness matrix")?;
    let model = WtpModel::from_matrix(&train_matrix, &train, &embedder, a.k, a.wtp)?;
    let tasks = io::load_tasks(&a.tasks)?;
    let mut routes = Vec::with_capacity(tasks.len());
    for t in &tasks {
        let c = model.route_task(t, &embedder)?;
        routes.push((t.id.clone(), c));
    }
    let mut out = json!({ "routes": routes.iter().map(|(t, c)| json!({"task_id": t, "agent": c.agent, "utility": c.utility})).collect::<Vec<_>>() });
    if let Some(m) = &a.matrix {
        run.input(m);
        let matrix: EvalMatrix = io::read_json(m, "correctness matrix")?;
        let chosen = routes.iter().map(|(t, c)| (t.clone(), c.agent.clone()));
        let report = binned_metrics(&matrix.route(chosen)?, &by_id(&tasks), &matrix.prices, &BinSchedule::default(), false)?;
        print_overall("wtp", &report);
        out["report"] = serde_json::to_value(&report)?;
    }
    io::write_json(&run.output("wtp.json"), &out)?;
    run.finish()?;
    Ok(())
}

pub fn stats(a: StatsArgs, exec: Execution) -> Result<()> {
    let t = analysis::one_sample_t(&a.samples, a.reference)?;
    let ci = analysis::bootstrap_ci(&a.samples, a.reference, a.resamples, a.level, a.seed, exec)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "n": a.samples.len(),
            "mean": analysis::mean(&a.samples),
            "reference": a.reference,
            "t_test": t,
            "bootstrap": { "resamples": a.resamples, "level": a.level, "seed": a.seed, "interval": ci },
        }))?
    );
    Ok(())
}
