//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the report reads top to
//! bottom. The process fails when any criterion fails, except those listed
//! as known deviations, which still print FAIL with their detail.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use strategy_auction::analysis::{
    self, binned_metrics, cumulative_selection, diagnose, oracle_route, shapley, shapley_from_table, Category,
    EvalMatrix, RoutedTask, TTest,
};
use strategy_auction::domain::{
    AgentProfile, AuctionRecord, Bid, CostValue, Domain, Outcome, ScoredBid, ScoringWeights, Task,
};
use strategy_auction::engine::{AuctionConfig, Auctioneer};
use strategy_auction::gateway::{Agent, Proposal, Trace, Verdict};
use strategy_auction::memory::{cosine, top_k, ContrastivePair, HashingEmbedder, MemoryBank};
use strategy_auction::optimizer::{brute_force_tune, build_milp, solve_exact, SolveOptions, TuningInstance};
use strategy_auction::pricing::{anchor_price, derive_pool_prices, PriceAnchor, PriceInput};
use strategy_auction::scenario::{Scenario, Simulation, SimulationOptions};
use strategy_auction::scoring::FeatureRow;
use strategy_auction::{par, seed, Error, Execution};

const LADDER: [f64; 4] = [0.05, 0.09, 0.16, 0.36];

/// Values of the shipped scenario, frozen when the fixture was generated.
const FROZEN_AUCTION_PASS: f64 = 72.73333333333333;
const FROZEN_AUCTION_DPM: f64 = 0.11234811770656886;
const FROZEN_BEST_SINGLE_PASS: f64 = 70.0;
const FROZEN_LARGEST_DPM: f64 = 0.3599999999999999;

struct Line {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
    known_deviation: bool,
}

struct Report(Vec<Line>);

impl Report {
    fn add(&mut self, id: u32, name: &'static str, outcome: Result<String, String>) {
        let (pass, detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        self.push(Line { id, name, pass, detail, known_deviation: false });
    }

    fn push(&mut self, line: Line) {
        println!(
            "{} {:>2} {}: {}",
            if line.pass { "PASS" } else { "FAIL" },
            line.id,
            line.name,
            line.detail
        );
        self.0.push(line);
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- 1

fn random_instance(rng: &mut impl Rng) -> TuningInstance {
    let n_agents = rng.random_range(2..=3);
    let n_tasks = rng.random_range(2..=4);
    let agents: Vec<String> = (0..n_agents).map(|i| format!("a{i}")).collect();
    let mut rows = Vec::new();
    for t in 0..n_tasks {
        for (i, a) in agents.iter().enumerate() {
            let scores = agents.iter().map(|j| (j.clone(), rng.random_range(0..=5))).collect();
            rows.push((
                format!("t{t}"),
                FeatureRow {
                    agent_id: a.clone(),
                    price: LADDER[i],
                    token_count: rng.random_range(1..=40),
                    entropy: rng.random(),
                    jury_scores: scores,
                },
            ));
        }
    }
    let mut inst = TuningInstance::from_rows(agents, None, rows).unwrap();
    inst.weight_bound = Some(1.0);
    inst
}

fn milp_equivalence() -> Result<String, String> {
    let mut rng = seed::rng(1, "acceptance-milp");
    let instances: Vec<TuningInstance> = (0..50).map(|_| random_instance(&mut rng)).collect();
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (k, inst) in instances.iter().enumerate() {
        let exact = build_milp(inst)
            .and_then(|m| solve_exact(&m, SolveOptions::default()))
            .map_err(|e| format!("instance {k}: exact solver: {e}"))?;
        let brute = brute_force_tune(inst, Execution::Sequential).map_err(|e| format!("instance {k}: brute force: {e}"))?;
        check(exact.optimal, || format!("instance {k}: node limit hit"))?;
        let gap = (exact.objective - brute.objective).abs();
        worst = worst.max(gap);
        check(gap <= 1e-6, || {
            format!("instance {k}: exact {} vs brute {}", exact.objective, brute.objective)
        })?;
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 10.0, || format!("took {secs:.2}s"))?;
    Ok(format!("50 instances, max gap {worst:.2e}, {secs:.2}s"))
}

// ---------------------------------------------------------------- 2

/// Bids a fixed plan; as a juror, looks up its score for the plan's owner.
struct Scripted {
    profile: AgentProfile,
    tokens: u64,
    entropy: f64,
    /// `(judge, owner) -> score`
    scores: Arc<BTreeMap<(String, String), i32>>,
}

impl Agent for Scripted {
    fn profile(&self) -> &AgentProfile {
        &self.profile
    }
    fn propose(&self, _: &Task) -> strategy_auction::Result<Proposal> {
        Ok(Proposal {
            strategy_text: format!("{}|plan", self.profile.id),
            token_count: self.tokens,
            entropy: self.entropy,
            overhead_tokens: 0,
            token_count_estimated: false,
        })
    }
    fn refine(&self, _: &Task, _: &Proposal, _: &[ContrastivePair]) -> strategy_auction::Result<Proposal> {
        Err(Error::Transport("scripted agents do not refine".into()))
    }
    fn judge(&self, _: &Task, strategy: &str) -> strategy_auction::Result<Verdict> {
        let owner = strategy.split('|').next().unwrap_or_default().to_string();
        Ok(Verdict { score: self.scores[&(self.profile.id.clone(), owner)], tokens: 1 })
    }
    fn execute(&self, _: &Task, strategy: &str) -> strategy_auction::Result<Trace> {
        Ok(Trace { answer: strategy.into(), correct: Some(true), trace_tokens: 10 })
    }
}

struct BidSpec {
    id: String,
    price: f64,
    tokens: u64,
    entropy: f64,
}

/// Exhaustive argmin of `C - V`: among nets within the relative tie
/// tolerance of the minimum, lowest price, then smallest id.
fn exhaustive_winner(bids: &[BidSpec], scores: &BTreeMap<(String, String), i32>, w: &ScoringWeights) -> String {
    let nets: Vec<f64> = bids
        .iter()
        .map(|b| {
            let c = w.w_c * b.price * b.tokens as f64;
            let v = w.w_h * b.entropy
                + w.w_judge.iter().map(|(j, wj)| wj * scores[&(j.clone(), b.id.clone())] as f64).sum::<f64>();
            c - v
        })
        .collect();
    let min = nets.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * min.abs().max(1.0);
    let mut tied: Vec<&BidSpec> = bids.iter().zip(&nets).filter(|(_, &n)| n <= min + tol).map(|(b, _)| b).collect();
    tied.sort_by(|a, b| a.price.total_cmp(&b.price).then(a.id.cmp(&b.id)));
    tied[0].id.clone()
}

fn selection_law() -> Result<String, String> {
    let mut rng = seed::rng(2, "acceptance-selection");
    let emb = HashingEmbedder::default();
    let task = Task::new("q", Domain::Coding, "sort a list");
    let names = ["kite", "ash", "moss", "bay", "elm"];
    let mut ties = 0;
    for set in 0..1000 {
        let n = rng.random_range(2..=5);
        let mut ids: Vec<&str> = names[..n].to_vec();
        ids.shuffle(&mut rng);
        let tie_prone = set % 3 == 0;
        let bids: Vec<BidSpec> = ids
            .iter()
            .map(|id| BidSpec {
                id: id.to_string(),
                price: LADDER[rng.random_range(0..4)],
                tokens: rng.random_range(1..=400),
                entropy: [0.0, 0.25, 0.5, 0.75, 1.0][rng.random_range(0..5)],
            })
            .collect();
        let mut scores = BTreeMap::new();
        for j in &ids {
            for b in &ids {
                let s = if tie_prone { rng.random_range(4..=5) } else { rng.random_range(0..=5) };
                scores.insert((j.to_string(), b.to_string()), s);
            }
        }
        let w = if tie_prone {
            ScoringWeights::new(0.0, 0.0, ids.iter().map(|j| (j.to_string(), 0.5)).collect())
        } else {
            ScoringWeights::new(
                rng.random_range(0.0..0.05),
                rng.random_range(-2.0..2.0),
                ids.iter().map(|j| (j.to_string(), rng.random_range(-1.0..1.0))).collect(),
            )
        };
        let scores = Arc::new(scores);
        let pool: Vec<Arc<dyn Agent>> = bids
            .iter()
            .map(|b| {
                Arc::new(Scripted {
                    profile: AgentProfile::new(b.id.clone(), 1, b.price),
                    tokens: b.tokens,
                    entropy: b.entropy,
                    scores: scores.clone(),
                }) as Arc<dyn Agent>
            })
            .collect();
        let mut config = AuctionConfig::new(w.clone());
        config.refinement_enabled = false;
        config.execution = Execution::Sequential;
        let mut auctioneer = Auctioneer::new(&pool, config, &emb).map_err(|e| format!("set {set}: {e}"))?;
        let mut bank = MemoryBank::new(strategy_auction::memory::Embedder::tag(&emb));
        let (record, _) = auctioneer.run_auction(&task, &mut bank, 0).map_err(|e| format!("set {set}: {e}"))?;
        let expected = exhaustive_winner(&bids, &scores, &w);
        check(record.provisional_winner == expected, || {
            format!("set {set}: engine chose {}, exhaustive argmin {expected}", record.provisional_winner)
        })?;
        let nets: BTreeSet<u64> = record.initial_bids.iter().map(|b| b.score.net.to_bits()).collect();
        if nets.len() < record.initial_bids.len() {
            ties += 1;
        }
    }
    Ok(format!("1000 bid sets, 0 violations ({ties} with tied nets)"))
}

// ---------------------------------------------------------------- 3

fn refinement_monotonicity() -> Result<String, String> {
    let mut s = Scenario::shipped();
    s.tasks.count = 500;
    let tasks = s.generate_tasks();
    let run = s.run(&tasks, 0, true, Execution::Parallel).map_err(|e| e.to_string())?;
    check(run.records.len() == 500, || format!("{} of 500 tasks completed", run.records.len()))?;
    let prices: BTreeMap<String, f64> =
        s.pool.profiles().unwrap().into_iter().map(|p| (p.id, p.price_per_mtok)).collect();
    let mut refined = 0;
    let mut flipped = 0;
    for r in &run.records {
        let prov = r.provisional_net().ok_or("record without provisional bid")?;
        let win = r.winning_bid().ok_or("record without winner")?.score.net;
        check(win <= prov, || format!("task {}: final net {win} above provisional {prov}", r.task_id))?;
        let prov_price = prices[&r.provisional_winner];
        for b in &r.refined_bids {
            check(prices[&b.bid.agent_id] < prov_price, || {
                format!("task {}: {} refined against {}", r.task_id, b.bid.agent_id, r.provisional_winner)
            })?;
        }
        refined += r.refined_bids.len();
        flipped += (r.final_winner != r.provisional_winner) as usize;
    }
    Ok(format!("500 tasks, {refined} refined bids, {flipped} refinement wins, 0 violations"))
}

// ---------------------------------------------------------------- 4

fn permutation_shapley(n: usize, values: &[f64]) -> Vec<f64> {
    fn orders(n: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|p: Vec<usize>| {
                    let free: Vec<usize> = (0..n).filter(|i| !p.contains(i)).collect();
                    free.into_iter().map(move |i| {
                        let mut q = p.clone();
                        q.push(i);
                        q
                    })
                })
                .collect();
        }
        out
    }
    let all = orders(n);
    let mut phi = vec![0.0; n];
    for order in &all {
        let mut mask = 0;
        for &i in order {
            phi[i] += values[mask | 1 << i] - values[mask];
            mask |= 1 << i;
        }
    }
    phi.iter().map(|p| p / all.len() as f64).collect()
}

fn shapley_axioms() -> Result<String, String> {
    let mut rng = seed::rng(4, "acceptance-shapley");
    let mut symmetric_pairs = 0;
    let mut null_players = 0;
    for g in 0..100 {
        let n = rng.random_range(1..=4);
        let mut values: Vec<f64> = (0..1 << n).map(|_| rng.random_range(-20..=80) as f64).collect();
        // make players 0 and 1 symmetric in half the games
        let sym = n >= 2 && g % 2 == 0;
        if sym {
            for m in 0..1usize << n {
                let swapped = (m & !3) | (m & 1) << 1 | (m >> 1) & 1;
                values[m] = values[m.min(swapped)];
            }
        }
        // make the last player a null player in a third of the games
        let null = n >= 2 && g % 3 == 0;
        if null {
            let last = 1 << (n - 1);
            for m in 0..1usize << n {
                if m & last != 0 {
                    values[m] = values[m & !last];
                }
            }
        }
        let players: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
        let report = shapley(&players, |mask| {
            values[mask.iter().enumerate().map(|(i, &b)| (b as usize) << i).sum::<usize>()]
        }, Execution::Parallel)
        .map_err(|e| e.to_string())?;
        let phi: Vec<f64> = players.iter().map(|p| report.raw[p]).collect();
        check(phi == shapley_from_table(n, &values), || format!("game {g}: report and table disagree"))?;
        let total: f64 = phi.iter().sum();
        let grand = values[(1 << n) - 1] - values[0];
        check((total - grand).abs() <= 1e-9, || format!("game {g}: efficiency {total} vs {grand}"))?;
        for (a, b) in phi.iter().zip(permutation_shapley(n, &values)) {
            check((a - b).abs() <= 1e-9, || format!("game {g}: {a} vs permutation oracle {b}"))?;
        }
        if sym && (!null || n > 2) {
            check(phi[0] == phi[1], || format!("game {g}: symmetric players {} vs {}", phi[0], phi[1]))?;
            symmetric_pairs += 1;
        }
        if null {
            check(phi[n - 1] == 0.0, || format!("game {g}: null player got {}", phi[n - 1]))?;
            null_players += 1;
        }
        let shares: f64 = report.shares.values().sum();
        check((shares - 100.0).abs() <= 1e-6, || format!("game {g}: shares sum to {shares}"))?;
    }
    Ok(format!("100 games, {symmetric_pairs} symmetric pairs, {null_players} null players"))
}

// ---------------------------------------------------------------- 5

fn price_schedule(report: &mut Report) {
    let anchor = PriceAnchor::default();
    let params = [4u64, 8, 14, 32].map(|b| b * 1_000_000_000);
    let names = ["qwen3-4b", "qwen3-8b", "qwen3-14b", "qwen3-32b"];
    let ladder = derive_pool_prices(
        names.iter().zip(params).map(|(id, p)| PriceInput { id, params: p, explicit_price: None }),
        &anchor,
        2,
    );
    let ladder_ok = match &ladder {
        Ok(m) => names.iter().zip(LADDER).all(|(n, want)| m[*n].rounded == want),
        Err(_) => false,
    };
    let got: Vec<f64> = ladder.map(|m| names.iter().map(|n| m[*n].rounded).collect()).unwrap_or_default();
    let blend = anchor_price(&anchor).unwrap_or(f64::NAN);
    let blend_ok = (blend - 0.358).abs() < 5e-4;
    let mut detail = format!("ladder {got:?}");
    if ladder_ok {
        detail.push_str(" matches {0.05, 0.09, 0.16, 0.36}");
    }
    detail.push_str(&format!(
        "; anchor blend (4*0.29 + 0.59)/5 = {blend:.4}, expected 0.358{}",
        if blend_ok { "" } else { " (known deviation: 0.358 does not follow from these prices)" }
    ));
    report.push(Line {
        id: 5,
        name: "price schedule",
        pass: ladder_ok && blend_ok,
        detail,
        known_deviation: ladder_ok && !blend_ok,
    });
}

// ---------------------------------------------------------------- 6

fn full_scan(query: &[f64], rows: &[Vec<f64>], k: usize) -> Vec<usize> {
    let mut idx: Vec<(usize, f64)> = rows.iter().enumerate().map(|(i, r)| (i, cosine(query, r))).collect();
    idx.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    idx.into_iter().take(k).map(|(i, _)| i).collect()
}

fn stub_record(id: &str) -> AuctionRecord {
    let bid = Bid {
        agent_id: "a".into(),
        strategy_text: "plan".into(),
        token_count: 1,
        entropy: 0.5,
        jury_scores: BTreeMap::new(),
        refined: false,
        overhead_tokens: 0,
        token_count_estimated: false,
    };
    AuctionRecord {
        task_id: id.into(),
        sequence_index: 0,
        initial_bids: vec![ScoredBid { bid, score: CostValue::new(0.0, 0.0), outcome: Outcome::Won }],
        refined_bids: vec![],
        provisional_winner: "a".into(),
        final_winner: "a".into(),
        winning_strategy: "plan".into(),
        execution: None,
        skipped_refinements: BTreeMap::new(),
    }
}

fn retrieval_exactness() -> Result<String, String> {
    let k = 8;
    let dim = 16;
    let mut rng = seed::rng(6, "acceptance-retrieval");
    let vector = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        // coarse values so exact duplicates and ties occur
        (0..dim).map(|_| rng.random_range(-2..=2) as f64).collect()
    };
    let sizes = [0, 1, k - 1, k, k + 1, 100, 1000, 10_000];
    let mut queries = 0;
    for &size in &sizes {
        let rows: Vec<Vec<f64>> = (0..size).map(|_| vector(&mut rng)).collect();
        for q in 0..20 {
            let query = vector(&mut rng);
            for kk in [1, k, size.max(1), size + 3] {
                let got: Vec<usize> = top_k(&query, &rows, kk).into_iter().map(|(i, _)| i).collect();
                let want = full_scan(&query, &rows, kk);
                check(got == want, || format!("size {size}, k {kk}, query {q}: {got:?} vs {want:?}"))?;
                queries += 1;
            }
        }
        if size <= k + 1 {
            // the bank clamps to min(k, size) and reports task ids in rank order
            let mut bank = MemoryBank::new("acceptance");
            for (i, r) in rows.iter().enumerate() {
                bank.append(stub_record(&format!("m{i}")), r.clone()).map_err(|e| e.to_string())?;
            }
            let query = vector(&mut rng);
            let hits = bank.retrieve_top_k(&query, k).map_err(|e| e.to_string())?;
            check(hits.len() == k.min(size), || format!("bank of {size}: {} hits", hits.len()))?;
            let want: Vec<String> = full_scan(&query, &rows, k).into_iter().map(|i| format!("m{i}")).collect();
            let got: Vec<String> = hits.into_iter().map(|h| h.task_id).collect();
            check(got == want, || format!("bank of {size}: {got:?} vs {want:?}"))?;
        }
    }
    Ok(format!("sizes {sizes:?}, {queries} queries equal to a full-scan sort"))
}

// ---------------------------------------------------------------- shipped scenario

struct Shipped {
    scenario: Scenario,
    sim: Simulation,
    tasks: BTreeMap<String, Task>,
    matrix: EvalMatrix,
    prices: BTreeMap<String, f64>,
}

fn shipped() -> Shipped {
    let scenario = Scenario::shipped();
    let sim = scenario
        .simulate(SimulationOptions { runs: scenario.runs, memory: true, execution: Execution::Parallel })
        .expect("shipped scenario simulates");
    let (tasks, matrix) = scenario.evaluate_all(Execution::Parallel).expect("shipped scenario evaluates");
    let prices = matrix.prices.clone();
    Shipped {
        scenario,
        sim,
        tasks: tasks.into_iter().map(|t| (t.id.clone(), t)).collect(),
        matrix,
        prices,
    }
}

impl Shipped {
    fn pass_at_1(&self, routed: &[RoutedTask]) -> f64 {
        let schedule = self.scenario.pool.world.as_ref().unwrap().bins.clone();
        binned_metrics(routed, &self.tasks, &self.prices, &schedule, true)
            .unwrap()
            .overall
            .pass_at_1
            .unwrap()
    }

    fn dollars_per_mtok(&self, routed: &[RoutedTask]) -> f64 {
        let schedule = self.scenario.pool.world.as_ref().unwrap().bins.clone();
        binned_metrics(routed, &self.tasks, &self.prices, &schedule, true).unwrap().overall.dollars_per_mtok
    }

    fn auction_choices(&self, run: usize) -> Vec<(String, String)> {
        self.sim.runs[run].records.iter().map(|r| (r.task_id.clone(), r.final_winner.clone())).collect()
    }

    fn spend(&self, task: &str, agent: &str) -> f64 {
        self.prices[agent] * self.matrix.entries[task][agent].trace_tokens as f64
    }
}

// ---------------------------------------------------------------- 7

fn oracle_dominance(s: &Shipped) -> Result<String, String> {
    s.matrix.check_complete().map_err(|e| e.to_string())?;
    let oracle = oracle_route(&s.matrix).map_err(|e| e.to_string())?;
    let oracle_pass = s.pass_at_1(&s.matrix.route(oracle.clone()).unwrap());
    let mut best_single: f64 = 0.0;
    for a in s.matrix.agents() {
        let p = s.pass_at_1(&s.matrix.single_agent(a).unwrap());
        best_single = best_single.max(p);
        check(oracle_pass >= p, || format!("{a} pass@1 {p} above oracle {oracle_pass}"))?;
    }
    let mut best_auction: f64 = 0.0;
    for run in 0..s.sim.runs.len() {
        let p = s.pass_at_1(&s.matrix.route(s.auction_choices(run)).unwrap());
        best_auction = best_auction.max(p);
        check(oracle_pass >= p, || format!("auction run {run} pass@1 {p} above oracle {oracle_pass}"))?;
    }
    // A policy is a per-task choice, so spend dominance over every policy
    // with the oracle's correctness set reduces to each task separately.
    let mut compared = 0;
    for (task, pick) in &oracle {
        let row = &s.matrix.entries[task];
        let correct = row[pick].correct;
        for (agent, e) in row {
            if e.correct == correct {
                let (o, a) = (s.spend(task, pick), s.spend(task, agent));
                check(o <= a, || format!("task {task}: oracle {pick} spends {o}, {agent} spends {a}"))?;
                compared += 1;
            }
        }
    }
    // and directly on random policies forced onto the oracle's correctness set
    let mut rng = seed::rng(7, "acceptance-oracle");
    let oracle_total: f64 = oracle.iter().map(|(t, a)| s.spend(t, a)).sum();
    for _ in 0..1000 {
        let total: f64 = oracle
            .iter()
            .map(|(t, pick)| {
                let row = &s.matrix.entries[t];
                let same: Vec<&String> = row.iter().filter(|(_, e)| e.correct == row[pick].correct).map(|(a, _)| a).collect();
                s.spend(t, same[rng.random_range(0..same.len())])
            })
            .sum();
        check(oracle_total <= total + 1e-9, || format!("random policy spends {total} < oracle {oracle_total}"))?;
    }
    Ok(format!(
        "oracle pass@1 {oracle_pass:.2} >= best single {best_single:.2} and best auction run {best_auction:.2}; \
         spend minimal in {compared} same-outcome comparisons and 1000 random policies"
    ))
}

// ---------------------------------------------------------------- 8

fn diagnostics_partition(s: &Shipped) -> Result<String, String> {
    let oracle = oracle_route(&s.matrix).map_err(|e| e.to_string())?;
    let mut rng = seed::rng(8, "acceptance-diagnostics");
    let agents: Vec<String> = s.matrix.agents().cloned().collect();
    let mut routings: Vec<Vec<(String, String)>> = (0..s.sim.runs.len()).map(|r| s.auction_choices(r)).collect();
    for _ in 0..5 {
        routings.push(s.tasks.keys().map(|t| (t.clone(), agents[rng.random_range(0..agents.len())].clone())).collect());
    }
    for (k, chosen) in routings.iter().enumerate() {
        let d = diagnose(chosen, &oracle, &s.matrix).map_err(|e| e.to_string())?;
        let ids: Vec<&String> = d.tasks.iter().map(|t| &t.task_id).collect();
        let unique: BTreeSet<&String> = ids.iter().copied().collect();
        check(ids.len() == chosen.len() && unique.len() == chosen.len(), || {
            format!("routing {k}: {} diagnoses for {} tasks", ids.len(), chosen.len())
        })?;
        let counted: usize = Category::ALL.iter().map(|c| d.tasks.iter().filter(|t| t.category == *c).count()).sum();
        check(counted == chosen.len(), || format!("routing {k}: categories cover {counted} tasks"))?;
        for t in &d.tasks {
            let row = &s.matrix.entries[&t.task_id];
            let expected = if !row.values().any(|e| e.correct) {
                Category::Unavoidable
            } else if t.chosen == oracle[&t.task_id] {
                Category::Correct
            } else if s.prices[&t.chosen] > s.prices[&oracle[&t.task_id]] {
                Category::OverEscalation
            } else {
                Category::UnderEscalation
            };
            check(t.category == expected, || format!("routing {k}, task {}: {:?} vs {expected:?}", t.task_id, t.category))?;
        }
        let total: f64 = d.breakdown.values().sum();
        check((total - 100.0).abs() <= 1e-6, || format!("routing {k}: breakdown sums to {total}"))?;
        for (agent, row) in d.confusion.rows.iter().zip(&d.confusion.percent) {
            let sum: f64 = row.iter().sum();
            let used = d.confusion.counts[d.confusion.rows.iter().position(|a| a == agent).unwrap()].iter().sum::<usize>();
            check(used == 0 || (sum - 100.0).abs() <= 1e-6, || format!("routing {k}: row {agent} sums to {sum}"))?;
        }
    }
    Ok(format!("{} routings, one category per task, confusion rows sum to 100", routings.len()))
}

// ---------------------------------------------------------------- 9

fn end_to_end(s: &Shipped) -> Result<String, String> {
    let r = &s.sim.report;
    let auction_pass = r.pass_at_1.mean;
    let auction_dpm = r.dollars_per_mtok.mean;
    let by_price = s.matrix.by_price();
    let largest = by_price.last().unwrap().to_string();
    let singles: BTreeMap<String, f64> =
        s.matrix.agents().map(|a| (a.clone(), s.pass_at_1(&s.matrix.single_agent(a).unwrap()))).collect();
    let best_single = singles.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let largest_dpm = s.dollars_per_mtok(&s.matrix.single_agent(&largest).unwrap());
    let series = &r.smallest_agent_series;
    let detail = format!(
        "auction pass@1 {auction_pass:.2} vs best single {best_single:.2}; $/Mt {auction_dpm:.4} vs 0.85 x {largest_dpm:.4}; \
         {} share {:.3} at task 20, {:.3} at the end",
        r.smallest_agent,
        series[19],
        series[series.len() - 1]
    );
    check(s.sim.runs.len() == 5 && r.runs.iter().all(|x| x.failures == 0), || format!("runs incomplete: {detail}"))?;
    check(auction_pass >= best_single - 1.0, || format!("pass@1 too low: {detail}"))?;
    check(auction_dpm <= 0.85 * largest_dpm, || format!("too expensive: {detail}"))?;
    check(series[series.len() - 1] > series[19], || format!("no drift toward the small agent: {detail}"))?;
    let frozen = [
        ("auction pass@1", auction_pass, FROZEN_AUCTION_PASS),
        ("auction $/Mt", auction_dpm, FROZEN_AUCTION_DPM),
        ("best single pass@1", best_single, FROZEN_BEST_SINGLE_PASS),
        ("largest $/Mt", largest_dpm, FROZEN_LARGEST_DPM),
    ];
    for (name, got, want) in frozen {
        check((got - want).abs() <= 1e-9 * want.abs().max(1.0), || {
            format!("{name} {got:?} differs from frozen {want:?}: {detail}")
        })?;
    }
    Ok(format!("{detail}; matches frozen values"))
}

// ---------------------------------------------------------------- 10

/// Two-sided p-value of Student's t by Simpson integration of the density.
fn t_p_value(t: f64, df: f64) -> f64 {
    let ln_norm = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    let density = |x: f64| (ln_norm - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
    let b = t.abs();
    let n = 20_000;
    let h = b / n as f64;
    let mut acc = density(0.0) + density(b);
    for i in 1..n {
        acc += density(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - 2.0 * acc * h / 3.0
}

/// Lanczos approximation.
fn ln_gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn statistics(s: &Shipped) -> Result<String, String> {
    // critical values from a standard two-tailed t table
    let table = [(2.776, 4, 0.05), (4.604, 4, 0.01), (2.262, 9, 0.05), (3.250, 9, 0.01), (4.303, 2, 0.05), (2.045, 29, 0.05)];
    for (t_crit, df, p_table) in table {
        let n = df + 1;
        let centered: Vec<f64> = (0..n).map(|i| i as f64 - (n - 1) as f64 / 2.0).collect();
        let sd = analysis::std_dev(&centered);
        let shift = t_crit * sd / (n as f64).sqrt();
        let samples: Vec<f64> = centered.iter().map(|x| x + shift + 3.0).collect();
        match analysis::one_sample_t(&samples, 3.0).map_err(|e| e.to_string())? {
            TTest::Defined { t, p, df: d } => {
                check((t - t_crit).abs() < 1e-9 && d == df as f64, || format!("t {t} df {d} for table row {t_crit}"))?;
                check((p - p_table).abs() < 5e-4, || format!("df {df}, t {t_crit}: p {p:.4}, table {p_table}"))?;
            }
            TTest::Undefined => return Err(format!("table row {t_crit} came back undefined")),
        }
    }
    // the shipped fixture: auction pass@1 per run against the best single agent
    let runs: Vec<f64> = s.sim.report.runs.iter().map(|r| r.pass_at_1).collect();
    let best_single = s
        .matrix
        .agents()
        .map(|a| s.pass_at_1(&s.matrix.single_agent(a).unwrap()))
        .fold(f64::NEG_INFINITY, f64::max);
    let fixture = analysis::one_sample_t(&runs, best_single).map_err(|e| e.to_string())?;
    let fixture_detail = match fixture {
        TTest::Defined { t, df, p } => {
            let m = analysis::mean(&runs);
            let t_ref = (m - best_single) / (analysis::std_dev(&runs) / (runs.len() as f64).sqrt());
            let p_ref = t_p_value(t_ref, df);
            check((t - t_ref).abs() < 5e-4 && (p - p_ref).abs() < 5e-4, || {
                format!("fixture t {t:.4} p {p:.4} vs reference t {t_ref:.4} p {p_ref:.4}")
            })?;
            format!("fixture t {t:.3} p {p:.3}")
        }
        TTest::Undefined => "fixture runs have zero variance".into(),
    };
    check(matches!(analysis::one_sample_t(&[0.7; 5], 0.6), Ok(TTest::Undefined)), || "constant input not undefined".into())?;

    let data: Vec<f64> = (0..40).map(|i| seed::normal(10, &[&i.to_string()])).collect();
    let a = analysis::bootstrap_ci(&data, 0.0, 10_000, 0.95, 99, Execution::Parallel).map_err(|e| e.to_string())?;
    let b = analysis::bootstrap_ci(&data, 0.0, 10_000, 0.95, 99, Execution::Sequential).map_err(|e| e.to_string())?;
    check(a == b, || format!("bootstrap not reproducible: {a:?} vs {b:?}"))?;

    // coverage of the true mean over simulated normal samples
    let trials = 1000;
    let hits = par::map_range(Execution::Parallel, trials, |trial| {
        let xs: Vec<f64> = (0..60).map(|i| 5.0 + 2.0 * seed::normal(11, &[&trial.to_string(), &i.to_string()])).collect();
        analysis::bootstrap_ci(&xs, 5.0, 10_000, 0.95, trial as u64, Execution::Sequential)
            .map(|ci| ci.contains(0.0))
            .unwrap_or(false)
    })
    .into_iter()
    .filter(|&h| h)
    .count();
    let coverage = 100.0 * hits as f64 / trials as f64;
    check((coverage - 95.0).abs() <= 2.0, || format!("coverage {coverage:.1}%"))?;
    Ok(format!(
        "6 table values to 3 decimals, {fixture_detail}, undefined on constant input, \
         bootstrap reproducible, coverage {coverage:.1}% over {trials} trials"
    ))
}

// ---------------------------------------------------------------- 11

fn big_m_guard() -> Result<String, String> {
    let rows = ["small", "large"].iter().zip([0.05, 0.36]).map(|(a, p)| {
        (
            "wide".to_string(),
            FeatureRow {
                agent_id: a.to_string(),
                price: p,
                token_count: 5_000,
                entropy: 0.5,
                jury_scores: [("small".to_string(), 5), ("large".to_string(), 5)].into(),
            },
        )
    });
    let inst = TuningInstance::from_rows(vec!["small".into(), "large".into()], None, rows).unwrap();
    // |C| bound for the large agent is 0.36 * 5000 = 1800, so M = 1e4 < 100x
    match build_milp(&inst) {
        Err(Error::BigMTooSmall { task, agent, required, .. }) => {
            check(task == "wide" && agent == "large", || format!("named {task}/{agent}"))?;
            let mut ok = inst.clone();
            ok.big_m = required;
            build_milp(&ok).map_err(|e| format!("M = {required} still rejected: {e}"))?;
            Ok(format!("rejected with BigMTooSmall naming wide/large; accepted at M = {required}"))
        }
        other => Err(format!("expected BigMTooSmall, got {:?}", other.map(|_| ()))),
    }
}

// ---------------------------------------------------------------- 12

fn determinism(s: &Shipped) -> Result<String, String> {
    let bytes = |records: &[AuctionRecord]| -> Vec<u8> {
        records.iter().flat_map(|r| serde_json::to_vec(r).unwrap().into_iter().chain([b'\n'])).collect()
    };
    let mut small = Scenario::shipped();
    small.tasks.count = 60;
    let tasks = small.generate_tasks();
    let a = small.run(&tasks, 3, true, Execution::Parallel).map_err(|e| e.to_string())?;
    let b = small.run(&tasks, 3, true, Execution::Parallel).map_err(|e| e.to_string())?;
    let c = small.run(&tasks, 3, true, Execution::Sequential).map_err(|e| e.to_string())?;
    check(bytes(&a.records) == bytes(&b.records), || "run-auction transcripts differ between executions".into())?;
    check(bytes(&a.records) == bytes(&c.records), || "sequential and parallel transcripts differ".into())?;

    let again = s
        .scenario
        .simulate(SimulationOptions { runs: s.scenario.runs, memory: true, execution: Execution::Parallel })
        .map_err(|e| e.to_string())?;
    for (i, (x, y)) in s.sim.runs.iter().zip(&again.runs).enumerate() {
        check(bytes(&x.records) == bytes(&y.records), || format!("simulate run {i} differs"))?;
    }
    check(
        serde_json::to_vec(&s.sim.report).unwrap() == serde_json::to_vec(&again.report).unwrap(),
        || "simulation reports differ".into(),
    )?;
    let series_ok = s
        .sim
        .runs
        .iter()
        .all(|r| cumulative_selection(&r.records, &s.sim.report.smallest_agent).len() == r.records.len());
    check(series_ok, || "selection series length mismatch".into())?;
    Ok(format!("auction run bitwise stable (2 parallel, 1 sequential); {} simulate runs and report identical", again.runs.len()))
}

fn main() {
    let start = Instant::now();
    let mut report = Report(Vec::new());
    report.add(1, "MILP oracle equivalence", milp_equivalence());
    report.add(2, "selection law", selection_law());
    report.add(3, "refinement monotonicity", refinement_monotonicity());
    report.add(4, "Shapley axioms", shapley_axioms());
    price_schedule(&mut report);
    report.add(6, "retrieval exactness", retrieval_exactness());
    let s = shipped();
    report.add(7, "oracle dominance", oracle_dominance(&s));
    report.add(8, "diagnostics partition", diagnostics_partition(&s));
    report.add(9, "synthetic end-to-end fixture", end_to_end(&s));
    report.add(10, "statistics", statistics(&s));
    report.add(11, "big-M guard", big_m_guard());
    report.add(12, "determinism", determinism(&s));

    let passed = report.0.iter().filter(|l| l.pass).count();
    let known: Vec<u32> = report.0.iter().filter(|l| !l.pass && l.known_deviation).map(|l| l.id).collect();
    let unexpected: Vec<u32> = report.0.iter().filter(|l| !l.pass && !l.known_deviation).map(|l| l.id).collect();
    println!(
        "{passed}/{} criteria passed; known deviations {known:?}; unexpected failures {unexpected:?} ({:.1}s)",
        report.0.len(),
        start.elapsed().as_secs_f64()
    );
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
