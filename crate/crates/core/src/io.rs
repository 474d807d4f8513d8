//! File formats: JSON and JSONL inputs, transcripts and CSV reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::{BinnedReport, ConfusionMatrix};
use crate::domain::{AgentId, AuctionRecord, Domain, ScoringWeights, Task, TaskId};
use crate::error::{Error, Result};
use crate::gateway::pool::PoolSpec;
use crate::scoring::FeatureRow;

pub fn read_json<T: DeserializeOwned>(path: &Path, what: &'static str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        what,
        location: format!("{}:{}:{}", path.display(), e.line(), e.column()),
        message: e.to_string(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("values serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path, what: &'static str) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            what,
            location: format!("{}:{}", path.display(), i + 1),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, items: impl IntoIterator<Item = &'a T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).expect("values serialize");
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Tasks as JSONL; ids must be unique.
pub fn load_tasks(path: &Path) -> Result<Vec<Task>> {
    let tasks: Vec<Task> = read_jsonl(path, "task file")?;
    let mut seen = BTreeSet::new();
    for t in &tasks {
        if !seen.insert(t.id.as_str()) {
            return Err(Error::DuplicateTask(t.id.clone()));
        }
        if let Some(tau) = t.tau_minutes {
            if !(tau > 0.0) {
                return Err(Error::NonPositiveTau(tau));
            }
        }
    }
    Ok(tasks)
}

/// Pool description as JSON. A relative prompt directory resolves against
/// the pool file's directory.
pub fn load_pool(path: &Path) -> Result<PoolSpec> {
    let mut spec: PoolSpec = read_json(path, "pool file")?;
    if let Some(dir) = &spec.prompts_dir {
        if dir.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            spec.prompts_dir = Some(base.join(dir));
        }
    }
    spec.profiles()?;
    Ok(spec)
}

pub fn load_weights(path: &Path) -> Result<ScoringWeights> {
    read_json(path, "weight file")
}

/// One bid's features as stored for weight tuning. The price may be left
/// out and filled from the pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub task_id: TaskId,
    pub agent_id: AgentId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<f64>,
    pub token_count: u64,
    pub entropy: f64,
    pub jury_scores: BTreeMap<AgentId, i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
}

impl FeatureRecord {
    pub fn to_row(&self, prices: &BTreeMap<AgentId, f64>) -> Result<FeatureRow> {
        let price = match self.price {
            Some(p) => p,
            None => *prices.get(&self.agent_id).ok_or_else(|| Error::UnknownAgent(self.agent_id.clone()))?,
        };
        Ok(FeatureRow {
            agent_id: self.agent_id.clone(),
            price,
            token_count: self.token_count,
            entropy: self.entropy,
            jury_scores: self.jury_scores.clone(),
        })
    }
}

/// Initial-bid features of every auction in a transcript.
pub fn features_from_records(records: &[AuctionRecord], tasks: &BTreeMap<TaskId, Task>, prices: &BTreeMap<AgentId, f64>) -> Vec<FeatureRecord> {
    records
        .iter()
        .flat_map(|r| {
            r.initial_bids.iter().map(move |b| FeatureRecord {
                task_id: r.task_id.clone(),
                agent_id: b.bid.agent_id.clone(),
                price: prices.get(&b.bid.agent_id).copied(),
                token_count: b.bid.token_count,
                entropy: b.bid.entropy,
                jury_scores: b.bid.jury_scores.clone(),
                domain: tasks.get(&r.task_id).map(|t| t.domain),
            })
        })
        .collect()
}

pub fn load_transcript(path: &Path) -> Result<Vec<AuctionRecord>> {
    let records: Vec<AuctionRecord> = read_jsonl(path, "transcript")?;
    for r in &records {
        r.validate()?;
    }
    Ok(records)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Invalid(format!("writing {}: {other:?}", path.display())),
    }
}

/// Per-bin table: one row per bin plus an `overall` row, with a selection
/// share column per agent.
pub fn write_binned_csv(path: &Path, report: &BinnedReport, agents: &[AgentId]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["bin", "tasks", "pass_at_1", "dollars_per_mtok", "mean_trace_tokens"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    header.extend(agents.iter().map(|a| format!("share_{a}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    let rows = report
        .order
        .iter()
        .map(|l| (l.as_str(), &report.bins[l]))
        .chain(std::iter::once(("overall", &report.overall)));
    for (label, m) in rows {
        let mut rec = vec![
            label.to_string(),
            m.tasks.to_string(),
            m.pass_at_1.map_or(String::new(), |p| format!("{p:.2}")),
            format!("{:.4}", m.dollars_per_mtok),
            format!("{:.1}", m.mean_trace_tokens),
        ];
        rec.extend(agents.iter().map(|a| format!("{:.2}", m.selection_shares.get(a).copied().unwrap_or(0.0))));
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_confusion_csv(path: &Path, m: &ConfusionMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["chosen".to_string()];
    header.extend(m.cols.iter().cloned());
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (agent, row) in m.rows.iter().zip(&m.percent) {
        let mut rec = vec![agent.clone()];
        rec.extend(row.iter().map(|p| format!("{p:.2}")));
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A single numeric series, one `index,value` row per element.
pub fn write_series_csv(path: &Path, name: &str, series: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["task", name]).map_err(|e| csv_error(path, e))?;
    for (i, v) in series.iter().enumerate() {
        w.write_record([(i + 1).to_string(), format!("{v:.6}")])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
