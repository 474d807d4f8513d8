//! The auction memory: past auction records, their task embeddings, cosine
//! retrieval, and contrastive pairs for refinement.
//!
//! On disk a bank is two line-delimited JSON files. The record file starts
//! with a header line naming the embedder; the sidecar embedding file holds
//! one `{task_id, embedding}` line per record in the same order.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{AgentId, AuctionRecord, Outcome, ScoredBid, TaskId};
use crate::error::{Error, Result};
use crate::seed;

/// Turns task text into fixed-length vectors.
pub trait Embedder: Send + Sync {
    /// Identifies the embedder and its configuration; banks built with
    /// different tags cannot be mixed.
    fn tag(&self) -> String;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

pub const DEFAULT_EMBEDDING_DIM: usize = 256;

/// Signed feature hashing of lowercase alphanumeric tokens, L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashingEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder {
            dim: DEFAULT_EMBEDDING_DIM,
            seed: 0,
        }
    }
}

impl HashingEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("embedding dimension must be positive".into()));
        }
        Ok(HashingEmbedder { dim, seed })
    }
}

pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

impl Embedder for HashingEmbedder {
    fn tag(&self) -> String {
        format!("hashing-v1/dim={}/seed={}", self.dim, self.seed)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.dim];
        let mut any = false;
        for tok in tokens(text) {
            let h = seed::hash_parts(self.seed, &[&tok]);
            let idx = (h % self.dim as u64) as usize;
            v[idx] += if h >> 63 == 0 { 1.0 } else { -1.0 };
            any = true;
        }
        if !any {
            return Err(Error::EmptyText);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OwnerSide {
    Losing,
    Winning,
}

/// A losing and a winning strategy from one past auction, at least one of
/// them proposed by `owner`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastivePair {
    pub losing_strategy: String,
    pub winning_strategy: String,
    pub source_task_id: TaskId,
    pub owner: AgentId,
    pub owner_side: OwnerSide,
    /// Prompt of the source task, when known; remote agents show it in the
    /// refinement prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_prompt: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub task_id: TaskId,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    embedder_tag: String,
    dim: Option<usize>,
    records: Vec<AuctionRecord>,
    embeddings: Vec<Vec<f64>>,
    positions: BTreeMap<TaskId, usize>,
    /// Keep only the most recent `cap` auctions. Off by default.
    cap: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    embedder_tag: String,
    dim: Option<usize>,
    records: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct EmbeddingLine {
    task_id: TaskId,
    embedding: Vec<f64>,
}

/// Heap entry ordered so the heap top is the worst of the kept hits.
struct Ranked {
    sim: f64,
    pos: usize,
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    // "greater" = ranks later: lower similarity, then later insertion
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .sim
            .total_cmp(&self.sim)
            .then(self.pos.cmp(&other.pos))
    }
}

/// Positions and cosine similarities of the `k` rows most similar to
/// `query`, best first; ties go to the earlier row.
pub fn top_k(query: &[f64], rows: &[Vec<f64>], k: usize) -> Vec<(usize, f64)> {
    if k == 0 {
        return Vec::new();
    }
    let mut heap = BinaryHeap::with_capacity(k + 1);
    for (pos, e) in rows.iter().enumerate() {
        let entry = Ranked { sim: cosine(query, e), pos };
        if heap.len() < k {
            heap.push(entry);
        } else if entry < *heap.peek().expect("heap is full") {
            heap.pop();
            heap.push(entry);
        }
    }
    heap.into_sorted_vec().into_iter().map(|r| (r.pos, r.sim)).collect()
}

impl MemoryBank {
    pub fn new(embedder_tag: impl Into<String>) -> Self {
        MemoryBank {
            embedder_tag: embedder_tag.into(),
            dim: None,
            records: Vec::new(),
            embeddings: Vec::new(),
            positions: BTreeMap::new(),
            cap: None,
        }
    }

    pub fn with_cap(mut self, cap: Option<usize>) -> Self {
        self.cap = cap;
        self.enforce_cap();
        self
    }

    pub fn embedder_tag(&self) -> &str {
        &self.embedder_tag
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[AuctionRecord] {
        &self.records
    }

    pub fn embeddings(&self) -> &[Vec<f64>] {
        &self.embeddings
    }

    pub fn get(&self, task_id: &str) -> Option<&AuctionRecord> {
        self.positions.get(task_id).map(|&i| &self.records[i])
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        match self.dim {
            Some(expected) if expected != got => Err(Error::DimensionMismatch { expected, got }),
            _ => Ok(()),
        }
    }

    pub fn append(&mut self, record: AuctionRecord, embedding: Vec<f64>) -> Result<()> {
        if self.positions.contains_key(&record.task_id) {
            return Err(Error::DuplicateTask(record.task_id));
        }
        self.check_dim(embedding.len())?;
        self.dim = Some(embedding.len());
        self.positions.insert(record.task_id.clone(), self.records.len());
        self.records.push(record);
        self.embeddings.push(embedding);
        self.enforce_cap();
        Ok(())
    }

    fn enforce_cap(&mut self) {
        let Some(cap) = self.cap else { return };
        if self.records.len() <= cap {
            return;
        }
        let drop = self.records.len() - cap;
        self.records.drain(..drop);
        self.embeddings.drain(..drop);
        self.positions = self
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.task_id.clone(), i))
            .collect();
    }

    /// The `min(k, len)` most similar stored tasks, most similar first; ties
    /// go to the earlier auction.
    pub fn retrieve_top_k(&self, query: &[f64], k: usize) -> Result<Vec<Hit>> {
        if k == 0 {
            return Err(Error::Invalid("retrieval k must be at least 1".into()));
        }
        if self.records.is_empty() {
            return Ok(Vec::new());
        }
        self.check_dim(query.len())?;
        Ok(top_k(query, &self.embeddings, k)
            .into_iter()
            .map(|(pos, similarity)| Hit {
                task_id: self.records[pos].task_id.clone(),
                similarity,
            })
            .collect())
    }

    /// Contrastive pairs for `agent` from the retrieved tasks, in retrieval
    /// order.
    ///
    /// Where the agent lost, the pair is its latest bid there (refined if it
    /// refined) against the executed strategy. Where it won, the pair is the
    /// worst-net losing bid against its own winning strategy. Tasks it did
    /// not bid on are skipped.
    pub fn build_pairs(&self, retrieved: &[TaskId], agent: &str) -> Vec<ContrastivePair> {
        retrieved
            .iter()
            .filter_map(|t| self.get(t))
            .filter_map(|r| pair_for(r, agent))
            .collect()
    }
}

fn pair_for(record: &AuctionRecord, agent: &str) -> Option<ContrastivePair> {
    let own = record
        .refined_bid(agent)
        .or_else(|| record.initial_bid(agent))?;
    if record.final_winner == agent {
        let worst = record
            .all_bids()
            .filter(|b| b.outcome == Outcome::Lost)
            .fold(None::<&ScoredBid>, |acc, b| match acc {
                Some(w) if w.score.net >= b.score.net => Some(w),
                _ => Some(b),
            })?;
        Some(ContrastivePair {
            losing_strategy: worst.bid.strategy_text.clone(),
            winning_strategy: record.winning_strategy.clone(),
            source_task_id: record.task_id.clone(),
            owner: agent.to_string(),
            owner_side: OwnerSide::Winning,
            source_prompt: None,
        })
    } else {
        Some(ContrastivePair {
            losing_strategy: own.bid.strategy_text.clone(),
            winning_strategy: record.winning_strategy.clone(),
            source_task_id: record.task_id.clone(),
            owner: agent.to_string(),
            owner_side: OwnerSide::Losing,
            source_prompt: None,
        })
    }
}

/// Sidecar path holding the embeddings of the bank at `path`.
pub fn embeddings_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".embeddings");
    path.with_file_name(name)
}

fn write_json_line<T: Serialize>(w: &mut impl Write, value: &T, path: &Path) -> Result<()> {
    let line = serde_json::to_string(value).expect("bank entries serialize");
    writeln!(w, "{line}").map_err(|e| Error::io(path, e))
}

impl MemoryBank {
    pub fn save(&self, path: &Path) -> Result<()> {
        let side = embeddings_path(path);
        let mut rec = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        let mut emb = BufWriter::new(File::create(&side).map_err(|e| Error::io(&side, e))?);
        let header = Header {
            embedder_tag: self.embedder_tag.clone(),
            dim: self.dim,
            records: self.records.len(),
        };
        write_json_line(&mut rec, &header, path)?;
        for (r, e) in self.records.iter().zip(&self.embeddings) {
            write_json_line(&mut rec, r, path)?;
            let line = EmbeddingLine {
                task_id: r.task_id.clone(),
                embedding: e.clone(),
            };
            write_json_line(&mut emb, &line, &side)?;
        }
        rec.flush().map_err(|e| Error::io(path, e))?;
        emb.flush().map_err(|e| Error::io(&side, e))
    }

    /// Loads a bank, rejecting it unless it was built with `expected_tag`.
    pub fn load(path: &Path, expected_tag: &str) -> Result<Self> {
        let side = embeddings_path(path);
        let mut rec_lines = read_lines(path)?.into_iter();
        let (first_no, first) = rec_lines.next().ok_or_else(|| Error::Parse {
            what: "memory bank",
            location: path.display().to_string(),
            message: "missing header line".into(),
        })?;
        let header: Header = parse_line(&first, path, first_no)?;
        if header.embedder_tag != expected_tag {
            return Err(Error::EmbedderMismatch {
                expected: expected_tag.to_string(),
                found: header.embedder_tag,
            });
        }
        let mut bank = MemoryBank::new(header.embedder_tag);
        let mut emb_lines = read_lines(&side)?.into_iter();
        for (no, line) in rec_lines {
            let record: AuctionRecord = parse_line(&line, path, no)?;
            let (eno, eline) = emb_lines.next().ok_or_else(|| Error::Parse {
                what: "memory bank",
                location: side.display().to_string(),
                message: format!("no embedding for task {}", record.task_id),
            })?;
            let e: EmbeddingLine = parse_line(&eline, &side, eno)?;
            if e.task_id != record.task_id {
                return Err(Error::Parse {
                    what: "memory bank",
                    location: format!("{}:{eno}", side.display()),
                    message: format!("embedding for {} where {} was expected", e.task_id, record.task_id),
                });
            }
            bank.append(record, e.embedding)?;
        }
        if emb_lines.next().is_some() {
            return Err(Error::Parse {
                what: "memory bank",
                location: side.display().to_string(),
                message: "more embeddings than records".into(),
            });
        }
        Ok(bank)
    }
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn parse_line<T: for<'de> Deserialize<'de>>(line: &str, path: &Path, no: usize) -> Result<T> {
    serde_json::from_str(line).map_err(|e| Error::Parse {
        what: "memory bank",
        location: format!("{}:{no}", path.display()),
        message: e.to_string(),
    })
}

/// Append-only on-disk log that mirrors a bank as it grows, flushed after
/// every auction.
pub struct BankLog {
    path: PathBuf,
    side: PathBuf,
    records: BufWriter<File>,
    embeddings: BufWriter<File>,
}

impl BankLog {
    /// Starts a fresh log holding the current contents of `bank`.
    pub fn create(path: &Path, bank: &MemoryBank) -> Result<Self> {
        bank.save(path)?;
        let side = embeddings_path(path);
        let open = |p: &Path| {
            OpenOptions::new()
                .append(true)
                .open(p)
                .map(BufWriter::new)
                .map_err(|e| Error::io(p, e))
        };
        Ok(BankLog {
            records: open(path)?,
            embeddings: open(&side)?,
            path: path.to_path_buf(),
            side,
        })
    }

    pub fn append(&mut self, record: &AuctionRecord, embedding: &[f64]) -> Result<()> {
        write_json_line(&mut self.records, record, &self.path)?;
        let line = EmbeddingLine {
            task_id: record.task_id.clone(),
            embedding: embedding.to_vec(),
        };
        write_json_line(&mut self.embeddings, &line, &self.side)?;
        self.records.flush().map_err(|e| Error::io(&self.path, e))?;
        self.embeddings.flush().map_err(|e| Error::io(&self.side, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Bid, CostValue};
    use proptest::prelude::*;

    fn scored(agent: &str, text: &str, net: f64, won: bool, refined: bool) -> ScoredBid {
        ScoredBid {
            bid: Bid {
                agent_id: agent.into(),
                strategy_text: text.into(),
                token_count: 10,
                entropy: 0.5,
                jury_scores: BTreeMap::new(),
                refined,
                overhead_tokens: 0,
                token_count_estimated: false,
            },
            score: CostValue::new(net, 0.0),
            outcome: if won { Outcome::Won } else { Outcome::Lost },
        }
    }

    fn record(task: &str, initial: Vec<ScoredBid>, refined: Vec<ScoredBid>, prov: &str) -> AuctionRecord {
        let w = initial
            .iter()
            .chain(&refined)
            .find(|b| b.outcome == Outcome::Won)
            .unwrap()
            .clone();
        AuctionRecord {
            task_id: task.into(),
            sequence_index: 0,
            initial_bids: initial,
            refined_bids: refined,
            provisional_winner: prov.into(),
            final_winner: w.bid.agent_id,
            winning_strategy: w.bid.strategy_text,
            execution: None,
            skipped_refinements: BTreeMap::new(),
        }
    }

    fn simple(task: &str) -> AuctionRecord {
        record(task, vec![scored("a", "plan", 1.0, true, false)], vec![], "a")
    }

    #[test]
    fn hashing_embedder_basics() {
        let e = HashingEmbedder::default();
        let x = e.embed("Find the population of Lyon in 1900").unwrap();
        assert_eq!(x, e.embed("Find the population of Lyon in 1900").unwrap());
        assert_eq!(x.len(), 256);
        assert!((cosine(&x, &x) - 1.0).abs() < 1e-9);
        assert!(matches!(e.embed("  ... "), Err(Error::EmptyText)));
        assert!(e.tag().contains("dim=256"));
    }

    #[test]
    fn disjoint_vocabularies_are_nearly_orthogonal() {
        let e = HashingEmbedder::default();
        let a: String = (0..150).map(|i| format!("alpha{i} ")).collect();
        let b: String = (0..150).map(|i| format!("beta{i} ")).collect();
        let c = cosine(&e.embed(&a).unwrap(), &e.embed(&b).unwrap());
        assert!(c.abs() < 0.2, "cosine {c}");
    }

    #[test]
    fn append_and_duplicates() {
        let mut bank = MemoryBank::new("t");
        bank.append(simple("t1"), vec![1.0, 0.0]).unwrap();
        assert_eq!(bank.len(), 1);
        assert!(matches!(
            bank.append(simple("t1"), vec![1.0, 0.0]),
            Err(Error::DuplicateTask(_))
        ));
        assert!(matches!(
            bank.append(simple("t2"), vec![1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert_eq!(bank.records()[0], simple("t1"));
    }

    #[test]
    fn retrieval_examples() {
        let mut bank = MemoryBank::new("t");
        assert!(bank.retrieve_top_k(&[1.0, 0.0], 8).unwrap().is_empty());
        bank.append(simple("x"), vec![0.0, 1.0]).unwrap();
        bank.append(simple("y"), vec![1.0, 0.0]).unwrap();
        bank.append(simple("z"), vec![1.0, 0.0]).unwrap();
        let hits = bank.retrieve_top_k(&[1.0, 0.0], 2).unwrap();
        assert_eq!(hits[0].task_id, "y");
        assert!((hits[0].similarity - 1.0).abs() < 1e-12);
        assert_eq!(hits[1].task_id, "z");
        assert_eq!(bank.retrieve_top_k(&[1.0, 0.0], 8).unwrap().len(), 3);
        assert!(bank.retrieve_top_k(&[1.0], 1).is_err());
        assert!(bank.retrieve_top_k(&[1.0, 0.0], 0).is_err());
    }

    #[test]
    fn pairs_for_loser_winner_and_absent() {
        // b provisional, a refines and wins; c also bid
        let r = record(
            "t1",
            vec![
                scored("a", "a-initial", 3.0, false, false),
                scored("b", "b-plan", 2.0, false, false),
                scored("c", "c-plan", 5.0, false, false),
            ],
            vec![scored("a", "a-refined", 1.0, true, true)],
            "b",
        );
        let mut bank = MemoryBank::new("t");
        bank.append(r, vec![1.0]).unwrap();
        let ids = vec!["t1".to_string()];

        let b = bank.build_pairs(&ids, "b");
        assert_eq!(b[0].losing_strategy, "b-plan");
        assert_eq!(b[0].winning_strategy, "a-refined");
        assert_eq!(b[0].owner_side, OwnerSide::Losing);

        let a = bank.build_pairs(&ids, "a");
        assert_eq!(a[0].losing_strategy, "c-plan");
        assert_eq!(a[0].winning_strategy, "a-refined");
        assert_eq!(a[0].owner_side, OwnerSide::Winning);

        assert!(bank.build_pairs(&ids, "d").is_empty());
    }

    #[test]
    fn lone_winner_yields_no_pair() {
        let mut bank = MemoryBank::new("t");
        bank.append(simple("t1"), vec![1.0]).unwrap();
        assert!(bank.build_pairs(&["t1".to_string()], "a").is_empty());
    }

    #[test]
    fn cap_keeps_most_recent() {
        let mut bank = MemoryBank::new("t").with_cap(Some(2));
        for t in ["a", "b", "c"] {
            bank.append(simple(t), vec![1.0]).unwrap();
        }
        let ids: Vec<&str> = bank.records().iter().map(|r| r.task_id.as_str()).collect();
        assert_eq!(ids, ["b", "c"]);
        assert!(bank.get("a").is_none());
        assert_eq!(bank.get("c").unwrap().task_id, "c");
    }

    #[test]
    fn save_load_round_trip_and_tag_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.jsonl");
        let mut bank = MemoryBank::new("emb-a");
        for (i, t) in ["t1", "t2", "t3"].iter().enumerate() {
            bank.append(simple(t), vec![0.1 * i as f64, 1.0 / 3.0]).unwrap();
        }
        bank.save(&path).unwrap();
        assert_eq!(MemoryBank::load(&path, "emb-a").unwrap(), bank);
        assert!(matches!(
            MemoryBank::load(&path, "emb-b"),
            Err(Error::EmbedderMismatch { .. })
        ));
    }

    #[test]
    fn log_matches_save() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.jsonl");
        let mut bank = MemoryBank::new("emb");
        bank.append(simple("t0"), vec![1.0, 2.0]).unwrap();
        let mut log = BankLog::create(&path, &bank).unwrap();
        for t in ["t1", "t2"] {
            let e = vec![0.5, 0.25];
            bank.append(simple(t), e.clone()).unwrap();
            log.append(bank.get(t).unwrap(), &e).unwrap();
        }
        let loaded = MemoryBank::load(&path, "emb").unwrap();
        assert_eq!(loaded.records(), bank.records());
        assert_eq!(loaded.embeddings(), bank.embeddings());
    }

    proptest! {
        #[test]
        fn retrieval_matches_full_sort(
            raw in proptest::collection::vec(proptest::collection::vec(-3i8..=3, 3), 0..60),
            q in proptest::collection::vec(-3i8..=3, 3),
            k in 1usize..12,
        ) {
            let mut bank = MemoryBank::new("t");
            for (i, v) in raw.iter().enumerate() {
                bank.append(simple(&format!("t{i}")), v.iter().map(|&x| x as f64).collect()).unwrap();
            }
            let q: Vec<f64> = q.iter().map(|&x| x as f64).collect();
            let got: Vec<String> = bank.retrieve_top_k(&q, k).unwrap().into_iter().map(|h| h.task_id).collect();
            let mut all: Vec<(f64, usize)> = bank.embeddings().iter().map(|e| cosine(&q, e)).zip(0..).collect();
            all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let want: Vec<String> = all.iter().take(k).map(|&(_, i)| format!("t{i}")).collect();
            prop_assert_eq!(got, want);
        }
    }
}
