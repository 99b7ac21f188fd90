//! Queries over an exported chain: a transaction, a user or a height.

use serde::Serialize;

use crate::ledger::{Block, Transaction, TransferPurpose, TxHash};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Query {
    Tx(TxHash),
    Height(u64),
    User(String),
}

impl Query {
    /// A 64-digit hex string is a transaction hash, a number is a height,
    /// anything else a user id.
    pub fn parse(s: &str) -> Self {
        let s = s.trim();
        if let Some(h) = s.strip_prefix("height:").and_then(|h| h.parse().ok()) {
            return Query::Height(h);
        }
        if let Some(h) = TxHash::from_hex(s) {
            return Query::Tx(h);
        }
        if let Ok(h) = s.parse() {
            return Query::Height(h);
        }
        Query::User(s.strip_prefix("user:").unwrap_or(s).to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrailEntry {
    pub stage: &'static str,
    pub height: u64,
    pub tx: String,
    pub summary: String,
}

/// The life of one submission as recorded on chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PaperTrail {
    pub submit: String,
    pub field: String,
    /// Known only once the paper is opened.
    pub author: Option<String>,
    pub entries: Vec<TrailEntry>,
}

impl PaperTrail {
    pub fn stages(&self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        for e in &self.entries {
            if out.last() != Some(&e.stage) {
                out.push(e.stage);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TxSummary {
    pub height: u64,
    pub kind: &'static str,
    pub hash: String,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Inspection {
    Paper(PaperTrail),
    Tx(TxSummary),
    Block {
        height: u64,
        hash: String,
        proposer: u32,
        view: u64,
        txs: Vec<TxSummary>,
    },
    User {
        user_id: String,
        papers: Vec<PaperTrail>,
        txs: Vec<TxSummary>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("not found: {0}")]
pub struct NotFound(pub String);

/// The submission a transaction belongs to, if any.
fn paper_of(tx: &Transaction) -> Option<TxHash> {
    match tx {
        Transaction::Submit(_) => Some(tx.hash()),
        Transaction::Distribute(d) => Some(d.submit),
        Transaction::Review(r) => Some(r.submit),
        Transaction::Open(o) => Some(o.submit),
        Transaction::Transfer(t) => match t.purpose {
            TransferPurpose::ReviewFee { submit }
            | TransferPurpose::Incentive { submit }
            | TransferPurpose::DepositRefund { submit } => Some(submit),
            _ => None,
        },
    }
}

fn describe(tx: &Transaction) -> (&'static str, String) {
    match tx {
        Transaction::Submit(s) => ("submit", format!("field {}, paper {}", s.field, hex::encode(&s.paper.content_hash[..8]))),
        Transaction::Distribute(d) => (
            "distribute",
            format!("{} ciphertexts, endtime {}, by {}", d.ciphertexts.len(), d.endtime, d.sender),
        ),
        Transaction::Review(r) => ("review", format!("{} scored {}: {}", r.reviewer_id, r.score, r.comment)),
        Transaction::Open(o) => (
            "open",
            format!("author {}, {:?}, reviewers {}", o.user_id, o.result, o.reviewer_ids.join(",")),
        ),
        Transaction::Transfer(t) => {
            let stage = if paper_of(tx).is_some() { "reward" } else { "transfer" };
            (stage, format!("{} {} to {} ({})", t.amount, t.purpose.name(), t.user_id, t.sender))
        }
    }
}

fn summary(height: u64, tx: &Transaction) -> TxSummary {
    let (_, s) = describe(tx);
    TxSummary {
        height,
        kind: tx.kind(),
        hash: tx.hash().to_hex(),
        summary: s,
    }
}

fn txs(blocks: &[Block]) -> impl Iterator<Item = (u64, &Transaction)> {
    blocks.iter().flat_map(|b| b.txs.iter().map(move |t| (b.header.height, t)))
}

pub fn paper_trail(blocks: &[Block], submit: &TxHash) -> Option<PaperTrail> {
    let mut field = None;
    let mut author = None;
    let mut entries = Vec::new();
    for (height, tx) in txs(blocks) {
        if paper_of(tx).as_ref() != Some(submit) {
            continue;
        }
        match tx {
            Transaction::Submit(s) => field = Some(s.field.clone()),
            Transaction::Open(o) => author = Some(o.user_id.clone()),
            _ => {}
        }
        let (stage, summary) = describe(tx);
        entries.push(TrailEntry {
            stage,
            height,
            tx: tx.hash().to_hex(),
            summary,
        });
    }
    Some(PaperTrail {
        submit: submit.to_hex(),
        field: field?,
        author,
        entries,
    })
}

pub fn inspect(blocks: &[Block], query: &Query) -> Result<Inspection, NotFound> {
    match query {
        Query::Tx(h) => {
            let (height, tx) = txs(blocks)
                .find(|(_, t)| t.hash() == *h)
                .ok_or_else(|| NotFound(format!("transaction {}", h.to_hex())))?;
            match paper_of(tx).and_then(|p| paper_trail(blocks, &p)) {
                Some(trail) => Ok(Inspection::Paper(trail)),
                None => Ok(Inspection::Tx(summary(height, tx))),
            }
        }
        Query::Height(h) => {
            let b = blocks
                .iter()
                .find(|b| b.header.height == *h)
                .ok_or_else(|| NotFound(format!("height {h}")))?;
            Ok(Inspection::Block {
                height: *h,
                hash: b.hash().to_hex(),
                proposer: b.header.proposer.get(),
                view: b.header.view,
                txs: b.txs.iter().map(|t| summary(*h, t)).collect(),
            })
        }
        Query::User(u) => {
            let mut papers: Vec<TxHash> = Vec::new();
            let mut own = Vec::new();
            for (height, tx) in txs(blocks) {
                let involved = match tx {
                    Transaction::Open(o) => o.user_id == *u || o.reviewer_ids.contains(u),
                    Transaction::Review(r) => r.reviewer_id == *u,
                    Transaction::Transfer(t) => t.user_id == *u,
                    _ => false,
                };
                if !involved {
                    continue;
                }
                match paper_of(tx) {
                    Some(p) if !papers.contains(&p) => papers.push(p),
                    Some(_) => {}
                    None => own.push(summary(height, tx)),
                }
            }
            if papers.is_empty() && own.is_empty() {
                return Err(NotFound(format!("user {u}")));
            }
            Ok(Inspection::User {
                user_id: u.clone(),
                papers: papers.iter().filter_map(|p| paper_trail(blocks, p)).collect(),
                txs: own,
            })
        }
    }
}

/// Plain-text rendering for terminals.
pub fn render_text(i: &Inspection) -> String {
    let trail = |t: &PaperTrail, out: &mut String| {
        out.push_str(&format!(
            "paper {}\n  field:  {}\n  author: {}\n",
            t.submit,
            t.field,
            t.author.as_deref().unwrap_or("(not opened)")
        ));
        for e in &t.entries {
            out.push_str(&format!("  [{:>4}] {:<10} {}  {}\n", e.height, e.stage, &e.tx[..16], e.summary));
        }
    };
    let mut out = String::new();
    match i {
        Inspection::Paper(t) => trail(t, &mut out),
        Inspection::Tx(s) => out.push_str(&format!("[{:>4}] {:<10} {}  {}\n", s.height, s.kind, s.hash, s.summary)),
        Inspection::Block {
            height,
            hash,
            proposer,
            view,
            txs,
        } => {
            out.push_str(&format!("block {height} {hash}\n  proposer {proposer}, view {view}, {} txs\n", txs.len()));
            for s in txs {
                out.push_str(&format!("  {:<10} {}  {}\n", s.kind, &s.hash[..16], s.summary));
            }
        }
        Inspection::User { user_id, papers, txs } => {
            out.push_str(&format!("user {user_id}\n"));
            for s in txs {
                out.push_str(&format!("  [{:>4}] {:<10} {}  {}\n", s.height, s.kind, &s.hash[..16], s.summary));
            }
            for t in papers {
                trail(t, &mut out);
            }
        }
    }
    out
}
