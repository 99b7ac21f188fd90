//! Per-block and per-transaction metrics over simulated time.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ledger::TxClass;

use super::sim::Simulation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockMetric {
    pub height: u64,
    pub proposer: u32,
    pub view: u64,
    pub tx_count: usize,
    pub size_bytes: usize,
    pub sig_txs: usize,
    pub gsig_txs: usize,
    pub tsig_txs: usize,
    pub proposed_at_us: u64,
    pub committed_at_us: u64,
    /// From proposal until the reference replica commits.
    pub consensus_time_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxMetric {
    pub hash: String,
    pub class: TxClass,
    pub height: u64,
    pub issued_at_us: u64,
    pub committed_at_us: u64,
    pub latency_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class: TxClass,
    pub committed: usize,
    pub tps: f64,
    pub mean_latency_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: u32,
    pub f: u32,
    pub blocks: Vec<BlockMetric>,
    pub txs: Vec<TxMetric>,
    pub by_class: Vec<ClassSummary>,
    pub committed_txs: usize,
    pub pending_txs: usize,
    /// From the first issued transaction to the last commit that included
    /// one; zero when nothing committed.
    pub duration_us: u64,
    pub tps: f64,
    pub mean_consensus_time_us: f64,
    pub mean_block_interval_us: f64,
    pub messages_sent: u64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    /// Per-block time series in simulated microseconds.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "height,proposer,view,tx_count,size_bytes,sig_txs,gsig_txs,tsig_txs,proposed_at_us,committed_at_us,consensus_time_us\n",
        );
        for b in &self.blocks {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                b.height,
                b.proposer,
                b.view,
                b.tx_count,
                b.size_bytes,
                b.sig_txs,
                b.gsig_txs,
                b.tsig_txs,
                b.proposed_at_us,
                b.committed_at_us,
                b.consensus_time_us
            )
            .expect("string write");
        }
        out
    }

    pub fn class(&self, class: TxClass) -> Option<&ClassSummary> {
        self.by_class.iter().find(|c| c.class == class)
    }

    /// Mean size of blocks that carry at least one transaction.
    pub fn mean_loaded_block_bytes(&self) -> f64 {
        mean(self.blocks.iter().filter(|b| b.tx_count > 0).map(|b| b.size_bytes as f64))
    }
}

/// Builds the report from the reference replica's log.
pub fn measure(sim: &Simulation) -> MetricsReport {
    let observer = sim.observer();
    let commit_time: HashMap<u64, u64> = sim
        .commits
        .iter()
        .filter(|c| c.validator == observer.get())
        .map(|c| (c.height, c.time_us))
        .collect();
    let log = sim.log(observer);
    let mut blocks = Vec::with_capacity(log.len());
    let mut txs = Vec::new();
    for b in &log {
        let h = b.header.height;
        let committed_at = commit_time.get(&h).copied().unwrap_or(0);
        let proposed_at = sim
            .proposed_at
            .get(&b.hash())
            .copied()
            .unwrap_or(b.header.time_us);
        let count = |c: TxClass| b.txs.iter().filter(|t| t.class() == c).count();
        blocks.push(BlockMetric {
            height: h,
            proposer: b.header.proposer.get(),
            view: b.header.view,
            tx_count: b.txs.len(),
            size_bytes: b.size_bytes(),
            sig_txs: count(TxClass::TxSig),
            gsig_txs: count(TxClass::TxGsig),
            tsig_txs: count(TxClass::TxTsig),
            proposed_at_us: proposed_at,
            committed_at_us: committed_at,
            consensus_time_us: committed_at.saturating_sub(proposed_at),
        });
        for tx in &b.txs {
            let hash = tx.hash();
            let Some(&issued) = sim.issued.get(&hash) else {
                continue;
            };
            txs.push(TxMetric {
                hash: hash.to_hex(),
                class: tx.class(),
                height: h,
                issued_at_us: issued,
                committed_at_us: committed_at,
                latency_us: committed_at.saturating_sub(issued),
            });
        }
    }
    let first_issue = sim.issued.values().min().copied().unwrap_or(0);
    let last_commit = txs.iter().map(|t| t.committed_at_us).max().unwrap_or(first_issue);
    let duration_us = last_commit.saturating_sub(first_issue);
    let per_sec = |count: usize| {
        if duration_us == 0 {
            0.0
        } else {
            count as f64 * 1e6 / duration_us as f64
        }
    };
    let mut by_class_map: BTreeMap<TxClass, Vec<&TxMetric>> = BTreeMap::new();
    for t in &txs {
        by_class_map.entry(t.class).or_default().push(t);
    }
    let by_class = by_class_map
        .into_iter()
        .map(|(class, ts)| ClassSummary {
            class,
            committed: ts.len(),
            tps: per_sec(ts.len()),
            mean_latency_us: mean(ts.iter().map(|t| t.latency_us as f64)),
        })
        .collect();
    let intervals: Vec<f64> = log
        .windows(2)
        .map(|w| w[1].header.time_us as f64 - w[0].header.time_us as f64)
        .collect();
    MetricsReport {
        n: sim.config().n,
        f: sim.config().f,
        committed_txs: txs.len(),
        pending_txs: sim.issued.len() - txs.len(),
        tps: per_sec(txs.len()),
        duration_us,
        mean_consensus_time_us: mean(blocks.iter().map(|b| b.consensus_time_us as f64)),
        mean_block_interval_us: mean(intervals.into_iter()),
        messages_sent: sim.messages_sent(),
        blocks,
        txs,
        by_class,
    }
}
