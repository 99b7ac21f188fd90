//! Discrete-event PBFT simulation.
//!
//! Each height runs pre-prepare, prepare and commit among `n = 3f+1`
//! replicas. The primary of `(height, view)` is `(height + view) mod n + 1`,
//! so leadership rotates per block and a view change hands the current
//! height to the next replica. A view change carries the sender's prepared
//! block, and the new primary re-proposes the highest prepared one.
//! Replicas that fall behind fetch committed blocks from peers and check
//! their certificates.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::ledger::{
    commit_message, Block, BlockHash, Certificate, ChainState, Transaction, TxHash, Vote,
};
use crate::suite::{self, KeyPair, PlainSignature};
use crate::vss::ShareIndex;

use super::network::{Behavior, CostModel, FaultPlan, NetworkModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: u32,
    pub f: u32,
    pub seed: u64,
    #[serde(default)]
    pub network: NetworkModel,
    #[serde(default)]
    pub faults: FaultPlan,
    #[serde(default)]
    pub costs: CostModel,
    #[serde(default = "defaults::block_interval")]
    pub block_interval_us: u64,
    #[serde(default = "defaults::view_timeout")]
    pub view_timeout_us: u64,
    #[serde(default = "defaults::max_block_txs")]
    pub max_block_txs: usize,
    #[serde(default = "defaults::max_block_bytes")]
    pub max_block_bytes: usize,
    /// Modelled verification time a proposer packs into one block. Keeps
    /// building plus validating a block inside the view timeout; the first
    /// transaction is always taken.
    #[serde(default = "defaults::max_block_verify_us")]
    pub max_block_verify_us: u64,
}

mod defaults {
    pub fn block_interval() -> u64 {
        100_000
    }
    pub fn view_timeout() -> u64 {
        300_000
    }
    pub fn max_block_txs() -> usize {
        500
    }
    pub fn max_block_bytes() -> usize {
        1 << 20
    }
    pub fn max_block_verify_us() -> u64 {
        100_000
    }
}

impl SimConfig {
    pub fn new(f: u32, seed: u64) -> Self {
        Self {
            n: 3 * f + 1,
            f,
            seed,
            network: NetworkModel::default(),
            faults: FaultPlan::none(),
            costs: CostModel::default(),
            block_interval_us: defaults::block_interval(),
            view_timeout_us: defaults::view_timeout(),
            max_block_txs: defaults::max_block_txs(),
            max_block_bytes: defaults::max_block_bytes(),
            max_block_verify_us: defaults::max_block_verify_us(),
        }
    }

    /// Rejects configurations outside the PBFT fault model.
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n != 3 * self.f + 1 {
            return Err(SimError::ConfigInvalid(format!(
                "n = {} but 3f+1 = {}",
                self.n,
                3 * self.f + 1
            )));
        }
        if let Some(&i) = self.faults.byzantine.keys().find(|&&i| i == 0 || i > self.n) {
            return Err(SimError::ConfigInvalid(format!("byzantine index {i} out of range")));
        }
        let byz = self.faults.byzantine.len() as u32;
        if byz > self.f {
            return Err(SimError::SafetyViolationPossible { byzantine: byz, f: self.f });
        }
        if self.network.drop_rate < 0.0 || self.network.drop_rate >= 1.0 {
            return Err(SimError::ConfigInvalid("drop rate must be in [0, 1)".into()));
        }
        if self.block_interval_us == 0
            || self.view_timeout_us == 0
            || self.max_block_txs == 0
            || self.max_block_verify_us == 0
        {
            return Err(SimError::ConfigInvalid("intervals and block limits must be positive".into()));
        }
        Ok(())
    }

    pub fn quorum(&self) -> usize {
        2 * self.f as usize + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("{byzantine} byzantine validators exceed f = {f}; safety is not guaranteed")]
    SafetyViolationPossible { byzantine: u32, f: u32 },
    #[error("expected {expected} validator keys, got {got}")]
    KeyCount { expected: usize, got: usize },
}

#[derive(Debug, Clone)]
enum Msg {
    Tx(Arc<Transaction>),
    PrePrepare { view: u64, block: Arc<Block> },
    Prepare { height: u64, view: u64, hash: BlockHash },
    Commit { height: u64, view: u64, hash: BlockHash, vote: Vote },
    ViewChange { height: u64, new_view: u64, prepared: Option<(u64, Arc<Block>)> },
    SyncRequest { height: u64, hash: Option<BlockHash> },
    SyncReply { blocks: Vec<Arc<Block>>, candidate: Option<Arc<Block>> },
}

impl Msg {
    fn size(&self) -> usize {
        match self {
            Msg::Tx(tx) => tx.encoded_len(),
            Msg::PrePrepare { block, .. } => block.size_bytes() + 8,
            Msg::Prepare { .. } => 56,
            Msg::Commit { .. } => 56 + 4 + suite::SIGNATURE_LEN,
            Msg::ViewChange { prepared, .. } => 24 + prepared.as_ref().map_or(0, |(_, b)| b.size_bytes()),
            Msg::SyncRequest { .. } => 48,
            Msg::SyncReply { blocks, candidate } => {
                blocks.iter().map(|b| b.size_bytes()).sum::<usize>()
                    + candidate.as_ref().map_or(0, |b| b.size_bytes())
            }
        }
    }

    fn height(&self) -> Option<u64> {
        match self {
            Msg::PrePrepare { block, .. } => Some(block.header.height),
            Msg::Prepare { height, .. } | Msg::Commit { height, .. } | Msg::ViewChange { height, .. } => {
                Some(*height)
            }
            _ => None,
        }
    }
}

#[derive(Debug)]
enum Event {
    Deliver { to: ShareIndex, from: Option<ShareIndex>, msg: Msg },
    Timeout { to: ShareIndex, height: u64, view: u64 },
    Propose { to: ShareIndex, height: u64, view: u64 },
}

/// One committed block as seen by one replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub validator: u32,
    pub height: u64,
    pub time_us: u64,
}

#[derive(Default)]
struct HeightRound {
    /// Accepted proposal per view.
    proposals: BTreeMap<u64, (Arc<Block>, ChainState)>,
    prepares: HashMap<(u64, BlockHash), BTreeSet<ShareIndex>>,
    commits: HashMap<(u64, BlockHash), BTreeMap<ShareIndex, Vote>>,
    sent_prepare: BTreeSet<u64>,
    sent_commit: BTreeSet<u64>,
    prepared: Option<(u64, Arc<Block>)>,
    view_changes: BTreeMap<u64, BTreeMap<ShareIndex, Option<(u64, Arc<Block>)>>>,
    sent_view_change: BTreeSet<u64>,
    proposed_views: BTreeSet<u64>,
    /// Blocks obtained by sync for a digest that already has commit votes.
    fetched: Vec<(Arc<Block>, ChainState)>,
    sync_requested: bool,
}

struct Replica {
    index: ShareIndex,
    key: KeyPair,
    behavior: Option<Behavior>,
    state: ChainState,
    log: Vec<Arc<Block>>,
    view: u64,
    round: HeightRound,
    mempool: VecDeque<Arc<Transaction>>,
    pooled: HashSet<TxHash>,
    future: BTreeMap<u64, Vec<(ShareIndex, Msg)>>,
    busy_until: u64,
}

impl Replica {
    fn height(&self) -> u64 {
        self.state.height + 1
    }
}

/// The PBFT simulation. Transactions enter through [`Simulation::submit_tx`];
/// time advances only through [`Simulation::run_until`] and friends.
pub struct Simulation {
    config: SimConfig,
    replicas: Vec<Replica>,
    queue: BinaryHeap<Reverse<(u64, u64)>>,
    events: HashMap<u64, Event>,
    seq: u64,
    now: u64,
    rng: ChaCha20Rng,
    vote_cache: HashMap<(BlockHash, ShareIndex, PlainSignature), bool>,
    pub(crate) issued: BTreeMap<TxHash, u64>,
    pub(crate) proposed_at: HashMap<BlockHash, u64>,
    pub(crate) commits: Vec<CommitRecord>,
    messages_sent: u64,
}

impl Simulation {
    /// `keys[i]` is validator `i+1`'s account key; `genesis` is the shared
    /// starting state.
    pub fn new(config: SimConfig, keys: Vec<KeyPair>, genesis: ChainState) -> Result<Self, SimError> {
        config.validate()?;
        if keys.len() != config.n as usize {
            return Err(SimError::KeyCount {
                expected: config.n as usize,
                got: keys.len(),
            });
        }
        let replicas = keys
            .into_iter()
            .enumerate()
            .map(|(i, key)| {
                let index = ShareIndex::new(i as u32 + 1).expect("nonzero");
                Replica {
                    index,
                    key,
                    behavior: config.faults.behavior(index),
                    state: genesis.clone(),
                    log: Vec::new(),
                    view: 0,
                    round: HeightRound::default(),
                    mempool: VecDeque::new(),
                    pooled: HashSet::new(),
                    future: BTreeMap::new(),
                    busy_until: 0,
                }
            })
            .collect();
        let mut sim = Self {
            rng: ChaCha20Rng::seed_from_u64(config.seed),
            config,
            replicas,
            queue: BinaryHeap::new(),
            events: HashMap::new(),
            seq: 0,
            now: 0,
            vote_cache: HashMap::new(),
            issued: BTreeMap::new(),
            proposed_at: HashMap::new(),
            commits: Vec::new(),
            messages_sent: 0,
        };
        for i in 0..sim.replicas.len() {
            sim.enter_height(i, 0);
        }
        Ok(sim)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn now_us(&self) -> u64 {
        self.now
    }

    pub fn messages_sent(&self) -> u64 {
        self.messages_sent
    }

    pub fn honest(&self) -> Vec<ShareIndex> {
        self.replicas
            .iter()
            .filter(|r| r.behavior.is_none())
            .map(|r| r.index)
            .collect()
    }

    /// Lowest-indexed honest replica, the reference view of the chain.
    pub fn observer(&self) -> ShareIndex {
        self.honest()[0]
    }

    fn replica(&self, i: ShareIndex) -> &Replica {
        &self.replicas[i.get() as usize - 1]
    }

    pub fn state(&self, i: ShareIndex) -> &ChainState {
        &self.replica(i).state
    }

    pub fn log(&self, i: ShareIndex) -> Vec<Block> {
        self.replica(i).log.iter().map(|b| (**b).clone()).collect()
    }

    pub fn log_len(&self, i: ShareIndex) -> usize {
        self.replica(i).log.len()
    }

    pub fn block(&self, i: ShareIndex, height: u64) -> Option<&Block> {
        self.replica(i).log.get((height as usize).checked_sub(1)?).map(|b| &**b)
    }

    pub fn observer_state(&self) -> &ChainState {
        self.state(self.observer())
    }

    pub fn observer_height(&self) -> u64 {
        self.observer_state().height
    }

    /// Committed logs of all honest replicas without certificates.
    pub fn honest_logs(&self) -> Vec<(ShareIndex, Vec<Vec<u8>>)> {
        self.honest()
            .into_iter()
            .map(|i| (i, self.replica(i).log.iter().map(|b| b.content_bytes()).collect()))
            .collect()
    }

    /// True iff every pair of honest logs agrees on their common prefix.
    pub fn honest_logs_consistent(&self) -> bool {
        let logs = self.honest_logs();
        logs.iter().all(|(_, a)| {
            logs.iter()
                .all(|(_, b)| a.iter().zip(b.iter()).all(|(x, y)| x == y))
        })
    }

    fn primary(&self, height: u64, view: u64) -> ShareIndex {
        let n = self.config.n as u64;
        ShareIndex::new(((height + view) % n) as u32 + 1).expect("nonzero")
    }

    fn push(&mut self, at: u64, ev: Event) {
        let id = self.seq;
        self.seq += 1;
        self.events.insert(id, ev);
        self.queue.push(Reverse((at, id)));
    }

    /// A client hands `tx` to every validator at simulated time `at_us`.
    pub fn submit_tx(&mut self, at_us: u64, tx: Transaction) {
        let at = at_us.max(self.now);
        self.issued.entry(tx.hash()).or_insert(at);
        let tx = Arc::new(tx);
        for i in 0..self.replicas.len() {
            let to = self.replicas[i].index;
            let delivery = self
                .config
                .network
                .delivery(at, 0, to.get(), tx.encoded_len(), &mut self.rng)
                .unwrap_or(at + self.config.network.base_latency_us);
            self.push(delivery, Event::Deliver { to, from: None, msg: Msg::Tx(tx.clone()) });
        }
    }

    pub fn next_event_time(&self) -> Option<u64> {
        self.queue.peek().map(|Reverse((t, _))| *t)
    }

    /// Processes one event. Returns false when the queue is empty.
    pub fn step(&mut self) -> bool {
        let Some(Reverse((t, id))) = self.queue.pop() else {
            return false;
        };
        self.now = self.now.max(t);
        let ev = self.events.remove(&id).expect("queued event");
        match ev {
            Event::Deliver { to, from, msg } => self.on_deliver(to, from, msg),
            Event::Timeout { to, height, view } => self.on_timeout(to, height, view),
            Event::Propose { to, height, view } => self.on_propose(to, height, view),
        }
        true
    }

    /// Processes all events up to and including time `t_us`.
    pub fn run_until(&mut self, t_us: u64) {
        while self.next_event_time().is_some_and(|t| t <= t_us) {
            self.step();
        }
        self.now = self.now.max(t_us);
    }

    /// Runs until the observer has committed `height` or time passes
    /// `deadline_us`. Returns whether the height was reached.
    pub fn run_until_height(&mut self, height: u64, deadline_us: u64) -> bool {
        while self.observer_height() < height {
            match self.next_event_time() {
                Some(t) if t <= deadline_us => {
                    self.step();
                }
                _ => return false,
            }
        }
        true
    }

    /// Runs until `pred` holds for the observer state or the deadline passes.
    pub fn run_until_state<F: Fn(&ChainState) -> bool>(&mut self, deadline_us: u64, pred: F) -> bool {
        while !pred(self.observer_state()) {
            match self.next_event_time() {
                Some(t) if t <= deadline_us => {
                    self.step();
                }
                _ => return false,
            }
        }
        true
    }

    /// Like [`Simulation::run_until_state`] but waits for every honest replica.
    pub fn run_until_all_honest<F: Fn(&ChainState) -> bool>(&mut self, deadline_us: u64, pred: F) -> bool {
        loop {
            let lagging = self
                .replicas
                .iter()
                .any(|r| r.behavior.is_none() && !pred(&r.state));
            if !lagging {
                return true;
            }
            match self.next_event_time() {
                Some(t) if t <= deadline_us => {
                    self.step();
                }
                _ => return false,
            }
        }
    }

    fn idx(&self, i: ShareIndex) -> usize {
        i.get() as usize - 1
    }

    /// Charges `cost` of CPU time to replica `r` starting no earlier than
    /// now; returns the completion time.
    fn charge(&mut self, r: usize, cost: u64) -> u64 {
        let start = self.now.max(self.replicas[r].busy_until);
        self.replicas[r].busy_until = start + cost;
        start + cost
    }

    fn send(&mut self, r: usize, at: u64, to: ShareIndex, msg: Msg) {
        let from = self.replicas[r].index;
        let behavior = self.replicas[r].behavior;
        if behavior == Some(Behavior::Silent) {
            return;
        }
        let mut at = at;
        if behavior == Some(Behavior::Delay) && to != from {
            at += self.config.faults.delay_us;
        }
        self.messages_sent += 1;
        let Some(t) = self
            .config
            .network
            .delivery(at, from.get(), to.get(), msg.size(), &mut self.rng)
        else {
            return;
        };
        self.push(t, Event::Deliver { to, from: Some(from), msg });
    }

    fn broadcast(&mut self, r: usize, at: u64, msg: Msg) {
        for j in 0..self.replicas.len() {
            let to = self.replicas[j].index;
            self.send(r, at, to, msg.clone());
        }
    }

    fn enter_height(&mut self, r: usize, at: u64) {
        let rep = &mut self.replicas[r];
        rep.view = 0;
        rep.round = HeightRound::default();
        let height = rep.height();
        let me = rep.index;
        let prev_time = rep.log.last().map_or(0, |b| b.header.time_us);
        let slot = (prev_time + self.config.block_interval_us).max(at);
        self.push(slot + self.config.view_timeout_us, Event::Timeout { to: me, height, view: 0 });
        if self.primary(height, 0) == me {
            self.push(slot, Event::Propose { to: me, height, view: 0 });
        }
        let buffered = self.replicas[r].future.remove(&height).unwrap_or_default();
        for (from, msg) in buffered {
            self.push(at, Event::Deliver { to: me, from: Some(from), msg });
        }
    }

    fn view_timeout(&self, view: u64) -> u64 {
        self.config.view_timeout_us << view.min(6)
    }

    fn on_timeout(&mut self, to: ShareIndex, height: u64, view: u64) {
        let r = self.idx(to);
        let rep = &mut self.replicas[r];
        if rep.height() != height || rep.view != view {
            return;
        }
        rep.round.sync_requested = false;
        self.start_view_change(r, view + 1);
    }

    fn start_view_change(&mut self, r: usize, new_view: u64) {
        let rep = &mut self.replicas[r];
        if !rep.round.sent_view_change.insert(new_view) {
            return;
        }
        rep.view = rep.view.max(new_view);
        let height = rep.height();
        let prepared = rep.round.prepared.clone();
        let me = rep.index;
        let done = self.charge(r, self.config.costs.per_message_us);
        self.broadcast(r, done, Msg::ViewChange { height, new_view, prepared });
        let t = self.view_timeout(new_view);
        self.push(done + t, Event::Timeout { to: me, height, view: new_view });
    }

    fn on_propose(&mut self, to: ShareIndex, height: u64, view: u64) {
        let r = self.idx(to);
        let rep = &self.replicas[r];
        if rep.height() != height || rep.view != view || rep.round.proposed_views.contains(&view) {
            return;
        }
        if rep.behavior == Some(Behavior::Silent) {
            return;
        }
        self.replicas[r].round.proposed_views.insert(view);

        // Re-propose the highest prepared block reported in the view change.
        let carried = self.replicas[r]
            .round
            .view_changes
            .get(&view)
            .and_then(|vc| vc.values().flatten().max_by_key(|(v, _)| *v).map(|(_, b)| b.clone()));
        let (block, cost) = match carried {
            Some(b) => (b, self.config.costs.block_overhead_us),
            None => self.build_block(r, height, view),
        };
        let done = self.charge(r, cost);
        self.proposed_at.entry(block.hash()).or_insert(done);

        if self.replicas[r].behavior == Some(Behavior::Equivocate) {
            // Odd-positioned replicas get a block with half the txs, or
            // nothing when no distinct block can be formed.
            let h = &block.header;
            let mut txs = block.txs.clone();
            txs.truncate(txs.len() / 2);
            let alt = Arc::new(Block::new(height, h.parent, h.proposer, h.view, h.time_us, txs));
            let distinct = alt.hash() != block.hash();
            for j in 0..self.replicas.len() {
                let dest = self.replicas[j].index;
                if j % 2 == 0 {
                    self.send(r, done, dest, Msg::PrePrepare { view, block: block.clone() });
                } else if distinct {
                    self.send(r, done, dest, Msg::PrePrepare { view, block: alt.clone() });
                }
            }
        } else {
            self.broadcast(r, done, Msg::PrePrepare { view, block });
        }
    }

    /// Selects valid mempool transactions in arrival order up to the limits.
    fn build_block(&mut self, r: usize, height: u64, view: u64) -> (Arc<Block>, u64) {
        let costs = self.config.costs;
        let rep = &mut self.replicas[r];
        let ctx = crate::ledger::TxContext {
            height,
            proposer: Some(rep.index),
        };
        let mut scratch = rep.state.clone();
        let mut chosen = Vec::new();
        let mut bytes = 0usize;
        let mut cost = costs.block_overhead_us;
        let mut verify = 0u64;
        let mut dropped = Vec::new();
        for tx in rep.mempool.iter() {
            if chosen.len() >= self.config.max_block_txs {
                break;
            }
            let len = tx.encoded_len();
            if bytes + len > self.config.max_block_bytes && !chosen.is_empty() {
                break;
            }
            let tx_verify = costs.verify_us(tx.class());
            if verify + tx_verify > self.config.max_block_verify_us && !chosen.is_empty() {
                break;
            }
            verify += tx_verify;
            cost += tx_verify;
            match scratch.apply_tx(tx, ctx) {
                Ok(()) => {
                    bytes += len;
                    chosen.push((**tx).clone());
                }
                Err(e) if e.is_permanent() => dropped.push(tx.hash()),
                // Kept: it may become valid once an earlier tx commits.
                Err(_) => {}
            }
        }
        if !dropped.is_empty() {
            let gone: HashSet<TxHash> = dropped.into_iter().collect();
            rep.mempool.retain(|t| !gone.contains(&t.hash()));
            rep.pooled.retain(|h| !gone.contains(h));
        }
        let block = Block::new(height, rep.state.last_hash, rep.index, view, self.now, chosen);
        (Arc::new(block), cost)
    }

    fn on_deliver(&mut self, to: ShareIndex, from: Option<ShareIndex>, msg: Msg) {
        let r = self.idx(to);
        if self.replicas[r].behavior == Some(Behavior::Silent) {
            return;
        }
        if let Msg::Tx(tx) = msg {
            let h = tx.hash();
            let rep = &mut self.replicas[r];
            if !rep.pooled.contains(&h) && !rep.state.contains_tx(&h) {
                rep.pooled.insert(h);
                rep.mempool.push_back(tx);
            }
            return;
        }
        let Some(from) = from else { return };
        let my_height = self.replicas[r].height();
        if let Some(h) = msg.height() {
            if h < my_height {
                if matches!(msg, Msg::ViewChange { .. }) {
                    // A peer is behind; offer what we have.
                    self.serve_sync(r, from, h, None);
                }
                return;
            }
            if h > my_height {
                self.replicas[r].future.entry(h).or_default().push((from, msg));
                if !self.replicas[r].round.sync_requested {
                    self.replicas[r].round.sync_requested = true;
                    let done = self.charge(r, self.config.costs.per_message_us);
                    self.send(r, done, from, Msg::SyncRequest { height: my_height, hash: None });
                }
                return;
            }
        }
        match msg {
            Msg::Tx(_) => unreachable!(),
            Msg::PrePrepare { view, block } => self.on_preprepare(r, from, view, block),
            Msg::Prepare { view, hash, .. } => self.on_prepare(r, from, view, hash),
            Msg::Commit { view, hash, vote, .. } => self.on_commit(r, from, view, hash, vote),
            Msg::ViewChange { height, new_view, prepared } => {
                self.on_view_change(r, from, height, new_view, prepared)
            }
            Msg::SyncRequest { height, hash } => self.serve_sync(r, from, height, hash),
            Msg::SyncReply { blocks, candidate } => self.on_sync_reply(r, blocks, candidate),
        }
    }

    fn on_preprepare(&mut self, r: usize, from: ShareIndex, view: u64, block: Arc<Block>) {
        let height = block.header.height;
        if from != self.primary(height, view) || view < self.replicas[r].view {
            return;
        }
        let fresh = block.header.view == view && block.header.proposer == from;
        let carried = block.header.view < view;
        if (!fresh && !carried) || self.replicas[r].round.proposals.contains_key(&view) {
            return;
        }
        let costs = self.config.costs;
        let cost = costs.block_overhead_us
            + block.txs.iter().map(|t| costs.verify_us(t.class())).sum::<u64>();
        let done = self.charge(r, cost);
        let Ok(post) = self.replicas[r].state.execute_block(&block) else {
            return;
        };
        let rep = &mut self.replicas[r];
        if view > rep.view {
            rep.view = view;
            let (me, h) = (rep.index, rep.height());
            let t = self.view_timeout(view);
            self.push(done + t, Event::Timeout { to: me, height: h, view });
        }
        let rep = &mut self.replicas[r];
        let hash = block.hash();
        rep.round.proposals.insert(view, (block, post));
        if rep.round.sent_prepare.insert(view) {
            self.send_vote_msg(r, done, Msg::Prepare { height, view, hash });
        }
        self.check_prepared(r, view, hash);
        self.check_committed(r, view, hash);
    }

    /// Sends a prepare or commit; an equivocating replica sends a bogus
    /// digest to odd-indexed peers.
    fn send_vote_msg(&mut self, r: usize, at: u64, msg: Msg) {
        if self.replicas[r].behavior != Some(Behavior::Equivocate) {
            self.broadcast(r, at, msg);
            return;
        }
        let bogus = BlockHash([0xEE; 32]);
        for j in 0..self.replicas.len() {
            let to = self.replicas[j].index;
            let m = match (&msg, j % 2) {
                (Msg::Prepare { height, view, .. }, 1) => Msg::Prepare { height: *height, view: *view, hash: bogus },
                (Msg::Commit { height, view, vote, .. }, 1) => Msg::Commit {
                    height: *height,
                    view: *view,
                    hash: bogus,
                    vote: *vote,
                },
                _ => msg.clone(),
            };
            self.send(r, at, to, m);
        }
    }

    fn on_prepare(&mut self, r: usize, from: ShareIndex, view: u64, hash: BlockHash) {
        self.charge(r, self.config.costs.per_message_us);
        self.replicas[r]
            .round
            .prepares
            .entry((view, hash))
            .or_default()
            .insert(from);
        self.check_prepared(r, view, hash);
    }

    fn check_prepared(&mut self, r: usize, view: u64, hash: BlockHash) {
        let quorum = self.config.quorum();
        let rep = &self.replicas[r];
        if rep.view != view || rep.round.sent_commit.contains(&view) {
            return;
        }
        let Some((block, _)) = rep.round.proposals.get(&view) else {
            return;
        };
        if block.hash() != hash {
            return;
        }
        if rep.round.prepares.get(&(view, hash)).map_or(0, |s| s.len()) < quorum {
            return;
        }
        let block = block.clone();
        let height = block.header.height;
        let mut vote = Vote::sign(rep.index, &hash, &rep.key);
        if rep.behavior == Some(Behavior::CorruptShare) {
            vote.sig.0[10] ^= 0x5A;
        }
        let rep = &mut self.replicas[r];
        rep.round.sent_commit.insert(view);
        rep.round.prepared = Some((view, block));
        let done = self.charge(r, self.config.costs.vote_sign_us);
        self.send_vote_msg(r, done, Msg::Commit { height, view, hash, vote });
    }

    fn vote_valid(&mut self, hash: BlockHash, vote: &Vote) -> bool {
        let key = (hash, vote.validator, vote.sig);
        if let Some(&v) = self.vote_cache.get(&key) {
            return v;
        }
        let ok = self
            .replicas
            .get((vote.validator.get() as usize).wrapping_sub(1))
            .is_some_and(|rep| suite::sig_verify(&rep.key.pk, &commit_message(&hash), &vote.sig));
        self.vote_cache.insert(key, ok);
        ok
    }

    fn on_commit(&mut self, r: usize, from: ShareIndex, view: u64, hash: BlockHash, vote: Vote) {
        self.charge(r, self.config.costs.vote_verify_us);
        if vote.validator != from || !self.vote_valid(hash, &vote) {
            return;
        }
        self.replicas[r]
            .round
            .commits
            .entry((view, hash))
            .or_default()
            .insert(from, vote);
        self.check_committed(r, view, hash);
    }

    fn check_committed(&mut self, r: usize, view: u64, hash: BlockHash) {
        let quorum = self.config.quorum();
        let rep = &self.replicas[r];
        let Some(votes) = rep.round.commits.get(&(view, hash)) else {
            return;
        };
        if votes.len() < quorum {
            return;
        }
        let votes: Vec<Vote> = votes.values().copied().collect();
        let found = rep
            .round
            .proposals
            .values()
            .chain(rep.round.fetched.iter())
            .find(|(b, _)| b.hash() == hash)
            .map(|(b, post)| (b.clone(), post.clone()));
        match found {
            Some((block, post)) => self.commit(r, block, post, votes),
            None => {
                if !rep.round.sync_requested {
                    let senders: Vec<ShareIndex> = votes.iter().map(|v| v.validator).collect();
                    let height = rep.height();
                    self.replicas[r].round.sync_requested = true;
                    let done = self.charge(r, self.config.costs.per_message_us);
                    for s in senders {
                        self.send(r, done, s, Msg::SyncRequest { height, hash: Some(hash) });
                    }
                }
            }
        }
    }

    fn commit(&mut self, r: usize, block: Arc<Block>, post: ChainState, votes: Vec<Vote>) {
        let mut certified = (*block).clone();
        certified.certificate = Certificate { votes };
        let rep = &mut self.replicas[r];
        rep.state = post;
        for tx in &certified.txs {
            rep.pooled.remove(&tx.hash());
        }
        let committed: HashSet<TxHash> = certified.txs.iter().map(|t| t.hash()).collect();
        rep.mempool.retain(|t| !committed.contains(&t.hash()));
        let height = certified.header.height;
        rep.log.push(Arc::new(certified));
        let validator = rep.index.get();
        let done = self.charge(r, 0);
        self.commits.push(CommitRecord {
            validator,
            height,
            time_us: done,
        });
        self.enter_height(r, done);
    }

    fn on_view_change(
        &mut self,
        r: usize,
        from: ShareIndex,
        height: u64,
        new_view: u64,
        prepared: Option<(u64, Arc<Block>)>,
    ) {
        self.charge(r, self.config.costs.per_message_us);
        let f = self.config.f as usize;
        let quorum = self.config.quorum();
        let rep = &mut self.replicas[r];
        rep.round
            .view_changes
            .entry(new_view)
            .or_default()
            .insert(from, prepared);

        // Join a view change once f+1 peers have moved past our view.
        let mut movers: BTreeMap<ShareIndex, u64> = BTreeMap::new();
        for (&v, senders) in &rep.round.view_changes {
            if v > rep.view {
                for &s in senders.keys() {
                    let e = movers.entry(s).or_insert(v);
                    *e = (*e).min(v);
                }
            }
        }
        if movers.len() > f {
            let target = *movers.values().min().expect("nonempty");
            self.start_view_change(r, target);
        }

        let rep = &self.replicas[r];
        let count = rep.round.view_changes.get(&new_view).map_or(0, |m| m.len());
        if count >= quorum && self.primary(height, new_view) == rep.index && rep.view <= new_view {
            let me = rep.index;
            self.replicas[r].view = new_view;
            let now = self.now;
            self.push(now, Event::Propose { to: me, height, view: new_view });
        }
    }

    fn serve_sync(&mut self, r: usize, to: ShareIndex, height: u64, hash: Option<BlockHash>) {
        let rep = &self.replicas[r];
        let blocks: Vec<Arc<Block>> = rep
            .log
            .iter()
            .skip((height as usize).saturating_sub(1))
            .cloned()
            .collect();
        let candidate = hash.and_then(|h| {
            rep.round
                .proposals
                .values()
                .find(|(b, _)| b.hash() == h)
                .map(|(b, _)| b.clone())
        });
        if blocks.is_empty() && candidate.is_none() {
            return;
        }
        let done = self.charge(r, self.config.costs.per_message_us);
        self.send(r, done, to, Msg::SyncReply { blocks, candidate });
    }

    fn on_sync_reply(&mut self, r: usize, blocks: Vec<Arc<Block>>, candidate: Option<Arc<Block>>) {
        self.replicas[r].round.sync_requested = false;
        for b in blocks {
            if b.header.height != self.replicas[r].height() {
                continue;
            }
            let cost = self.config.costs.vote_verify_us * b.certificate.votes.len() as u64
                + b.txs.iter().map(|t| self.config.costs.verify_us(t.class())).sum::<u64>();
            self.charge(r, cost);
            let mut next = self.replicas[r].state.clone();
            if next.apply_block(&b).is_err() {
                return;
            }
            let votes = b.certificate.votes.clone();
            let mut bare = (*b).clone();
            bare.certificate = Certificate::default();
            self.commit(r, Arc::new(bare), next, votes);
        }
        if let Some(c) = candidate {
            let rep = &self.replicas[r];
            if c.header.height == rep.height() {
                if let Ok(post) = rep.state.execute_block(&c) {
                    let view = rep
                        .round
                        .commits
                        .keys()
                        .find(|(_, h)| *h == c.hash())
                        .map(|(v, _)| *v);
                    if let Some(view) = view {
                        self.replicas[r].round.fetched.push((c.clone(), post));
                        self.check_committed(r, view, c.hash());
                    }
                }
            }
        }
    }
}
