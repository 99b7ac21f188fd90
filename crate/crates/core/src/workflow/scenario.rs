//! Scripted end-to-end runs of the workflow over the consensus simulator.
//!
//! The driver plays every client role and asks validators for their shares
//! directly; faulty validators answer according to the fault plan. Every
//! step is logged as one JSON event and the run ends with a list of
//! invariant checks.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::consensus::{measure, Behavior, FaultPlan, MetricsReport, NetworkModel, SimConfig, SimError, Simulation};
use crate::ledger::{
    export_chain_string, replay, AccountType, Block, ChainState, ContentStore, Decision, DecisionRule,
    Distribute, Fees, Genesis, PaperStatus, Submit, Transaction, TransferPurpose, TxHash,
};
use crate::tibgs::{identity_commitment, UserGroupKey};
use crate::vss::ShareIndex;

use super::*;

pub const DEMO_SCENARIO: &str = include_str!("../../scenarios/demo.json");
pub const GROUP_ID: &str = "openpub-venue";

fn default_field() -> String {
    "cryptography".into()
}
fn default_reviewers_per_paper() -> usize {
    DEFAULT_REVIEWERS_PER_PAPER
}
fn default_window() -> u64 {
    20
}
fn default_author_balance() -> u64 {
    1_000
}
fn default_block_interval() -> u64 {
    SimConfig::new(0, 0).block_interval_us
}
fn default_step_timeout() -> u64 {
    30_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaperSpec {
    /// Zero-based index into the authors.
    pub author: usize,
    pub title: String,
    #[serde(default)]
    pub field: Option<String>,
    /// Score of each assigned reviewer in user-id order; drawn at random
    /// when empty.
    #[serde(default)]
    pub scores: Vec<u8>,
}

/// A scripted run. `n`, `f` and `seed` have no defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: u32,
    pub f: u32,
    pub seed: u64,
    #[serde(default)]
    pub fees: Fees,
    #[serde(default)]
    pub rule: DecisionRule,
    pub authors: usize,
    pub reviewers: usize,
    #[serde(default)]
    pub readers: usize,
    #[serde(default = "default_field")]
    pub field: String,
    pub papers: Vec<PaperSpec>,
    #[serde(default = "default_reviewers_per_paper")]
    pub reviewers_per_paper: usize,
    /// Blocks between distribution and the review deadline.
    #[serde(default = "default_window")]
    pub review_window: u64,
    #[serde(default = "default_author_balance")]
    pub author_balance: u64,
    #[serde(default)]
    pub faults: FaultPlan,
    #[serde(default)]
    pub network: NetworkModel,
    #[serde(default = "default_block_interval")]
    pub block_interval_us: u64,
    /// Simulated time each step may take before the run is declared stuck.
    #[serde(default = "default_step_timeout")]
    pub step_timeout_us: u64,
}

impl ScenarioConfig {
    pub fn demo() -> Self {
        Self::from_json(DEMO_SCENARIO).expect("bundled scenario parses")
    }

    pub fn from_json(s: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(s).map_err(|e| ScenarioError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Config(m));
        if self.n != 3 * self.f + 1 {
            return bad(format!("n = {} but 3f+1 = {}", self.n, 3 * self.f + 1));
        }
        if let Some(p) = self.papers.iter().find(|p| p.author >= self.authors) {
            return bad(format!("paper {:?} names author {} of {}", p.title, p.author, self.authors));
        }
        if let Some(p) = self
            .papers
            .iter()
            .find(|p| !p.scores.is_empty() && p.scores.len() != self.reviewers_per_paper)
        {
            return bad(format!("paper {:?} lists {} scores for {} reviewers", p.title, p.scores.len(), self.reviewers_per_paper));
        }
        if self
            .papers
            .iter()
            .flat_map(|p| &p.scores)
            .any(|s| !(crate::ledger::MIN_SCORE..=crate::ledger::MAX_SCORE).contains(s))
        {
            return bad("scores must lie in 1..=10".into());
        }
        if self.review_window == 0 || self.step_timeout_us == 0 {
            return bad("review_window and step_timeout_us must be positive".into());
        }
        self.sim_config().validate()?;
        Ok(())
    }

    pub fn sim_config(&self) -> SimConfig {
        let mut c = SimConfig::new(self.f, self.seed);
        c.n = self.n;
        c.network = self.network.clone();
        c.faults = self.faults.clone();
        c.block_interval_us = self.block_interval_us;
        c
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

/// One step of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub time_us: u64,
    pub height: u64,
    pub step: String,
    #[serde(flatten)]
    pub detail: Map<String, Value>,
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub events: Vec<Event>,
    pub genesis: Genesis,
    pub chain: Vec<Block>,
    pub metrics: MetricsReport,
    pub checks: Vec<Check>,
    /// The step that could not complete, if any.
    pub failure: Option<String>,
    pub final_state: ChainState,
}

impl ScenarioReport {
    pub fn ok(&self) -> bool {
        self.failure.is_none() && self.checks.iter().all(|c| c.holds)
    }

    /// `name: detail` of the first failed check. An aborted step shows up
    /// as `workflow_completed`.
    pub fn first_violation(&self) -> Option<String> {
        self.checks
            .iter()
            .find(|c| !c.holds)
            .map(|c| format!("{}: {}", c.name, c.detail))
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn events_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("serializable"));
            out.push('\n');
        }
        out
    }

    pub fn chain_export(&self) -> String {
        export_chain_string(&self.genesis, &self.chain)
    }
}

struct PaperRun {
    spec: PaperSpec,
    submit: Submit,
    hash: TxHash,
    author: String,
    distributor: Option<ShareIndex>,
    assignments: Vec<Assignment>,
    endtime: u64,
    opened: Option<String>,
}

struct Driver {
    cfg: ScenarioConfig,
    setup: SystemSetup,
    sim: Simulation,
    genesis: Genesis,
    rng: ChaCha20Rng,
    store: ContentStore,
    events: Vec<Event>,
    authors: Vec<Participant>,
    reviewers: Vec<Participant>,
    readers: Vec<Participant>,
    keys: BTreeMap<String, UserGroupKey>,
    papers: Vec<PaperRun>,
    blinding_violations: Vec<String>,
    secrecy_hits: Option<Vec<String>>,
}

fn detail(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => Map::new(),
    }
}

/// Runs the scenario to completion or to the first step that cannot
/// complete. Configuration errors are returned as `Err`; everything else is
/// reported through the checks.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioReport, ScenarioError> {
    cfg.validate()?;
    let mut d = Driver::new(cfg.clone())?;
    let failure = d.run().err();
    if let Some(f) = &failure {
        d.log("aborted", json!({ "reason": f }));
    }
    Ok(d.finish(failure))
}

impl Driver {
    fn new(cfg: ScenarioConfig) -> Result<Self, ScenarioError> {
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x6f70_656e_7075_6221);
        let k = 2 * cfg.f + 1;
        let setup = system_initialization(k, cfg.n, GROUP_ID, cfg.fees, &mut rng)?;
        let setup = SystemSetup { rule: cfg.rule, ..setup };
        let field = cfg.field.clone();
        let mk = |kind, prefix: &str, count: usize, field: Option<&str>, rng: &mut ChaCha20Rng| -> Vec<Participant> {
            (1..=count)
                .map(|i| registration(kind, &format!("{prefix}-{i}"), field, rng))
                .collect()
        };
        let authors = mk(AccountType::Author, "author", cfg.authors, Some(&field), &mut rng);
        let reviewers = mk(AccountType::Reviewer, "reviewer", cfg.reviewers, Some(&field), &mut rng);
        let readers = mk(AccountType::Reader, "reader", cfg.readers, None, &mut rng);
        let mut accounts: Vec<_> = authors.iter().map(|a| a.genesis_account(cfg.author_balance)).collect();
        accounts.extend(reviewers.iter().chain(&readers).map(|p| p.genesis_account(0)));
        let genesis = setup.genesis(accounts);
        let state = ChainState::from_genesis(&genesis).map_err(|e| ScenarioError::Config(e.to_string()))?;
        let keys = setup.validators.iter().map(|v| v.keypair.clone()).collect();
        let sim = Simulation::new(cfg.sim_config(), keys, state)?;
        let mut d = Self {
            cfg,
            setup,
            sim,
            genesis,
            rng,
            store: ContentStore::in_memory(),
            events: Vec::new(),
            authors,
            reviewers,
            readers,
            keys: BTreeMap::new(),
            papers: Vec::new(),
            blinding_violations: Vec::new(),
            secrecy_hits: None,
        };
        d.log(
            "system_initialization",
            json!({
                "k": d.setup.params.k,
                "n": d.setup.params.n,
                "grp_id": GROUP_ID,
                "acc_pub": d.setup.acc_pub().to_hex(),
                "byzantine": d.cfg.faults.byzantine.iter().map(|(i, b)| format!("{i}:{}", b.name())).collect::<Vec<_>>(),
            }),
        );
        for p in d.authors.iter().chain(&d.reviewers).chain(&d.readers).cloned().collect::<Vec<_>>() {
            d.log(
                "registration",
                json!({ "user_id": p.user_id, "role": format!("{:?}", p.kind).to_lowercase() }),
            );
        }
        Ok(d)
    }

    fn log(&mut self, step: &str, v: Value) {
        self.events.push(Event {
            seq: self.events.len() as u64,
            time_us: self.sim.now_us(),
            height: self.sim.observer_height(),
            step: step.to_owned(),
            detail: detail(v),
        });
    }

    fn state(&self) -> &ChainState {
        self.sim.observer_state()
    }

    fn behavior(&self, i: ShareIndex) -> Option<Behavior> {
        self.cfg.faults.behavior(i)
    }

    fn submit(&mut self, tx: &Transaction) {
        let now = self.sim.now_us();
        self.sim.submit_tx(now, tx.clone());
    }

    fn wait<F: Fn(&ChainState) -> bool>(&mut self, what: &str, pred: F) -> Result<(), String> {
        let deadline = self.sim.now_us() + self.cfg.step_timeout_us;
        if self.sim.run_until_all_honest(deadline, pred) {
            Ok(())
        } else {
            Err(format!("{what}: not committed within {} us", self.cfg.step_timeout_us))
        }
    }

    fn run(&mut self) -> Result<(), String> {
        self.register_authors()?;
        self.submit_papers()?;
        self.distribute()?;
        self.review()?;
        self.scan_pre_open();
        self.open()?;
        self.reward()?;
        // Let lagging replicas catch up before logs are compared.
        let settle = self.sim.now_us() + 4 * self.cfg.block_interval_us + self.cfg.sim_config().view_timeout_us;
        self.sim.run_until(settle);
        Ok(())
    }

    fn register_authors(&mut self) -> Result<(), String> {
        let authors = self.authors.clone();
        for a in &authors {
            let tx = registration_deposit(self.state(), a)
                .map_err(|e| format!("registration of {}: {e}", a.user_id))?
                .expect("authors post a deposit");
            self.submit(&tx);
            self.log("deposit", json!({ "user_id": a.user_id, "tx": tx.hash().to_hex() }));
        }
        let ids: Vec<String> = authors.iter().map(|a| a.user_id.clone()).collect();
        self.wait("deposits", |s| ids.iter().all(|u| s.deposit_held(u)))?;
        for a in &authors {
            let mut c = KeyCollector::new(&a.user_id, &self.setup);
            let mut silent = Vec::new();
            let mut pending: Vec<ShareIndex> = Vec::new();
            for v in &self.setup.validators {
                match self.behavior(v.index) {
                    Some(Behavior::Silent) => silent.push(v.index.get()),
                    _ => pending.push(v.index),
                }
            }
            // Replicas that have not yet committed the deposit refuse; ask again
            // after they catch up.
            let deadline = self.sim.now_us() + self.cfg.step_timeout_us;
            while !pending.is_empty() {
                let mut still = Vec::new();
                for i in pending {
                    let v = self.setup.validator(i).expect("validator index");
                    match v.issue_user_share(self.sim.state(i), &a.user_id) {
                        Ok(s) if self.behavior(i) == Some(Behavior::CorruptShare) => c.offer(corrupt_user_share(s)),
                        Ok(s) => c.offer(s),
                        Err(WorkflowError::NoDeposit(_)) => still.push(i),
                        Err(e) => return Err(format!("key share for {}: {e}", a.user_id)),
                    }
                }
                pending = still;
                if pending.is_empty() || self.sim.now_us() >= deadline {
                    break;
                }
                let next = self.sim.now_us() + self.cfg.block_interval_us;
                self.sim.run_until(next);
            }
            let key = c.finish().map_err(|e| format!("key reconstruction for {}: {e}", a.user_id))?;
            self.log(
                "user_key",
                json!({
                    "user_id": a.user_id,
                    "received": c.received(),
                    "valid": c.valid(),
                    "rejected": key.rejected.iter().map(|i| i.get()).collect::<Vec<_>>(),
                    "silent": silent,
                }),
            );
            self.keys.insert(a.user_id.clone(), key.key);
        }
        Ok(())
    }

    fn submit_papers(&mut self) -> Result<(), String> {
        let acc_pub = self.setup.acc_pub();
        for (i, spec) in self.cfg.papers.clone().into_iter().enumerate() {
            let author = self.authors[spec.author].user_id.clone();
            let field = spec.field.clone().unwrap_or_else(|| self.cfg.field.clone());
            let mut body = vec![0u8; 256];
            self.rng.fill(&mut body[..]);
            let mut content = format!("{}\n\n", spec.title).into_bytes();
            content.extend_from_slice(&body);
            let usk = &self.keys[&author];
            let tx = submission(&field, &content, usk, acc_pub, &mut self.store, &mut self.rng)
                .map_err(|e| format!("submission {i}: {e}"))?;
            let Transaction::Submit(submit) = &tx else { unreachable!() };
            self.papers.push(PaperRun {
                spec,
                submit: submit.clone(),
                hash: tx.hash(),
                author,
                distributor: None,
                assignments: Vec::new(),
                endtime: 0,
                opened: None,
            });
            self.submit(&tx);
            self.log(
                "submission",
                json!({ "paper": i, "tx": tx.hash().to_hex(), "field": field, "content_hash": hex::encode(submit.paper.content_hash) }),
            );
        }
        let hashes: Vec<TxHash> = self.papers.iter().map(|p| p.hash).collect();
        self.wait("submissions", |s| hashes.iter().all(|h| s.papers.contains_key(h)))
    }

    fn first_honest(&self) -> ShareIndex {
        ShareIndex::all(self.cfg.n)
            .find(|i| self.cfg.faults.is_honest(*i))
            .expect("at most f faulty")
    }

    fn distribute(&mut self) -> Result<(), String> {
        for i in 0..self.papers.len() {
            let h = self.papers[i].hash;
            let designated = self.state().papers[&h].designated;
            let distributor = designated
                .filter(|d| self.cfg.faults.is_honest(*d))
                .unwrap_or_else(|| self.first_honest());
            let endtime = self.state().height + self.cfg.review_window;
            let v = self.setup.validator(distributor).expect("index in range").clone();
            let pool = reviewer_pool(self.sim.state(distributor));
            let dist = distribution(
                self.sim.state(distributor),
                &h,
                &pool,
                self.cfg.reviewers_per_paper,
                endtime,
                &v,
                &mut self.rng,
            )
            .map_err(|e| format!("distribution of paper {i}: {e}"))?;
            self.submit(&dist.tx);
            self.log(
                "distribution",
                json!({
                    "paper": i,
                    "tx": dist.tx.hash().to_hex(),
                    "designated": designated.map(|d| d.get()),
                    "distributor": distributor.get(),
                    "endtime": endtime,
                    "ciphertexts": dist.assignments.len(),
                }),
            );
            let p = &mut self.papers[i];
            p.distributor = Some(distributor);
            p.assignments = dist.assignments;
            p.endtime = endtime;
        }
        let hashes: Vec<TxHash> = self.papers.iter().map(|p| p.hash).collect();
        self.wait("distributions", |s| {
            hashes.iter().all(|h| s.papers[h].status == PaperStatus::Distributed)
        })
    }

    fn committed_distribute(&self, submit: &TxHash) -> Option<Distribute> {
        let txh = self.state().papers.get(submit)?.distribute_tx?;
        self.sim
            .log(self.sim.observer())
            .iter()
            .flat_map(|b| b.txs.iter())
            .find(|t| t.hash() == txh)
            .and_then(|t| match t {
                Transaction::Distribute(d) => Some(d.clone()),
                _ => None,
            })
    }

    fn review(&mut self) -> Result<(), String> {
        let acc_pub = self.setup.acc_pub();
        let mut expected = Vec::new();
        for i in 0..self.papers.len() {
            let h = self.papers[i].hash;
            let dist = self
                .committed_distribute(&h)
                .ok_or_else(|| format!("distribute tx of paper {i} missing from the chain"))?;
            let mut by_id: Vec<String> = self.papers[i].assignments.iter().map(|a| a.reviewer_id.clone()).collect();
            by_id.sort();
            for reviewer in self.reviewers.clone() {
                let hits = dist
                    .ciphertexts
                    .iter()
                    .filter(|c| crate::suite::dec(c, &reviewer.keypair).is_ok())
                    .count();
                let assigned = by_id.iter().position(|r| *r == reviewer.user_id);
                if hits != usize::from(assigned.is_some()) {
                    self.blinding_violations
                        .push(format!("{} decrypted {hits} ciphertexts of paper {i}", reviewer.user_id));
                }
                let score = match assigned {
                    Some(j) if !self.papers[i].spec.scores.is_empty() => self.papers[i].spec.scores[j],
                    _ => self.rng.gen_range(crate::ledger::MIN_SCORE..=crate::ledger::MAX_SCORE),
                };
                let state = self.sim.observer_state().clone();
                let tx = super::review(&reviewer, &dist, &state, &self.store, |content| {
                    (format!("read {} bytes", content.len()), score)
                })
                .map_err(|e| format!("review of paper {i}: {e}"))?;
                if let Some(tx) = tx {
                    self.submit(&tx);
                    self.log(
                        "review",
                        json!({ "paper": i, "tx": tx.hash().to_hex(), "reviewer": reviewer.user_id, "score": score }),
                    );
                }
            }
            for reader in self.readers.clone() {
                let tx = reader_comment(&reader, acc_pub, &h, "reader comment", 5);
                self.submit(&tx);
                self.log("reader_comment", json!({ "paper": i, "tx": tx.hash().to_hex(), "reader": reader.user_id }));
            }
            expected.push((h, self.papers[i].assignments.len() + self.readers.len()));
        }
        self.wait("reviews", |s| expected.iter().all(|(h, n)| s.papers[h].reviews.len() == *n))
    }

    /// Looks for author user ids and public keys in everything committed so
    /// far, except the deposit transfers that register authors by name.
    fn scan_pre_open(&mut self) {
        let mut needles: Vec<(String, Vec<u8>)> = Vec::new();
        for a in &self.authors {
            needles.push((format!("{} user id", a.user_id), a.user_id.as_bytes().to_vec()));
            needles.push((format!("{} public key", a.user_id), a.keypair.pk.0.to_vec()));
            needles.push((
                format!("{} identity commitment", a.user_id),
                identity_commitment(GROUP_ID, &a.user_id).to_compressed().to_vec(),
            ));
        }
        let mut hits = Vec::new();
        let mut scanned = 0usize;
        for b in self.sim.log(self.sim.observer()) {
            let mut bytes = b.header.hash().0.to_vec();
            for tx in &b.txs {
                if matches!(tx, Transaction::Transfer(t) if t.purpose == TransferPurpose::Deposit) {
                    continue;
                }
                bytes.extend(tx.canonical_encode());
            }
            scanned += bytes.len();
            for (what, n) in &needles {
                if bytes.windows(n.len()).any(|w| w == &n[..]) {
                    hits.push(format!("{what} at height {}", b.header.height));
                }
            }
        }
        self.log("secrecy_scan", json!({ "bytes": scanned, "hits": hits.len() }));
        self.secrecy_hits = Some(hits);
    }

    fn open(&mut self) -> Result<(), String> {
        let last_end = self.papers.iter().map(|p| p.endtime).max().unwrap_or(0);
        self.wait(&format!("endtime {last_end}"), |s| s.height >= last_end)?;
        for i in 0..self.papers.len() {
            let dist_idx = self.papers[i].distributor.expect("distributed");
            let distributor = self.setup.validator(dist_idx).expect("in range").clone();
            let submit = self.papers[i].submit.clone();
            let mut shares = Vec::new();
            for v in &self.setup.validators {
                let share = match self.behavior(v.index) {
                    Some(Behavior::Silent) => continue,
                    Some(Behavior::CorruptShare) => v.open_share(&submit, &self.setup.gpk).map(corrupt_open_share),
                    _ => v.open_share(&submit, &self.setup.gpk),
                };
                shares.push(share.map_err(|e| format!("open share for paper {i}: {e}"))?);
            }
            let state = self.sim.state(dist_idx).clone();
            let tx = super::open(&state, &submit, &shares, &distributor, &self.setup)
                .map_err(|e| format!("open of paper {i}: {e}"))?;
            let Transaction::Open(o) = &tx else { unreachable!() };
            self.papers[i].opened = Some(o.user_id.clone());
            self.submit(&tx);
            self.log(
                "open",
                json!({
                    "paper": i,
                    "tx": tx.hash().to_hex(),
                    "user_id": o.user_id,
                    "result": o.result,
                    "reviewers": o.reviewer_ids,
                    "shares": shares.len(),
                }),
            );
        }
        let hashes: Vec<TxHash> = self.papers.iter().map(|p| p.hash).collect();
        self.wait("opens", |s| hashes.iter().all(|h| s.papers[h].status == PaperStatus::Decided))
    }

    fn reward(&mut self) -> Result<(), String> {
        for i in 0..self.papers.len() {
            let h = self.papers[i].hash;
            let state = self.state().clone();
            let unsigned = reward_transfers(&state, &h).map_err(|e| format!("reward of paper {i}: {e}"))?;
            let mut hashes = Vec::new();
            for tx in &unsigned {
                let shares: Vec<_> = self
                    .setup
                    .validators
                    .iter()
                    .filter_map(|v| match self.behavior(v.index) {
                        Some(Behavior::Silent) => None,
                        Some(Behavior::CorruptShare) => Some(corrupt_sig_share(v.tsig_share(tx))),
                        _ => Some(v.tsig_share(tx)),
                    })
                    .collect();
                let signed = combine_tsig(tx, &shares, &self.setup).map_err(|e| format!("reward of paper {i}: {e}"))?;
                let Transaction::Transfer(t) = &signed else { unreachable!() };
                self.log(
                    "reward",
                    json!({
                        "paper": i,
                        "tx": signed.hash().to_hex(),
                        "purpose": t.purpose.name(),
                        "to": t.user_id,
                        "amount": t.amount,
                    }),
                );
                hashes.push(signed.hash());
                self.submit(&signed);
            }
            self.wait("rewards", |s| hashes.iter().all(|h| s.contains_tx(h)))?;
        }
        Ok(())
    }

    fn finish(mut self, failure: Option<String>) -> ScenarioReport {
        let state = self.state().clone();
        let chain = self.sim.log(self.sim.observer());
        let fees = self.cfg.fees;
        let mut checks = Vec::new();
        let mut check = |name: &str, holds: bool, detail: String| {
            checks.push(Check {
                name: name.to_owned(),
                holds,
                detail,
            })
        };

        check(
            "workflow_completed",
            failure.is_none(),
            failure.clone().unwrap_or_else(|| "all steps committed".into()),
        );

        let decided: Vec<(&PaperRun, &crate::ledger::Outcome)> = self
            .papers
            .iter()
            .filter_map(|p| state.papers.get(&p.hash)?.outcome.as_ref().map(|o| (p, o)))
            .collect();
        let accepted = |user: &str| {
            decided
                .iter()
                .filter(|(_, o)| o.user_id == user && o.result == Decision::Accept)
                .count() as u64
        };
        let expected_mint: u64 = decided
            .iter()
            .map(|(_, o)| {
                fees.review * o.reviewer_ids.len() as u64
                    + if o.result == Decision::Accept { fees.incentive } else { 0 }
            })
            .sum();
        check(
            "token_conservation",
            state.is_conserved() && state.minted == expected_mint,
            format!(
                "supply {} = genesis {} + minted {} (expected mint {expected_mint})",
                state.total_supply(),
                state.genesis_supply,
                state.minted
            ),
        );

        let opened_authors: BTreeSet<&str> = decided.iter().map(|(_, o)| o.user_id.as_str()).collect();
        let unrefunded: Vec<&str> = opened_authors.iter().copied().filter(|a| state.deposit_held(a)).collect();
        check(
            "deposit_refund",
            unrefunded.is_empty(),
            format!("opened authors still holding a deposit: {unrefunded:?}"),
        );

        let mut reviewer_err = Vec::new();
        for r in &self.reviewers {
            let reviewed = decided.iter().filter(|(_, o)| o.reviewer_ids.contains(&r.user_id)).count() as u64;
            let have = state.balance(&r.account());
            if have != fees.review * reviewed {
                reviewer_err.push(format!("{} holds {have}, expected {}", r.user_id, fees.review * reviewed));
            }
        }
        check("reviewer_fees", reviewer_err.is_empty(), reviewer_err.join("; "));

        let mut author_err = Vec::new();
        for a in &self.authors {
            let refunded = if opened_authors.contains(a.user_id.as_str()) { fees.deposit } else { 0 };
            let want = self.cfg.author_balance - fees.deposit + refunded + fees.incentive * accepted(&a.user_id);
            let have = state.balance(&a.account());
            if have != want {
                author_err.push(format!("{} holds {have}, expected {want}", a.user_id));
            }
        }
        check("author_incentive", author_err.is_empty(), author_err.join("; "));

        let held = state.accounts.values().filter(|a| a.deposit_held).count() as u64;
        let acc_pub = state.balance(&state.acc_pub());
        check(
            "acc_pub_balance",
            acc_pub == held * fees.deposit,
            format!("public account holds {acc_pub}, outstanding deposits {}", held * fees.deposit),
        );

        let mismatched: Vec<String> = self
            .papers
            .iter()
            .enumerate()
            .filter(|(_, p)| p.opened.as_deref() != Some(p.author.as_str()))
            .map(|(i, p)| format!("paper {i} opened to {:?}", p.opened))
            .collect();
        check(
            "opened_identities",
            mismatched.is_empty() && !self.papers.is_empty(),
            if mismatched.is_empty() {
                format!("{} of {} match", self.papers.len(), self.papers.len())
            } else {
                mismatched.join("; ")
            },
        );

        let hits = self.secrecy_hits.clone().unwrap_or_else(|| vec!["scan did not run".into()]);
        check("pre_open_secrecy", hits.is_empty(), hits.join("; "));

        check(
            "reviewer_blinding",
            self.blinding_violations.is_empty(),
            self.blinding_violations.join("; "),
        );

        let readers: BTreeSet<&str> = self.readers.iter().map(|r| r.user_id.as_str()).collect();
        let counted_readers = decided
            .iter()
            .flat_map(|(_, o)| &o.reviewer_ids)
            .filter(|r| readers.contains(r.as_str()))
            .count();
        check(
            "reader_comments_excluded",
            counted_readers == 0,
            format!("{counted_readers} reader comments counted"),
        );

        check(
            "honest_logs_identical",
            self.sim.honest_logs_consistent(),
            format!("{} honest replicas", self.sim.honest().len()),
        );

        let replayed = replay(&self.genesis, &chain);
        let replay_ok = matches!(&replayed, Ok(s) if s.height == state.height
            && s.accounts == state.accounts
            && s.minted == state.minted);
        check(
            "replay",
            replay_ok,
            match replayed {
                Ok(s) => format!("replayed {} blocks", s.height),
                Err(e) => e.to_string(),
            },
        );

        for c in checks.clone() {
            self.log("invariant", json!({ "name": c.name, "holds": c.holds }));
        }
        let metrics = measure(&self.sim);
        ScenarioReport {
            events: self.events,
            genesis: self.genesis,
            chain,
            metrics,
            checks,
            failure,
            final_state: state,
        }
    }
}
