use openpub::consensus::{Behavior, FaultPlan};
use openpub::ledger::*;
use openpub::tibgs::{self, games::GameError, UserGroupKey};
use openpub::vss::{Params, ShareIndex};
use openpub::workflow::anonymity::*;
use openpub::workflow::scenario::*;
use openpub::workflow::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const FIELD: &str = "cryptography";

struct World {
    setup: SystemSetup,
    state: ChainState,
    store: ContentStore,
    authors: Vec<Participant>,
    reviewers: Vec<Participant>,
    readers: Vec<Participant>,
    rng: ChaCha20Rng,
}

impl World {
    fn new(k: u32, n: u32, authors: usize, reviewers: usize, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let setup = system_initialization(k, n, "venue", Fees::default(), &mut rng).unwrap();
        let mk = |kind, p: &str, c: usize, field: Option<&str>, rng: &mut ChaCha20Rng| {
            (0..c)
                .map(|i| registration(kind, &format!("{p}-{i}"), field, rng))
                .collect::<Vec<_>>()
        };
        let authors = mk(AccountType::Author, "author", authors, Some(FIELD), &mut rng);
        let mut reviewers = mk(AccountType::Reviewer, "reviewer", reviewers, Some(FIELD), &mut rng);
        reviewers.push(registration(AccountType::Reviewer, "outsider", Some("biology"), &mut rng));
        let readers = mk(AccountType::Reader, "reader", 1, None, &mut rng);
        let mut accts: Vec<_> = authors.iter().map(|a| a.genesis_account(1_000)).collect();
        accts.extend(reviewers.iter().chain(&readers).map(|p| p.genesis_account(0)));
        let state = ChainState::from_genesis(&setup.genesis(accts)).unwrap();
        Self {
            setup,
            state,
            store: ContentStore::in_memory(),
            authors,
            reviewers,
            readers,
            rng,
        }
    }

    fn commit(&mut self, txs: Vec<Transaction>) {
        let h = self.state.height + 1;
        let b = Block::new(h, self.state.last_hash, ShareIndex::new(1).unwrap(), 0, h, txs);
        self.state = self.state.execute_block(&b).unwrap();
    }

    fn idle(&mut self, blocks: u64) {
        for _ in 0..blocks {
            self.commit(vec![]);
        }
    }

    fn v(&self, i: u32) -> &ValidatorIdentity {
        self.setup.validator(ShareIndex::new(i).unwrap()).unwrap()
    }

    fn register(&mut self, a: usize) -> UserGroupKey {
        let author = self.authors[a].clone();
        let tx = registration_deposit(&self.state, &author).unwrap().unwrap();
        self.commit(vec![tx]);
        let mut c = KeyCollector::new(&author.user_id, &self.setup);
        for v in &self.setup.validators {
            c.offer(v.issue_user_share(&self.state, &author.user_id).unwrap());
        }
        c.finish().unwrap().key
    }

    fn submit(&mut self, usk: &UserGroupKey, paper: &[u8]) -> (Transaction, Submit) {
        let tx = submission(FIELD, paper, usk, self.setup.acc_pub(), &mut self.store, &mut self.rng).unwrap();
        self.commit(vec![tx.clone()]);
        let Transaction::Submit(s) = &tx else { unreachable!() };
        (tx.clone(), s.clone())
    }

    fn distribute(&mut self, submit: &TxHash, count: usize, window: u64) -> (Distribute, Vec<Assignment>) {
        let pool = reviewer_pool(&self.state);
        let v = self.v(1).clone();
        let endtime = self.state.height + window;
        let d = distribution(&self.state, submit, &pool, count, endtime, &v, &mut self.rng).unwrap();
        self.commit(vec![d.tx.clone()]);
        let Transaction::Distribute(dist) = d.tx else { unreachable!() };
        (dist, d.assignments)
    }

    fn review_all(&mut self, dist: &Distribute, scores: &[u8]) {
        let mut ids: Vec<String> = Vec::new();
        let mut txs = Vec::new();
        for (i, r) in self.reviewers.clone().iter().enumerate() {
            let score = scores.get(i % scores.len().max(1)).copied().unwrap_or(5);
            if let Some(tx) = review(r, dist, &self.state, &self.store, |_| ("ok".into(), score)).unwrap() {
                ids.push(r.user_id.clone());
                txs.push(tx);
            }
        }
        self.commit(txs);
    }

    fn open_shares(&self, submit: &Submit) -> Vec<tibgs::OpenShare> {
        self.setup
            .validators
            .iter()
            .map(|v| v.open_share(submit, &self.setup.gpk).unwrap())
            .collect()
    }

    /// Runs a paper through open; returns the open transaction.
    fn full_paper(&mut self, usk: &UserGroupKey, scores: &[u8]) -> (TxHash, Open) {
        let mut body = vec![0u8; 32];
        self.rng.fill(&mut body[..]);
        let (tx, submit) = self.submit(usk, &body);
        let (dist, _) = self.distribute(&tx.hash(), 3, 3);
        self.review_all(&dist, scores);
        self.idle(3);
        let shares = self.open_shares(&submit);
        let v = self.v(1).clone();
        let open_tx = open(&self.state, &submit, &shares, &v, &self.setup).unwrap();
        self.commit(vec![open_tx.clone()]);
        let Transaction::Open(o) = open_tx else { unreachable!() };
        (tx.hash(), o)
    }
}

#[test]
fn initialization_consistent_for_3_of_4_and_1_of_1() {
    for (k, n) in [(3, 4), (1, 1)] {
        let w = World::new(k, n, 1, 1, 1);
        assert_eq!(w.setup.validators.len(), n as usize);
        for v in &w.setup.validators {
            assert_eq!(w.setup.gvks.get(v.index), Some(&v.gvk));
            assert_eq!(w.setup.tsig.verify_key(v.index), Some(&v.tvk));
        }
        assert_eq!(w.state.balance(&w.setup.acc_pub()), 0);
        let bytes = w.setup.mpk.to_bytes();
        assert_eq!(tibgs::MasterPublicKey::from_bytes(&bytes).unwrap(), w.setup.mpk);
    }
}

#[test]
fn registration_rules() {
    let mut w = World::new(3, 4, 2, 3, 2);
    let reviewer = w.reviewers[0].clone();
    assert!(registration_deposit(&w.state, &reviewer).unwrap().is_none());
    let poor = registration(AccountType::Author, "poor", Some(FIELD), &mut w.rng);
    let mut accts = vec![poor.genesis_account(99)];
    accts.extend(w.authors.iter().map(|a| a.genesis_account(1_000)));
    let state = ChainState::from_genesis(&w.setup.genesis(accts)).unwrap();
    assert!(matches!(
        registration_deposit(&state, &poor),
        Err(WorkflowError::InsufficientFunds { have: 99, need: 100 })
    ));
    let a = w.authors[0].user_id.clone();
    assert!(matches!(w.v(1).issue_user_share(&w.state, &a), Err(WorkflowError::NoDeposit(_))));
    w.register(0);
    assert!(w.state.deposit_held(&a));
}

#[test]
fn key_collection_stalls_until_threshold() {
    let mut w = World::new(3, 4, 1, 1, 3);
    let author = w.authors[0].clone();
    let tx = registration_deposit(&w.state, &author).unwrap().unwrap();
    w.commit(vec![tx]);
    let mut c = KeyCollector::new(&author.user_id, &w.setup);
    for i in [1, 2] {
        c.offer(w.v(i).issue_user_share(&w.state, &author.user_id).unwrap());
    }
    assert!(!c.is_ready());
    assert!(matches!(
        c.finish(),
        Err(WorkflowError::Tibgs(tibgs::TibgsError::InsufficientValidShares { valid: 2, need: 3, .. }))
    ));
    c.offer(corrupt_user_share(w.v(4).issue_user_share(&w.state, &author.user_id).unwrap()));
    assert!(c.finish().is_err());
    c.offer(w.v(3).issue_user_share(&w.state, &author.user_id).unwrap());
    let key = c.finish().unwrap();
    assert_eq!(key.rejected, vec![ShareIndex::new(4).unwrap()]);
    assert!(key.key.is_valid());
}

#[test]
fn submission_verifies_and_is_randomized() {
    let mut w = World::new(3, 4, 1, 1, 4);
    let usk = w.register(0);
    let acc_pub = w.setup.acc_pub();
    let t1 = submission(FIELD, b"same paper", &usk, acc_pub, &mut w.store, &mut w.rng).unwrap();
    let t2 = submission(FIELD, b"same paper", &usk, acc_pub, &mut w.store, &mut w.rng).unwrap();
    assert!(w.state.ver_tx(&t1) && w.state.ver_tx(&t2));
    assert_ne!(t1.hash(), t2.hash());
    assert_eq!(t1.sender(), &AccountId::Anonymity);
    assert_eq!(w.store.len(), 1);

    let mut other = World::new(3, 4, 1, 1, 5);
    let foreign = other.register(0);
    let forged = submission(FIELD, b"forged", &foreign, acc_pub, &mut w.store, &mut w.rng).unwrap();
    assert!(!w.state.ver_tx(&forged));
}

#[test]
fn distribution_selects_field_matching_reviewers() {
    let run = |seed| {
        let mut w = World::new(3, 4, 1, 5, 6);
        let usk = w.register(0);
        let (tx, _) = w.submit(&usk, b"paper");
        let pool = reviewer_pool(&w.state);
        assert_eq!(pool.len(), 6);
        let v = w.v(2).clone();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let d = distribution(&w.state, &tx.hash(), &pool, 3, w.state.height + 5, &v, &mut rng).unwrap();
        let mut chosen: Vec<String> = d.assignments.iter().map(|a| a.reviewer_id.clone()).collect();
        chosen.sort();
        let Transaction::Distribute(dist) = &d.tx else { unreachable!() };
        for r in &w.reviewers {
            let found = find_assignment(&r.keypair, dist);
            assert_eq!(found.is_some(), chosen.contains(&r.user_id), "{}", r.user_id);
        }
        assert!(!chosen.contains(&"outsider".to_string()));
        assert!(w.state.ver_tx(&d.tx));
        chosen
    };
    assert_eq!(run(11), run(11));
    let picks: std::collections::BTreeSet<_> = (0..12).map(run).collect();
    assert!(picks.len() > 1);

    let mut w = World::new(3, 4, 1, 2, 7);
    let usk = w.register(0);
    let (tx, _) = w.submit(&usk, b"paper");
    let pool = reviewer_pool(&w.state);
    let v = w.v(1).clone();
    assert!(matches!(
        distribution(&w.state, &tx.hash(), &pool, 3, 10, &v, &mut w.rng),
        Err(WorkflowError::InsufficientReviewers { available: 2, needed: 3, .. })
    ));
}

#[test]
fn ciphertext_and_seal_order_is_shuffled() {
    let mut w = World::new(3, 4, 1, 5, 8);
    let usk = w.register(0);
    let (tx, _) = w.submit(&usk, b"paper");
    let pool = reviewer_pool(&w.state);
    let v = w.v(1).clone();
    let mut first_slot = std::collections::BTreeSet::new();
    for seed in 0..16 {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let d = distribution(&w.state, &tx.hash(), &pool, 5, 10, &v, &mut rng).unwrap();
        let Transaction::Distribute(dist) = &d.tx else { unreachable!() };
        let owner = w
            .reviewers
            .iter()
            .find(|r| openpub::suite::dec(&dist.ciphertexts[0], &r.keypair).is_ok())
            .unwrap();
        first_slot.insert(owner.user_id.clone());
    }
    assert!(first_slot.len() > 1);
}

#[test]
fn reviews_need_the_sealed_nonce_and_readers_do_not_count() {
    let mut w = World::new(3, 4, 1, 3, 9);
    let usk = w.register(0);
    let (tx, _) = w.submit(&usk, b"paper");
    let (dist, assignments) = w.distribute(&tx.hash(), 3, 5);
    let assigned = w
        .reviewers
        .iter()
        .find(|r| r.user_id == assignments[0].reviewer_id)
        .unwrap()
        .clone();
    let good = review(&assigned, &dist, &w.state, &w.store, |_| ("fine".into(), 8)).unwrap().unwrap();
    let mut bad = good.clone();
    if let Transaction::Review(r) = &mut bad {
        r.r += openpub::pairing::scalar_from_u64(1);
    }
    let bad = bad.sign_with(&assigned.keypair);
    let mut probe = w.state.clone();
    let ctx = TxContext {
        height: w.state.height + 1,
        proposer: None,
    };
    assert!(matches!(probe.apply_tx(&bad, ctx), Err(TxError::SealMismatch)));

    let outsider = w.reviewers.iter().find(|r| r.user_id == "outsider").unwrap();
    assert!(review(outsider, &dist, &w.state, &w.store, |_| ("x".into(), 9)).unwrap().is_none());

    let reader = w.readers[0].clone();
    let comment = reader_comment(&reader, w.setup.acc_pub(), &tx.hash(), "nice", 1);
    w.commit(vec![good, comment]);
    let paper = &w.state.papers[&tx.hash()];
    assert_eq!(paper.reviews.len(), 2);
    let (ids, _) = w.state.expected_outcome(&tx.hash()).unwrap();
    assert_eq!(ids, vec![assigned.user_id.clone()]);
}

#[test]
fn open_waits_for_endtime_and_recovers_the_author() {
    let mut w = World::new(3, 4, 2, 3, 10);
    let usk = w.register(1);
    let (tx, submit) = w.submit(&usk, b"paper");
    let (dist, _) = w.distribute(&tx.hash(), 3, 4);
    w.review_all(&dist, &[7, 8, 6]);
    let endtime = dist.endtime;
    while w.state.height < endtime - 1 {
        w.idle(1);
    }
    let shares = w.open_shares(&submit);
    let v = w.v(1).clone();
    assert!(matches!(
        open(&w.state, &submit, &shares, &v, &w.setup),
        Err(WorkflowError::BeforeEndtime { .. })
    ));
    w.idle(1);
    assert!(matches!(
        open(&w.state, &submit, &shares[..2], &v, &w.setup),
        Err(WorkflowError::InsufficientShares { need: 3, got: 2 })
    ));
    let mut mixed = shares.clone();
    mixed[0] = corrupt_open_share(mixed[0]);
    mixed[1] = corrupt_open_share(mixed[1]);
    assert!(open(&w.state, &submit, &mixed, &v, &w.setup).is_err());
    mixed[1] = shares[1];
    let tx_open = open(&w.state, &submit, &mixed, &v, &w.setup).unwrap();
    let Transaction::Open(o) = &tx_open else { unreachable!() };
    assert_eq!(o.user_id, w.authors[1].user_id);
    assert_eq!(o.result, Decision::Accept);
    assert_eq!(o.reviewer_ids.len(), 3);
    assert!(w.state.ver_tx(&tx_open));
}

#[test]
fn opened_identity_matches_ground_truth_over_random_runs() {
    let mut w = World::new(3, 4, 4, 3, 11);
    let keys: Vec<UserGroupKey> = (0..4).map(|a| w.register(a)).collect();
    let mut pick = ChaCha20Rng::seed_from_u64(99);
    for _ in 0..100 {
        let a = pick.gen_range(0..4);
        let mut body = vec![0u8; 16];
        pick.fill(&mut body[..]);
        let (_, submit) = w.submit(&keys[a], &body);
        let shares = w.open_shares(&submit);
        let reg = author_registry(&w.state, "venue");
        let opened = tibgs::open(w.setup.params, &submit.gsig, &shares[1..], &reg).unwrap();
        assert_eq!(opened, w.authors[a].user_id);
    }
}

#[test]
fn reward_pays_fees_incentive_and_refund() {
    let mut w = World::new(3, 4, 2, 3, 12);
    let fees = w.setup.fees;
    let k0 = w.register(0);
    let k1 = w.register(1);
    let (accepted, o) = w.full_paper(&k0, &[7, 8, 6]);
    assert_eq!(o.result, Decision::Accept);
    let before = w.state.balance(&w.setup.acc_pub());
    let signers: Vec<&ValidatorIdentity> = w.setup.validators.iter().take(2).collect();
    assert!(matches!(
        reward(&w.state, &accepted, &signers, &w.setup),
        Err(WorkflowError::InsufficientTsigShares { need: 3, got: 2 })
    ));
    let signers: Vec<&ValidatorIdentity> = w.setup.validators.iter().skip(1).collect();
    let txs = reward(&w.state, &accepted, &signers, &w.setup).unwrap();
    assert_eq!(txs.len(), 5);
    w.commit(txs);
    let after = w.state.balance(&w.setup.acc_pub());
    assert_eq!(before - after, 3 * fees.review + fees.incentive + fees.deposit);
    assert_eq!(w.state.balance(&w.authors[0].account()), 1_000 + fees.incentive);
    assert!(!w.state.deposit_held(&w.authors[0].user_id));

    let (rejected, o) = w.full_paper(&k1, &[3, 5, 4]);
    assert_eq!(o.result, Decision::Reject);
    let signers: Vec<&ValidatorIdentity> = w.setup.validators.iter().collect();
    let txs = reward(&w.state, &rejected, &signers, &w.setup).unwrap();
    let purposes: Vec<&str> = txs
        .iter()
        .map(|t| match t {
            Transaction::Transfer(t) => t.purpose.name(),
            _ => "",
        })
        .collect();
    assert!(!purposes.contains(&"incentive"));
    assert!(purposes.contains(&"deposit-refund"));
    w.commit(txs);
    assert_eq!(w.state.balance(&w.authors[1].account()), 1_000);
    for r in &w.reviewers[..3] {
        assert_eq!(w.state.balance(&r.account()), 2 * fees.review);
    }
    assert_eq!(w.state.balance(&w.setup.acc_pub()), 0);
    assert!(w.state.is_conserved());
    assert_eq!(w.state.minted, 6 * fees.review + fees.incentive);
}

#[test]
fn recovered_key_signs_and_opens_to_same_user() {
    let mut w = World::new(3, 4, 1, 1, 13);
    let original = w.register(0);
    let uid = w.authors[0].user_id.clone();
    let refs: Vec<&ValidatorIdentity> = w.setup.validators.iter().skip(1).collect();
    let recovered = recover_key(&uid, &w.state, &refs, &w.setup).unwrap();
    assert_eq!(recovered.sigma, original.sigma);
    assert!(recover_key(&uid, &w.state, &refs[..2], &w.setup).is_err());
    let (_, submit) = w.submit(&recovered, b"after key loss");
    let reg = author_registry(&w.state, "venue");
    let shares = w.open_shares(&submit);
    assert_eq!(tibgs::open(w.setup.params, &submit.gsig, &shares, &reg).unwrap(), uid);
}

#[test]
fn chain_level_anonymity_oracles_enforce_restrictions() {
    let p = Params::new(3, 4).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(14);
    assert!(matches!(
        anonymity_game_e2e(p, 5, &mut FullShareAdversary, &mut rng),
        Err(GameError::OracleViolation(_))
    ));
    assert!(matches!(
        anonymity_game_e2e(p, 5, &mut OpenChallenge, &mut rng),
        Err(GameError::OracleViolation(_))
    ));
    let out = anonymity_game_e2e(p, 100, &mut ChainScraping, &mut rng).unwrap();
    assert_eq!(out.trials, 100);
    assert!(out.score <= 0.2, "{out:?}");
}

#[test]
fn open_oracle_answers_non_challenge_submissions() {
    let p = Params::new(2, 3).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(15);
    let mut o = ChainOracles::new(p, 3, &mut rng).unwrap();
    let who = o.authors()[2].clone();
    let s = o.submit_as(&who, b"adversary paper", &mut rng).unwrap();
    assert_eq!(o.open(&s).unwrap(), Some(who));
    assert!(o.chain_bytes().len() == 2);
}

#[test]
fn demo_scenario_holds_every_invariant() {
    let cfg = ScenarioConfig::demo();
    let report = run_scenario(&cfg).unwrap();
    for c in &report.checks {
        assert!(c.holds, "{}: {}", c.name, c.detail);
    }
    assert!(report.ok());
    let results: Vec<Decision> = report
        .final_state
        .papers
        .values()
        .filter_map(|p| p.outcome.as_ref().map(|o| o.result))
        .collect();
    assert_eq!(results.len(), 2);
    assert!(results.contains(&Decision::Accept) && results.contains(&Decision::Reject));

    let again = run_scenario(&cfg).unwrap();
    assert_eq!(report.events_jsonl(), again.events_jsonl());
    assert_eq!(report.chain_export(), again.chain_export());
}

#[test]
fn scenario_survives_each_faulty_validator() {
    for (i, b) in [(1, Behavior::CorruptShare), (2, Behavior::Silent), (3, Behavior::Equivocate), (4, Behavior::Delay)] {
        let mut cfg = ScenarioConfig::demo();
        cfg.faults = FaultPlan::single(i, b);
        let report = run_scenario(&cfg).unwrap();
        assert!(report.ok(), "{b:?} at {i}: {:?}", report.first_violation());
    }
}

#[test]
fn scenario_without_reviewers_fails_at_distribution() {
    let mut cfg = ScenarioConfig::demo();
    cfg.reviewers = 0;
    let report = run_scenario(&cfg).unwrap();
    assert!(!report.ok());
    let why = report.first_violation().unwrap();
    assert!(why.contains("distribution") && why.contains("reviewers"), "{why}");

    let mut cfg = ScenarioConfig::demo();
    cfg.n = 5;
    assert!(matches!(run_scenario(&cfg), Err(ScenarioError::Config(_))));
    assert!(ScenarioConfig::from_json(r#"{"f": 1, "seed": 1}"#).is_err());
}

#[test]
fn exported_chain_replays_and_inspects() {
    use openpub::workflow::inspect::*;
    let report = run_scenario(&ScenarioConfig::demo()).unwrap();
    let text = report.chain_export();
    let (genesis, blocks) = import_chain(text.as_bytes()).unwrap();
    let state = replay(&genesis, &blocks).unwrap();
    assert_eq!(state.accounts, report.final_state.accounts);

    let submit = blocks
        .iter()
        .flat_map(|b| &b.txs)
        .find(|t| matches!(t, Transaction::Submit(_)))
        .unwrap()
        .hash();
    let Inspection::Paper(trail) = inspect(&blocks, &Query::parse(&submit.to_hex())).unwrap() else {
        panic!("expected a paper trail")
    };
    assert_eq!(trail.stages(), vec!["submit", "distribute", "review", "open", "reward"]);
    assert!(trail.author.is_some());

    let pre_open: Vec<Block> = blocks
        .iter()
        .take_while(|b| !b.txs.iter().any(|t| matches!(t, Transaction::Open(_))))
        .cloned()
        .collect();
    let Inspection::Paper(early) = inspect(&pre_open, &Query::Tx(submit)).unwrap() else {
        panic!("expected a paper trail")
    };
    assert_eq!(early.author, None);

    assert!(inspect(&blocks, &Query::parse(&"ab".repeat(32))).is_err());
    assert!(inspect(&blocks, &Query::parse("author-1")).is_ok());
    assert!(inspect(&blocks, &Query::parse("height:1")).is_ok());
}

#[test]
fn demo_event_log_matches_golden() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/demo_events.jsonl");
    let events = run_scenario(&ScenarioConfig::demo()).unwrap().events_jsonl();
    if std::env::var_os("OPENPUB_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &events).unwrap();
    }
    let golden = std::fs::read_to_string(&path).expect("golden log; regenerate with OPENPUB_BLESS=1");
    assert!(golden == events, "event log differs from {}", path.display());
}
