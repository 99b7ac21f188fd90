//! The anonymity experiment played over submit transactions on a chain.
//!
//! Authors are registered in genesis and post their deposits in the first
//! block, so the chain names every candidate. Each trial commits the
//! challenge submission in a fresh block and hands the adversary the whole
//! chain. The adversary may corrupt fewer than `k` validators, obtain any
//! author's key, and open any submission except the challenge.

use std::collections::BTreeSet;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::ledger::{AccountType, Block, BlockHash, ChainState, ContentStore};
use crate::pairing;
use crate::tibgs::games::{GameError, GameOutcome};
use crate::tibgs::{identity_base, identity_commitment, identity_scalar, GroupKeyShare, MasterKeyShare};

use super::*;

const GROUP: &str = "anonymity-venue";
const FIELD: &str = "cryptography";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainChallenge {
    pub user0: String,
    pub user1: String,
    pub paper: Vec<u8>,
}

/// Oracle access for one experiment. The setup is shared by all trials;
/// corruption and the challenge reset every trial.
pub struct ChainOracles {
    setup: SystemSetup,
    roster: Vec<Participant>,
    state: ChainState,
    blocks: Vec<Block>,
    store: ContentStore,
    corrupted: BTreeSet<ShareIndex>,
    challenge: Option<TxHash>,
}

impl ChainOracles {
    pub fn new(params: Params, authors: usize, rng: &mut ChaCha20Rng) -> Result<Self, GameError> {
        let setup = system_initialization(params.k, params.n, GROUP, Fees::default(), rng).map_err(|e| match e {
            WorkflowError::Tibgs(t) => GameError::Tibgs(t),
            other => GameError::OracleViolation(other.to_string()),
        })?;
        let roster: Vec<Participant> = (0..authors.max(2))
            .map(|i| registration(AccountType::Author, &format!("author-{i}@example.org"), Some(FIELD), rng))
            .collect();
        let genesis = setup.genesis(roster.iter().map(|p| p.genesis_account(1_000)).collect());
        let state = ChainState::from_genesis(&genesis).expect("valid genesis");
        let deposits = roster
            .iter()
            .map(|p| registration_deposit(&state, p).ok().flatten().expect("funded author"))
            .collect();
        let mut oracles = Self {
            setup,
            roster,
            state,
            blocks: Vec::new(),
            store: ContentStore::in_memory(),
            corrupted: BTreeSet::new(),
            challenge: None,
        };
        oracles.commit(deposits);
        Ok(oracles)
    }

    fn commit(&mut self, txs: Vec<Transaction>) -> &Block {
        let height = self.state.height + 1;
        let parent: BlockHash = self.state.last_hash;
        let proposer = ShareIndex::new(1).expect("nonzero");
        let block = Block::new(height, parent, proposer, 0, height * 100_000, txs);
        self.state = self.state.execute_block(&block).expect("oracle blocks are valid");
        self.blocks.push(block);
        self.blocks.last().expect("just pushed")
    }

    fn reset_trial(&mut self) {
        self.corrupted.clear();
        self.challenge = None;
    }

    pub fn params(&self) -> Params {
        self.setup.params
    }

    pub fn authors(&self) -> Vec<String> {
        self.roster.iter().map(|p| p.user_id.clone()).collect()
    }

    pub fn gpk(&self) -> &GroupPublicKey {
        &self.setup.gpk
    }

    /// Every committed block, serialized.
    pub fn chain_bytes(&self) -> Vec<Vec<u8>> {
        self.blocks.iter().map(Block::to_bytes).collect()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Hands over a validator's master and group key shares.
    pub fn corrupt(&mut self, i: ShareIndex) -> Result<(MasterKeyShare, GroupKeyShare), GameError> {
        let v = self
            .setup
            .validator(i)
            .ok_or(GameError::Tibgs(TibgsError::UnknownManager(i)))?
            .clone();
        self.corrupted.insert(i);
        let k = self.setup.params.k as usize;
        if self.corrupted.len() >= k {
            return Err(GameError::OracleViolation(format!(
                "{} validators corrupted, threshold is {k}",
                self.corrupted.len()
            )));
        }
        Ok((v.msk, v.gsk))
    }

    /// Issues a registered author's key.
    pub fn author_key(&mut self, user_id: &str) -> Result<UserGroupKey, GameError> {
        let refs: Vec<&ValidatorIdentity> = self.setup.validators.iter().collect();
        recover_key(user_id, &self.state, &refs, &self.setup).map_err(|e| GameError::OracleViolation(e.to_string()))
    }

    /// Opens a committed submission with every validator's share; refused on
    /// the challenge.
    pub fn open(&mut self, submit: &Submit) -> Result<Option<String>, GameError> {
        let h = Transaction::Submit(submit.clone()).hash();
        if self.challenge == Some(h) {
            return Err(GameError::OracleViolation("open queried on the challenge".into()));
        }
        if !self.state.contains_tx(&h) {
            return Ok(None);
        }
        let shares: Vec<OpenShare> = self
            .setup
            .validators
            .iter()
            .filter_map(|v| v.open_share(submit, &self.setup.gpk).ok())
            .collect();
        let reg = author_registry(&self.state, GROUP);
        Ok(tibgs::open(self.setup.params, &submit.gsig, &shares, &reg).ok())
    }

    /// Signs and commits a submission by any registered author, as an
    /// adversary-controlled author would.
    pub fn submit_as(&mut self, user_id: &str, paper: &[u8], rng: &mut ChaCha20Rng) -> Result<Submit, GameError> {
        let usk = self.author_key(user_id)?;
        let acc_pub = self.setup.acc_pub();
        let tx = submission(FIELD, paper, &usk, acc_pub, &mut self.store, rng)
            .map_err(|e| GameError::OracleViolation(e.to_string()))?;
        let Transaction::Submit(s) = &tx else { unreachable!() };
        let s = s.clone();
        self.commit(vec![tx]);
        Ok(s)
    }
}

pub trait ChainAdversary {
    fn name(&self) -> &'static str;

    fn choose(&mut self, oracles: &mut ChainOracles, rng: &mut ChaCha20Rng) -> Result<ChainChallenge, GameError>;

    /// `false` for `user0`, `true` for `user1`.
    fn guess(
        &mut self,
        oracles: &mut ChainOracles,
        challenge: &ChainChallenge,
        submit: &Submit,
        rng: &mut ChaCha20Rng,
    ) -> Result<bool, GameError>;
}

/// Runs `trials` rounds of the experiment on one chain. The score is
/// `|wins/trials − 1/2|`.
pub fn anonymity_game_e2e(
    params: Params,
    trials: usize,
    adversary: &mut dyn ChainAdversary,
    rng: &mut ChaCha20Rng,
) -> Result<GameOutcome, GameError> {
    let mut oracles = ChainOracles::new(params, 4, rng)?;
    let mut wins = 0;
    for _ in 0..trials {
        oracles.reset_trial();
        let ch = adversary.choose(&mut oracles, rng)?;
        if ch.user0 == ch.user1 {
            return Err(GameError::OracleViolation("challenge authors must differ".into()));
        }
        for u in [&ch.user0, &ch.user1] {
            if oracles.state.account_by_user(u).map(|a| a.kind) != Some(AccountType::Author) {
                return Err(GameError::OracleViolation(format!("{u} is not a registered author")));
            }
        }
        let b: bool = rng.gen();
        let signer = if b { &ch.user1 } else { &ch.user0 };
        let usk = oracles.author_key(signer)?;
        let acc_pub = oracles.setup.acc_pub();
        let tx = submission(FIELD, &ch.paper, &usk, acc_pub, &mut oracles.store, rng)
            .map_err(|e| GameError::OracleViolation(e.to_string()))?;
        oracles.challenge = Some(tx.hash());
        let Transaction::Submit(submit) = &tx else { unreachable!() };
        let submit = submit.clone();
        oracles.commit(vec![tx]);
        if adversary.guess(&mut oracles, &ch, &submit, rng)? == b {
            wins += 1;
        }
    }
    Ok(GameOutcome {
        trials,
        wins,
        score: (wins as f64 / trials.max(1) as f64 - 0.5).abs(),
    })
}

fn pick_two(oracles: &ChainOracles, rng: &mut ChaCha20Rng) -> ChainChallenge {
    let authors = oracles.authors();
    let i = rng.gen_range(0..authors.len());
    let j = (i + 1 + rng.gen_range(0..authors.len() - 1)) % authors.len();
    ChainChallenge {
        user0: authors[i].clone(),
        user1: authors[j].clone(),
        paper: format!("paper-{}", rng.next_u64()).into_bytes(),
    }
}

/// Guesses uniformly at random.
#[derive(Debug, Default)]
pub struct RandomGuess;

impl ChainAdversary for RandomGuess {
    fn name(&self) -> &'static str {
        "random-guess"
    }

    fn choose(&mut self, oracles: &mut ChainOracles, rng: &mut ChaCha20Rng) -> Result<ChainChallenge, GameError> {
        Ok(pick_two(oracles, rng))
    }

    fn guess(&mut self, _: &mut ChainOracles, _: &ChainChallenge, _: &Submit, rng: &mut ChaCha20Rng) -> Result<bool, GameError> {
        Ok(rng.gen())
    }
}

/// Corrupts `k − 1` validators, then reads every committed byte looking for
/// either candidate's user id, account key or identity-derived values
/// inside the challenge block. Falls back to a guess derived from the
/// signature bytes.
#[derive(Debug, Default)]
pub struct ChainScraping;

fn fingerprints(oracles: &ChainOracles, user_id: &str) -> Vec<Vec<u8>> {
    let pk = oracles
        .state
        .account_by_user(user_id)
        .map(|a| a.id.key_bytes().to_vec())
        .unwrap_or_default();
    vec![
        user_id.as_bytes().to_vec(),
        pk,
        pairing::scalar_to_bytes(&identity_scalar(GROUP, user_id)).to_vec(),
        identity_commitment(GROUP, user_id).to_compressed().to_vec(),
        identity_base(GROUP, user_id).to_compressed().to_vec(),
    ]
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && needle.len() <= haystack.len() && haystack.windows(needle.len()).any(|w| w == needle)
}

impl ChainAdversary for ChainScraping {
    fn name(&self) -> &'static str {
        "chain-scraping"
    }

    fn choose(&mut self, oracles: &mut ChainOracles, rng: &mut ChaCha20Rng) -> Result<ChainChallenge, GameError> {
        for i in ShareIndex::all(oracles.params().k - 1) {
            oracles.corrupt(i)?;
        }
        Ok(pick_two(oracles, rng))
    }

    fn guess(
        &mut self,
        oracles: &mut ChainOracles,
        ch: &ChainChallenge,
        submit: &Submit,
        _: &mut ChaCha20Rng,
    ) -> Result<bool, GameError> {
        let block = oracles.blocks().last().expect("challenge committed").to_bytes();
        let hit = |u: &str| fingerprints(oracles, u).iter().any(|f| contains(&block, f));
        match (hit(&ch.user0), hit(&ch.user1)) {
            (false, true) => return Ok(true),
            (true, false) => return Ok(false),
            _ => {}
        }
        // Nothing identifying on chain. Guess from the signature bytes, the
        // only part that depends on the signer.
        let mut h = Sha256::new();
        h.update(submit.gsig.to_bytes());
        h.update(ch.user0.as_bytes());
        Ok(h.finalize()[0] & 1 == 1)
    }
}

/// Tries to corrupt `k` validators so it can open the challenge itself. The
/// corruption oracle refuses.
#[derive(Debug, Default)]
pub struct FullShareAdversary;

impl ChainAdversary for FullShareAdversary {
    fn name(&self) -> &'static str {
        "full-share"
    }

    fn choose(&mut self, oracles: &mut ChainOracles, rng: &mut ChaCha20Rng) -> Result<ChainChallenge, GameError> {
        for i in ShareIndex::all(oracles.params().k) {
            oracles.corrupt(i)?;
        }
        Ok(pick_two(oracles, rng))
    }

    fn guess(&mut self, _: &mut ChainOracles, _: &ChainChallenge, _: &Submit, _: &mut ChaCha20Rng) -> Result<bool, GameError> {
        Ok(false)
    }
}

/// Opens the challenge through the open oracle; refused.
#[derive(Debug, Default)]
pub struct OpenChallenge;

impl ChainAdversary for OpenChallenge {
    fn name(&self) -> &'static str {
        "open-challenge"
    }

    fn choose(&mut self, oracles: &mut ChainOracles, rng: &mut ChaCha20Rng) -> Result<ChainChallenge, GameError> {
        Ok(pick_two(oracles, rng))
    }

    fn guess(
        &mut self,
        oracles: &mut ChainOracles,
        ch: &ChainChallenge,
        submit: &Submit,
        _: &mut ChaCha20Rng,
    ) -> Result<bool, GameError> {
        Ok(oracles.open(submit)?.as_deref() == Some(ch.user1.as_str()))
    }
}
