//! The publication workflow: system initialization, registration,
//! submission, distribution, review, open and reward.
//!
//! Each procedure builds transactions from the caller's view of committed
//! state. Ordering and inclusion are left to the caller, which is either a
//! test driving [`ChainState`] directly or the [`scenario`] driver running
//! the consensus simulator.

pub mod anonymity;
pub mod bench;
pub mod inspect;
pub mod scenario;

use std::collections::BTreeMap;
use std::fmt;

use group::Curve;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha20Rng;

use crate::ledger::{
    AccountId, AccountType, ChainState, ContentStore, Decision, Distribute, Fees, Genesis,
    GenesisAccount, LedgerConfig, DecisionRule, Open, PaperStatus, Review, Submit, Transaction,
    Transfer, TransferAuth, TransferPurpose, TxHash, Assignment, UNSIGNED,
};
use crate::pairing::{self, G1Affine, G2Projective};
use crate::suite::{self, KeyPair};
use crate::tibgs::{
    self, GroupKeyShare, GroupPublicKey, GroupSignature, GroupVerifyKey, GroupVerifyKeys,
    IdentityRegistry, MasterKeyShare, MasterPublicKey, OpenShare, TibgsError, UserGroupKey,
    UserKeyShare,
};
use crate::tsig::{self, SecretShare, SigShare, ThresholdPublic, TsigError};
use crate::vss::{Params, ShareIndex, VssError};

/// Reviewers assigned per paper unless configured otherwise.
pub const DEFAULT_REVIEWERS_PER_PAPER: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum WorkflowError {
    #[error(transparent)]
    Vss(#[from] VssError),
    #[error(transparent)]
    Tibgs(#[from] TibgsError),
    #[error(transparent)]
    Tsig(#[from] TsigError),
    #[error("insufficient funds: have {have}, need {need}")]
    InsufficientFunds { have: u64, need: u64 },
    #[error("user {0} is not registered")]
    NotRegistered(String),
    #[error("user {0} is not an author")]
    NotAuthor(String),
    #[error("author {0} holds no deposit")]
    NoDeposit(String),
    #[error("author {0} already holds a deposit")]
    DepositAlreadyHeld(String),
    #[error("only {available} reviewers in field {field}, need {needed}")]
    InsufficientReviewers {
        field: String,
        available: usize,
        needed: usize,
    },
    #[error("unknown paper {0}")]
    UnknownPaper(String),
    #[error("paper is {0:?}")]
    WrongStatus(PaperStatus),
    #[error("height {height} is before endtime {endtime}")]
    BeforeEndtime { height: u64, endtime: u64 },
    #[error("only {got} valid open shares, need {need}")]
    InsufficientShares { need: usize, got: usize },
    #[error("only {got} valid signature shares, need {need}")]
    InsufficientTsigShares { need: usize, got: usize },
    #[error("public account holds {have}, rewards need {need}")]
    AccPubUnderfunded { have: u64, need: u64 },
    #[error("paper content missing from the store")]
    ContentMissing,
    #[error("submit transaction does not match the paper record")]
    SubmitMismatch,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Everything one validator holds after system initialization.
#[derive(Clone)]
pub struct ValidatorIdentity {
    pub index: ShareIndex,
    pub keypair: KeyPair,
    pub msk: MasterKeyShare,
    pub gsk: GroupKeyShare,
    pub gvk: GroupVerifyKey,
    pub tsk: SecretShare,
    pub tvk: G1Affine,
}

impl fmt::Debug for ValidatorIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ValidatorIdentity")
            .field("index", &self.index)
            .field("pk", &self.keypair.pk)
            .finish_non_exhaustive()
    }
}

impl ValidatorIdentity {
    pub fn account(&self) -> AccountId {
        AccountId::User(self.keypair.pk)
    }

    /// This validator's fragment of an author's group key. Issued only to a
    /// registered author whose deposit is on chain.
    pub fn issue_user_share(&self, state: &ChainState, user_id: &str) -> Result<UserKeyShare, WorkflowError> {
        let acct = state
            .account_by_user(user_id)
            .ok_or_else(|| WorkflowError::NotRegistered(user_id.to_owned()))?;
        if acct.kind != AccountType::Author {
            return Err(WorkflowError::NotAuthor(user_id.to_owned()));
        }
        if !acct.deposit_held {
            return Err(WorkflowError::NoDeposit(user_id.to_owned()));
        }
        Ok(tibgs::ext_share(user_id, &self.gsk))
    }

    /// Open share for a committed submission.
    pub fn open_share(&self, submit: &Submit, gpk: &GroupPublicKey) -> Result<OpenShare, WorkflowError> {
        let msg = Transaction::Submit(submit.clone()).signing_bytes();
        Ok(tibgs::open_part(&self.gsk, &submit.gsig, &msg, gpk)?)
    }

    /// Signature share over a transaction spending from the public account.
    pub fn tsig_share(&self, tx: &Transaction) -> SigShare {
        tsig::thres_sign(&tx.signing_bytes(), &self.tsk)
    }
}

/// Public outputs of system initialization plus every validator's secrets,
/// as held by a harness that simulates all validators.
#[derive(Debug, Clone)]
pub struct SystemSetup {
    pub params: Params,
    pub grp_id: String,
    pub mpk: MasterPublicKey,
    pub gpk: GroupPublicKey,
    pub gvks: GroupVerifyKeys,
    pub tsig: ThresholdPublic,
    pub fees: Fees,
    pub rule: DecisionRule,
    pub validators: Vec<ValidatorIdentity>,
}

impl SystemSetup {
    pub fn validator(&self, i: ShareIndex) -> Option<&ValidatorIdentity> {
        self.validators.iter().find(|v| v.index == i)
    }

    pub fn acc_pub(&self) -> AccountId {
        AccountId::public(&self.tsig.pk)
    }

    pub fn ledger_config(&self) -> LedgerConfig {
        LedgerConfig {
            fees: self.fees,
            rule: self.rule,
            gpk: self.gpk.clone(),
            acc_pub: self.tsig.pk,
            validators: self.validators.iter().map(|v| v.keypair.pk).collect(),
        }
    }

    /// Genesis with the validator accounts followed by `accounts`; the public
    /// account starts empty.
    pub fn genesis(&self, accounts: Vec<GenesisAccount>) -> Genesis {
        let mut all: Vec<GenesisAccount> = self
            .validators
            .iter()
            .map(|v| GenesisAccount {
                pk: v.keypair.pk,
                kind: AccountType::Validator,
                user_id: format!("validator-{}", v.index),
                field: None,
                balance: 0,
            })
            .collect();
        all.extend(accounts);
        Genesis {
            config: self.ledger_config(),
            accounts: all,
            acc_pub_balance: 0,
        }
    }
}

/// Runs the two key ceremonies among `n` simulated validators and derives
/// the group keys for `grp_id`.
pub fn system_initialization(
    k: u32,
    n: u32,
    grp_id: &str,
    fees: Fees,
    rng: &mut ChaCha20Rng,
) -> Result<SystemSetup, WorkflowError> {
    let params = Params::new(k, n)?;
    let master = tibgs::setup(params, rng)?;
    let gsks = master.group_key_shares(grp_id);
    let keyset = tsig::thres_keygen(params, rng)?;
    let validators = ShareIndex::all(n)
        .zip(gsks)
        .map(|(i, gsk)| ValidatorIdentity {
            index: i,
            keypair: suite::sig_keygen(rng),
            msk: master.share(i).expect("every index has a share").clone(),
            gvk: gsk.gvk,
            gsk,
            tsk: keyset.share(i).expect("every index has a share").clone(),
            tvk: *keyset.verify_key(i).expect("every index has a key"),
        })
        .collect();
    Ok(SystemSetup {
        params,
        grp_id: grp_id.to_owned(),
        gpk: master.mpk.group_public_key(grp_id),
        gvks: GroupVerifyKeys::derive(&master.mpk, grp_id),
        mpk: master.mpk,
        tsig: keyset.public(),
        fees,
        rule: DecisionRule::default(),
        validators,
    })
}

/// A registered user as known to the harness: identity, role and keys.
#[derive(Debug, Clone)]
pub struct Participant {
    pub user_id: String,
    pub kind: AccountType,
    pub field: Option<String>,
    pub keypair: KeyPair,
}

impl Participant {
    pub fn account(&self) -> AccountId {
        AccountId::User(self.keypair.pk)
    }

    pub fn genesis_account(&self, balance: u64) -> GenesisAccount {
        GenesisAccount {
            pk: self.keypair.pk,
            kind: self.kind,
            user_id: self.user_id.clone(),
            field: self.field.clone(),
            balance,
        }
    }
}

/// Creates the key pair for a new participant. Accounts are created in
/// genesis, so this is purely local.
pub fn registration(kind: AccountType, user_id: &str, field: Option<&str>, rng: &mut ChaCha20Rng) -> Participant {
    Participant {
        user_id: user_id.to_owned(),
        kind,
        field: field.map(str::to_owned),
        keypair: suite::sig_keygen(rng),
    }
}

/// The deposit transfer an author posts before requesting key shares.
/// Readers and reviewers post nothing.
pub fn registration_deposit(state: &ChainState, who: &Participant) -> Result<Option<Transaction>, WorkflowError> {
    if who.kind != AccountType::Author {
        return Ok(None);
    }
    let acct = state
        .account_by_user(&who.user_id)
        .ok_or_else(|| WorkflowError::NotRegistered(who.user_id.clone()))?;
    if acct.deposit_held {
        return Err(WorkflowError::DepositAlreadyHeld(who.user_id.clone()));
    }
    let need = state.config.fees.deposit;
    if acct.balance < need {
        return Err(WorkflowError::InsufficientFunds {
            have: acct.balance,
            need,
        });
    }
    let tx = Transaction::Transfer(Transfer {
        sender: who.account(),
        receiver: state.acc_pub(),
        user_id: who.user_id.clone(),
        amount: need,
        purpose: TransferPurpose::Deposit,
        auth: TransferAuth::Sig(UNSIGNED),
    });
    Ok(Some(tx.sign_with(&who.keypair)))
}

/// Gathers user key shares from validators as they arrive and reconstructs
/// the key once `k` of them verify.
#[derive(Debug, Clone)]
pub struct KeyCollector {
    user_id: String,
    params: Params,
    gvks: GroupVerifyKeys,
    shares: BTreeMap<ShareIndex, UserKeyShare>,
}

impl KeyCollector {
    pub fn new(user_id: &str, setup: &SystemSetup) -> Self {
        Self {
            user_id: user_id.to_owned(),
            params: setup.params,
            gvks: setup.gvks.clone(),
            shares: BTreeMap::new(),
        }
    }

    /// Records a share; a later share from the same validator replaces the
    /// earlier one.
    pub fn offer(&mut self, share: UserKeyShare) {
        self.shares.insert(share.manager, share);
    }

    pub fn received(&self) -> usize {
        self.shares.len()
    }

    pub fn valid(&self) -> usize {
        self.shares
            .values()
            .filter(|s| self.gvks.get(s.manager).is_some_and(|g| s.verify(g)))
            .count()
    }

    pub fn is_ready(&self) -> bool {
        self.valid() >= self.params.k as usize
    }

    /// Fails with `InsufficientValidShares` while stalled.
    pub fn finish(&self) -> Result<tibgs::ReconstructedKey, WorkflowError> {
        let shares: Vec<UserKeyShare> = self.shares.values().cloned().collect();
        Ok(tibgs::reconst_key(&self.user_id, &shares, &self.gvks, self.params)?)
    }
}

/// Re-derives a lost user key from the responding validators.
pub fn recover_key(
    user_id: &str,
    state: &ChainState,
    validators: &[&ValidatorIdentity],
    setup: &SystemSetup,
) -> Result<UserGroupKey, WorkflowError> {
    if state.account_by_user(user_id).map(|a| a.kind) != Some(AccountType::Author) {
        return Err(WorkflowError::NotAuthor(user_id.to_owned()));
    }
    let mut c = KeyCollector::new(user_id, setup);
    for v in validators {
        c.offer(tibgs::ext_share(user_id, &v.gsk));
    }
    Ok(c.finish()?.key)
}

/// Stores the paper and produces the group-signed submit transaction.
pub fn submission(
    field: &str,
    paper: &[u8],
    usk: &UserGroupKey,
    acc_pub: AccountId,
    store: &mut ContentStore,
    rng: &mut ChaCha20Rng,
) -> Result<Transaction, WorkflowError> {
    let paper = store.put(paper)?;
    let mut tx = Transaction::Submit(Submit {
        sender: AccountId::Anonymity,
        receiver: acc_pub,
        field: field.to_owned(),
        paper,
        gsig: GroupSignature::placeholder(),
    });
    let sig = tibgs::sign(&tx.signing_bytes(), usk, rng);
    if let Transaction::Submit(s) = &mut tx {
        s.gsig = sig;
    }
    Ok(tx)
}

/// A reviewer candidate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolEntry {
    pub user_id: String,
    pub field: Option<String>,
    pub pk: suite::PublicKey,
}

/// Registered reviewers in user-id order.
pub fn reviewer_pool(state: &ChainState) -> Vec<PoolEntry> {
    state
        .by_user_id
        .values()
        .filter_map(|id| state.accounts.get(id))
        .filter(|a| a.kind == AccountType::Reviewer)
        .filter_map(|a| match a.id {
            AccountId::User(pk) => Some(PoolEntry {
                user_id: a.user_id.clone(),
                field: a.field.clone(),
                pk,
            }),
            _ => None,
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Distribution {
    pub tx: Transaction,
    /// Plaintexts in selection order; known only to the distributor.
    pub assignments: Vec<Assignment>,
}

/// Selects `count` reviewers from the field-matching part of `pool` and
/// publishes their encrypted assignments.
pub fn distribution(
    state: &ChainState,
    submit: &TxHash,
    pool: &[PoolEntry],
    count: usize,
    endtime: u64,
    validator: &ValidatorIdentity,
    rng: &mut ChaCha20Rng,
) -> Result<Distribution, WorkflowError> {
    let paper = state
        .papers
        .get(submit)
        .ok_or_else(|| WorkflowError::UnknownPaper(submit.to_hex()))?;
    if paper.status != PaperStatus::Submitted {
        return Err(WorkflowError::WrongStatus(paper.status));
    }
    let matching: Vec<&PoolEntry> = pool
        .iter()
        .filter(|p| p.field.as_deref() == Some(paper.field.as_str()))
        .collect();
    if matching.len() < count || count == 0 {
        return Err(WorkflowError::InsufficientReviewers {
            field: paper.field.clone(),
            available: matching.len(),
            needed: count.max(1),
        });
    }
    let chosen: Vec<&PoolEntry> = matching.choose_multiple(rng, count).copied().collect();
    let mut ciphertexts = Vec::with_capacity(count);
    let mut seals = Vec::with_capacity(count);
    let mut assignments = Vec::with_capacity(count);
    for reviewer in chosen {
        let a = Assignment {
            submit: *submit,
            reviewer_id: reviewer.user_id.clone(),
            r: pairing::scalar_random_nonzero(rng),
        };
        ciphertexts.push(suite::enc(&a.to_bytes(), &reviewer.pk, rng).expect("registered key is valid"));
        seals.push(crate::ledger::seal(submit, &a.reviewer_id, &a.r));
        assignments.push(a);
    }
    ciphertexts.shuffle(rng);
    seals.shuffle(rng);
    let tx = Transaction::Distribute(Distribute {
        sender: validator.account(),
        receiver: state.acc_pub(),
        submit: *submit,
        ciphertexts,
        seals,
        endtime,
        sig: UNSIGNED,
    })
    .sign_with(&validator.keypair);
    Ok(Distribution { tx, assignments })
}

/// Trial-decrypts every ciphertext; `None` if none is addressed to `key`.
pub fn find_assignment(key: &KeyPair, dist: &Distribute) -> Option<Assignment> {
    dist.ciphertexts
        .iter()
        .filter_map(|c| suite::dec(c, key).ok())
        .filter_map(|p| Assignment::from_bytes(&p).ok())
        .find(|a| a.submit == dist.submit)
}

/// A reviewer's response to a distribution: fetches the paper, asks `judge`
/// for a comment and score, and signs a real-name review echoing the nonce.
pub fn review<J>(
    reviewer: &Participant,
    dist: &Distribute,
    state: &ChainState,
    store: &ContentStore,
    judge: J,
) -> Result<Option<Transaction>, WorkflowError>
where
    J: FnOnce(&[u8]) -> (String, u8),
{
    let Some(a) = find_assignment(&reviewer.keypair, dist) else {
        return Ok(None);
    };
    let paper = state
        .papers
        .get(&a.submit)
        .ok_or_else(|| WorkflowError::UnknownPaper(a.submit.to_hex()))?;
    let content = store.get(&paper.paper).ok_or(WorkflowError::ContentMissing)?;
    let (comment, score) = judge(&content);
    let tx = Transaction::Review(Review {
        sender: reviewer.account(),
        receiver: state.acc_pub(),
        submit: a.submit,
        reviewer_id: reviewer.user_id.clone(),
        r: a.r,
        comment,
        score,
        sig: UNSIGNED,
    });
    Ok(Some(tx.sign_with(&reviewer.keypair)))
}

/// A reader's public comment. It is recorded but never counted.
pub fn reader_comment(reader: &Participant, acc_pub: AccountId, submit: &TxHash, comment: &str, score: u8) -> Transaction {
    Transaction::Review(Review {
        sender: reader.account(),
        receiver: acc_pub,
        submit: *submit,
        reviewer_id: reader.user_id.clone(),
        r: crate::ledger::no_nonce(),
        comment: comment.to_owned(),
        score,
        sig: UNSIGNED,
    })
    .sign_with(&reader.keypair)
}

/// Registered authors, the candidates an opened commitment is matched to.
pub fn author_registry(state: &ChainState, grp_id: &str) -> IdentityRegistry {
    IdentityRegistry::new(
        grp_id,
        state
            .accounts
            .values()
            .filter(|a| a.kind == AccountType::Author)
            .map(|a| a.user_id.as_str()),
    )
}

/// Builds the open transaction from collected open shares. Invalid shares
/// are dropped; fewer than `k` valid ones is an error.
pub fn open(
    state: &ChainState,
    submit: &Submit,
    shares: &[OpenShare],
    distributor: &ValidatorIdentity,
    setup: &SystemSetup,
) -> Result<Transaction, WorkflowError> {
    let h = Transaction::Submit(submit.clone()).hash();
    let paper = state
        .papers
        .get(&h)
        .ok_or_else(|| WorkflowError::UnknownPaper(h.to_hex()))?;
    if paper.status != PaperStatus::Distributed {
        return Err(WorkflowError::WrongStatus(paper.status));
    }
    let endtime = paper.endtime.unwrap_or(u64::MAX);
    if state.height < endtime {
        return Err(WorkflowError::BeforeEndtime {
            height: state.height,
            endtime,
        });
    }
    let (good, _) = tibgs::filter_open_shares(&setup.gvks, &submit.gsig, shares);
    let need = setup.params.k as usize;
    if good.len() < need {
        return Err(WorkflowError::InsufficientShares {
            need,
            got: good.len(),
        });
    }
    let user_id = tibgs::open(setup.params, &submit.gsig, &good, &author_registry(state, &setup.grp_id))?;
    let (reviewer_ids, result) = state.expected_outcome(&h).expect("paper exists");
    Ok(Transaction::Open(Open {
        sender: distributor.account(),
        receiver: state.acc_pub(),
        submit: h,
        user_id,
        result,
        reviewer_ids,
        sig: UNSIGNED,
    })
    .sign_with(&distributor.keypair))
}

/// Unsigned reward transfers owed for a decided paper: one review fee per
/// counted reviewer, the incentive on accept, and the deposit refund if the
/// author still holds one.
pub fn reward_transfers(state: &ChainState, submit: &TxHash) -> Result<Vec<Transaction>, WorkflowError> {
    let paper = state
        .papers
        .get(submit)
        .ok_or_else(|| WorkflowError::UnknownPaper(submit.to_hex()))?;
    let outcome = match (&paper.status, &paper.outcome) {
        (PaperStatus::Decided, Some(o)) => o,
        _ => return Err(WorkflowError::WrongStatus(paper.status)),
    };
    let fees = state.config.fees;
    let acc_pub = state.acc_pub();
    let pay = |user_id: &str, amount: u64, purpose: TransferPurpose| -> Result<Transaction, WorkflowError> {
        let to = state
            .account_by_user(user_id)
            .ok_or_else(|| WorkflowError::NotRegistered(user_id.to_owned()))?;
        Ok(Transaction::Transfer(Transfer {
            sender: acc_pub,
            receiver: to.id,
            user_id: user_id.to_owned(),
            amount,
            purpose,
            auth: TransferAuth::Sig(UNSIGNED),
        }))
    };
    let mut out = Vec::new();
    for r in &outcome.reviewer_ids {
        out.push(pay(r, fees.review, TransferPurpose::ReviewFee { submit: *submit })?);
    }
    if outcome.result == Decision::Accept {
        out.push(pay(&outcome.user_id, fees.incentive, TransferPurpose::Incentive { submit: *submit })?);
    }
    if state.deposit_held(&outcome.user_id) {
        out.push(pay(&outcome.user_id, fees.deposit, TransferPurpose::DepositRefund { submit: *submit })?);
    }
    Ok(out)
}

/// Attaches a combined threshold signature to `tx` from the given shares,
/// dropping shares that fail verification.
pub fn combine_tsig(tx: &Transaction, shares: &[SigShare], setup: &SystemSetup) -> Result<Transaction, WorkflowError> {
    let msg = tx.signing_bytes();
    let good: Vec<SigShare> = shares
        .iter()
        .filter(|s| {
            setup
                .tsig
                .verify_key(s.signer)
                .is_some_and(|tvk| tsig::sig_share_ver(&setup.tsig.pk, tvk, &msg, s))
        })
        .copied()
        .collect();
    let need = setup.params.k as usize;
    if good.len() < need {
        return Err(WorkflowError::InsufficientTsigShares {
            need,
            got: good.len(),
        });
    }
    let sig = tsig::sig_share_comb(&good, setup.params)?;
    let mut tx = tx.clone();
    if let Transaction::Transfer(t) = &mut tx {
        t.auth = TransferAuth::Tsig(sig);
    }
    Ok(tx)
}

/// Reward for a decided paper with every share produced by `signers`.
/// With fewer than `k` responsive signers nothing is emitted and the caller
/// retries in a later round.
pub fn reward(
    state: &ChainState,
    submit: &TxHash,
    signers: &[&ValidatorIdentity],
    setup: &SystemSetup,
) -> Result<Vec<Transaction>, WorkflowError> {
    let unsigned = reward_transfers(state, submit)?;
    let need: u64 = unsigned
        .iter()
        .map(|t| match t {
            Transaction::Transfer(t) => t.amount,
            _ => 0,
        })
        .sum();
    let have = state.balance(&state.acc_pub());
    if have < need {
        return Err(WorkflowError::AccPubUnderfunded { have, need });
    }
    unsigned
        .iter()
        .map(|tx| {
            let shares: Vec<SigShare> = signers.iter().map(|v| v.tsig_share(tx)).collect();
            combine_tsig(tx, &shares, setup)
        })
        .collect()
}

/// A user key share made unusable, as sent by a faulty validator.
pub fn corrupt_user_share(mut share: UserKeyShare) -> UserKeyShare {
    share.usk = (G2Projective::from(share.usk) + G2Projective::generator()).to_affine();
    share
}

/// An open share that fails its proof, as sent by a faulty validator.
pub fn corrupt_open_share(mut share: OpenShare) -> OpenShare {
    share.ok = (crate::pairing::G1Projective::from(share.ok) + crate::pairing::G1Projective::generator()).to_affine();
    share
}

/// A signature share that fails verification, as sent by a faulty validator.
pub fn corrupt_sig_share(mut share: SigShare) -> SigShare {
    share.partial = (G2Projective::from(share.partial) + G2Projective::generator()).to_affine();
    share
}
