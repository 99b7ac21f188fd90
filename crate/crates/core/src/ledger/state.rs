//! Account state and transaction validation.
//!
//! `apply_tx` checks everything before touching state, so a rejected
//! transaction never leaves a partial mutation behind.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::codec::{CodecError, Reader, Writer};
use crate::pairing::Scalar;
use crate::suite::{self, PlainSignature};
use crate::tibgs::{self, GroupPublicKey};
use crate::tsig;
use crate::vss::ShareIndex;

use super::tx::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fees {
    pub deposit: u64,
    pub review: u64,
    pub incentive: u64,
}

impl Default for Fees {
    fn default() -> Self {
        Self {
            deposit: 100,
            review: 10,
            incentive: 50,
        }
    }
}

/// Accept iff at least `min_reviews` on-time reviews and mean score
/// `>= accept_mean`. Integer arithmetic: `sum >= accept_mean * count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRule {
    pub accept_mean: u32,
    pub min_reviews: u32,
}

impl Default for DecisionRule {
    fn default() -> Self {
        Self {
            accept_mean: 6,
            min_reviews: 2,
        }
    }
}

impl DecisionRule {
    pub fn decide(&self, scores: &[u8]) -> Decision {
        let count = scores.len() as u64;
        let sum: u64 = scores.iter().map(|&s| s as u64).sum();
        if count >= self.min_reviews as u64 && count > 0 && sum >= self.accept_mean as u64 * count {
            Decision::Accept
        } else {
            Decision::Reject
        }
    }
}

pub const MIN_SCORE: u8 = 1;
pub const MAX_SCORE: u8 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccountType {
    Reader,
    Reviewer,
    Author,
    Validator,
    Public,
}

impl AccountType {
    pub fn tag(self) -> u8 {
        match self {
            AccountType::Reader => 0,
            AccountType::Reviewer => 1,
            AccountType::Author => 2,
            AccountType::Validator => 3,
            AccountType::Public => 4,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => AccountType::Reader,
            1 => AccountType::Reviewer,
            2 => AccountType::Author,
            3 => AccountType::Validator,
            4 => AccountType::Public,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Account {
    pub id: AccountId,
    pub kind: AccountType,
    pub user_id: String,
    pub field: Option<String>,
    pub balance: u64,
    pub deposit_held: bool,
}

/// Chain-wide constants fixed at genesis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerConfig {
    pub fees: Fees,
    pub rule: DecisionRule,
    pub gpk: GroupPublicKey,
    pub acc_pub: tsig::PublicKey,
    /// Validator account keys, position `i−1` for index `i`.
    pub validators: Vec<suite::PublicKey>,
}

impl LedgerConfig {
    pub fn acc_pub_id(&self) -> AccountId {
        AccountId::public(&self.acc_pub)
    }

    pub fn n(&self) -> usize {
        self.validators.len()
    }

    pub fn f(&self) -> usize {
        self.n().saturating_sub(1) / 3
    }

    pub fn quorum(&self) -> usize {
        2 * self.f() + 1
    }

    pub fn validator_index(&self, id: &AccountId) -> Option<ShareIndex> {
        let AccountId::User(pk) = id else { return None };
        let pos = self.validators.iter().position(|v| v == pk)?;
        ShareIndex::new(pos as u32 + 1).ok()
    }

    pub fn validator_account(&self, i: ShareIndex) -> Option<AccountId> {
        self.validators
            .get((i.get() as usize).wrapping_sub(1))
            .map(|pk| AccountId::User(*pk))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenesisAccount {
    pub pk: suite::PublicKey,
    pub kind: AccountType,
    pub user_id: String,
    pub field: Option<String>,
    pub balance: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Genesis {
    pub config: LedgerConfig,
    pub accounts: Vec<GenesisAccount>,
    /// Opening balance of the public account; zero in the protocol, non-zero
    /// only for load tests that need threshold-signed payments.
    pub acc_pub_balance: u64,
}

impl Genesis {
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut w = Writer::with_domain("openpub/genesis");
        w.put_u64(c.fees.deposit)
            .put_u64(c.fees.review)
            .put_u64(c.fees.incentive)
            .put_u32(c.rule.accept_mean)
            .put_u32(c.rule.min_reviews)
            .put_str(&c.gpk.grp_id)
            .put_g1(&c.gpk.x)
            .put_g1(&c.gpk.y)
            .put_g1(&c.acc_pub.0);
        w.put_u32(c.validators.len() as u32);
        for v in &c.validators {
            w.put_fixed(v.as_bytes());
        }
        w.put_u64(self.acc_pub_balance);
        w.put_u32(self.accounts.len() as u32);
        for a in &self.accounts {
            w.put_fixed(a.pk.as_bytes())
                .put_u8(a.kind.tag())
                .put_str(&a.user_id)
                .put_bool(a.field.is_some())
                .put_str(a.field.as_deref().unwrap_or(""))
                .put_u64(a.balance);
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let domain = Writer::with_domain("openpub/genesis").into_bytes();
        let mut r = Reader::new(bytes);
        if r.take(domain.len())? != domain.as_slice() {
            return Err(CodecError::InvalidValue("genesis domain"));
        }
        let user_pk = |r: &mut Reader<'_>| -> Result<suite::PublicKey, CodecError> {
            let raw: [u8; suite::PUBLIC_KEY_LEN] = r.take_array()?;
            suite::PublicKey::from_bytes(&raw).map_err(|_| CodecError::InvalidPoint("secp256k1"))
        };
        let fees = Fees {
            deposit: r.get_u64()?,
            review: r.get_u64()?,
            incentive: r.get_u64()?,
        };
        let rule = DecisionRule {
            accept_mean: r.get_u32()?,
            min_reviews: r.get_u32()?,
        };
        let gpk = GroupPublicKey {
            grp_id: r.get_string()?,
            x: r.get_g1()?,
            y: r.get_g1()?,
        };
        let acc_pub = tsig::PublicKey(r.get_g1()?);
        let nv = r.get_count(suite::PUBLIC_KEY_LEN)?;
        let validators = (0..nv).map(|_| user_pk(&mut r)).collect::<Result<_, _>>()?;
        let acc_pub_balance = r.get_u64()?;
        let na = r.get_count(suite::PUBLIC_KEY_LEN + 18)?;
        let mut accounts = Vec::with_capacity(na);
        for _ in 0..na {
            let pk = user_pk(&mut r)?;
            let tag = r.get_u8()?;
            let kind = AccountType::from_tag(tag).ok_or(CodecError::InvalidTag {
                what: "account type",
                tag,
            })?;
            let user_id = r.get_string()?;
            let has_field = r.get_bool()?;
            let field = r.get_string()?;
            accounts.push(GenesisAccount {
                pk,
                kind,
                user_id,
                field: has_field.then_some(field),
                balance: r.get_u64()?,
            });
        }
        r.finish()?;
        Ok(Self {
            config: LedgerConfig {
                fees,
                rule,
                gpk,
                acc_pub,
                validators,
            },
            accounts,
            acc_pub_balance,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PaperStatus {
    Submitted,
    Distributed,
    Decided,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewRecord {
    pub tx: TxHash,
    pub reviewer_id: String,
    pub r: Scalar,
    pub comment: String,
    pub score: u8,
    pub on_time: bool,
    /// Reader comments are kept on record but never counted.
    pub counted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub open_tx: TxHash,
    pub user_id: String,
    pub result: Decision,
    pub reviewer_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaperRecord {
    pub submit: TxHash,
    pub field: String,
    pub paper: PaperRef,
    pub status: PaperStatus,
    pub submitted_at: u64,
    /// Proposer of the block that committed the submit tx.
    pub designated: Option<ShareIndex>,
    pub distributor: Option<AccountId>,
    pub distribute_tx: Option<TxHash>,
    pub endtime: Option<u64>,
    pub seals: Vec<[u8; HASH_LEN]>,
    pub reviews: Vec<ReviewRecord>,
    pub outcome: Option<Outcome>,
}

impl PaperRecord {
    pub fn counted_on_time(&self) -> impl Iterator<Item = &ReviewRecord> {
        self.reviews.iter().filter(|r| r.counted && r.on_time)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TxError {
    #[error("transaction already applied")]
    Duplicate,
    #[error("bad signature")]
    BadSignature,
    #[error("unknown account {0}")]
    UnknownAccount(String),
    #[error("insufficient balance: have {have}, need {need}")]
    InsufficientBalance { have: u64, need: u64 },
    #[error("wrong authenticator family for sender")]
    WrongAuthKind,
    #[error("receiver must be the public account")]
    NotToPublicAccount,
    #[error("unknown paper")]
    UnknownPaper,
    #[error("paper is {0:?}")]
    WrongStatus(PaperStatus),
    #[error("sender is not a validator")]
    NotValidator,
    #[error("sender is not the paper's distributor")]
    NotDistributor,
    #[error("malformed: {0}")]
    Malformed(&'static str),
    #[error("endtime not reached: height {height}, endtime {endtime}")]
    BeforeEndtime { height: u64, endtime: u64 },
    #[error("review does not match any sealed assignment")]
    SealMismatch,
    #[error("reviewer already reviewed this paper")]
    DuplicateReview,
    #[error("open tx does not match the recorded reviews: {0}")]
    OpenMismatch(&'static str),
    #[error("transfer purpose not satisfied: {0}")]
    PurposeViolation(&'static str),
    #[error("amount overflow")]
    Overflow,
}

impl TxError {
    /// Errors that no later block can cure; the tx can be discarded.
    pub fn is_permanent(&self) -> bool {
        match self {
            TxError::InsufficientBalance { .. }
            | TxError::UnknownPaper
            | TxError::BeforeEndtime { .. } => false,
            TxError::WrongStatus(s) => *s == PaperStatus::Decided,
            TxError::PurposeViolation(why) => *why != "paper not opened",
            _ => true,
        }
    }
}

/// Signature verification results keyed by tx hash. Validity depends only on
/// the tx bytes and the genesis keys, so clones of a state share it.
#[derive(Debug, Clone, Default)]
pub struct VerifyCache(Arc<Mutex<HashMap<TxHash, bool>>>);

impl VerifyCache {
    fn get_or(&self, h: TxHash, f: impl FnOnce() -> bool) -> bool {
        if let Some(&v) = self.0.lock().unwrap().get(&h) {
            return v;
        }
        let v = f();
        self.0.lock().unwrap().insert(h, v);
        v
    }
}

/// Where a transaction is being applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxContext {
    pub height: u64,
    pub proposer: Option<ShareIndex>,
}

#[derive(Debug, Clone)]
pub struct ChainState {
    pub config: LedgerConfig,
    pub accounts: BTreeMap<AccountId, Account>,
    pub by_user_id: BTreeMap<String, AccountId>,
    pub papers: BTreeMap<TxHash, PaperRecord>,
    applied: BTreeSet<TxHash>,
    paid: BTreeSet<(TxHash, &'static str, String)>,
    pub genesis_supply: u64,
    pub minted: u64,
    pub height: u64,
    pub last_hash: BlockHash,
    cache: VerifyCache,
}

impl ChainState {
    pub fn from_genesis(genesis: &Genesis) -> Result<Self, TxError> {
        let config = genesis.config.clone();
        let mut accounts = BTreeMap::new();
        let mut by_user_id = BTreeMap::new();
        let acc_pub = config.acc_pub_id();
        accounts.insert(
            acc_pub,
            Account {
                id: acc_pub,
                kind: AccountType::Public,
                user_id: String::new(),
                field: None,
                balance: genesis.acc_pub_balance,
                deposit_held: false,
            },
        );
        let mut supply = genesis.acc_pub_balance;
        for a in &genesis.accounts {
            let id = AccountId::User(a.pk);
            if accounts.contains_key(&id) || by_user_id.contains_key(&a.user_id) {
                return Err(TxError::Malformed("duplicate genesis account"));
            }
            supply = supply.checked_add(a.balance).ok_or(TxError::Overflow)?;
            by_user_id.insert(a.user_id.clone(), id);
            accounts.insert(
                id,
                Account {
                    id,
                    kind: a.kind,
                    user_id: a.user_id.clone(),
                    field: a.field.clone(),
                    balance: a.balance,
                    deposit_held: false,
                },
            );
        }
        Ok(Self {
            config,
            accounts,
            by_user_id,
            papers: BTreeMap::new(),
            applied: BTreeSet::new(),
            paid: BTreeSet::new(),
            genesis_supply: supply,
            minted: 0,
            height: 0,
            last_hash: genesis_hash(genesis),
            cache: VerifyCache::default(),
        })
    }

    pub fn balance(&self, id: &AccountId) -> u64 {
        self.accounts.get(id).map_or(0, |a| a.balance)
    }

    pub fn account_by_user(&self, user_id: &str) -> Option<&Account> {
        self.by_user_id.get(user_id).and_then(|id| self.accounts.get(id))
    }

    pub fn deposit_held(&self, user_id: &str) -> bool {
        self.account_by_user(user_id).is_some_and(|a| a.deposit_held)
    }

    pub fn total_supply(&self) -> u64 {
        self.accounts.values().map(|a| a.balance).sum()
    }

    /// Balances sum to the genesis supply plus everything minted.
    pub fn is_conserved(&self) -> bool {
        self.total_supply() == self.genesis_supply + self.minted
    }

    pub fn contains_tx(&self, h: &TxHash) -> bool {
        self.applied.contains(h)
    }

    pub fn acc_pub(&self) -> AccountId {
        self.config.acc_pub_id()
    }

    /// Checks the transaction's authenticator under the key family its
    /// sender requires.
    pub fn verify_auth(&self, tx: &Transaction) -> bool {
        let h = tx.hash();
        self.cache.get_or(h, || self.verify_auth_uncached(tx))
    }

    /// Same check as [`ChainState::verify_auth`], bypassing the cache.
    pub fn verify_auth_uncached(&self, tx: &Transaction) -> bool {
        let msg = tx.signing_bytes();
        let plain = |sender: &AccountId, sig: &PlainSignature| match sender {
            AccountId::User(pk) => suite::sig_verify(pk, &msg, sig),
            _ => false,
        };
        match tx {
            Transaction::Submit(t) => tibgs::verify_with(&msg, &t.gsig, &self.config.gpk),
            Transaction::Transfer(t) => match (&t.auth, t.sender == self.acc_pub()) {
                (TransferAuth::Tsig(sig), true) => tsig::ts_verify(&self.config.acc_pub, &msg, sig),
                (TransferAuth::Sig(sig), false) => plain(&t.sender, sig),
                _ => false,
            },
            Transaction::Distribute(t) => plain(&t.sender, &t.sig),
            Transaction::Review(t) => plain(&t.sender, &t.sig),
            Transaction::Open(t) => plain(&t.sender, &t.sig),
        }
    }

    /// True iff the transaction would apply at the next height.
    pub fn ver_tx(&self, tx: &Transaction) -> bool {
        let ctx = TxContext {
            height: self.height + 1,
            proposer: None,
        };
        self.clone().apply_tx(tx, ctx).is_ok()
    }

    pub fn apply_tx(&mut self, tx: &Transaction, ctx: TxContext) -> Result<(), TxError> {
        let h = tx.hash();
        if self.applied.contains(&h) {
            return Err(TxError::Duplicate);
        }
        if let Transaction::Transfer(t) = tx {
            if t.sender == self.acc_pub() && !matches!(t.auth, TransferAuth::Tsig(_)) {
                return Err(TxError::WrongAuthKind);
            }
            if t.sender != self.acc_pub() && !matches!(t.auth, TransferAuth::Sig(_)) {
                return Err(TxError::WrongAuthKind);
            }
        }
        if !self.verify_auth(tx) {
            return Err(TxError::BadSignature);
        }
        match tx {
            Transaction::Transfer(t) => self.apply_transfer(t)?,
            Transaction::Submit(t) => self.apply_submit(h, t, ctx)?,
            Transaction::Distribute(t) => self.apply_distribute(h, t, ctx)?,
            Transaction::Review(t) => self.apply_review(h, t, ctx)?,
            Transaction::Open(t) => self.apply_open(h, t, ctx)?,
        }
        self.applied.insert(h);
        Ok(())
    }

    fn require_acc_pub(&self, receiver: &AccountId) -> Result<(), TxError> {
        if *receiver != self.acc_pub() {
            return Err(TxError::NotToPublicAccount);
        }
        Ok(())
    }

    fn account(&self, id: &AccountId) -> Result<&Account, TxError> {
        self.accounts
            .get(id)
            .ok_or_else(|| TxError::UnknownAccount(id.to_hex()))
    }

    fn paper(&self, h: &TxHash) -> Result<&PaperRecord, TxError> {
        self.papers.get(h).ok_or(TxError::UnknownPaper)
    }

    fn decided(&self, submit: &TxHash) -> Result<&Outcome, TxError> {
        self.paper(submit)?
            .outcome
            .as_ref()
            .ok_or(TxError::PurposeViolation("paper not opened"))
    }

    fn apply_transfer(&mut self, t: &Transfer) -> Result<(), TxError> {
        let fees = self.config.fees;
        let acc_pub = self.acc_pub();
        let sender = self.account(&t.sender)?.clone();
        let receiver = self.account(&t.receiver)?.clone();
        if t.sender == t.receiver {
            return Err(TxError::Malformed("self transfer"));
        }
        let exact = |want: u64| {
            if t.amount == want {
                Ok(())
            } else {
                Err(TxError::PurposeViolation("amount differs from fee"))
            }
        };
        let payout_to = |user: &str| -> Result<(), TxError> {
            if t.sender != acc_pub {
                return Err(TxError::PurposeViolation("payout must come from the public account"));
            }
            if t.user_id != user || receiver.user_id != user {
                return Err(TxError::PurposeViolation("payout to wrong user"));
            }
            Ok(())
        };
        let mut paid_key = None;
        let mut set_deposit = None;
        match &t.purpose {
            TransferPurpose::Payment { .. } => {
                // Payments out of the public account name their recipient.
                let named = if t.sender == acc_pub { &receiver } else { &sender };
                if t.user_id != named.user_id {
                    return Err(TxError::PurposeViolation("user id does not match"));
                }
            }
            TransferPurpose::Deposit => {
                self.require_acc_pub(&t.receiver)?;
                exact(fees.deposit)?;
                if sender.kind != AccountType::Author || sender.deposit_held {
                    return Err(TxError::PurposeViolation("deposit from non-author or twice"));
                }
                if t.user_id != sender.user_id {
                    return Err(TxError::PurposeViolation("user id is not the sender's"));
                }
                set_deposit = Some((t.sender, true));
            }
            TransferPurpose::DepositRefund { submit } => {
                let outcome = self.decided(submit)?;
                payout_to(&outcome.user_id)?;
                exact(fees.deposit)?;
                if !receiver.deposit_held {
                    return Err(TxError::PurposeViolation("no deposit held"));
                }
                set_deposit = Some((t.receiver, false));
            }
            TransferPurpose::ReviewFee { submit } => {
                let outcome = self.decided(submit)?;
                if !outcome.reviewer_ids.contains(&t.user_id) {
                    return Err(TxError::PurposeViolation("not a counted reviewer"));
                }
                payout_to(&t.user_id)?;
                exact(fees.review)?;
                paid_key = Some((*submit, "review-fee", t.user_id.clone()));
            }
            TransferPurpose::Incentive { submit } => {
                let outcome = self.decided(submit)?;
                if outcome.result != Decision::Accept {
                    return Err(TxError::PurposeViolation("paper was rejected"));
                }
                payout_to(&outcome.user_id)?;
                exact(fees.incentive)?;
                paid_key = Some((*submit, "incentive", t.user_id.clone()));
            }
        }
        if let Some(key) = &paid_key {
            if self.paid.contains(key) {
                return Err(TxError::PurposeViolation("already paid"));
            }
        }
        if sender.balance < t.amount {
            return Err(TxError::InsufficientBalance {
                have: sender.balance,
                need: t.amount,
            });
        }
        receiver.balance.checked_add(t.amount).ok_or(TxError::Overflow)?;

        self.accounts.get_mut(&t.sender).unwrap().balance -= t.amount;
        self.accounts.get_mut(&t.receiver).unwrap().balance += t.amount;
        if let Some((id, held)) = set_deposit {
            self.accounts.get_mut(&id).unwrap().deposit_held = held;
        }
        if let Some(key) = paid_key {
            self.paid.insert(key);
        }
        Ok(())
    }

    fn apply_submit(&mut self, h: TxHash, t: &Submit, ctx: TxContext) -> Result<(), TxError> {
        if t.sender != AccountId::Anonymity {
            return Err(TxError::Malformed("submit sender must be the anonymity sentinel"));
        }
        self.require_acc_pub(&t.receiver)?;
        self.papers.insert(
            h,
            PaperRecord {
                submit: h,
                field: t.field.clone(),
                paper: t.paper,
                status: PaperStatus::Submitted,
                submitted_at: ctx.height,
                designated: ctx.proposer,
                distributor: None,
                distribute_tx: None,
                endtime: None,
                seals: Vec::new(),
                reviews: Vec::new(),
                outcome: None,
            },
        );
        Ok(())
    }

    fn apply_distribute(&mut self, h: TxHash, t: &Distribute, ctx: TxContext) -> Result<(), TxError> {
        self.require_acc_pub(&t.receiver)?;
        if self.config.validator_index(&t.sender).is_none() {
            return Err(TxError::NotValidator);
        }
        let paper = self.paper(&t.submit)?;
        if paper.status != PaperStatus::Submitted {
            return Err(TxError::WrongStatus(paper.status));
        }
        if t.seals.len() != t.ciphertexts.len() || t.seals.is_empty() {
            return Err(TxError::Malformed("seal and ciphertext counts differ"));
        }
        if t.seals.iter().collect::<BTreeSet<_>>().len() != t.seals.len() {
            return Err(TxError::Malformed("repeated seal"));
        }
        if t.endtime <= ctx.height {
            return Err(TxError::Malformed("endtime already passed"));
        }
        let paper = self.papers.get_mut(&t.submit).unwrap();
        paper.status = PaperStatus::Distributed;
        paper.distributor = Some(t.sender);
        paper.distribute_tx = Some(h);
        paper.endtime = Some(t.endtime);
        paper.seals = t.seals.clone();
        Ok(())
    }

    fn apply_review(&mut self, h: TxHash, t: &Review, ctx: TxContext) -> Result<(), TxError> {
        self.require_acc_pub(&t.receiver)?;
        let sender = self.account(&t.sender)?;
        if sender.user_id != t.reviewer_id {
            return Err(TxError::Malformed("reviewer id is not the sender's"));
        }
        if !(MIN_SCORE..=MAX_SCORE).contains(&t.score) {
            return Err(TxError::Malformed("score out of range"));
        }
        let counted = match sender.kind {
            AccountType::Reviewer => true,
            AccountType::Reader => false,
            _ => return Err(TxError::Malformed("only reviewers and readers post reviews")),
        };
        let paper = self.paper(&t.submit)?;
        if paper.status != PaperStatus::Distributed {
            return Err(TxError::WrongStatus(paper.status));
        }
        if paper.reviews.iter().any(|r| r.reviewer_id == t.reviewer_id) {
            return Err(TxError::DuplicateReview);
        }
        if counted && !paper.seals.contains(&seal(&t.submit, &t.reviewer_id, &t.r)) {
            return Err(TxError::SealMismatch);
        }
        let endtime = paper.endtime.unwrap_or(0);
        let paper = self.papers.get_mut(&t.submit).unwrap();
        paper.reviews.push(ReviewRecord {
            tx: h,
            reviewer_id: t.reviewer_id.clone(),
            r: t.r,
            comment: t.comment.clone(),
            score: t.score,
            on_time: ctx.height < endtime,
            counted,
        });
        Ok(())
    }

    /// Reviewer ids and the decision an open tx for this paper must carry.
    pub fn expected_outcome(&self, submit: &TxHash) -> Option<(Vec<String>, Decision)> {
        let paper = self.papers.get(submit)?;
        let counted: Vec<&ReviewRecord> = paper.counted_on_time().collect();
        let scores: Vec<u8> = counted.iter().map(|r| r.score).collect();
        Some((
            counted.iter().map(|r| r.reviewer_id.clone()).collect(),
            self.config.rule.decide(&scores),
        ))
    }

    fn apply_open(&mut self, h: TxHash, t: &Open, ctx: TxContext) -> Result<(), TxError> {
        self.require_acc_pub(&t.receiver)?;
        let paper = self.paper(&t.submit)?;
        if paper.status != PaperStatus::Distributed {
            return Err(TxError::WrongStatus(paper.status));
        }
        let endtime = paper.endtime.unwrap_or(u64::MAX);
        if ctx.height < endtime {
            return Err(TxError::BeforeEndtime {
                height: ctx.height,
                endtime,
            });
        }
        if paper.distributor != Some(t.sender) {
            return Err(TxError::NotDistributor);
        }
        let (reviewers, result) = self.expected_outcome(&t.submit).unwrap();
        if t.reviewer_ids != reviewers {
            return Err(TxError::OpenMismatch("reviewer list"));
        }
        if t.result != result {
            return Err(TxError::OpenMismatch("decision"));
        }
        if !self
            .account_by_user(&t.user_id)
            .is_some_and(|a| a.kind == AccountType::Author)
        {
            return Err(TxError::OpenMismatch("opened user is not a registered author"));
        }
        let fees = self.config.fees;
        let mint = fees.review * reviewers.len() as u64
            + if result == Decision::Accept { fees.incentive } else { 0 };
        let acc_pub = self.acc_pub();
        let bal = &mut self.accounts.get_mut(&acc_pub).unwrap().balance;
        *bal = bal.checked_add(mint).ok_or(TxError::Overflow)?;
        self.minted += mint;
        let paper = self.papers.get_mut(&t.submit).unwrap();
        paper.status = PaperStatus::Decided;
        paper.outcome = Some(Outcome {
            open_tx: h,
            user_id: t.user_id.clone(),
            result,
            reviewer_ids: reviewers,
        });
        Ok(())
    }
}

pub fn genesis_hash(genesis: &Genesis) -> BlockHash {
    BlockHash(sha256(&[&genesis.to_bytes()]))
}
