//! Account identifiers, the five transaction types, and their canonical
//! encoding.
//!
//! Layout of every transaction: a one-byte type tag, the sender and
//! receiver account ids, type-specific fields in declaration order, and the
//! authenticator last. The signing digest covers everything but the
//! authenticator; the transaction hash covers everything.

use std::fmt;

use sha2::{Digest, Sha256};

use crate::codec::{CodecError, Reader, Writer};
use crate::pairing::Scalar;
use crate::suite::{self, Ciphertext, PlainSignature};
use crate::tibgs::GroupSignature;
use crate::tsig::{self, ThresholdSignature};

pub const HASH_LEN: usize = 32;

macro_rules! digest_type {
    ($name:ident) => {
        #[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
        pub struct $name(pub [u8; HASH_LEN]);

        impl $name {
            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }

            pub fn from_hex(s: &str) -> Option<Self> {
                let raw = hex::decode(s).ok()?;
                raw.try_into().ok().map(Self)
            }

            pub fn short(&self) -> String {
                hex::encode(&self.0[..6])
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!(stringify!($name), "({})"), self.short())
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }
    };
}

digest_type!(TxHash);
digest_type!(BlockHash);

pub(crate) fn sha256(parts: &[&[u8]]) -> [u8; HASH_LEN] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// Account identifier: the canonical public-key bytes behind a type prefix.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AccountId {
    /// Reserved sender of anonymous submissions. No key controls it.
    Anonymity,
    User(suite::PublicKey),
    /// The threshold-controlled public account.
    Public([u8; tsig::PUBLIC_KEY_LEN]),
}

impl AccountId {
    pub fn public(pk: &tsig::PublicKey) -> Self {
        AccountId::Public(pk.to_bytes())
    }

    fn tag(&self) -> u8 {
        match self {
            AccountId::Anonymity => 0,
            AccountId::User(_) => 1,
            AccountId::Public(_) => 2,
        }
    }

    pub fn key_bytes(&self) -> &[u8] {
        match self {
            AccountId::Anonymity => &[],
            AccountId::User(pk) => pk.as_bytes(),
            AccountId::Public(b) => b,
        }
    }

    pub fn encode(&self, w: &mut Writer) {
        w.put_u8(self.tag()).put_fixed(self.key_bytes());
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        match r.get_u8()? {
            0 => Ok(AccountId::Anonymity),
            1 => {
                let raw: [u8; suite::PUBLIC_KEY_LEN] = r.take_array()?;
                suite::PublicKey::from_bytes(&raw)
                    .map(AccountId::User)
                    .map_err(|_| CodecError::InvalidPoint("secp256k1"))
            }
            2 => {
                let raw: [u8; tsig::PUBLIC_KEY_LEN] = r.take_array()?;
                tsig::PublicKey::from_bytes(&raw)
                    .map(|_| AccountId::Public(raw))
                    .ok_or(CodecError::InvalidPoint("G1"))
            }
            tag => Err(CodecError::InvalidTag {
                what: "account",
                tag,
            }),
        }
    }

    /// Human-readable form: type prefix byte and key, hex-encoded.
    pub fn to_hex(&self) -> String {
        let mut w = Writer::new();
        self.encode(&mut w);
        hex::encode(w.as_slice())
    }

    pub fn from_hex(s: &str) -> Result<Self, CodecError> {
        let raw = hex::decode(s).map_err(|_| CodecError::InvalidValue("account hex"))?;
        let mut r = Reader::new(&raw);
        let id = Self::decode(&mut r)?;
        r.finish()?;
        Ok(id)
    }
}

impl fmt::Debug for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AccountId::Anonymity => f.write_str("Anonymity"),
            AccountId::User(pk) => write!(f, "User({}…)", &pk.to_hex()[..12]),
            AccountId::Public(b) => write!(f, "Public({}…)", &hex::encode(b)[..12]),
        }
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Off-chain paper content, referenced by hash and length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PaperRef {
    pub content_hash: [u8; HASH_LEN],
    pub len: u64,
}

impl PaperRef {
    pub fn of(content: &[u8]) -> Self {
        Self {
            content_hash: sha256(&[content]),
            len: content.len() as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

impl Decision {
    fn tag(self) -> u8 {
        match self {
            Decision::Accept => 1,
            Decision::Reject => 0,
        }
    }
}

/// Why value moves. Transfers out of the public account name the paper
/// (and reviewer) they settle, which makes each payout unique on chain.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TransferPurpose {
    Payment { nonce: u64 },
    Deposit,
    DepositRefund { submit: TxHash },
    ReviewFee { submit: TxHash },
    Incentive { submit: TxHash },
}

impl TransferPurpose {
    fn encode(&self, w: &mut Writer) {
        match self {
            TransferPurpose::Payment { nonce } => {
                w.put_u8(0).put_u64(*nonce);
            }
            TransferPurpose::Deposit => {
                w.put_u8(1);
            }
            TransferPurpose::DepositRefund { submit } => {
                w.put_u8(2).put_fixed(&submit.0);
            }
            TransferPurpose::ReviewFee { submit } => {
                w.put_u8(3).put_fixed(&submit.0);
            }
            TransferPurpose::Incentive { submit } => {
                w.put_u8(4).put_fixed(&submit.0);
            }
        }
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(match r.get_u8()? {
            0 => TransferPurpose::Payment { nonce: r.get_u64()? },
            1 => TransferPurpose::Deposit,
            2 => TransferPurpose::DepositRefund {
                submit: TxHash(r.take_array()?),
            },
            3 => TransferPurpose::ReviewFee {
                submit: TxHash(r.take_array()?),
            },
            4 => TransferPurpose::Incentive {
                submit: TxHash(r.take_array()?),
            },
            tag => {
                return Err(CodecError::InvalidTag {
                    what: "transfer purpose",
                    tag,
                })
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            TransferPurpose::Payment { .. } => "payment",
            TransferPurpose::Deposit => "deposit",
            TransferPurpose::DepositRefund { .. } => "deposit-refund",
            TransferPurpose::ReviewFee { .. } => "review-fee",
            TransferPurpose::Incentive { .. } => "incentive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferAuth {
    Sig(PlainSignature),
    Tsig(ThresholdSignature),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transfer {
    pub sender: AccountId,
    pub receiver: AccountId,
    pub user_id: String,
    pub amount: u64,
    pub purpose: TransferPurpose,
    pub auth: TransferAuth,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Submit {
    pub sender: AccountId,
    pub receiver: AccountId,
    pub field: String,
    pub paper: PaperRef,
    pub gsig: GroupSignature,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Distribute {
    pub sender: AccountId,
    pub receiver: AccountId,
    pub submit: TxHash,
    pub ciphertexts: Vec<Ciphertext>,
    /// `H(submit ‖ reviewerID ‖ r)` per assignment, hiding until revealed.
    pub seals: Vec<[u8; HASH_LEN]>,
    /// Block height from which the paper may be opened.
    pub endtime: u64,
    pub sig: PlainSignature,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Review {
    pub sender: AccountId,
    pub receiver: AccountId,
    pub submit: TxHash,
    pub reviewer_id: String,
    pub r: Scalar,
    pub comment: String,
    pub score: u8,
    pub sig: PlainSignature,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Open {
    pub sender: AccountId,
    pub receiver: AccountId,
    pub submit: TxHash,
    pub user_id: String,
    pub result: Decision,
    pub reviewer_ids: Vec<String>,
    pub sig: PlainSignature,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transaction {
    Transfer(Transfer),
    Submit(Submit),
    Distribute(Distribute),
    Review(Review),
    Open(Open),
}

/// Which signature family authenticates a transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxClass {
    TxSig,
    TxGsig,
    TxTsig,
}

impl TxClass {
    pub const ALL: [TxClass; 3] = [TxClass::TxSig, TxClass::TxGsig, TxClass::TxTsig];

    pub fn name(self) -> &'static str {
        match self {
            TxClass::TxSig => "tx_sig",
            TxClass::TxGsig => "tx_gsig",
            TxClass::TxTsig => "tx_tsig",
        }
    }
}

/// The seal a distributor commits to for one reviewer assignment.
pub fn seal(submit: &TxHash, reviewer_id: &str, r: &Scalar) -> [u8; HASH_LEN] {
    let mut w = Writer::with_domain("openpub/review-seal");
    w.put_fixed(&submit.0)
        .put_str(reviewer_id)
        .put_scalar(r);
    sha256(&[w.as_slice()])
}

/// Plaintext of a distribution ciphertext.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub submit: TxHash,
    pub reviewer_id: String,
    pub r: Scalar,
}

impl Assignment {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_fixed(&self.submit.0)
            .put_str(&self.reviewer_id)
            .put_scalar(&self.r);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let out = Self {
            submit: TxHash(r.take_array()?),
            reviewer_id: r.get_string()?,
            r: r.get_scalar()?,
        };
        r.finish()?;
        Ok(out)
    }
}

const TAG_TRANSFER: u8 = 1;
const TAG_SUBMIT: u8 = 2;
const TAG_DISTRIBUTE: u8 = 3;
const TAG_REVIEW: u8 = 4;
const TAG_OPEN: u8 = 5;

const AUTH_SIG: u8 = 1;
const AUTH_TSIG: u8 = 2;

impl Transaction {
    pub fn sender(&self) -> &AccountId {
        match self {
            Transaction::Transfer(t) => &t.sender,
            Transaction::Submit(t) => &t.sender,
            Transaction::Distribute(t) => &t.sender,
            Transaction::Review(t) => &t.sender,
            Transaction::Open(t) => &t.sender,
        }
    }

    pub fn receiver(&self) -> &AccountId {
        match self {
            Transaction::Transfer(t) => &t.receiver,
            Transaction::Submit(t) => &t.receiver,
            Transaction::Distribute(t) => &t.receiver,
            Transaction::Review(t) => &t.receiver,
            Transaction::Open(t) => &t.receiver,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Transaction::Transfer(_) => "transfer",
            Transaction::Submit(_) => "submit",
            Transaction::Distribute(_) => "distribute",
            Transaction::Review(_) => "review",
            Transaction::Open(_) => "open",
        }
    }

    pub fn class(&self) -> TxClass {
        match self {
            Transaction::Submit(_) => TxClass::TxGsig,
            Transaction::Transfer(Transfer {
                auth: TransferAuth::Tsig(_),
                ..
            }) => TxClass::TxTsig,
            _ => TxClass::TxSig,
        }
    }

    fn encode_body(&self, w: &mut Writer) {
        match self {
            Transaction::Transfer(t) => {
                w.put_u8(TAG_TRANSFER);
                t.sender.encode(w);
                t.receiver.encode(w);
                w.put_str(&t.user_id).put_u64(t.amount);
                t.purpose.encode(w);
            }
            Transaction::Submit(t) => {
                w.put_u8(TAG_SUBMIT);
                t.sender.encode(w);
                t.receiver.encode(w);
                w.put_str(&t.field)
                    .put_fixed(&t.paper.content_hash)
                    .put_u64(t.paper.len);
            }
            Transaction::Distribute(t) => {
                w.put_u8(TAG_DISTRIBUTE);
                t.sender.encode(w);
                t.receiver.encode(w);
                w.put_fixed(&t.submit.0);
                w.put_u32(t.ciphertexts.len() as u32);
                for c in &t.ciphertexts {
                    c.encode(w);
                }
                w.put_u32(t.seals.len() as u32);
                for s in &t.seals {
                    w.put_fixed(s);
                }
                w.put_u64(t.endtime);
            }
            Transaction::Review(t) => {
                w.put_u8(TAG_REVIEW);
                t.sender.encode(w);
                t.receiver.encode(w);
                w.put_fixed(&t.submit.0)
                    .put_str(&t.reviewer_id)
                    .put_scalar(&t.r)
                    .put_str(&t.comment)
                    .put_u8(t.score);
            }
            Transaction::Open(t) => {
                w.put_u8(TAG_OPEN);
                t.sender.encode(w);
                t.receiver.encode(w);
                w.put_fixed(&t.submit.0)
                    .put_str(&t.user_id)
                    .put_u8(t.result.tag());
                w.put_u32(t.reviewer_ids.len() as u32);
                for id in &t.reviewer_ids {
                    w.put_str(id);
                }
            }
        }
    }

    fn encode_auth(&self, w: &mut Writer) {
        match self {
            Transaction::Transfer(t) => match &t.auth {
                TransferAuth::Sig(s) => {
                    w.put_u8(AUTH_SIG).put_fixed(s.as_bytes());
                }
                TransferAuth::Tsig(s) => {
                    w.put_u8(AUTH_TSIG).put_fixed(&s.to_bytes());
                }
            },
            Transaction::Submit(t) => t.gsig.encode(w),
            Transaction::Distribute(Distribute { sig, .. })
            | Transaction::Review(Review { sig, .. })
            | Transaction::Open(Open { sig, .. }) => {
                w.put_fixed(sig.as_bytes());
            }
        }
    }

    /// Bytes covered by the transaction's authenticator.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_domain("openpub/tx-signing");
        self.encode_body(&mut w);
        w.into_bytes()
    }

    pub fn canonical_encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode_body(&mut w);
        self.encode_auth(&mut w);
        w.into_bytes()
    }

    pub fn encoded_len(&self) -> usize {
        self.canonical_encode().len()
    }

    pub fn hash(&self) -> TxHash {
        TxHash(sha256(&[b"openpub/tx", &self.canonical_encode()]))
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let tag = r.get_u8()?;
        let sender = AccountId::decode(r)?;
        let receiver = AccountId::decode(r)?;
        let get_sig = |r: &mut Reader<'_>| -> Result<PlainSignature, CodecError> {
            Ok(PlainSignature(r.take_array()?))
        };
        Ok(match tag {
            TAG_TRANSFER => {
                let user_id = r.get_string()?;
                let amount = r.get_u64()?;
                let purpose = TransferPurpose::decode(r)?;
                let auth = match r.get_u8()? {
                    AUTH_SIG => TransferAuth::Sig(get_sig(r)?),
                    AUTH_TSIG => TransferAuth::Tsig(ThresholdSignature(r.get_g2()?)),
                    tag => {
                        return Err(CodecError::InvalidTag {
                            what: "transfer auth",
                            tag,
                        })
                    }
                };
                Transaction::Transfer(Transfer {
                    sender,
                    receiver,
                    user_id,
                    amount,
                    purpose,
                    auth,
                })
            }
            TAG_SUBMIT => {
                let field = r.get_string()?;
                let paper = PaperRef {
                    content_hash: r.take_array()?,
                    len: r.get_u64()?,
                };
                Transaction::Submit(Submit {
                    sender,
                    receiver,
                    field,
                    paper,
                    gsig: GroupSignature::decode(r)?,
                })
            }
            TAG_DISTRIBUTE => {
                let submit = TxHash(r.take_array()?);
                let nc = r.get_count(suite::PUBLIC_KEY_LEN + 4)?;
                let ciphertexts = (0..nc)
                    .map(|_| Ciphertext::decode(r))
                    .collect::<Result<_, _>>()?;
                let ns = r.get_count(HASH_LEN)?;
                let seals = (0..ns).map(|_| r.take_array()).collect::<Result<_, _>>()?;
                let endtime = r.get_u64()?;
                Transaction::Distribute(Distribute {
                    sender,
                    receiver,
                    submit,
                    ciphertexts,
                    seals,
                    endtime,
                    sig: get_sig(r)?,
                })
            }
            TAG_REVIEW => Transaction::Review(Review {
                sender,
                receiver,
                submit: TxHash(r.take_array()?),
                reviewer_id: r.get_string()?,
                r: r.get_scalar()?,
                comment: r.get_string()?,
                score: r.get_u8()?,
                sig: get_sig(r)?,
            }),
            TAG_OPEN => {
                let submit = TxHash(r.take_array()?);
                let user_id = r.get_string()?;
                let result = match r.get_u8()? {
                    1 => Decision::Accept,
                    0 => Decision::Reject,
                    tag => {
                        return Err(CodecError::InvalidTag {
                            what: "decision",
                            tag,
                        })
                    }
                };
                let n = r.get_count(4)?;
                let reviewer_ids = (0..n).map(|_| r.get_string()).collect::<Result<_, _>>()?;
                Transaction::Open(Open {
                    sender,
                    receiver,
                    submit,
                    user_id,
                    result,
                    reviewer_ids,
                    sig: get_sig(r)?,
                })
            }
            tag => {
                return Err(CodecError::InvalidTag {
                    what: "transaction",
                    tag,
                })
            }
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let tx = Self::decode(&mut r)?;
        r.finish()?;
        Ok(tx)
    }

    /// Installs a plain signature over the signing bytes. No-op for types
    /// authenticated otherwise.
    pub fn sign_with(mut self, key: &suite::KeyPair) -> Self {
        let sig = suite::sig_sign(&self.signing_bytes(), key);
        match &mut self {
            Transaction::Transfer(t) => t.auth = TransferAuth::Sig(sig),
            Transaction::Distribute(t) => t.sig = sig,
            Transaction::Review(t) => t.sig = sig,
            Transaction::Open(t) => t.sig = sig,
            Transaction::Submit(_) => {}
        }
        self
    }
}

/// Placeholder authenticator for transactions about to be signed.
pub const UNSIGNED: PlainSignature = PlainSignature([0u8; suite::SIGNATURE_LEN]);

/// Placeholder nonce for reader comments, which carry no assignment.
pub fn no_nonce() -> Scalar {
    Scalar::zero()
}
