//! Blocks, commit certificates and JSON-lines chain export.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::codec::{CodecError, Reader, Writer};
use crate::suite::{self, PlainSignature};
use crate::vss::ShareIndex;

use super::state::{ChainState, Genesis, TxContext, TxError};
use super::tx::{sha256, BlockHash, Transaction, TxHash, HASH_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockHeader {
    pub height: u64,
    pub parent: BlockHash,
    pub tx_root: [u8; HASH_LEN],
    pub proposer: ShareIndex,
    /// View in which the block was first proposed.
    pub view: u64,
    /// Simulated proposal time in microseconds.
    pub time_us: u64,
}

impl BlockHeader {
    fn encode(&self, w: &mut Writer) {
        w.put_u64(self.height)
            .put_fixed(&self.parent.0)
            .put_fixed(&self.tx_root);
        self.proposer.encode(w);
        w.put_u64(self.view).put_u64(self.time_us);
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(Self {
            height: r.get_u64()?,
            parent: BlockHash(r.take_array()?),
            tx_root: r.take_array()?,
            proposer: ShareIndex::decode(r)?,
            view: r.get_u64()?,
            time_us: r.get_u64()?,
        })
    }

    pub fn hash(&self) -> BlockHash {
        let mut w = Writer::with_domain("openpub/block");
        self.encode(&mut w);
        BlockHash(sha256(&[w.as_slice()]))
    }
}

/// Hash over the ordered transaction hashes.
pub fn tx_root(txs: &[Transaction]) -> [u8; HASH_LEN] {
    let mut w = Writer::with_domain("openpub/tx-root");
    w.put_u32(txs.len() as u32);
    for tx in txs {
        w.put_fixed(&tx.hash().0);
    }
    sha256(&[w.as_slice()])
}

/// The message a validator signs to vote for committing a block.
pub fn commit_message(block: &BlockHash) -> Vec<u8> {
    let mut w = Writer::with_domain("openpub/commit-vote");
    w.put_fixed(&block.0);
    w.into_bytes()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vote {
    pub validator: ShareIndex,
    pub sig: PlainSignature,
}

impl Vote {
    pub fn sign(validator: ShareIndex, block: &BlockHash, key: &suite::KeyPair) -> Self {
        Self {
            validator,
            sig: suite::sig_sign(&commit_message(block), key),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Certificate {
    pub votes: Vec<Vote>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub header: BlockHeader,
    pub txs: Vec<Transaction>,
    pub certificate: Certificate,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BlockError {
    #[error("expected height {expected}, got {got}")]
    WrongHeight { expected: u64, got: u64 },
    #[error("parent hash does not match chain tip")]
    WrongParent,
    #[error("tx root does not match contents")]
    WrongTxRoot,
    #[error("certificate has {valid} valid votes, quorum is {quorum}")]
    InsufficientVotes { valid: usize, quorum: usize },
    #[error("proposer is not a validator")]
    UnknownProposer,
    #[error("tx {index} ({hash:?}) invalid: {source}")]
    InvalidTx {
        index: usize,
        hash: TxHash,
        source: TxError,
    },
}

impl Block {
    pub fn new(
        height: u64,
        parent: BlockHash,
        proposer: ShareIndex,
        view: u64,
        time_us: u64,
        txs: Vec<Transaction>,
    ) -> Self {
        Self {
            header: BlockHeader {
                height,
                parent,
                tx_root: tx_root(&txs),
                proposer,
                view,
                time_us,
            },
            txs,
            certificate: Certificate::default(),
        }
    }

    pub fn hash(&self) -> BlockHash {
        self.header.hash()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.header.encode(&mut w);
        w.put_u32(self.txs.len() as u32);
        for tx in &self.txs {
            w.put_bytes(&tx.canonical_encode());
        }
        w.put_u32(self.certificate.votes.len() as u32);
        for v in &self.certificate.votes {
            v.validator.encode(&mut w);
            w.put_fixed(v.sig.as_bytes());
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let header = BlockHeader::decode(&mut r)?;
        let n = r.get_count(4)?;
        let mut txs = Vec::with_capacity(n);
        for _ in 0..n {
            txs.push(Transaction::from_bytes(r.get_bytes()?)?);
        }
        let nv = r.get_count(4 + suite::SIGNATURE_LEN)?;
        let mut votes = Vec::with_capacity(nv);
        for _ in 0..nv {
            votes.push(Vote {
                validator: ShareIndex::decode(&mut r)?,
                sig: PlainSignature(r.take_array()?),
            });
        }
        r.finish()?;
        Ok(Self {
            header,
            txs,
            certificate: Certificate { votes },
        })
    }

    pub fn size_bytes(&self) -> usize {
        self.to_bytes().len()
    }

    /// Header and transactions without the certificate. Honest replicas
    /// agree on these bytes; each may hold a different quorum of votes.
    pub fn content_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.header.encode(&mut w);
        w.put_u32(self.txs.len() as u32);
        for tx in &self.txs {
            w.put_bytes(&tx.canonical_encode());
        }
        w.into_bytes()
    }
}

impl ChainState {
    /// Number of distinct validators with a valid commit vote on `block`.
    pub fn count_valid_votes(&self, block: &Block) -> usize {
        let msg = commit_message(&block.hash());
        let mut seen = BTreeSet::new();
        for v in &block.certificate.votes {
            let Some(pk) = self.config.validators.get((v.validator.get() as usize).wrapping_sub(1)) else {
                continue;
            };
            if !seen.contains(&v.validator) && suite::sig_verify(pk, &msg, &v.sig) {
                seen.insert(v.validator);
            }
        }
        seen.len()
    }

    /// Applies the block's transactions to a copy of the state, checking
    /// every structural rule, without requiring a certificate.
    pub fn execute_block(&self, block: &Block) -> Result<ChainState, BlockError> {
        let h = &block.header;
        if h.height != self.height + 1 {
            return Err(BlockError::WrongHeight {
                expected: self.height + 1,
                got: h.height,
            });
        }
        if h.parent != self.last_hash {
            return Err(BlockError::WrongParent);
        }
        if h.tx_root != tx_root(&block.txs) {
            return Err(BlockError::WrongTxRoot);
        }
        if self.config.validator_account(h.proposer).is_none() {
            return Err(BlockError::UnknownProposer);
        }
        let mut next = self.clone();
        let ctx = TxContext {
            height: h.height,
            proposer: Some(h.proposer),
        };
        for (index, tx) in block.txs.iter().enumerate() {
            next.apply_tx(tx, ctx).map_err(|source| BlockError::InvalidTx {
                index,
                hash: tx.hash(),
                source,
            })?;
        }
        next.height = h.height;
        next.last_hash = block.hash();
        Ok(next)
    }

    /// Applies a certified block. Any invalid transaction aborts the whole
    /// block and leaves the state untouched.
    pub fn apply_block(&mut self, block: &Block) -> Result<(), BlockError> {
        let valid = self.count_valid_votes(block);
        let quorum = self.config.quorum();
        if valid < quorum {
            return Err(BlockError::InsufficientVotes { valid, quorum });
        }
        *self = self.execute_block(block)?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum ChainRecord {
    Genesis {
        hash: String,
        bytes: String,
    },
    Block {
        height: u64,
        hash: String,
        proposer: u32,
        txs: Vec<TxSummary>,
        bytes: String,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct TxSummary {
    kind: String,
    hash: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ChainIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Block(#[from] BlockError),
}

/// Writes the chain as JSON lines: a genesis record, then one record per
/// block carrying the canonical bytes in hex plus a readable summary.
pub fn export_chain<W: Write>(out: &mut W, genesis: &Genesis, blocks: &[Block]) -> std::io::Result<()> {
    let g = genesis.to_bytes();
    let rec = ChainRecord::Genesis {
        hash: super::state::genesis_hash(genesis).to_hex(),
        bytes: hex::encode(g),
    };
    writeln!(out, "{}", serde_json::to_string(&rec).expect("serializable"))?;
    for b in blocks {
        let rec = ChainRecord::Block {
            height: b.header.height,
            hash: b.hash().to_hex(),
            proposer: b.header.proposer.get(),
            txs: b
                .txs
                .iter()
                .map(|t| TxSummary {
                    kind: t.kind().to_owned(),
                    hash: t.hash().to_hex(),
                })
                .collect(),
            bytes: hex::encode(b.to_bytes()),
        };
        writeln!(out, "{}", serde_json::to_string(&rec).expect("serializable"))?;
    }
    Ok(())
}

pub fn export_chain_string(genesis: &Genesis, blocks: &[Block]) -> String {
    let mut buf = Vec::new();
    export_chain(&mut buf, genesis, blocks).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}

/// Parses an export. The summaries are ignored; the bytes are authoritative.
pub fn import_chain<R: BufRead>(input: R) -> Result<(Genesis, Vec<Block>), ChainIoError> {
    let mut genesis = None;
    let mut blocks = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fmt_err = |msg: String| ChainIoError::Format { line: i + 1, msg };
        let rec: ChainRecord = serde_json::from_str(&line).map_err(|e| fmt_err(e.to_string()))?;
        let raw = |s: &str| hex::decode(s).map_err(|e| fmt_err(e.to_string()));
        match rec {
            ChainRecord::Genesis { bytes, .. } => {
                if genesis.is_some() {
                    return Err(fmt_err("second genesis record".into()));
                }
                genesis = Some(Genesis::from_bytes(&raw(&bytes)?).map_err(|e| fmt_err(e.to_string()))?);
            }
            ChainRecord::Block { bytes, .. } => {
                if genesis.is_none() {
                    return Err(fmt_err("block before genesis".into()));
                }
                blocks.push(Block::from_bytes(&raw(&bytes)?).map_err(|e| fmt_err(e.to_string()))?);
            }
        }
    }
    let genesis = genesis.ok_or(ChainIoError::Format {
        line: 0,
        msg: "missing genesis record".into(),
    })?;
    Ok((genesis, blocks))
}

/// Rebuilds state from genesis, re-verifying every certificate and tx.
pub fn replay(genesis: &Genesis, blocks: &[Block]) -> Result<ChainState, ChainIoError> {
    let mut state = ChainState::from_genesis(genesis).map_err(|e| ChainIoError::Format {
        line: 1,
        msg: e.to_string(),
    })?;
    for b in blocks {
        state.apply_block(b)?;
    }
    Ok(state)
}
