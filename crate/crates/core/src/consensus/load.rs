//! Synthetic transaction streams for throughput experiments.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::ledger::{
    AccountId, AccountType, Block, ChainState, Genesis, GenesisAccount, LedgerConfig, PaperRef,
    Submit, Transaction, Transfer, TransferAuth, TransferPurpose, TxClass, UNSIGNED,
};
use crate::pairing::Scalar;
use crate::suite::{self, KeyPair};
use crate::tibgs::{self, GroupSignature, UserGroupKey};
use crate::tsig::{self, SecretShare, ThresholdSignature};
use crate::vss::{self, Params, ShareIndex};

use super::metrics::{measure, MetricsReport};
use super::network::CostModel;
use super::sim::{SimConfig, SimError, Simulation};

const LOAD_GROUP: &str = "load-venue";
const LOAD_AUTHOR: &str = "load-author";

/// Keys and a funded genesis for generating valid transactions of every
/// class at a given fault bound.
pub struct LoadFixture {
    pub params: Params,
    pub genesis: Genesis,
    pub validator_keys: Vec<KeyPair>,
    pub users: Vec<(String, KeyPair)>,
    author: UserGroupKey,
    tsk: Scalar,
}

impl LoadFixture {
    pub fn new(f: u32, users: usize, rng: &mut ChaCha20Rng) -> Result<Self, crate::tibgs::TibgsError> {
        let params = Params::for_faults(f);
        let master = tibgs::setup(params, rng)?;
        let gpk = master.mpk.group_public_key(LOAD_GROUP);
        let shares = master.group_key_shares(LOAD_GROUP);
        let gvks = tibgs::GroupVerifyKeys::derive(&master.mpk, LOAD_GROUP);
        let ushares: Vec<_> = shares.iter().map(|g| tibgs::ext_share(LOAD_AUTHOR, g)).collect();
        let author = tibgs::reconst_key(LOAD_AUTHOR, &ushares, &gvks, params)?.key;

        let keyset = tsig::thres_keygen(params, rng).map_err(|e| match e {
            tsig::TsigError::Vss(v) => tibgs::TibgsError::Vss(v),
            _ => tibgs::TibgsError::InvalidSignature,
        })?;
        let pts: Vec<(ShareIndex, Scalar)> = keyset.shares.iter().map(|s| (s.index, s.tsk)).collect();
        let tsk = vss::reconstruct(params, &pts)?;

        let validator_keys: Vec<KeyPair> = (0..params.n).map(|_| suite::sig_keygen(rng)).collect();
        let users: Vec<(String, KeyPair)> = (0..users.max(2))
            .map(|i| (format!("load-user-{i}"), suite::sig_keygen(rng)))
            .collect();
        let mut accounts: Vec<GenesisAccount> = users
            .iter()
            .map(|(id, k)| GenesisAccount {
                pk: k.pk,
                kind: AccountType::Reader,
                user_id: id.clone(),
                field: None,
                balance: 1 << 40,
            })
            .collect();
        accounts.extend(validator_keys.iter().enumerate().map(|(i, k)| GenesisAccount {
            pk: k.pk,
            kind: AccountType::Validator,
            user_id: format!("validator-{}", i + 1),
            field: None,
            balance: 0,
        }));
        let genesis = Genesis {
            config: LedgerConfig {
                fees: Default::default(),
                rule: Default::default(),
                gpk,
                acc_pub: keyset.pk,
                validators: validator_keys.iter().map(|k| k.pk).collect(),
            },
            accounts,
            acc_pub_balance: 1 << 40,
        };
        Ok(Self {
            params,
            genesis,
            validator_keys,
            users,
            author,
            tsk,
        })
    }

    pub fn state(&self) -> ChainState {
        ChainState::from_genesis(&self.genesis).expect("fixture genesis is valid")
    }

    fn acc_pub(&self) -> AccountId {
        AccountId::public(&self.genesis.config.acc_pub)
    }

    /// One valid transaction of the requested class; `nonce` keeps hashes
    /// distinct.
    pub fn make_tx(&self, class: TxClass, nonce: u64, rng: &mut ChaCha20Rng) -> Transaction {
        match class {
            TxClass::TxSig => {
                let i = (nonce as usize) % self.users.len();
                let (from_id, from) = &self.users[i];
                let (_, to) = &self.users[(i + 1) % self.users.len()];
                Transaction::Transfer(Transfer {
                    sender: AccountId::User(from.pk),
                    receiver: AccountId::User(to.pk),
                    user_id: from_id.clone(),
                    amount: 1,
                    purpose: TransferPurpose::Payment { nonce },
                    auth: TransferAuth::Sig(UNSIGNED),
                })
                .sign_with(from)
            }
            TxClass::TxTsig => {
                let (to_id, to) = &self.users[(nonce as usize) % self.users.len()];
                let mut tx = Transaction::Transfer(Transfer {
                    sender: self.acc_pub(),
                    receiver: AccountId::User(to.pk),
                    user_id: to_id.clone(),
                    amount: 1,
                    purpose: TransferPurpose::Payment { nonce },
                    auth: TransferAuth::Sig(UNSIGNED),
                });
                // The combined key signs directly; BLS signatures are unique,
                // so this equals the combination of any k shares.
                let full = SecretShare {
                    index: ShareIndex::new(1).expect("nonzero"),
                    tsk: self.tsk,
                };
                let sig = ThresholdSignature(tsig::thres_sign(&tx.signing_bytes(), &full).partial);
                if let Transaction::Transfer(t) = &mut tx {
                    t.auth = TransferAuth::Tsig(sig);
                }
                tx
            }
            TxClass::TxGsig => {
                let mut body = vec![0u8; 64];
                rng.fill_bytes(&mut body);
                let mut tx = Transaction::Submit(Submit {
                    sender: AccountId::Anonymity,
                    receiver: self.acc_pub(),
                    field: "load".into(),
                    paper: PaperRef::of(&body),
                    gsig: GroupSignature::placeholder(),
                });
                let sig = tibgs::sign(&tx.signing_bytes(), &self.author, rng);
                if let Transaction::Submit(s) = &mut tx {
                    s.gsig = sig;
                }
                tx
            }
        }
    }

    /// Measures verification and vote costs of this implementation in
    /// wall-clock time and returns them as a cost model. Each cost is the
    /// median over `samples` calls, taken round-robin across the operations
    /// so that drift in machine speed affects all of them alike.
    pub fn calibrate(&self, samples: usize, rng: &mut ChaCha20Rng) -> CostModel {
        let state = self.state();
        let samples = samples.max(1);
        let classes = [TxClass::TxSig, TxClass::TxGsig, TxClass::TxTsig];
        let txs: Vec<Vec<Transaction>> = classes
            .iter()
            .map(|&c| (0..samples).map(|i| self.make_tx(c, i as u64, rng)).collect())
            .collect();
        let key = &self.validator_keys[0];
        let msg = [7u8; 40];
        // sig, gsig, tsig, vote sign, vote verify
        let mut times: [Vec<u64>; 5] = Default::default();
        let micros = |start: Instant| start.elapsed().as_micros() as u64;
        for i in 0..samples {
            for (c, class_txs) in txs.iter().enumerate() {
                let start = Instant::now();
                assert!(state.verify_auth_uncached(&class_txs[i]));
                times[c].push(micros(start));
            }
            let start = Instant::now();
            let vote = suite::sig_sign(&msg, key);
            times[3].push(micros(start));
            let start = Instant::now();
            assert!(suite::sig_verify(&key.pk, &msg, &vote));
            times[4].push(micros(start));
        }
        let [sig, gsig, tsig, sign_us, verify_us] = times.map(|mut t| {
            t.sort_unstable();
            t[t.len() / 2].max(1)
        });
        CostModel {
            verify_sig_us: sig,
            verify_gsig_us: gsig,
            verify_tsig_us: tsig,
            vote_sign_us: sign_us,
            vote_verify_us: verify_us,
            ..CostModel::default()
        }
    }
}

/// Class mix (relative weights), issue rate and length of a stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub mix: Vec<(TxClass, u32)>,
    pub rate_per_s: f64,
    pub count: usize,
    #[serde(default)]
    pub start_us: u64,
}

impl StreamSpec {
    pub fn only(class: TxClass, count: usize, rate_per_s: f64) -> Self {
        Self {
            mix: vec![(class, 1)],
            rate_per_s,
            count,
            start_us: 0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TxStream {
    pub items: Vec<(u64, Transaction)>,
}

impl TxStream {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn count(&self, class: TxClass) -> usize {
        self.items.iter().filter(|(_, t)| t.class() == class).count()
    }

    pub fn submit_to(&self, sim: &mut Simulation) {
        for (at, tx) in &self.items {
            sim.submit_tx(*at, tx.clone());
        }
    }
}

/// Generates `spec.count` valid transactions at evenly spaced issue times.
/// The class of each is drawn from the weighted mix; a non-positive rate or
/// an empty mix yields an empty stream.
pub fn inject_tx(fixture: &LoadFixture, spec: &StreamSpec, rng: &mut ChaCha20Rng) -> TxStream {
    let total: u32 = spec.mix.iter().map(|(_, w)| *w).sum();
    if spec.rate_per_s <= 0.0 || total == 0 {
        return TxStream::default();
    }
    let gap = 1e6 / spec.rate_per_s;
    let items = (0..spec.count)
        .map(|i| {
            let class = spec
                .mix
                .choose_weighted(rng, |(_, w)| *w)
                .map(|(c, _)| *c)
                .expect("non-empty weighted mix");
            let at = spec.start_us + (i as f64 * gap) as u64;
            let jitter: u64 = if gap >= 2.0 { rng.gen_range(0..(gap as u64 / 2).max(1)) } else { 0 };
            (at + jitter, fixture.make_tx(class, i as u64, rng))
        })
        .collect();
    TxStream { items }
}

/// Runs the stream through a fresh simulation until `horizon_us` and returns
/// the reference replica's chain with its metrics.
pub fn run_consensus(
    config: SimConfig,
    fixture: &LoadFixture,
    stream: &TxStream,
    horizon_us: u64,
) -> Result<(Vec<Block>, MetricsReport), SimError> {
    let mut sim = Simulation::new(config, fixture.validator_keys.clone(), fixture.state())?;
    stream.submit_to(&mut sim);
    sim.run_until(horizon_us);
    let chain = sim.log(sim.observer());
    Ok((chain, measure(&sim)))
}
