//! Network, fault and cost models for the simulator.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::ledger::TxClass;
use crate::vss::ShareIndex;

/// A window during which messages between `side` and the rest are held back
/// until the window closes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub start_us: u64,
    pub end_us: u64,
    pub side: BTreeSet<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkModel {
    pub base_latency_us: u64,
    /// Uniform extra delay in `[0, jitter_us]`, drawn per message.
    pub jitter_us: u64,
    /// Transmission cost; zero means unlimited bandwidth.
    pub bytes_per_ms: u64,
    pub drop_rate: f64,
    pub partitions: Vec<Partition>,
}

impl Default for NetworkModel {
    fn default() -> Self {
        Self {
            base_latency_us: 2_000,
            jitter_us: 1_000,
            bytes_per_ms: 12_500,
            drop_rate: 0.0,
            partitions: Vec::new(),
        }
    }
}

impl NetworkModel {
    pub fn instant() -> Self {
        Self {
            base_latency_us: 0,
            jitter_us: 0,
            bytes_per_ms: 0,
            drop_rate: 0.0,
            partitions: Vec::new(),
        }
    }

    /// Delivery time for a message sent at `now`, or `None` if dropped.
    pub(crate) fn delivery(
        &self,
        now: u64,
        from: u32,
        to: u32,
        size: usize,
        rng: &mut ChaCha20Rng,
    ) -> Option<u64> {
        if from != to && self.drop_rate > 0.0 && rng.gen_bool(self.drop_rate.min(1.0)) {
            return None;
        }
        let mut depart = now;
        for p in &self.partitions {
            let split = p.side.contains(&from) != p.side.contains(&to);
            if split && depart >= p.start_us && depart < p.end_us {
                depart = p.end_us;
            }
        }
        if from == to {
            return Some(depart);
        }
        let jitter = if self.jitter_us > 0 {
            rng.gen_range(0..=self.jitter_us)
        } else {
            0
        };
        let transfer = if self.bytes_per_ms > 0 {
            size as u64 * 1000 / self.bytes_per_ms
        } else {
            0
        };
        Some(depart + self.base_latency_us + jitter + transfer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Behavior {
    /// Sends nothing and never proposes.
    Silent,
    /// As primary, sends conflicting proposals to different replicas; as a
    /// replica, votes for a bogus digest towards half of its peers.
    Equivocate,
    /// Sends commit votes and protocol shares that fail verification.
    CorruptShare,
    /// Holds every outgoing message back by the plan's delay.
    Delay,
}

impl Behavior {
    pub const ALL: [Behavior; 4] = [
        Behavior::Silent,
        Behavior::Equivocate,
        Behavior::CorruptShare,
        Behavior::Delay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Behavior::Silent => "silent",
            Behavior::Equivocate => "equivocate",
            Behavior::CorruptShare => "corrupt-share",
            Behavior::Delay => "delay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FaultPlan {
    pub byzantine: BTreeMap<u32, Behavior>,
    pub delay_us: u64,
}

impl FaultPlan {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn single(index: u32, behavior: Behavior) -> Self {
        Self {
            byzantine: BTreeMap::from([(index, behavior)]),
            delay_us: 400_000,
        }
    }

    pub fn behavior(&self, i: ShareIndex) -> Option<Behavior> {
        self.byzantine.get(&i.get()).copied()
    }

    pub fn is_honest(&self, i: ShareIndex) -> bool {
        !self.byzantine.contains_key(&i.get())
    }
}

/// Simulated CPU cost of each step, in microseconds. The defaults come from
/// timing this implementation on a desktop machine; `LoadFixture::calibrate`
/// re-measures them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    pub verify_sig_us: u64,
    pub verify_gsig_us: u64,
    pub verify_tsig_us: u64,
    pub vote_sign_us: u64,
    pub vote_verify_us: u64,
    pub per_message_us: u64,
    pub block_overhead_us: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            verify_sig_us: 110,
            verify_gsig_us: 2_900,
            verify_tsig_us: 1_700,
            vote_sign_us: 90,
            vote_verify_us: 110,
            per_message_us: 5,
            block_overhead_us: 50,
        }
    }
}

impl CostModel {
    pub fn zero() -> Self {
        Self {
            verify_sig_us: 0,
            verify_gsig_us: 0,
            verify_tsig_us: 0,
            vote_sign_us: 0,
            vote_verify_us: 0,
            per_message_us: 0,
            block_overhead_us: 0,
        }
    }

    pub fn verify_us(&self, class: TxClass) -> u64 {
        match class {
            TxClass::TxSig => self.verify_sig_us,
            TxClass::TxGsig => self.verify_gsig_us,
            TxClass::TxTsig => self.verify_tsig_us,
        }
    }
}
