//! Threshold identity-based group signatures, threshold-controlled accounts
//! and a simulated PBFT ledger for double-blind peer review.

pub mod codec;
pub mod pairing;
pub mod vss;
pub mod ibgs;
pub mod tibgs;
pub mod suite;
pub mod ledger;
pub mod consensus;
pub mod tsig;
pub mod workflow;
