//! Single-manager identity-based group signatures: the threshold scheme at
//! `(k, n) = (1, 1)`, exposed through the classic six operations.

use rand::{CryptoRng, RngCore};

use crate::tibgs::{
    self, GroupKeyShare, GroupPublicKey, GroupSignature, IdentityRegistry, MasterKey,
    MasterPublicKey, TibgsError, UserGroupKey, VerifiedSignature,
};
use crate::vss::{Params, ShareIndex};

/// The manager's full secret for one group.
#[derive(Debug, Clone)]
pub struct GroupManager {
    pub gsk: GroupKeyShare,
    pub gpk: GroupPublicKey,
}

pub fn params() -> Params {
    Params { k: 1, n: 1 }
}

pub fn setup<R: RngCore + CryptoRng>(rng: &mut R) -> Result<MasterKey, TibgsError> {
    tibgs::setup(params(), rng)
}

pub fn grp_setup(master: &MasterKey, grp_id: &str) -> Result<GroupManager, TibgsError> {
    let one = ShareIndex::new(1).expect("nonzero");
    let msk = master.share(one).ok_or(TibgsError::UnknownManager(one))?;
    Ok(GroupManager {
        gsk: tibgs::grp_setup(grp_id, one, msk, params())?,
        gpk: master.mpk.group_public_key(grp_id),
    })
}

/// `σ = (x + y·u)·h` computed directly from the manager's secret.
pub fn extract(manager: &GroupManager, user_id: &str) -> Result<UserGroupKey, TibgsError> {
    let share = tibgs::ext_share(user_id, &manager.gsk);
    UserGroupKey::from_certificate(&manager.gpk, user_id, share.usk)
}

pub fn sign<R: RngCore + CryptoRng>(message: &[u8], usk: &UserGroupKey, rng: &mut R) -> GroupSignature {
    tibgs::sign(message, usk, rng)
}

pub fn verify(message: &[u8], sig: &GroupSignature, mpk: &MasterPublicKey, grp_id: &str) -> bool {
    tibgs::verify(message, sig, mpk, grp_id)
}

pub fn open(
    manager: &GroupManager,
    sig: &GroupSignature,
    message: &[u8],
    registry: &IdentityRegistry,
) -> Result<String, TibgsError> {
    let verified = VerifiedSignature::check(message, sig, &manager.gpk)?;
    let share = tibgs::open_part_verified(&manager.gsk, verified);
    tibgs::open(params(), sig, &[share], registry)
}
