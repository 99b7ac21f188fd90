//! (k, n) threshold BLS signatures: keys in G1, signatures in G2.
//!
//! The key is generated with the dealerless VSS, so no party ever holds the
//! full secret. A share is `tsk_i·H(m)`; any `k` verified shares combine by
//! Lagrange interpolation into the unique signature `tsk·H(m)`.

use std::collections::BTreeSet;
use std::fmt;

use group::Curve;
use rand::{CryptoRng, RngCore};

use crate::codec::{CodecError, Reader, Writer};
use crate::pairing::{self, G1Affine, G1Projective, G2Affine, G2Projective, Scalar};
use crate::vss::{self, DealerlessRun, Params, ShareIndex, VssError};

const DOMAIN_MESSAGE: &[u8] = b"threshold-sig";

pub const PUBLIC_KEY_LEN: usize = pairing::G1_LEN;
pub const SIGNATURE_LEN: usize = pairing::G2_LEN;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TsigError {
    #[error(transparent)]
    Vss(#[from] VssError),
    #[error("insufficient signature shares: need {need}, got {got}")]
    InsufficientShares { need: usize, got: usize },
    #[error("duplicate signer index {0}")]
    DuplicateIndex(ShareIndex),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PublicKey(pub G1Affine);

impl PublicKey {
    pub fn to_bytes(&self) -> [u8; PUBLIC_KEY_LEN] {
        self.0.to_compressed()
    }

    pub fn from_bytes(bytes: &[u8; PUBLIC_KEY_LEN]) -> Option<Self> {
        Option::from(G1Affine::from_compressed(bytes)).map(PublicKey)
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct SecretShare {
    pub index: ShareIndex,
    pub tsk: Scalar,
}

impl fmt::Debug for SecretShare {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SecretShare")
            .field("index", &self.index)
            .finish_non_exhaustive()
    }
}

impl SecretShare {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.index.encode(&mut w);
        w.put_scalar(&self.tsk);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let out = Self {
            index: ShareIndex::decode(&mut r)?,
            tsk: r.get_scalar()?,
        };
        r.finish()?;
        Ok(out)
    }
}

/// Output of threshold key generation among `n` simulated validators.
#[derive(Debug, Clone)]
pub struct ThresholdKeySet {
    pub params: Params,
    pub pk: PublicKey,
    pub shares: Vec<SecretShare>,
    /// `tvk_i = tsk_i·g1`, position `i−1`.
    pub verify_keys: Vec<G1Affine>,
}

impl ThresholdKeySet {
    pub fn share(&self, i: ShareIndex) -> Option<&SecretShare> {
        self.shares.iter().find(|s| s.index == i)
    }

    pub fn verify_key(&self, i: ShareIndex) -> Option<&G1Affine> {
        self.verify_keys.get(i.get() as usize - 1)
    }

    pub fn public(&self) -> ThresholdPublic {
        ThresholdPublic {
            params: self.params,
            pk: self.pk,
            verify_keys: self.verify_keys.clone(),
        }
    }
}

/// The public half of a key set: what every validator and client knows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThresholdPublic {
    pub params: Params,
    pub pk: PublicKey,
    pub verify_keys: Vec<G1Affine>,
}

impl ThresholdPublic {
    pub fn verify_key(&self, i: ShareIndex) -> Option<&G1Affine> {
        self.verify_keys.get((i.get() as usize).wrapping_sub(1))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.params.encode(&mut w);
        w.put_g1(&self.pk.0);
        for v in &self.verify_keys {
            w.put_g1(v);
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let params = Params::decode(&mut r)?;
        let pk = PublicKey(r.get_g1()?);
        let verify_keys = (0..params.n).map(|_| r.get_g1()).collect::<Result<_, _>>()?;
        r.finish()?;
        Ok(Self {
            params,
            pk,
            verify_keys,
        })
    }
}

pub fn thres_keygen<R: RngCore + CryptoRng>(
    params: Params,
    rng: &mut R,
) -> Result<ThresholdKeySet, TsigError> {
    let transcript = DealerlessRun::new(params)?.run(rng)?;
    let shares: Vec<SecretShare> = transcript
        .final_shares
        .iter()
        .map(|(i, s)| SecretShare { index: *i, tsk: *s })
        .collect();
    let verify_keys = ShareIndex::all(params.n)
        .map(|i| transcript.public_share(i))
        .collect();
    Ok(ThresholdKeySet {
        params: transcript.params,
        pk: PublicKey(transcript.public_key()),
        shares,
        verify_keys,
    })
}

pub fn hash_message(message: &[u8]) -> G2Projective {
    pairing::hash_to_g2(DOMAIN_MESSAGE, message)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SigShare {
    pub signer: ShareIndex,
    pub partial: G2Affine,
}

impl SigShare {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.signer.encode(&mut w);
        w.put_g2(&self.partial);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let out = Self {
            signer: ShareIndex::decode(&mut r)?,
            partial: r.get_g2()?,
        };
        r.finish()?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThresholdSignature(pub G2Affine);

impl ThresholdSignature {
    pub fn to_bytes(&self) -> [u8; SIGNATURE_LEN] {
        self.0.to_compressed()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let sig = Self(r.get_g2()?);
        r.finish()?;
        Ok(sig)
    }
}

pub fn thres_sign(message: &[u8], share: &SecretShare) -> SigShare {
    SigShare {
        signer: share.index,
        partial: (hash_message(message) * share.tsk).to_affine(),
    }
}

fn check_pairing(pk: &G1Affine, message: &[u8], sig: &G2Affine) -> bool {
    let hm = hash_message(message).to_affine();
    pairing::pairing_product_is_identity(&[(*pk, hm), (-G1Affine::generator(), *sig)])
}

/// Checks `e(tvk_i, H(m)) = e(g1, partial)`. The aggregate key is not
/// needed for this check; it is taken so call sites mirror the protocol.
pub fn sig_share_ver(_pk: &PublicKey, tvk: &G1Affine, message: &[u8], share: &SigShare) -> bool {
    check_pairing(tvk, message, &share.partial)
}

/// Combines the `k` lowest-indexed shares. Shares are not verified here;
/// callers filter with [`sig_share_ver`] first.
pub fn sig_share_comb(shares: &[SigShare], params: Params) -> Result<ThresholdSignature, TsigError> {
    let mut seen = BTreeSet::new();
    for s in shares {
        if !seen.insert(s.signer) {
            return Err(TsigError::DuplicateIndex(s.signer));
        }
    }
    if shares.len() < params.k as usize {
        return Err(TsigError::InsufficientShares {
            need: params.k as usize,
            got: shares.len(),
        });
    }
    let pts: Vec<(ShareIndex, G2Projective)> = shares
        .iter()
        .map(|s| (s.signer, G2Projective::from(s.partial)))
        .collect();
    Ok(ThresholdSignature(
        vss::combine_in_exponent(params, &pts)?.to_affine(),
    ))
}

pub fn ts_verify(pk: &PublicKey, message: &[u8], sig: &ThresholdSignature) -> bool {
    check_pairing(&pk.0, message, &sig.0)
}

/// Key generation for a single signer; the `(1, 1)` case.
pub fn single_keygen<R: RngCore + CryptoRng>(rng: &mut R) -> ThresholdKeySet {
    thres_keygen(Params { k: 1, n: 1 }, rng).expect("(1,1) is valid")
}

/// `tsk·g1` for a scalar; used by tests that reconstruct the secret.
pub fn public_image(secret: &Scalar) -> PublicKey {
    PublicKey((G1Projective::generator() * secret).to_affine())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn one_of_one_is_a_plain_keypair() {
        let ks = single_keygen(&mut ChaCha20Rng::seed_from_u64(1));
        assert_eq!(public_image(&ks.shares[0].tsk), ks.pk);
        let share = thres_sign(b"m", &ks.shares[0]);
        let sig = sig_share_comb(&[share], ks.params).unwrap();
        assert_eq!(sig.0, share.partial);
        assert!(ts_verify(&ks.pk, b"m", &sig));
    }

    #[test]
    fn shares_are_deterministic_and_index_bound() {
        let ks = thres_keygen(Params::new(3, 4).unwrap(), &mut ChaCha20Rng::seed_from_u64(2)).unwrap();
        let a = thres_sign(b"m", &ks.shares[0]);
        assert_eq!(a, thres_sign(b"m", &ks.shares[0]));
        for (i, tvk) in ks.verify_keys.iter().enumerate() {
            assert_eq!(sig_share_ver(&ks.pk, tvk, b"m", &a), i == 0);
        }
        let mut bad = a;
        bad.partial = (G2Projective::from(bad.partial) + G2Projective::generator()).to_affine();
        assert!(!sig_share_ver(&ks.pk, &ks.verify_keys[0], b"m", &bad));
    }

    #[test]
    fn combine_rejects_short_and_duplicate_sets() {
        let ks = thres_keygen(Params::new(3, 4).unwrap(), &mut ChaCha20Rng::seed_from_u64(3)).unwrap();
        let shares: Vec<_> = ks.shares.iter().map(|s| thres_sign(b"m", s)).collect();
        assert_eq!(
            sig_share_comb(&shares[..2], ks.params),
            Err(TsigError::InsufficientShares { need: 3, got: 2 })
        );
        let dup = [shares[0], shares[0], shares[1]];
        assert!(matches!(
            sig_share_comb(&dup, ks.params),
            Err(TsigError::DuplicateIndex(_))
        ));
    }

    #[test]
    fn verify_rejects_other_message_and_keyset() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let ks = thres_keygen(Params::new(2, 3).unwrap(), &mut rng).unwrap();
        let other = thres_keygen(Params::new(2, 3).unwrap(), &mut rng).unwrap();
        let shares: Vec<_> = ks.shares.iter().map(|s| thres_sign(b"m", s)).collect();
        let sig = sig_share_comb(&shares, ks.params).unwrap();
        assert!(ts_verify(&ks.pk, b"m", &sig));
        assert!(!ts_verify(&ks.pk, b"n", &sig));
        assert!(!ts_verify(&other.pk, b"m", &sig));
        assert_eq!(ThresholdSignature::from_bytes(&sig.to_bytes()).unwrap(), sig);
        let public = ks.public();
        assert_eq!(ThresholdPublic::from_bytes(&public.to_bytes()).unwrap(), public);
    }
}
