//! Threshold identity-based group signatures.
//!
//! Construction overview (additive notation, `G = g1`):
//!
//! * Setup shares two master secrets `α, β` among `n` managers with the
//!   dealerless VSS. `mpk` is the pair of joint Feldman commitment vectors.
//! * GrpSetUp derives per-group keys by scaling: `x_i = α_i·H(grp,"x")`,
//!   `y_i = β_i·H(grp,"y")`. The group public key is `X = x·G, Y = y·G`,
//!   computable from `mpk` alone, as is every `gvk_i = (x_i·G, y_i·G)`.
//! * A user identity hashes to `u ∈ Zq` and a base `h ∈ G2`. The user key is
//!   the certificate `σ = (x + y·u)·h`; ExtShare returns `(x_i + y_i·u)·h`,
//!   linear in the manager's share, so `k` shares combine by Lagrange.
//! * Sign re-randomizes the certificate (`σ1 = a·h`, `σ2 = a·(σ + t·h)`),
//!   publishes `κ = X + u·Y + t·G`, ElGamal-encrypts `u·G` under `X`, and
//!   proves in zero knowledge that the same `u` sits in `κ` and in the
//!   ciphertext. Verify checks `e(κ, σ1) = e(G, σ2)` plus the proof.
//! * OpenPart is a threshold ElGamal decryption share `x_i·C1` with a DLEQ
//!   proof against `gvk_i`; Open recovers `u·G` and looks it up.

pub mod games;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use group::Curve;
use rand::{CryptoRng, RngCore};

use crate::codec::{CodecError, Reader, Writer};
use crate::pairing::{self, G1Affine, G1Projective, G2Affine, G2Projective, Scalar};
use crate::vss::{self, DealerlessRun, Params, ShareIndex, VssError, VssTranscript};

const DOMAIN_GROUP_X: &[u8] = b"group-x";
const DOMAIN_GROUP_Y: &[u8] = b"group-y";
const DOMAIN_IDENTITY: &[u8] = b"identity";
const DOMAIN_IDENTITY_BASE: &[u8] = b"identity-base";
const DOMAIN_SIGN_CHALLENGE: &[u8] = b"sign-challenge";
const DOMAIN_OPEN_CHALLENGE: &[u8] = b"open-share-challenge";
const DOMAIN_OPEN_NONCE: &[u8] = b"open-share-nonce";

/// Serialized length of a [`GroupSignature`], independent of `(k, n)`.
pub const SIGNATURE_LEN: usize = 2 * pairing::G2_LEN + 3 * pairing::G1_LEN + 4 * pairing::SCALAR_LEN;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TibgsError {
    #[error(transparent)]
    Vss(#[from] VssError),
    #[error("manager index {0} is not part of this key set")]
    UnknownManager(ShareIndex),
    #[error("only {valid} valid shares, need {need} (rejected: {rejected:?})")]
    InsufficientValidShares {
        valid: usize,
        need: usize,
        rejected: Vec<ShareIndex>,
    },
    #[error("insufficient shares: need {need}, got {got}")]
    InsufficientShares { need: usize, got: usize },
    #[error("duplicate manager index {0}")]
    DuplicateIndex(ShareIndex),
    #[error("share was issued for a different group or user")]
    ShareMismatch,
    #[error("signature does not verify")]
    InvalidSignature,
    #[error("opened identity matches no registered user")]
    UnknownSigner,
    #[error("reconstructed key failed its certificate check")]
    InvalidReconstructedKey,
}

fn identity_bytes(grp_id: &str, user_id: &str) -> Vec<u8> {
    let mut w = Writer::new();
    w.put_str(grp_id).put_str(user_id);
    w.into_bytes()
}

/// `u = H(grp, user)`, the identity scalar embedded in signatures.
pub fn identity_scalar(grp_id: &str, user_id: &str) -> Scalar {
    pairing::hash_to_scalar(DOMAIN_IDENTITY, &identity_bytes(grp_id, user_id))
}

/// `h = H(grp, user)` in G2, the base of the user's certificate.
pub fn identity_base(grp_id: &str, user_id: &str) -> G2Affine {
    pairing::hash_to_g2(DOMAIN_IDENTITY_BASE, &identity_bytes(grp_id, user_id)).to_affine()
}

/// `u·G`, the value Open recovers from a signature.
pub fn identity_commitment(grp_id: &str, user_id: &str) -> G1Affine {
    (G1Projective::generator() * identity_scalar(grp_id, user_id)).to_affine()
}

fn group_scalars(grp_id: &str) -> (Scalar, Scalar) {
    (
        pairing::hash_to_scalar(DOMAIN_GROUP_X, grp_id.as_bytes()),
        pairing::hash_to_scalar(DOMAIN_GROUP_Y, grp_id.as_bytes()),
    )
}

/// Per-manager master secret share.
#[derive(Clone, PartialEq, Eq)]
pub struct MasterKeyShare {
    pub manager: ShareIndex,
    pub alpha: Scalar,
    pub beta: Scalar,
}

impl fmt::Debug for MasterKeyShare {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MasterKeyShare")
            .field("manager", &self.manager)
            .finish_non_exhaustive()
    }
}

impl MasterKeyShare {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.manager.encode(&mut w);
        w.put_scalar(&self.alpha).put_scalar(&self.beta);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let out = Self {
            manager: ShareIndex::decode(&mut r)?,
            alpha: r.get_scalar()?,
            beta: r.get_scalar()?,
        };
        r.finish()?;
        Ok(out)
    }
}

/// Joint commitments to the two master polynomials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MasterPublicKey {
    pub params: Params,
    pub alpha: Vec<G1Affine>,
    pub beta: Vec<G1Affine>,
}

impl MasterPublicKey {
    /// `(α_i·G, β_i·G)`.
    pub fn share_image(&self, i: ShareIndex) -> (G1Projective, G1Projective) {
        let eval = |cs: &[G1Affine]| {
            let pts: Vec<G1Projective> = cs.iter().map(G1Projective::from).collect();
            vss::eval_commitments(&pts, i.get())
        };
        (eval(&self.alpha), eval(&self.beta))
    }

    pub fn group_public_key(&self, grp_id: &str) -> GroupPublicKey {
        let (hx, hy) = group_scalars(grp_id);
        GroupPublicKey {
            grp_id: grp_id.to_owned(),
            x: (self.alpha[0] * hx).to_affine(),
            y: (self.beta[0] * hy).to_affine(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.params.encode(&mut w);
        for c in self.alpha.iter().chain(&self.beta) {
            w.put_g1(c);
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let params = Params::decode(&mut r)?;
        let k = params.k as usize;
        let alpha = (0..k).map(|_| r.get_g1()).collect::<Result<_, _>>()?;
        let beta = (0..k).map(|_| r.get_g1()).collect::<Result<_, _>>()?;
        r.finish()?;
        Ok(Self { params, alpha, beta })
    }
}

/// Output of the distributed setup ceremony as seen by a test harness that
/// controls every simulated manager.
#[derive(Debug, Clone)]
pub struct MasterKey {
    pub params: Params,
    pub mpk: MasterPublicKey,
    pub shares: Vec<MasterKeyShare>,
    pub alpha_transcript: VssTranscript,
    pub beta_transcript: VssTranscript,
}

impl MasterKey {
    pub fn share(&self, i: ShareIndex) -> Option<&MasterKeyShare> {
        self.shares.iter().find(|s| s.manager == i)
    }

    /// Bytes exchanged by the ceremony (both VSS transcripts).
    pub fn transcript_len(&self) -> usize {
        self.alpha_transcript.to_bytes().len() + self.beta_transcript.to_bytes().len()
    }

    /// Derives every manager's group key share for `grp_id`.
    pub fn group_key_shares(&self, grp_id: &str) -> Vec<GroupKeyShare> {
        self.shares
            .iter()
            .map(|s| grp_setup(grp_id, s.manager, s, self.params).expect("own share"))
            .collect()
    }
}

/// Runs two dealerless VSS instances among `n` simulated managers.
pub fn setup<R: RngCore + CryptoRng>(params: Params, rng: &mut R) -> Result<MasterKey, TibgsError> {
    setup_with_faulty(params, &[], rng)
}

/// Setup where the listed managers deal inconsistent sub-shares. They are
/// disqualified; setup fails if fewer than `k` honest dealers remain.
pub fn setup_with_faulty<R: RngCore + CryptoRng>(
    params: Params,
    faulty: &[ShareIndex],
    rng: &mut R,
) -> Result<MasterKey, TibgsError> {
    let params = Params::new(params.k, params.n)?;
    let run = DealerlessRun::new(params)?.with_faulty(faulty.iter().copied());
    let alpha_transcript = run.run(rng)?;
    let beta_transcript = run.run(rng)?;
    let shares = ShareIndex::all(params.n)
        .map(|i| MasterKeyShare {
            manager: i,
            alpha: alpha_transcript.share(i).expect("all indices present"),
            beta: beta_transcript.share(i).expect("all indices present"),
        })
        .collect();
    let mpk = MasterPublicKey {
        params,
        alpha: alpha_transcript.joint_commitments.clone(),
        beta: beta_transcript.joint_commitments.clone(),
    };
    Ok(MasterKey {
        params,
        mpk,
        shares,
        alpha_transcript,
        beta_transcript,
    })
}

/// `(X, Y)` for one group, together with its identifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPublicKey {
    pub grp_id: String,
    pub x: G1Affine,
    pub y: G1Affine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupVerifyKey {
    pub manager: ShareIndex,
    pub x: G1Affine,
    pub y: G1Affine,
}

impl GroupVerifyKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.manager.encode(&mut w);
        w.put_g1(&self.x).put_g1(&self.y);
        w.into_bytes()
    }
}

/// Every manager's `gvk_i` for a group, as derived from `mpk`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupVerifyKeys {
    pub params: Params,
    pub gpk: GroupPublicKey,
    pub keys: Vec<GroupVerifyKey>,
}

impl GroupVerifyKeys {
    pub fn derive(mpk: &MasterPublicKey, grp_id: &str) -> Self {
        let (hx, hy) = group_scalars(grp_id);
        let keys = ShareIndex::all(mpk.params.n)
            .map(|i| {
                let (a, b) = mpk.share_image(i);
                GroupVerifyKey {
                    manager: i,
                    x: (a * hx).to_affine(),
                    y: (b * hy).to_affine(),
                }
            })
            .collect();
        Self {
            params: mpk.params,
            gpk: mpk.group_public_key(grp_id),
            keys,
        }
    }

    pub fn get(&self, i: ShareIndex) -> Option<&GroupVerifyKey> {
        self.keys.iter().find(|k| k.manager == i)
    }
}

/// `gsk_i = (x_i, y_i)` together with its public image.
#[derive(Clone, PartialEq, Eq)]
pub struct GroupKeyShare {
    pub grp_id: String,
    pub manager: ShareIndex,
    pub x: Scalar,
    pub y: Scalar,
    pub gvk: GroupVerifyKey,
}

impl fmt::Debug for GroupKeyShare {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupKeyShare")
            .field("grp_id", &self.grp_id)
            .field("manager", &self.manager)
            .field("gvk", &self.gvk)
            .finish_non_exhaustive()
    }
}

impl GroupKeyShare {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_str(&self.grp_id);
        self.manager.encode(&mut w);
        w.put_scalar(&self.x).put_scalar(&self.y);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let grp_id = r.get_string()?;
        let manager = ShareIndex::decode(&mut r)?;
        let (x, y) = (r.get_scalar()?, r.get_scalar()?);
        r.finish()?;
        Ok(Self::from_parts(grp_id, manager, x, y))
    }

    fn from_parts(grp_id: String, manager: ShareIndex, x: Scalar, y: Scalar) -> Self {
        let g = G1Projective::generator();
        let gvk = GroupVerifyKey {
            manager,
            x: (g * x).to_affine(),
            y: (g * y).to_affine(),
        };
        Self {
            grp_id,
            manager,
            x,
            y,
            gvk,
        }
    }
}

pub fn grp_setup(
    grp_id: &str,
    manager: ShareIndex,
    msk: &MasterKeyShare,
    params: Params,
) -> Result<GroupKeyShare, TibgsError> {
    if manager.get() > params.n || msk.manager != manager {
        return Err(TibgsError::UnknownManager(manager));
    }
    let (hx, hy) = group_scalars(grp_id);
    Ok(GroupKeyShare::from_parts(
        grp_id.to_owned(),
        manager,
        msk.alpha * hx,
        msk.beta * hy,
    ))
}

/// One manager's fragment `(x_i + y_i·u)·h` of a user certificate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserKeyShare {
    pub grp_id: String,
    pub user_id: String,
    pub manager: ShareIndex,
    pub usk: G2Affine,
}

impl UserKeyShare {
    /// Checks `e(gvk.x + u·gvk.y, h) = e(G, usk_i)`.
    pub fn verify(&self, gvk: &GroupVerifyKey) -> bool {
        let u = identity_scalar(&self.grp_id, &self.user_id);
        let h = identity_base(&self.grp_id, &self.user_id);
        self.verify_at(gvk, u, h)
    }

    /// [`UserKeyShare::verify`] with the identity hashes already computed.
    fn verify_at(&self, gvk: &GroupVerifyKey, u: Scalar, h: G2Affine) -> bool {
        if gvk.manager != self.manager {
            return false;
        }
        let lhs = (G1Projective::from(gvk.x) + pairing::mul_vartime(G1Projective::from(gvk.y), &u)).to_affine();
        pairing::pairing_product_is_identity(&[(lhs, h), (-G1Affine::generator(), self.usk)])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_str(&self.grp_id).put_str(&self.user_id);
        self.manager.encode(&mut w);
        w.put_g2(&self.usk);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let out = Self {
            grp_id: r.get_string()?,
            user_id: r.get_string()?,
            manager: ShareIndex::decode(&mut r)?,
            usk: r.get_g2()?,
        };
        r.finish()?;
        Ok(out)
    }
}

pub fn ext_share(user_id: &str, gsk: &GroupKeyShare) -> UserKeyShare {
    let u = identity_scalar(&gsk.grp_id, user_id);
    let h = identity_base(&gsk.grp_id, user_id);
    UserKeyShare {
        grp_id: gsk.grp_id.clone(),
        user_id: user_id.to_owned(),
        manager: gsk.manager,
        usk: (h * (gsk.x + gsk.y * u)).to_affine(),
    }
}

/// A user's full signing key.
#[derive(Clone, PartialEq, Eq)]
pub struct UserGroupKey {
    pub grp_id: String,
    pub user_id: String,
    pub gpk: GroupPublicKey,
    pub u: Scalar,
    pub h: G2Affine,
    pub sigma: G2Affine,
}

impl fmt::Debug for UserGroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UserGroupKey")
            .field("grp_id", &self.grp_id)
            .field("user_id", &self.user_id)
            .finish_non_exhaustive()
    }
}

impl UserGroupKey {
    /// Assembles a key from a certificate, checking it against the group key.
    pub fn from_certificate(
        gpk: &GroupPublicKey,
        user_id: &str,
        sigma: G2Affine,
    ) -> Result<Self, TibgsError> {
        let key = Self {
            grp_id: gpk.grp_id.clone(),
            user_id: user_id.to_owned(),
            gpk: gpk.clone(),
            u: identity_scalar(&gpk.grp_id, user_id),
            h: identity_base(&gpk.grp_id, user_id),
            sigma,
        };
        if key.is_valid() {
            Ok(key)
        } else {
            Err(TibgsError::InvalidReconstructedKey)
        }
    }

    pub fn is_valid(&self) -> bool {
        let lhs = (G1Projective::from(self.gpk.x) + self.gpk.y * self.u).to_affine();
        !bool::from(self.sigma.is_identity())
            && pairing::pairing_product_is_identity(&[
                (lhs, self.h),
                (-G1Affine::generator(), self.sigma),
            ])
    }

    /// Certificate bytes; the rest of the key is derivable from the
    /// identifiers and the group public key.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_str(&self.grp_id)
            .put_str(&self.user_id)
            .put_g1(&self.gpk.x)
            .put_g1(&self.gpk.y)
            .put_g2(&self.sigma);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let grp_id = r.get_string()?;
        let user_id = r.get_string()?;
        let gpk = GroupPublicKey {
            grp_id,
            x: r.get_g1()?,
            y: r.get_g1()?,
        };
        let sigma = r.get_g2()?;
        r.finish()?;
        Self::from_certificate(&gpk, &user_id, sigma)
            .map_err(|_| CodecError::InvalidValue("certificate does not verify"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReconstructedKey {
    pub key: UserGroupKey,
    /// Managers whose shares failed verification and were dropped.
    pub rejected: Vec<ShareIndex>,
}

/// Combines user key shares. Shares failing their `gvk_i` check are dropped
/// and reported; the lowest `k` valid indices are interpolated.
pub fn reconst_key(
    user_id: &str,
    shares: &[UserKeyShare],
    gvks: &GroupVerifyKeys,
    params: Params,
) -> Result<ReconstructedKey, TibgsError> {
    let mut seen = BTreeSet::new();
    for s in shares {
        if !seen.insert(s.manager) {
            return Err(TibgsError::DuplicateIndex(s.manager));
        }
    }
    let grp_id = &gvks.gpk.grp_id;
    let (u, h) = (identity_scalar(grp_id, user_id), identity_base(grp_id, user_id));
    let mut valid = Vec::new();
    let mut rejected = Vec::new();
    for s in shares {
        let ok = s.user_id == user_id
            && &s.grp_id == grp_id
            && gvks.get(s.manager).is_some_and(|gvk| s.verify_at(gvk, u, h));
        if ok {
            valid.push((s.manager, G2Projective::from(s.usk)));
        } else {
            rejected.push(s.manager);
        }
    }
    if valid.len() < params.k as usize {
        return Err(TibgsError::InsufficientValidShares {
            valid: valid.len(),
            need: params.k as usize,
            rejected,
        });
    }
    let sigma = vss::combine_in_exponent(params, &valid)?.to_affine();
    let key = UserGroupKey::from_certificate(&gvks.gpk, user_id, sigma)?;
    Ok(ReconstructedKey { key, rejected })
}

/// Fixed-size group signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupSignature {
    pub sigma1: G2Affine,
    pub sigma2: G2Affine,
    pub kappa: G1Affine,
    pub c1: G1Affine,
    pub c2: G1Affine,
    pub challenge: Scalar,
    pub s_u: Scalar,
    pub s_t: Scalar,
    pub s_rho: Scalar,
}

impl GroupSignature {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        debug_assert_eq!(w.len(), SIGNATURE_LEN);
        w.into_bytes()
    }

    pub fn encode(&self, w: &mut Writer) {
        w.put_g2(&self.sigma1)
            .put_g2(&self.sigma2)
            .put_g1(&self.kappa)
            .put_g1(&self.c1)
            .put_g1(&self.c2)
            .put_scalar(&self.challenge)
            .put_scalar(&self.s_u)
            .put_scalar(&self.s_t)
            .put_scalar(&self.s_rho);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(Self {
            sigma1: r.get_g2()?,
            sigma2: r.get_g2()?,
            kappa: r.get_g1()?,
            c1: r.get_g1()?,
            c2: r.get_g1()?,
            challenge: r.get_scalar()?,
            s_u: r.get_scalar()?,
            s_t: r.get_scalar()?,
            s_rho: r.get_scalar()?,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let sig = Self::decode(&mut r)?;
        r.finish()?;
        Ok(sig)
    }

    /// All-identity value for slots that are filled in after signing. It
    /// never verifies.
    pub fn placeholder() -> Self {
        Self {
            sigma1: G2Affine::identity(),
            sigma2: G2Affine::identity(),
            kappa: G1Affine::identity(),
            c1: G1Affine::identity(),
            c2: G1Affine::identity(),
            challenge: Scalar::zero(),
            s_u: Scalar::zero(),
            s_t: Scalar::zero(),
            s_rho: Scalar::zero(),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn sign_challenge(
    gpk: &GroupPublicKey,
    message: &[u8],
    sigma1: &G2Affine,
    sigma2: &G2Affine,
    kappa: &G1Affine,
    c1: &G1Affine,
    c2: &G1Affine,
    commitments: &[G1Affine; 3],
) -> Scalar {
    let mut w = Writer::new();
    w.put_str(&gpk.grp_id)
        .put_g1(&gpk.x)
        .put_g1(&gpk.y)
        .put_bytes(message)
        .put_g2(sigma1)
        .put_g2(sigma2)
        .put_g1(kappa)
        .put_g1(c1)
        .put_g1(c2);
    for r in commitments {
        w.put_g1(r);
    }
    pairing::hash_to_scalar(DOMAIN_SIGN_CHALLENGE, w.as_slice())
}

pub fn sign<R: RngCore + CryptoRng>(message: &[u8], usk: &UserGroupKey, rng: &mut R) -> GroupSignature {
    let g = G1Projective::generator();
    let x = G1Projective::from(usk.gpk.x);
    let y = G1Projective::from(usk.gpk.y);

    let a = pairing::scalar_random_nonzero(rng);
    let t = pairing::scalar_random(rng);
    let rho = pairing::scalar_random(rng);

    let h = G2Projective::from(usk.h);
    let sigma1 = (h * a).to_affine();
    let sigma2 = ((G2Projective::from(usk.sigma) + h * t) * a).to_affine();
    let kappa = (x + y * usk.u + g * t).to_affine();
    let c1 = (g * rho).to_affine();
    let c2 = (g * usk.u + x * rho).to_affine();

    let (r_u, r_t, r_rho) = (
        pairing::scalar_random(rng),
        pairing::scalar_random(rng),
        pairing::scalar_random(rng),
    );
    let commitments = [
        (y * r_u + g * r_t).to_affine(),
        (g * r_rho).to_affine(),
        (g * r_u + x * r_rho).to_affine(),
    ];
    let challenge = sign_challenge(&usk.gpk, message, &sigma1, &sigma2, &kappa, &c1, &c2, &commitments);
    GroupSignature {
        sigma1,
        sigma2,
        kappa,
        c1,
        c2,
        challenge,
        s_u: r_u - challenge * usk.u,
        s_t: r_t - challenge * t,
        s_rho: r_rho - challenge * rho,
    }
}

/// Verifies against a precomputed group public key.
pub fn verify_with(message: &[u8], sig: &GroupSignature, gpk: &GroupPublicKey) -> bool {
    if bool::from(sig.sigma1.is_identity()) {
        return false;
    }
    let g = G1Projective::generator();
    let x = G1Projective::from(gpk.x);
    let y = G1Projective::from(gpk.y);
    let c = sig.challenge;
    let msm = |terms: &[(G1Projective, Scalar)]| {
        let (points, scalars): (Vec<_>, Vec<_>) = terms.iter().copied().unzip();
        pairing::msm(&points, &scalars).to_affine()
    };
    let commitments = [
        msm(&[(y, sig.s_u), (g, sig.s_t), (G1Projective::from(sig.kappa) - x, c)]),
        msm(&[(g, sig.s_rho), (sig.c1.into(), c)]),
        msm(&[(g, sig.s_u), (x, sig.s_rho), (sig.c2.into(), c)]),
    ];
    let expected = sign_challenge(
        gpk,
        message,
        &sig.sigma1,
        &sig.sigma2,
        &sig.kappa,
        &sig.c1,
        &sig.c2,
        &commitments,
    );
    expected == c
        && pairing::pairing_product_is_identity(&[
            (sig.kappa, sig.sigma1),
            (-G1Affine::generator(), sig.sigma2),
        ])
}

pub fn verify(message: &[u8], sig: &GroupSignature, mpk: &MasterPublicKey, grp_id: &str) -> bool {
    verify_with(message, sig, &mpk.group_public_key(grp_id))
}

/// Verifies raw signature bytes; malformed encodings are simply invalid.
pub fn verify_bytes(message: &[u8], sig: &[u8], gpk: &GroupPublicKey) -> bool {
    GroupSignature::from_bytes(sig).is_ok_and(|s| verify_with(message, &s, gpk))
}

/// A signature that has passed [`verify_with`] for its group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifiedSignature<'a> {
    sig: &'a GroupSignature,
}

impl<'a> VerifiedSignature<'a> {
    pub fn check(
        message: &[u8],
        sig: &'a GroupSignature,
        gpk: &GroupPublicKey,
    ) -> Result<Self, TibgsError> {
        if verify_with(message, sig, gpk) {
            Ok(Self { sig })
        } else {
            Err(TibgsError::InvalidSignature)
        }
    }

    pub fn signature(&self) -> &'a GroupSignature {
        self.sig
    }
}

/// One manager's decryption share `x_i·C1` with a proof that it used the
/// same exponent as its published `gvk_i.x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpenShare {
    pub manager: ShareIndex,
    pub ok: G1Affine,
    pub proof_c: Scalar,
    pub proof_z: Scalar,
}

fn open_challenge(
    gvk_x: &G1Affine,
    c1: &G1Affine,
    ok: &G1Affine,
    a1: &G1Affine,
    a2: &G1Affine,
) -> Scalar {
    let mut w = Writer::new();
    w.put_g1(gvk_x).put_g1(c1).put_g1(ok).put_g1(a1).put_g1(a2);
    pairing::hash_to_scalar(DOMAIN_OPEN_CHALLENGE, w.as_slice())
}

impl OpenShare {
    pub fn verify(&self, gvk: &GroupVerifyKey, sig: &GroupSignature) -> bool {
        if gvk.manager != self.manager {
            return false;
        }
        let g = G1Projective::generator();
        let a1 = pairing::msm(&[g, gvk.x.into()], &[self.proof_z, self.proof_c]).to_affine();
        let a2 = pairing::msm(&[G1Projective::from(sig.c1), self.ok.into()], &[self.proof_z, self.proof_c]).to_affine();
        open_challenge(&gvk.x, &sig.c1, &self.ok, &a1, &a2) == self.proof_c
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.manager.encode(&mut w);
        w.put_g1(&self.ok)
            .put_scalar(&self.proof_c)
            .put_scalar(&self.proof_z);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let out = Self {
            manager: ShareIndex::decode(&mut r)?,
            ok: r.get_g1()?,
            proof_c: r.get_scalar()?,
            proof_z: r.get_scalar()?,
        };
        r.finish()?;
        Ok(out)
    }
}

/// Opens a signature that the caller already verified.
pub fn open_part_verified(gsk: &GroupKeyShare, sig: VerifiedSignature<'_>) -> OpenShare {
    let sig = sig.signature();
    let ok = (sig.c1 * gsk.x).to_affine();
    // Deterministic nonce: same (gsk_i, σ) always yields the same share.
    let mut w = Writer::new();
    w.put_scalar(&gsk.x).put_g1(&sig.c1);
    let r = pairing::hash_to_scalar(DOMAIN_OPEN_NONCE, w.as_slice());
    let a1 = (G1Projective::generator() * r).to_affine();
    let a2 = (sig.c1 * r).to_affine();
    let c = open_challenge(&gsk.gvk.x, &sig.c1, &ok, &a1, &a2);
    OpenShare {
        manager: gsk.manager,
        ok,
        proof_c: c,
        proof_z: r - c * gsk.x,
    }
}

/// Produces this manager's open share, refusing unverifiable signatures.
pub fn open_part(
    gsk: &GroupKeyShare,
    sig: &GroupSignature,
    message: &[u8],
    gpk: &GroupPublicKey,
) -> Result<OpenShare, TibgsError> {
    if gpk.grp_id != gsk.grp_id {
        return Err(TibgsError::ShareMismatch);
    }
    let verified = VerifiedSignature::check(message, sig, gpk)?;
    Ok(open_part_verified(gsk, verified))
}

/// Splits open shares into those whose proofs check out and the indices of
/// those that do not.
pub fn filter_open_shares(
    gvks: &GroupVerifyKeys,
    sig: &GroupSignature,
    shares: &[OpenShare],
) -> (Vec<OpenShare>, Vec<ShareIndex>) {
    let mut good = Vec::new();
    let mut bad = Vec::new();
    for s in shares {
        if gvks.get(s.manager).is_some_and(|gvk| s.verify(gvk, sig)) {
            good.push(*s);
        } else {
            bad.push(s.manager);
        }
    }
    (good, bad)
}

/// Maps identity commitments `u·G` back to user identifiers.
#[derive(Debug, Clone, Default)]
pub struct IdentityRegistry {
    grp_id: String,
    by_commitment: HashMap<[u8; pairing::G1_LEN], String>,
}

impl IdentityRegistry {
    pub fn new<I, S>(grp_id: &str, user_ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut reg = Self {
            grp_id: grp_id.to_owned(),
            by_commitment: HashMap::new(),
        };
        for id in user_ids {
            reg.insert(id.as_ref());
        }
        reg
    }

    pub fn insert(&mut self, user_id: &str) {
        let key = identity_commitment(&self.grp_id, user_id).to_compressed();
        self.by_commitment.insert(key, user_id.to_owned());
    }

    pub fn lookup(&self, commitment: &G1Affine) -> Option<&str> {
        self.by_commitment
            .get(&commitment.to_compressed())
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.by_commitment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_commitment.is_empty()
    }
}

/// Recovers `u·G = C2 − x·C1` from the lowest `k` shares.
pub fn open_commitment(
    params: Params,
    sig: &GroupSignature,
    shares: &[OpenShare],
) -> Result<G1Affine, TibgsError> {
    let mut seen = BTreeSet::new();
    for s in shares {
        if !seen.insert(s.manager) {
            return Err(TibgsError::DuplicateIndex(s.manager));
        }
        if s.manager.get() > params.n {
            return Err(TibgsError::UnknownManager(s.manager));
        }
    }
    if shares.len() < params.k as usize {
        return Err(TibgsError::InsufficientShares {
            need: params.k as usize,
            got: shares.len(),
        });
    }
    let pts: Vec<(ShareIndex, G1Projective)> = shares
        .iter()
        .map(|s| (s.manager, G1Projective::from(s.ok)))
        .collect();
    let x_c1 = vss::combine_in_exponent(params, &pts)?;
    Ok((G1Projective::from(sig.c2) - x_c1).to_affine())
}

pub fn open(
    params: Params,
    sig: &GroupSignature,
    shares: &[OpenShare],
    registry: &IdentityRegistry,
) -> Result<String, TibgsError> {
    let commitment = open_commitment(params, sig, shares)?;
    registry
        .lookup(&commitment)
        .map(str::to_owned)
        .ok_or(TibgsError::UnknownSigner)
}
