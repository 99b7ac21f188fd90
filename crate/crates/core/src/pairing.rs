//! Pairing-group layer over BLS12-381.
//!
//! Scalars encode as 32 big-endian bytes, G1/G2 points as their 48/96-byte
//! compressed forms. GT elements exist only in memory.

use std::fmt;
use std::sync::OnceLock;

use bls12_381::hash_to_curve::{ExpandMsgXmd, HashToCurve, HashToField};
use ff::Field;
use group::{Curve, Group, Wnaf, WnafGroup};
use rand::{CryptoRng, RngCore};

pub use bls12_381::{G1Affine, G1Projective, G2Affine, G2Prepared, G2Projective, Gt, Scalar};

pub const CURVE_ID: &str = "bls12-381";
pub const SCALAR_LEN: usize = 32;
pub const G1_LEN: usize = 48;
pub const G2_LEN: usize = 96;

/// Big-endian hex of the scalar field order q.
pub const GROUP_ORDER_HEX: &str =
    "73eda753299d7d483339d80809a1d80553bda402fffe5bfeffffffff00000001";

const H2C_SUFFIX: &str = "_XMD:SHA-256_SSWU_RO_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupTag {
    G1,
    G2,
    Gt,
}

impl fmt::Display for GroupTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupTag::G1 => "G1",
            GroupTag::G2 => "G2",
            GroupTag::Gt => "GT",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GroupError {
    #[error("group mismatch: expected ({expected_a}, {expected_b}), got ({got_a}, {got_b})")]
    GroupMismatch {
        expected_a: GroupTag,
        expected_b: GroupTag,
        got_a: GroupTag,
        got_b: GroupTag,
    },
    #[error("hashing into {0} is not supported")]
    UnsupportedTarget(GroupTag),
    #[error("{0} elements have no persistent encoding")]
    NotSerializable(GroupTag),
    #[error("encoding for {group} must be {expected} bytes, got {got}")]
    Length {
        group: GroupTag,
        expected: usize,
        got: usize,
    },
    #[error("non-canonical or off-group {0} encoding")]
    InvalidEncoding(GroupTag),
}

/// A group element tagged with the group it lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupElement {
    G1(G1Affine),
    G2(G2Affine),
    Gt(Gt),
}

impl GroupElement {
    pub fn tag(&self) -> GroupTag {
        match self {
            GroupElement::G1(_) => GroupTag::G1,
            GroupElement::G2(_) => GroupTag::G2,
            GroupElement::Gt(_) => GroupTag::Gt,
        }
    }

    pub fn identity(tag: GroupTag) -> Self {
        match tag {
            GroupTag::G1 => GroupElement::G1(G1Affine::identity()),
            GroupTag::G2 => GroupElement::G2(G2Affine::identity()),
            GroupTag::Gt => GroupElement::Gt(Gt::identity()),
        }
    }

    pub fn generator(tag: GroupTag) -> Self {
        match tag {
            GroupTag::G1 => GroupElement::G1(G1Affine::generator()),
            GroupTag::G2 => GroupElement::G2(G2Affine::generator()),
            GroupTag::Gt => GroupElement::Gt(Gt::generator()),
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            GroupElement::G1(p) => bool::from(p.is_identity()),
            GroupElement::G2(p) => bool::from(p.is_identity()),
            GroupElement::Gt(p) => bool::from(p.is_identity()),
        }
    }

    pub fn mul(&self, s: &Scalar) -> Self {
        match self {
            GroupElement::G1(p) => GroupElement::G1((p * s).to_affine()),
            GroupElement::G2(p) => GroupElement::G2((p * s).to_affine()),
            GroupElement::Gt(p) => GroupElement::Gt(p * s),
        }
    }

    /// Group operation; fails if the operands live in different groups.
    pub fn add(&self, other: &Self) -> Result<Self, GroupError> {
        match (self, other) {
            (GroupElement::G1(a), GroupElement::G1(b)) => {
                Ok(GroupElement::G1((G1Projective::from(a) + b).to_affine()))
            }
            (GroupElement::G2(a), GroupElement::G2(b)) => {
                Ok(GroupElement::G2((G2Projective::from(a) + b).to_affine()))
            }
            (GroupElement::Gt(a), GroupElement::Gt(b)) => Ok(GroupElement::Gt(a + b)),
            (a, b) => Err(GroupError::GroupMismatch {
                expected_a: a.tag(),
                expected_b: a.tag(),
                got_a: a.tag(),
                got_b: b.tag(),
            }),
        }
    }

    pub fn encoded_len(tag: GroupTag) -> Option<usize> {
        match tag {
            GroupTag::G1 => Some(G1_LEN),
            GroupTag::G2 => Some(G2_LEN),
            GroupTag::Gt => None,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, GroupError> {
        match self {
            GroupElement::G1(p) => Ok(p.to_compressed().to_vec()),
            GroupElement::G2(p) => Ok(p.to_compressed().to_vec()),
            GroupElement::Gt(_) => Err(GroupError::NotSerializable(GroupTag::Gt)),
        }
    }

    pub fn from_bytes(tag: GroupTag, bytes: &[u8]) -> Result<Self, GroupError> {
        let expected = Self::encoded_len(tag).ok_or(GroupError::NotSerializable(tag))?;
        if bytes.len() != expected {
            return Err(GroupError::Length {
                group: tag,
                expected,
                got: bytes.len(),
            });
        }
        match tag {
            GroupTag::G1 => {
                let raw: [u8; G1_LEN] = bytes.try_into().expect("length checked");
                Option::from(G1Affine::from_compressed(&raw))
                    .map(GroupElement::G1)
                    .ok_or(GroupError::InvalidEncoding(tag))
            }
            GroupTag::G2 => {
                let raw: [u8; G2_LEN] = bytes.try_into().expect("length checked");
                Option::from(G2Affine::from_compressed(&raw))
                    .map(GroupElement::G2)
                    .ok_or(GroupError::InvalidEncoding(tag))
            }
            GroupTag::Gt => Err(GroupError::NotSerializable(tag)),
        }
    }
}

/// Fixed curve parameters. Obtain the shared instance with [`PairingContext::get`].
#[derive(Debug)]
pub struct PairingContext {
    pub curve_id: &'static str,
    pub g1: G1Affine,
    pub g2: G2Affine,
    pub order_hex: &'static str,
}

impl PairingContext {
    pub fn get() -> &'static PairingContext {
        static CTX: OnceLock<PairingContext> = OnceLock::new();
        CTX.get_or_init(|| PairingContext {
            curve_id: CURVE_ID,
            g1: G1Affine::generator(),
            g2: G2Affine::generator(),
            order_hex: GROUP_ORDER_HEX,
        })
    }
}

pub fn scalar_random<R: RngCore + CryptoRng>(rng: &mut R) -> Scalar {
    Scalar::random(rng)
}

/// Random nonzero scalar, for blinding factors that must not vanish.
pub fn scalar_random_nonzero<R: RngCore + CryptoRng>(rng: &mut R) -> Scalar {
    loop {
        let s = Scalar::random(&mut *rng);
        if !bool::from(s.is_zero()) {
            return s;
        }
    }
}

pub fn scalar_to_bytes(s: &Scalar) -> [u8; SCALAR_LEN] {
    let mut out = s.to_bytes();
    out.reverse();
    out
}

/// Parses a big-endian scalar, rejecting values ≥ q.
pub fn scalar_from_bytes(bytes: &[u8; SCALAR_LEN]) -> Option<Scalar> {
    let mut le = *bytes;
    le.reverse();
    Option::from(Scalar::from_bytes(&le))
}

pub fn scalar_from_u64(v: u64) -> Scalar {
    Scalar::from(v)
}

fn dst(domain_tag: &[u8], suffix: &str) -> Vec<u8> {
    let mut out = b"OPENPUB-V1-".to_vec();
    out.extend_from_slice(domain_tag);
    out.extend_from_slice(suffix.as_bytes());
    out
}

pub fn hash_to_scalar(domain_tag: &[u8], message: &[u8]) -> Scalar {
    let mut out = [Scalar::zero()];
    <Scalar as HashToField>::hash_to_field::<ExpandMsgXmd<sha2_09::Sha256>>(
        message,
        &dst(domain_tag, "_XMD:SHA-256_FIELD_"),
        &mut out,
    );
    out[0]
}

pub fn hash_to_g1(domain_tag: &[u8], message: &[u8]) -> G1Projective {
    <G1Projective as HashToCurve<ExpandMsgXmd<sha2_09::Sha256>>>::hash_to_curve(
        message,
        &dst(domain_tag, &format!("_BLS12381G1{H2C_SUFFIX}")),
    )
}

pub fn hash_to_g2(domain_tag: &[u8], message: &[u8]) -> G2Projective {
    <G2Projective as HashToCurve<ExpandMsgXmd<sha2_09::Sha256>>>::hash_to_curve(
        message,
        &dst(domain_tag, &format!("_BLS12381G2{H2C_SUFFIX}")),
    )
}

pub fn hash_to_group(
    domain_tag: &[u8],
    message: &[u8],
    target: GroupTag,
) -> Result<GroupElement, GroupError> {
    match target {
        GroupTag::G1 => Ok(GroupElement::G1(hash_to_g1(domain_tag, message).to_affine())),
        GroupTag::G2 => Ok(GroupElement::G2(hash_to_g2(domain_tag, message).to_affine())),
        GroupTag::Gt => Err(GroupError::UnsupportedTarget(GroupTag::Gt)),
    }
}

pub fn pairing(a: &GroupElement, b: &GroupElement) -> Result<GroupElement, GroupError> {
    match (a, b) {
        (GroupElement::G1(p), GroupElement::G2(q)) => Ok(GroupElement::Gt(bls12_381::pairing(p, q))),
        _ => Err(GroupError::GroupMismatch {
            expected_a: GroupTag::G1,
            expected_b: GroupTag::G2,
            got_a: a.tag(),
            got_b: b.tag(),
        }),
    }
}

/// Checks `∏ e(a_i, b_i) = 1` with one shared final exponentiation.
pub fn pairing_product_is_identity(terms: &[(G1Affine, G2Affine)]) -> bool {
    let prepared: Vec<(G1Affine, G2Prepared)> = terms
        .iter()
        .map(|(a, b)| (*a, G2Prepared::from(*b)))
        .collect();
    let refs: Vec<(&G1Affine, &G2Prepared)> = prepared.iter().map(|(a, b)| (a, b)).collect();
    bool::from(
        bls12_381::multi_miller_loop(&refs)
            .final_exponentiation()
            .is_identity(),
    )
}

/// Double-and-add by a small integer. Much cheaper than a full 255-bit
/// multiplication when evaluating commitment polynomials at share indices.
pub fn mul_small<G: Group>(p: G, k: u64) -> G {
    let mut acc = G::identity();
    for bit in (0..64 - k.leading_zeros()).rev() {
        acc = acc.double();
        if (k >> bit) & 1 == 1 {
            acc += p;
        }
    }
    acc
}

/// Multi-scalar multiplication by plain summation. The point counts here are
/// small (at most a few dozen), so a windowed algorithm buys little.
/// Variable-time in the scalar; only for public scalars.
pub fn mul_vartime<G: WnafGroup<Scalar = Scalar>>(p: G, s: &Scalar) -> G {
    Wnaf::new().scalar(s).base(p)
}

/// `Σ s_i·P_i` with public scalars (Lagrange coefficients, challenges).
pub fn msm<G: WnafGroup<Scalar = Scalar>>(points: &[G], scalars: &[Scalar]) -> G {
    let mut wnaf = Wnaf::new();
    points
        .iter()
        .zip(scalars)
        .fold(G::identity(), |acc, (p, s)| acc + wnaf.scalar(s).base(*p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn scalar_random_is_seed_deterministic() {
        let a = scalar_random(&mut ChaCha20Rng::seed_from_u64(7));
        let b = scalar_random(&mut ChaCha20Rng::seed_from_u64(7));
        assert_eq!(a, b);
        let c = scalar_random(&mut ChaCha20Rng::seed_from_u64(8));
        assert_ne!(a, c);
    }

    #[test]
    fn scalar_encoding_is_big_endian() {
        let one = scalar_to_bytes(&Scalar::one());
        assert_eq!(one[31], 1);
        assert!(one[..31].iter().all(|b| *b == 0));
        assert_eq!(hex::encode(scalar_to_bytes(&-Scalar::one())), {
            // q - 1
            let mut s = GROUP_ORDER_HEX.to_string();
            s.replace_range(63..64, "0");
            s
        });
    }

    #[test]
    fn scalar_decoding_rejects_q() {
        let q: [u8; 32] = hex::decode(GROUP_ORDER_HEX).unwrap().try_into().unwrap();
        assert!(scalar_from_bytes(&q).is_none());
        assert!(scalar_from_bytes(&[0xff; 32]).is_none());
    }

    #[test]
    fn pairing_is_non_degenerate_and_bilinear() {
        let g1 = GroupElement::generator(GroupTag::G1);
        let g2 = GroupElement::generator(GroupTag::G2);
        let base = pairing(&g1, &g2).unwrap();
        assert!(!base.is_identity());

        let two = g1.mul(&Scalar::from(2u64));
        let three = g2.mul(&Scalar::from(3u64));
        assert_eq!(
            pairing(&two, &three).unwrap(),
            base.mul(&Scalar::from(6u64))
        );
        assert!(pairing(&GroupElement::identity(GroupTag::G1), &g2)
            .unwrap()
            .is_identity());
    }

    #[test]
    fn pairing_rejects_wrong_groups() {
        let g1 = GroupElement::generator(GroupTag::G1);
        let g2 = GroupElement::generator(GroupTag::G2);
        assert!(matches!(
            pairing(&g2, &g1),
            Err(GroupError::GroupMismatch { .. })
        ));
        assert!(pairing(&g1, &g1).is_err());
    }

    #[test]
    fn hash_to_scalar_separates_domains() {
        assert_eq!(hash_to_scalar(b"grp", b"x"), hash_to_scalar(b"grp", b"x"));
        assert_ne!(hash_to_scalar(b"grp", b"x"), hash_to_scalar(b"usr", b"x"));
    }

    #[test]
    fn hash_to_gt_is_unsupported() {
        assert_eq!(
            hash_to_group(b"t", b"m", GroupTag::Gt),
            Err(GroupError::UnsupportedTarget(GroupTag::Gt))
        );
    }

    #[test]
    fn identity_round_trips_and_gt_is_not_serializable() {
        for tag in [GroupTag::G1, GroupTag::G2] {
            let id = GroupElement::identity(tag);
            let bytes = id.to_bytes().unwrap();
            assert_eq!(GroupElement::from_bytes(tag, &bytes).unwrap(), id);
        }
        assert!(GroupElement::identity(GroupTag::Gt).to_bytes().is_err());
    }

    #[test]
    fn off_curve_encoding_is_rejected() {
        let mut bytes = G1Affine::generator().to_compressed();
        bytes[47] ^= 1;
        assert!(GroupElement::from_bytes(GroupTag::G1, &bytes).is_err());
        assert!(matches!(
            GroupElement::from_bytes(GroupTag::G2, &bytes),
            Err(GroupError::Length { .. })
        ));
    }

    #[test]
    fn mul_small_matches_scalar_mul() {
        let g = G1Projective::generator();
        for k in [0u64, 1, 2, 3, 17, 52, 1 << 40] {
            assert_eq!(mul_small(g, k), g * Scalar::from(k));
        }
    }

    #[test]
    fn pairing_product_check() {
        let a = Scalar::from(5u64);
        let lhs = (G1Affine::from(G1Affine::generator() * a), G2Affine::generator());
        let rhs = (-G1Affine::generator(), G2Affine::from(G2Affine::generator() * a));
        assert!(pairing_product_is_identity(&[lhs, rhs]));
        assert!(!pairing_product_is_identity(&[lhs, (rhs.0, G2Affine::generator())]));
    }
}
