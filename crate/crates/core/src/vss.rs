//! Dealerless (k, n) verifiable secret sharing.
//!
//! Every participant deals a random polynomial of degree k−1 together with
//! Feldman commitments `g1^{a_j}` to its coefficients. A recipient checks its
//! sub-share `s` against `g1^s = Π C_j^{i^j}`. The final share of participant
//! `i` is the sum of the sub-shares addressed to it by all qualified dealers,
//! and the joint secret is the sum of the dealers' constant terms.
//!
//! Single-generator commitments reveal `g1^{secret}`. Every secret shared
//! here is published in the exponent anyway (it becomes a public key), so
//! the hiding property of two-generator commitments buys nothing.

use std::collections::BTreeSet;
use std::fmt;

use group::{Curve, Group};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use crate::codec::{CodecError, Reader, Writer};
use crate::pairing::{self, G1Affine, G1Projective, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VssError {
    #[error("invalid threshold parameters k={k}, n={n}: need 1 <= k <= n")]
    InvalidParams { k: u32, n: u32 },
    #[error("share index {0} out of range")]
    IndexOutOfRange(u32),
    #[error("insufficient shares: need {need}, got {got}")]
    InsufficientShares { need: usize, got: usize },
    #[error("duplicate share index {0}")]
    DuplicateIndex(ShareIndex),
    #[error("index {0} is not in the interpolation subset")]
    IndexNotInSubset(ShareIndex),
    #[error("dealing from {0} failed verification")]
    UnverifiedDealing(ShareIndex),
    #[error("only {qualified} qualified dealers remain, need {need}")]
    TooFewQualifiedDealers { qualified: usize, need: usize },
    #[error("dealing has {got} commitments, expected {expected}")]
    MalformedDealing { expected: usize, got: usize },
}

/// Participant index in `1..=n`. Index 0 is reserved for the secret itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct ShareIndex(u32);

impl ShareIndex {
    pub fn new(i: u32) -> Result<Self, VssError> {
        if i == 0 {
            Err(VssError::IndexOutOfRange(0))
        } else {
            Ok(Self(i))
        }
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn to_scalar(self) -> Scalar {
        Scalar::from(u64::from(self.0))
    }

    pub fn all(n: u32) -> impl Iterator<Item = ShareIndex> {
        (1..=n).map(ShareIndex)
    }

    pub(crate) fn encode(self, w: &mut Writer) {
        w.put_u32(self.0);
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Self::new(r.get_u32()?).map_err(|_| CodecError::InvalidValue("share index 0"))
    }
}

impl TryFrom<u32> for ShareIndex {
    type Error = VssError;
    fn try_from(i: u32) -> Result<Self, VssError> {
        Self::new(i)
    }
}

impl From<ShareIndex> for u32 {
    fn from(i: ShareIndex) -> u32 {
        i.0
    }
}

impl fmt::Display for ShareIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Threshold `k` out of `n` participants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Params {
    pub k: u32,
    pub n: u32,
}

impl Params {
    pub fn new(k: u32, n: u32) -> Result<Self, VssError> {
        if k == 0 || k > n {
            return Err(VssError::InvalidParams { k, n });
        }
        Ok(Self { k, n })
    }

    /// The `(2f+1, 3f+1)` configuration matching a PBFT validator set.
    pub fn for_faults(f: u32) -> Self {
        Self {
            k: 2 * f + 1,
            n: 3 * f + 1,
        }
    }

    pub fn check_index(&self, i: ShareIndex) -> Result<(), VssError> {
        if i.0 > self.n {
            Err(VssError::IndexOutOfRange(i.0))
        } else {
            Ok(())
        }
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.put_u32(self.k).put_u32(self.n);
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let (k, n) = (r.get_u32()?, r.get_u32()?);
        Self::new(k, n).map_err(|_| CodecError::InvalidValue("threshold parameters"))
    }
}

impl fmt::Display for Params {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.k, self.n)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polynomial {
    coeffs: Vec<Scalar>,
}

impl Polynomial {
    pub fn from_coefficients(coeffs: Vec<Scalar>) -> Self {
        assert!(!coeffs.is_empty(), "polynomial needs a constant term");
        Self { coeffs }
    }

    /// Random polynomial of the given degree with `f(0) = secret`.
    pub fn random<R: RngCore + CryptoRng>(secret: Scalar, degree: usize, rng: &mut R) -> Self {
        let mut coeffs = Vec::with_capacity(degree + 1);
        coeffs.push(secret);
        coeffs.extend((0..degree).map(|_| pairing::scalar_random(rng)));
        Self { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coefficients(&self) -> &[Scalar] {
        &self.coeffs
    }

    pub fn evaluate(&self, x: &Scalar) -> Scalar {
        self.coeffs
            .iter()
            .rev()
            .fold(Scalar::zero(), |acc, c| acc * x + c)
    }

    pub fn commit(&self) -> Vec<G1Affine> {
        let g = G1Projective::generator();
        let points: Vec<G1Projective> = self.coeffs.iter().map(|c| g * c).collect();
        let mut out = vec![G1Affine::identity(); points.len()];
        G1Projective::batch_normalize(&points, &mut out);
        out
    }
}

/// Evaluates a committed polynomial in the exponent at a small integer
/// point using Horner's rule with small-integer multiplications.
pub fn eval_commitments<G: Group>(commitments: &[G], x: u32) -> G {
    commitments
        .iter()
        .rev()
        .fold(G::identity(), |acc, c| pairing::mul_small(acc, u64::from(x)) + c)
}

/// One participant's contribution: commitments to its polynomial and the
/// sub-share for every recipient (index `j` at position `j-1`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dealing {
    pub dealer: ShareIndex,
    pub commitments: Vec<G1Affine>,
    pub sub_shares: Vec<Scalar>,
}

impl Dealing {
    pub fn sub_share(&self, recipient: ShareIndex) -> Option<Scalar> {
        self.sub_shares.get(recipient.0 as usize - 1).copied()
    }

    /// `g1^{f(j)}` computed from the commitments alone.
    pub fn public_share(&self, j: ShareIndex) -> G1Projective {
        let points: Vec<G1Projective> = self.commitments.iter().map(G1Projective::from).collect();
        eval_commitments(&points, j.0)
    }

    pub fn encode(&self, w: &mut Writer) {
        self.dealer.encode(w);
        w.put_u32(self.commitments.len() as u32);
        for c in &self.commitments {
            w.put_g1(c);
        }
        w.put_u32(self.sub_shares.len() as u32);
        for s in &self.sub_shares {
            w.put_scalar(s);
        }
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let dealer = ShareIndex::decode(r)?;
        let nc = r.get_count(pairing::G1_LEN)?;
        let commitments = (0..nc).map(|_| r.get_g1()).collect::<Result<_, _>>()?;
        let ns = r.get_count(pairing::SCALAR_LEN)?;
        let sub_shares = (0..ns).map(|_| r.get_scalar()).collect::<Result<_, _>>()?;
        Ok(Self {
            dealer,
            commitments,
            sub_shares,
        })
    }
}

/// Deals `secret` with a fresh random polynomial of degree k−1.
pub fn deal<R: RngCore + CryptoRng>(
    params: Params,
    dealer: ShareIndex,
    secret: Scalar,
    rng: &mut R,
) -> Result<Dealing, VssError> {
    let params = Params::new(params.k, params.n)?;
    let poly = Polynomial::random(secret, params.k as usize - 1, rng);
    deal_polynomial(params, dealer, &poly)
}

/// Deals a caller-chosen polynomial. The degree must be exactly k−1.
pub fn deal_polynomial(
    params: Params,
    dealer: ShareIndex,
    poly: &Polynomial,
) -> Result<Dealing, VssError> {
    let params = Params::new(params.k, params.n)?;
    params.check_index(dealer)?;
    if poly.coeffs.len() != params.k as usize {
        return Err(VssError::MalformedDealing {
            expected: params.k as usize,
            got: poly.coeffs.len(),
        });
    }
    let sub_shares = ShareIndex::all(params.n)
        .map(|j| poly.evaluate(&j.to_scalar()))
        .collect();
    Ok(Dealing {
        dealer,
        commitments: poly.commit(),
        sub_shares,
    })
}

pub fn verify_share(dealing: &Dealing, recipient: ShareIndex, sub_share: &Scalar) -> bool {
    if recipient.0 as usize > dealing.sub_shares.len() || dealing.commitments.is_empty() {
        return false;
    }
    G1Projective::generator() * sub_share == dealing.public_share(recipient)
}

/// Sums the sub-shares addressed to `me`. All-or-nothing: any dealing that
/// fails verification for `me` aborts.
pub fn aggregate_shares(dealings: &[Dealing], me: ShareIndex) -> Result<Scalar, VssError> {
    let mut acc = Scalar::zero();
    for d in dealings {
        let s = d
            .sub_share(me)
            .ok_or(VssError::UnverifiedDealing(d.dealer))?;
        if !verify_share(d, me, &s) {
            return Err(VssError::UnverifiedDealing(d.dealer));
        }
        acc += s;
    }
    Ok(acc)
}

fn check_distinct(indices: impl IntoIterator<Item = ShareIndex>) -> Result<(), VssError> {
    let mut seen = BTreeSet::new();
    for i in indices {
        if !seen.insert(i) {
            return Err(VssError::DuplicateIndex(i));
        }
    }
    Ok(())
}

/// `λ_i = Π_{j≠i} (x − j) / (i − j)` over `subset`, evaluated at `x`.
pub fn lagrange_coefficient(
    subset: &[ShareIndex],
    i: ShareIndex,
    eval_point: &Scalar,
) -> Result<Scalar, VssError> {
    check_distinct(subset.iter().copied())?;
    if !subset.contains(&i) {
        return Err(VssError::IndexNotInSubset(i));
    }
    let xi = i.to_scalar();
    let mut num = Scalar::one();
    let mut den = Scalar::one();
    for j in subset.iter().filter(|j| **j != i) {
        let xj = j.to_scalar();
        num *= eval_point - xj;
        den *= xi - xj;
    }
    // Distinct indices make the denominator nonzero.
    Ok(num * den.invert().unwrap())
}

/// All Lagrange coefficients at zero for a subset, sharing one inversion
/// per coefficient.
pub fn lagrange_at_zero(subset: &[ShareIndex]) -> Result<Vec<Scalar>, VssError> {
    subset
        .iter()
        .map(|i| lagrange_coefficient(subset, *i, &Scalar::zero()))
        .collect()
}

/// Interpolates scalar shares at zero.
pub fn reconstruct(params: Params, shares: &[(ShareIndex, Scalar)]) -> Result<Scalar, VssError> {
    check_distinct(shares.iter().map(|(i, _)| *i))?;
    for (i, _) in shares {
        params.check_index(*i)?;
    }
    if shares.len() < params.k as usize {
        return Err(VssError::InsufficientShares {
            need: params.k as usize,
            got: shares.len(),
        });
    }
    let subset: Vec<ShareIndex> = shares.iter().map(|(i, _)| *i).collect();
    let lambdas = lagrange_at_zero(&subset)?;
    Ok(shares
        .iter()
        .zip(&lambdas)
        .fold(Scalar::zero(), |acc, ((_, s), l)| acc + s * l))
}

/// Interpolates group-element shares at zero using exactly the `k` lowest
/// indices, so the result is independent of which superset was supplied.
pub fn combine_in_exponent<G: group::WnafGroup<Scalar = Scalar>>(
    params: Params,
    shares: &[(ShareIndex, G)],
) -> Result<G, VssError> {
    check_distinct(shares.iter().map(|(i, _)| *i))?;
    for (i, _) in shares {
        params.check_index(*i)?;
    }
    let k = params.k as usize;
    if shares.len() < k {
        return Err(VssError::InsufficientShares {
            need: k,
            got: shares.len(),
        });
    }
    let mut chosen: Vec<&(ShareIndex, G)> = shares.iter().collect();
    chosen.sort_by_key(|(i, _)| *i);
    chosen.truncate(k);
    let subset: Vec<ShareIndex> = chosen.iter().map(|(i, _)| *i).collect();
    let lambdas = lagrange_at_zero(&subset)?;
    let points: Vec<G> = chosen.iter().map(|(_, p)| *p).collect();
    Ok(pairing::msm(&points, &lambdas))
}

/// Outcome of a full dealerless sharing among `n` simulated participants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VssTranscript {
    pub params: Params,
    pub dealings: Vec<Dealing>,
    /// Dealers excluded after a recipient's verification failed.
    pub disqualified: Vec<ShareIndex>,
    /// `(i, s_i)` for every participant, summed over qualified dealers.
    pub final_shares: Vec<(ShareIndex, Scalar)>,
    /// Coefficient-wise sum of qualified dealers' commitments.
    pub joint_commitments: Vec<G1Affine>,
}

impl VssTranscript {
    /// `g1^{secret}`.
    pub fn public_key(&self) -> G1Affine {
        self.joint_commitments[0]
    }

    /// `g1^{s_i}`, derivable by anyone from the transcript.
    pub fn public_share(&self, i: ShareIndex) -> G1Affine {
        let points: Vec<G1Projective> = self
            .joint_commitments
            .iter()
            .map(G1Projective::from)
            .collect();
        eval_commitments(&points, i.0).to_affine()
    }

    pub fn share(&self, i: ShareIndex) -> Option<Scalar> {
        self.final_shares
            .iter()
            .find(|(j, _)| *j == i)
            .map(|(_, s)| *s)
    }

    pub fn qualified(&self) -> impl Iterator<Item = &Dealing> {
        self.dealings
            .iter()
            .filter(|d| !self.disqualified.contains(&d.dealer))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_domain("openpub/vss-transcript");
        self.params.encode(&mut w);
        w.put_u32(self.dealings.len() as u32);
        for d in &self.dealings {
            d.encode(&mut w);
        }
        w.put_u32(self.disqualified.len() as u32);
        for i in &self.disqualified {
            i.encode(&mut w);
        }
        w.put_u32(self.final_shares.len() as u32);
        for (i, s) in &self.final_shares {
            i.encode(&mut w);
            w.put_scalar(s);
        }
        w.put_u32(self.joint_commitments.len() as u32);
        for c in &self.joint_commitments {
            w.put_g1(c);
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        if r.get_string()? != "openpub/vss-transcript" {
            return Err(CodecError::InvalidValue("transcript domain"));
        }
        let params = Params::decode(&mut r)?;
        let nd = r.get_count(4)?;
        let dealings = (0..nd)
            .map(|_| Dealing::decode(&mut r))
            .collect::<Result<_, _>>()?;
        let nq = r.get_count(4)?;
        let disqualified = (0..nq)
            .map(|_| ShareIndex::decode(&mut r))
            .collect::<Result<_, _>>()?;
        let nf = r.get_count(4 + pairing::SCALAR_LEN)?;
        let final_shares = (0..nf)
            .map(|_| Ok((ShareIndex::decode(&mut r)?, r.get_scalar()?)))
            .collect::<Result<_, CodecError>>()?;
        let nc = r.get_count(pairing::G1_LEN)?;
        let joint_commitments = (0..nc).map(|_| r.get_g1()).collect::<Result<_, _>>()?;
        r.finish()?;
        Ok(Self {
            params,
            dealings,
            disqualified,
            final_shares,
            joint_commitments,
        })
    }
}

/// Dealerless sharing with an optional set of misbehaving dealers, whose
/// dealings carry one corrupted sub-share.
#[derive(Debug, Clone)]
pub struct DealerlessRun {
    params: Params,
    faulty: BTreeSet<ShareIndex>,
}

impl DealerlessRun {
    pub fn new(params: Params) -> Result<Self, VssError> {
        Ok(Self {
            params: Params::new(params.k, params.n)?,
            faulty: BTreeSet::new(),
        })
    }

    pub fn with_faulty(mut self, dealers: impl IntoIterator<Item = ShareIndex>) -> Self {
        self.faulty.extend(dealers);
        self
    }

    pub fn run<R: RngCore + CryptoRng>(&self, rng: &mut R) -> Result<VssTranscript, VssError> {
        let mut dealings = Vec::with_capacity(self.params.n as usize);
        for dealer in ShareIndex::all(self.params.n) {
            let secret = pairing::scalar_random(rng);
            let mut d = deal(self.params, dealer, secret, rng)?;
            if self.faulty.contains(&dealer) {
                let victim = (rng.next_u32() % self.params.n) as usize;
                d.sub_shares[victim] += Scalar::one();
            }
            dealings.push(d);
        }
        finish_sharing(self.params, dealings)
    }
}

/// Runs the complaint round over a full set of dealings and aggregates the
/// qualified ones. Every recipient checks every dealing, its own included; a
/// dealing that fails for any recipient is excluded for everyone.
pub fn finish_sharing(params: Params, dealings: Vec<Dealing>) -> Result<VssTranscript, VssError> {
    let mut disqualified = Vec::new();
    for d in &dealings {
        let well_formed = d.commitments.len() == params.k as usize
            && d.sub_shares.len() == params.n as usize;
        let ok = well_formed
            && ShareIndex::all(params.n).all(|j| verify_share(d, j, &d.sub_shares[j.0 as usize - 1]));
        if !ok {
            disqualified.push(d.dealer);
        }
    }
    let qualified: Vec<&Dealing> = dealings
        .iter()
        .filter(|d| !disqualified.contains(&d.dealer))
        .collect();
    if qualified.len() < params.k as usize {
        return Err(VssError::TooFewQualifiedDealers {
            qualified: qualified.len(),
            need: params.k as usize,
        });
    }
    let final_shares = ShareIndex::all(params.n)
        .map(|i| {
            let s = qualified
                .iter()
                .fold(Scalar::zero(), |acc, d| acc + d.sub_shares[i.0 as usize - 1]);
            (i, s)
        })
        .collect();
    let mut joint = vec![G1Projective::identity(); params.k as usize];
    for d in &qualified {
        for (acc, c) in joint.iter_mut().zip(&d.commitments) {
            *acc += c;
        }
    }
    let mut joint_commitments = vec![G1Affine::identity(); joint.len()];
    G1Projective::batch_normalize(&joint, &mut joint_commitments);
    Ok(VssTranscript {
        params,
        dealings,
        disqualified,
        final_shares,
        joint_commitments,
    })
}
