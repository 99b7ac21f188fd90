//! Empirical anonymity and traceability experiments.
//!
//! These are test harnesses, not proofs: they run concrete adversaries
//! against the oracles of the formal experiments and measure how often they
//! win. Setup runs once per experiment and is shared across trials; the
//! oracle restrictions are enforced per trial.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use group::Curve;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use super::*;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GameError {
    #[error("oracle violation: {0}")]
    OracleViolation(String),
    #[error(transparent)]
    Tibgs(#[from] TibgsError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameOutcome {
    pub trials: usize,
    pub wins: usize,
    /// `|wins/trials − 1/2|` for anonymity, `wins/trials` for traceability.
    pub score: f64,
}

/// Half-width of the 95% normal-approximation interval around 1/2 for a
/// fair coin over `trials` flips.
pub fn coin_flip_bound(trials: usize) -> f64 {
    1.96 * (0.25 / trials as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnonymityChallenge {
    pub grp_id: String,
    pub user0: String,
    pub user1: String,
    pub message: Vec<u8>,
}

/// Oracle access for the anonymity experiment.
pub struct AnonymityOracles<'a> {
    master: &'a MasterKey,
    gsks: HashMap<(String, ShareIndex), GroupKeyShare>,
    user_keys: HashMap<(String, String), UserGroupKey>,
    revealed: BTreeMap<String, BTreeSet<ShareIndex>>,
    challenge: Option<(String, GroupSignature)>,
    opened_on_challenge: BTreeSet<ShareIndex>,
}

impl<'a> AnonymityOracles<'a> {
    fn new(master: &'a MasterKey) -> Self {
        Self {
            master,
            gsks: HashMap::new(),
            user_keys: HashMap::new(),
            revealed: BTreeMap::new(),
            challenge: None,
            opened_on_challenge: BTreeSet::new(),
        }
    }

    fn reset_trial(&mut self) {
        self.revealed.clear();
        self.challenge = None;
        self.opened_on_challenge.clear();
    }

    pub fn mpk(&self) -> &MasterPublicKey {
        &self.master.mpk
    }

    pub fn params(&self) -> Params {
        self.master.params
    }

    pub fn gvks(&self, grp_id: &str) -> GroupVerifyKeys {
        GroupVerifyKeys::derive(&self.master.mpk, grp_id)
    }

    fn gsk(&mut self, grp_id: &str, i: ShareIndex) -> Result<GroupKeyShare, GameError> {
        if let Some(g) = self.gsks.get(&(grp_id.to_owned(), i)) {
            return Ok(g.clone());
        }
        let msk = self
            .master
            .share(i)
            .ok_or(TibgsError::UnknownManager(i))?;
        let g = grp_setup(grp_id, i, msk, self.master.params)?;
        self.gsks.insert((grp_id.to_owned(), i), g.clone());
        Ok(g)
    }

    fn exposure(&self, grp_id: &str) -> usize {
        let mut set = self.revealed.get(grp_id).cloned().unwrap_or_default();
        if matches!(&self.challenge, Some((g, _)) if g == grp_id) {
            set.extend(self.opened_on_challenge.iter().copied());
        }
        set.len()
    }

    fn check_exposure(&self, grp_id: &str) -> Result<(), GameError> {
        let k = self.master.params.k as usize;
        let exposed = self.exposure(grp_id);
        if exposed >= k {
            return Err(GameError::OracleViolation(format!(
                "{exposed} managers of the challenge group exposed, threshold is {k}"
            )));
        }
        Ok(())
    }

    fn is_challenge_group(&self, grp_id: &str) -> bool {
        matches!(&self.challenge, Some((g, _)) if g == grp_id)
    }

    /// Reveals `gsk_i` for a group.
    pub fn grp_setup(&mut self, grp_id: &str, i: ShareIndex) -> Result<GroupKeyShare, GameError> {
        let g = self.gsk(grp_id, i)?;
        self.revealed.entry(grp_id.to_owned()).or_default().insert(i);
        if self.is_challenge_group(grp_id) {
            self.check_exposure(grp_id)?;
        }
        Ok(g)
    }

    pub fn ext_share(
        &mut self,
        grp_id: &str,
        i: ShareIndex,
        user_id: &str,
    ) -> Result<UserKeyShare, GameError> {
        Ok(ext_share(user_id, &self.gsk(grp_id, i)?))
    }

    /// Returns `None` (⊥) for signatures that do not verify.
    pub fn open_part(
        &mut self,
        grp_id: &str,
        i: ShareIndex,
        sig: &GroupSignature,
        message: &[u8],
    ) -> Result<Option<OpenShare>, GameError> {
        let gsk = self.gsk(grp_id, i)?;
        let gpk = self.master.mpk.group_public_key(grp_id);
        let share = match open_part(&gsk, sig, message, &gpk) {
            Ok(s) => s,
            Err(_) => return Ok(None),
        };
        if matches!(&self.challenge, Some((g, s)) if g == grp_id && s == sig) {
            self.opened_on_challenge.insert(i);
            self.check_exposure(grp_id)?;
        }
        Ok(Some(share))
    }

    fn user_key(&mut self, grp_id: &str, user_id: &str) -> Result<UserGroupKey, GameError> {
        if let Some(k) = self.user_keys.get(&(grp_id.to_owned(), user_id.to_owned())) {
            return Ok(k.clone());
        }
        let params = self.master.params;
        let shares = ShareIndex::all(params.k)
            .map(|i| Ok(ext_share(user_id, &self.gsk(grp_id, i)?)))
            .collect::<Result<Vec<_>, GameError>>()?;
        let gvks = self.gvks(grp_id);
        let key = reconst_key(user_id, &shares, &gvks, params)?.key;
        self.user_keys
            .insert((grp_id.to_owned(), user_id.to_owned()), key.clone());
        Ok(key)
    }
}

pub trait AnonymityAdversary {
    fn name(&self) -> &'static str;

    fn choose(
        &mut self,
        oracles: &mut AnonymityOracles<'_>,
        rng: &mut ChaCha20Rng,
    ) -> Result<AnonymityChallenge, GameError>;

    /// Returns the guessed bit: `false` for `user0`, `true` for `user1`.
    fn guess(
        &mut self,
        oracles: &mut AnonymityOracles<'_>,
        challenge: &AnonymityChallenge,
        sig: &GroupSignature,
        rng: &mut ChaCha20Rng,
    ) -> Result<bool, GameError>;
}

/// Runs setup and then the anonymity experiment.
pub fn anonymity_game(
    params: Params,
    trials: usize,
    adversary: &mut dyn AnonymityAdversary,
    rng: &mut ChaCha20Rng,
) -> Result<GameOutcome, GameError> {
    let master = setup(params, rng)?;
    anonymity_game_with(&master, trials, adversary, rng)
}

pub fn anonymity_game_with(
    master: &MasterKey,
    trials: usize,
    adversary: &mut dyn AnonymityAdversary,
    rng: &mut ChaCha20Rng,
) -> Result<GameOutcome, GameError> {
    let mut oracles = AnonymityOracles::new(master);
    let mut wins = 0;
    for _ in 0..trials {
        oracles.reset_trial();
        let ch = adversary.choose(&mut oracles, rng)?;
        if ch.user0 == ch.user1 {
            return Err(GameError::OracleViolation(
                "challenge users must differ".into(),
            ));
        }
        oracles.challenge = Some((ch.grp_id.clone(), GroupSignature::placeholder()));
        oracles.check_exposure(&ch.grp_id)?;
        let b: bool = rng.gen();
        let signer = if b { &ch.user1 } else { &ch.user0 };
        let key = oracles.user_key(&ch.grp_id, signer)?;
        let sig = sign(&ch.message, &key, rng);
        oracles.challenge = Some((ch.grp_id.clone(), sig));
        if adversary.guess(&mut oracles, &ch, &sig, rng)? == b {
            wins += 1;
        }
    }
    Ok(GameOutcome {
        trials,
        wins,
        score: (wins as f64 / trials.max(1) as f64 - 0.5).abs(),
    })
}

fn default_challenge(trial_tag: u64) -> AnonymityChallenge {
    AnonymityChallenge {
        grp_id: "venue".into(),
        user0: "alice@example.org".into(),
        user1: "bob@example.org".into(),
        message: format!("paper-{trial_tag}").into_bytes(),
    }
}

/// Guesses uniformly at random.
#[derive(Debug, Default)]
pub struct RandomGuess;

impl AnonymityAdversary for RandomGuess {
    fn name(&self) -> &'static str {
        "random-guess"
    }

    fn choose(
        &mut self,
        _: &mut AnonymityOracles<'_>,
        rng: &mut ChaCha20Rng,
    ) -> Result<AnonymityChallenge, GameError> {
        Ok(default_challenge(rng.next_u64()))
    }

    fn guess(
        &mut self,
        _: &mut AnonymityOracles<'_>,
        _: &AnonymityChallenge,
        _: &GroupSignature,
        rng: &mut ChaCha20Rng,
    ) -> Result<bool, GameError> {
        Ok(rng.gen())
    }
}

/// Searches the signature bytes for anything derived from either identity,
/// then falls back to a hash-parity guess.
#[derive(Debug, Default)]
pub struct ByteInspection;

fn identity_fingerprints(grp_id: &str, user_id: &str) -> Vec<Vec<u8>> {
    let mut out = vec![
        pairing::scalar_to_bytes(&identity_scalar(grp_id, user_id)).to_vec(),
        identity_commitment(grp_id, user_id).to_compressed().to_vec(),
        identity_base(grp_id, user_id).to_compressed().to_vec(),
        user_id.as_bytes().to_vec(),
    ];
    out.push(Sha256::digest(user_id.as_bytes()).to_vec());
    out
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    needle.len() <= haystack.len() && haystack.windows(needle.len()).any(|w| w == needle)
}

impl AnonymityAdversary for ByteInspection {
    fn name(&self) -> &'static str {
        "byte-inspection"
    }

    fn choose(
        &mut self,
        _: &mut AnonymityOracles<'_>,
        rng: &mut ChaCha20Rng,
    ) -> Result<AnonymityChallenge, GameError> {
        Ok(default_challenge(rng.next_u64()))
    }

    fn guess(
        &mut self,
        _: &mut AnonymityOracles<'_>,
        ch: &AnonymityChallenge,
        sig: &GroupSignature,
        _: &mut ChaCha20Rng,
    ) -> Result<bool, GameError> {
        let bytes = sig.to_bytes();
        let hit = |uid: &str| {
            identity_fingerprints(&ch.grp_id, uid)
                .iter()
                .any(|f| contains(&bytes, f))
        };
        if hit(&ch.user1) {
            return Ok(true);
        }
        if hit(&ch.user0) {
            return Ok(false);
        }
        let mut h = Sha256::new();
        h.update(&bytes);
        h.update(ch.user0.as_bytes());
        Ok(h.finalize()[0] & 1 == 1)
    }
}

/// Obtains both candidates' full user keys through ExtShare and tests the
/// pairing relations that would link a non-randomized signature to its
/// certificate.
#[derive(Debug, Default)]
pub struct PairingLinkage {
    keys: Option<(UserGroupKey, UserGroupKey)>,
}

impl AnonymityAdversary for PairingLinkage {
    fn name(&self) -> &'static str {
        "pairing-linkage"
    }

    fn choose(
        &mut self,
        oracles: &mut AnonymityOracles<'_>,
        rng: &mut ChaCha20Rng,
    ) -> Result<AnonymityChallenge, GameError> {
        let ch = default_challenge(rng.next_u64());
        if self.keys.is_none() {
            let params = oracles.params();
            let gvks = oracles.gvks(&ch.grp_id);
            let mut extract = |uid: &str| -> Result<UserGroupKey, GameError> {
                let shares = ShareIndex::all(params.n)
                    .map(|i| oracles.ext_share(&ch.grp_id, i, uid))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(reconst_key(uid, &shares, &gvks, params)?.key)
            };
            self.keys = Some((extract(&ch.user0)?, extract(&ch.user1)?));
        }
        Ok(ch)
    }

    fn guess(
        &mut self,
        _: &mut AnonymityOracles<'_>,
        _: &AnonymityChallenge,
        sig: &GroupSignature,
        rng: &mut ChaCha20Rng,
    ) -> Result<bool, GameError> {
        let (k0, k1) = self.keys.as_ref().expect("keys extracted in choose");
        let g = G1Projective::generator();
        for (bit, key) in [(false, k0), (true, k1)] {
            let base = G1Projective::from(key.gpk.x) + key.gpk.y * key.u;
            // Holds if the signer skipped the t-blinding.
            if pairing::pairing_product_is_identity(&[
                (base.to_affine(), sig.sigma1),
                (-G1Affine::generator(), sig.sigma2),
            ]) {
                return Ok(bit);
            }
            // Holds if σ1 were the unblinded base h.
            if sig.sigma1 == key.h || sig.sigma2 == key.sigma {
                return Ok(bit);
            }
            // Holds if κ − X − u·Y vanished, i.e. t = 0.
            if bool::from((G1Projective::from(sig.kappa) - base).is_identity()) {
                return Ok(bit);
            }
            // Holds if the ciphertext were unrandomized.
            if G1Projective::from(sig.c2) == g * key.u {
                return Ok(bit);
            }
        }
        Ok(rng.gen())
    }
}

/// Corrupts `k−1` managers of the challenge group and attempts to decrypt
/// the identity ciphertext from their shares alone.
#[derive(Debug, Default)]
pub struct PartialOpen {
    /// Ask for one more manager than allowed; the harness must refuse.
    pub overreach: bool,
}

impl AnonymityAdversary for PartialOpen {
    fn name(&self) -> &'static str {
        if self.overreach {
            "threshold-open"
        } else {
            "partial-open"
        }
    }

    fn choose(
        &mut self,
        _: &mut AnonymityOracles<'_>,
        rng: &mut ChaCha20Rng,
    ) -> Result<AnonymityChallenge, GameError> {
        Ok(default_challenge(rng.next_u64()))
    }

    fn guess(
        &mut self,
        oracles: &mut AnonymityOracles<'_>,
        ch: &AnonymityChallenge,
        sig: &GroupSignature,
        rng: &mut ChaCha20Rng,
    ) -> Result<bool, GameError> {
        let params = oracles.params();
        let count = if self.overreach { params.k } else { params.k - 1 };
        let mut shares = Vec::new();
        for i in ShareIndex::all(count) {
            if let Some(s) = oracles.open_part(&ch.grp_id, i, sig, &ch.message)? {
                shares.push(s);
            }
        }
        if shares.is_empty() {
            return Ok(rng.gen());
        }
        // Interpolate as though the threshold were the number of shares held.
        let reduced = Params::new(shares.len() as u32, params.n).expect("nonempty");
        let commitment = open_commitment(reduced, sig, &shares)?;
        if commitment == identity_commitment(&ch.grp_id, &ch.user1) {
            return Ok(true);
        }
        if commitment == identity_commitment(&ch.grp_id, &ch.user0) {
            return Ok(false);
        }
        Ok(rng.gen())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Forgery {
    pub grp_id: String,
    pub message: Vec<u8>,
    pub signature: Vec<u8>,
}

/// Oracle access for the traceability experiment.
pub struct TraceOracles<'a> {
    master: &'a MasterKey,
    gsks: HashMap<(String, ShareIndex), GroupKeyShare>,
    corrupted_managers: BTreeMap<String, BTreeSet<ShareIndex>>,
    corrupted_users: BTreeMap<(String, String), BTreeSet<ShareIndex>>,
    honest_users: HashMap<(String, String), UserGroupKey>,
    known_users: BTreeMap<String, BTreeSet<String>>,
    signed: HashSet<(String, Vec<u8>, Vec<u8>)>,
}

impl<'a> TraceOracles<'a> {
    fn new(master: &'a MasterKey) -> Self {
        Self {
            master,
            gsks: HashMap::new(),
            corrupted_managers: BTreeMap::new(),
            corrupted_users: BTreeMap::new(),
            honest_users: HashMap::new(),
            known_users: BTreeMap::new(),
            signed: HashSet::new(),
        }
    }

    pub fn mpk(&self) -> &MasterPublicKey {
        &self.master.mpk
    }

    pub fn params(&self) -> Params {
        self.master.params
    }

    pub fn gvks(&self, grp_id: &str) -> GroupVerifyKeys {
        GroupVerifyKeys::derive(&self.master.mpk, grp_id)
    }

    fn gsk(&mut self, grp_id: &str, i: ShareIndex) -> Result<GroupKeyShare, GameError> {
        if let Some(g) = self.gsks.get(&(grp_id.to_owned(), i)) {
            return Ok(g.clone());
        }
        let msk = self
            .master
            .share(i)
            .ok_or(TibgsError::UnknownManager(i))?;
        let g = grp_setup(grp_id, i, msk, self.master.params)?;
        self.gsks.insert((grp_id.to_owned(), i), g.clone());
        Ok(g)
    }

    /// Reveals a manager's group key share. Revealing `k` of them for one
    /// group would let the adversary extract arbitrary keys, so it is refused.
    pub fn grp_setup(&mut self, grp_id: &str, i: ShareIndex) -> Result<GroupKeyShare, GameError> {
        let set = self.corrupted_managers.entry(grp_id.to_owned()).or_default();
        set.insert(i);
        if set.len() >= self.master.params.k as usize {
            return Err(GameError::OracleViolation(format!(
                "{} managers of group {grp_id} corrupted",
                set.len()
            )));
        }
        self.gsk(grp_id, i)
    }

    /// Hands the adversary one key share of `user_id` and records the
    /// corruption.
    pub fn corrupt_share(
        &mut self,
        grp_id: &str,
        i: ShareIndex,
        user_id: &str,
    ) -> Result<UserKeyShare, GameError> {
        let share = ext_share(user_id, &self.gsk(grp_id, i)?);
        self.corrupted_users
            .entry((grp_id.to_owned(), user_id.to_owned()))
            .or_default()
            .insert(i);
        self.known_users
            .entry(grp_id.to_owned())
            .or_default()
            .insert(user_id.to_owned());
        Ok(share)
    }

    /// Registers an honest user whose key stays with the challenger.
    pub fn register_honest(&mut self, grp_id: &str, user_id: &str) -> Result<(), GameError> {
        let key_id = (grp_id.to_owned(), user_id.to_owned());
        if self.honest_users.contains_key(&key_id) {
            return Ok(());
        }
        let params = self.master.params;
        let shares = ShareIndex::all(params.k)
            .map(|i| Ok(ext_share(user_id, &self.gsk(grp_id, i)?)))
            .collect::<Result<Vec<_>, GameError>>()?;
        let key = reconst_key(user_id, &shares, &self.gvks(grp_id), params)?.key;
        self.honest_users.insert(key_id, key);
        self.known_users
            .entry(grp_id.to_owned())
            .or_default()
            .insert(user_id.to_owned());
        Ok(())
    }

    pub fn sign(
        &mut self,
        grp_id: &str,
        user_id: &str,
        message: &[u8],
        rng: &mut ChaCha20Rng,
    ) -> Option<GroupSignature> {
        let key = self
            .honest_users
            .get(&(grp_id.to_owned(), user_id.to_owned()))?;
        let sig = sign(message, key, rng);
        self.signed
            .insert((grp_id.to_owned(), message.to_vec(), sig.to_bytes()));
        Some(sig)
    }

    pub fn open_part(
        &mut self,
        grp_id: &str,
        i: ShareIndex,
        sig: &GroupSignature,
        message: &[u8],
    ) -> Result<Option<OpenShare>, GameError> {
        let gsk = self.gsk(grp_id, i)?;
        let gpk = self.master.mpk.group_public_key(grp_id);
        Ok(open_part(&gsk, sig, message, &gpk).ok())
    }

    fn judge(&mut self, forgery: &Forgery) -> Result<bool, GameError> {
        let Ok(sig) = GroupSignature::from_bytes(&forgery.signature) else {
            return Ok(false);
        };
        let gpk = self.master.mpk.group_public_key(&forgery.grp_id);
        let Ok(verified) = VerifiedSignature::check(&forgery.message, &sig, &gpk) else {
            return Ok(false);
        };
        let key = (
            forgery.grp_id.clone(),
            forgery.message.clone(),
            forgery.signature.clone(),
        );
        if self.signed.contains(&key) {
            return Ok(false);
        }
        let params = self.master.params;
        let shares = ShareIndex::all(params.n)
            .map(|i| Ok(open_part_verified(&self.gsk(&forgery.grp_id, i)?, verified)))
            .collect::<Result<Vec<_>, GameError>>()?;
        let registry = IdentityRegistry::new(
            &forgery.grp_id,
            self.known_users
                .get(&forgery.grp_id)
                .into_iter()
                .flatten(),
        );
        match open(params, &sig, &shares, &registry) {
            Err(TibgsError::UnknownSigner) => Ok(true),
            Err(e) => Err(e.into()),
            Ok(uid) => {
                let corrupted = self
                    .corrupted_users
                    .get(&(forgery.grp_id.clone(), uid))
                    .map_or(0, BTreeSet::len);
                Ok(corrupted < params.k as usize)
            }
        }
    }
}

pub trait Forger {
    fn name(&self) -> &'static str;

    fn forge(
        &mut self,
        oracles: &mut TraceOracles<'_>,
        rng: &mut ChaCha20Rng,
    ) -> Result<Forgery, GameError>;
}

pub fn traceability_game(
    params: Params,
    trials: usize,
    forger: &mut dyn Forger,
    rng: &mut ChaCha20Rng,
) -> Result<GameOutcome, GameError> {
    let master = setup(params, rng)?;
    traceability_game_with(&master, trials, forger, rng)
}

pub fn traceability_game_with(
    master: &MasterKey,
    trials: usize,
    forger: &mut dyn Forger,
    rng: &mut ChaCha20Rng,
) -> Result<GameOutcome, GameError> {
    let mut wins = 0;
    for _ in 0..trials {
        let mut oracles = TraceOracles::new(master);
        let forgery = forger.forge(&mut oracles, rng)?;
        if oracles.judge(&forgery)? {
            wins += 1;
        }
    }
    Ok(GameOutcome {
        trials,
        wins,
        score: wins as f64 / trials.max(1) as f64,
    })
}

const TRACE_GROUP: &str = "venue";

/// Resubmits a signature obtained from the Sign oracle.
#[derive(Debug, Default)]
pub struct ReplayForger;

impl Forger for ReplayForger {
    fn name(&self) -> &'static str {
        "replay"
    }

    fn forge(
        &mut self,
        oracles: &mut TraceOracles<'_>,
        rng: &mut ChaCha20Rng,
    ) -> Result<Forgery, GameError> {
        oracles.register_honest(TRACE_GROUP, "alice@example.org")?;
        let message = b"honest paper".to_vec();
        let sig = oracles
            .sign(TRACE_GROUP, "alice@example.org", &message, rng)
            .expect("registered");
        Ok(Forgery {
            grp_id: TRACE_GROUP.into(),
            message,
            signature: sig.to_bytes(),
        })
    }
}

/// Outputs random well-formed group elements and scalars.
#[derive(Debug, Default)]
pub struct RandomBytesForger;

impl Forger for RandomBytesForger {
    fn name(&self) -> &'static str {
        "random-bytes"
    }

    fn forge(
        &mut self,
        _: &mut TraceOracles<'_>,
        rng: &mut ChaCha20Rng,
    ) -> Result<Forgery, GameError> {
        let g1 = |rng: &mut ChaCha20Rng| (G1Projective::generator() * pairing::scalar_random(rng)).to_affine();
        let g2 = |rng: &mut ChaCha20Rng| (G2Projective::generator() * pairing::scalar_random(rng)).to_affine();
        let sig = GroupSignature {
            sigma1: g2(rng),
            sigma2: g2(rng),
            kappa: g1(rng),
            c1: g1(rng),
            c2: g1(rng),
            challenge: pairing::scalar_random(rng),
            s_u: pairing::scalar_random(rng),
            s_t: pairing::scalar_random(rng),
            s_rho: pairing::scalar_random(rng),
        };
        let mut signature = sig.to_bytes();
        if rng.gen_bool(0.5) {
            rng.fill_bytes(&mut signature);
        }
        Ok(Forgery {
            grp_id: TRACE_GROUP.into(),
            message: b"forged".to_vec(),
            signature,
        })
    }
}

/// Corrupts every share of one identity, rebuilds its key and signs.
#[derive(Debug, Default)]
pub struct CorruptedUserForger;

impl Forger for CorruptedUserForger {
    fn name(&self) -> &'static str {
        "corrupted-user"
    }

    fn forge(
        &mut self,
        oracles: &mut TraceOracles<'_>,
        rng: &mut ChaCha20Rng,
    ) -> Result<Forgery, GameError> {
        let params = oracles.params();
        let uid = "mallory@example.org";
        let shares = ShareIndex::all(params.n)
            .map(|i| oracles.corrupt_share(TRACE_GROUP, i, uid))
            .collect::<Result<Vec<_>, _>>()?;
        let key = reconst_key(uid, &shares, &oracles.gvks(TRACE_GROUP), params)?.key;
        let message = b"mallory's paper".to_vec();
        Ok(Forgery {
            grp_id: TRACE_GROUP.into(),
            signature: sign(&message, &key, rng).to_bytes(),
            message,
        })
    }
}

/// Holds only `k−1` shares of an identity, interpolates them as if they
/// were enough, and signs with the resulting (wrong) certificate.
#[derive(Debug, Default)]
pub struct ThresholdMinusOneForger;

impl Forger for ThresholdMinusOneForger {
    fn name(&self) -> &'static str {
        "threshold-minus-one"
    }

    fn forge(
        &mut self,
        oracles: &mut TraceOracles<'_>,
        rng: &mut ChaCha20Rng,
    ) -> Result<Forgery, GameError> {
        let params = oracles.params();
        let uid = "eve@example.org";
        let gpk = oracles.mpk().group_public_key(TRACE_GROUP);
        let held = params.k - 1;
        let sigma = if held == 0 {
            (G2Projective::generator() * pairing::scalar_random(rng)).to_affine()
        } else {
            let pts = ShareIndex::all(held)
                .map(|i| {
                    let s = oracles.corrupt_share(TRACE_GROUP, i, uid)?;
                    Ok((i, G2Projective::from(s.usk)))
                })
                .collect::<Result<Vec<_>, GameError>>()?;
            let reduced = Params::new(held, params.n).expect("held >= 1");
            vss::combine_in_exponent(reduced, &pts)
                .map_err(TibgsError::from)?
                .to_affine()
        };
        let key = UserGroupKey {
            grp_id: TRACE_GROUP.into(),
            user_id: uid.into(),
            gpk,
            u: identity_scalar(TRACE_GROUP, uid),
            h: identity_base(TRACE_GROUP, uid),
            sigma,
        };
        let message = b"eve's paper".to_vec();
        Ok(Forgery {
            grp_id: TRACE_GROUP.into(),
            signature: sign(&message, &key, rng).to_bytes(),
            message,
        })
    }
}

/// Takes an honest signature and re-encrypts its identity ciphertext toward
/// a different user, leaving the proof untouched.
#[derive(Debug, Default)]
pub struct MaulingForger;

impl Forger for MaulingForger {
    fn name(&self) -> &'static str {
        "mauling"
    }

    fn forge(
        &mut self,
        oracles: &mut TraceOracles<'_>,
        rng: &mut ChaCha20Rng,
    ) -> Result<Forgery, GameError> {
        oracles.register_honest(TRACE_GROUP, "alice@example.org")?;
        let message = b"honest paper".to_vec();
        let mut sig = oracles
            .sign(TRACE_GROUP, "alice@example.org", &message, rng)
            .expect("registered");
        let gpk = oracles.mpk().group_public_key(TRACE_GROUP);
        let shift = identity_scalar(TRACE_GROUP, "nobody") - identity_scalar(TRACE_GROUP, "alice@example.org");
        let r = pairing::scalar_random(rng);
        let g = G1Projective::generator();
        sig.c1 = (G1Projective::from(sig.c1) + g * r).to_affine();
        sig.c2 = (G1Projective::from(sig.c2) + gpk.x * r + g * shift).to_affine();
        Ok(Forgery {
            grp_id: TRACE_GROUP.into(),
            message,
            signature: sig.to_bytes(),
        })
    }
}

/// Deterministic per-experiment generator derived from a label, so each
/// adversary in a suite sees an independent stream.
pub fn labeled_rng(seed: u64, label: &str) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(seed.to_be_bytes());
    h.update(label.as_bytes());
    ChaCha20Rng::from_seed(h.finalize().into())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn master(k: u32, n: u32) -> MasterKey {
        setup(Params::new(k, n).unwrap(), &mut labeled_rng(1, "setup")).unwrap()
    }

    #[test]
    fn overreaching_adversary_is_stopped() {
        let mk = master(2, 3);
        let mut adv = PartialOpen { overreach: true };
        let err = anonymity_game_with(&mk, 3, &mut adv, &mut labeled_rng(1, "x")).unwrap_err();
        assert!(matches!(err, GameError::OracleViolation(_)));
    }

    #[test]
    fn partial_open_within_limits_runs() {
        let mk = master(2, 3);
        let mut adv = PartialOpen::default();
        let out = anonymity_game_with(&mk, 40, &mut adv, &mut labeled_rng(2, "x")).unwrap();
        assert_eq!(out.trials, 40);
    }

    #[test]
    fn revealing_k_group_keys_then_challenging_is_refused() {
        struct Greedy;
        impl AnonymityAdversary for Greedy {
            fn name(&self) -> &'static str {
                "greedy"
            }
            fn choose(
                &mut self,
                o: &mut AnonymityOracles<'_>,
                rng: &mut ChaCha20Rng,
            ) -> Result<AnonymityChallenge, GameError> {
                for i in ShareIndex::all(o.params().k) {
                    o.grp_setup("venue", i)?;
                }
                Ok(default_challenge(rng.next_u64()))
            }
            fn guess(
                &mut self,
                _: &mut AnonymityOracles<'_>,
                _: &AnonymityChallenge,
                _: &GroupSignature,
                _: &mut ChaCha20Rng,
            ) -> Result<bool, GameError> {
                Ok(false)
            }
        }
        let mk = master(2, 3);
        assert!(matches!(
            anonymity_game_with(&mk, 1, &mut Greedy, &mut labeled_rng(3, "x")),
            Err(GameError::OracleViolation(_))
        ));
    }

    #[test]
    fn forgers_do_not_win() {
        let mk = master(2, 3);
        let forgers: Vec<Box<dyn Forger>> = vec![
            Box::new(ReplayForger),
            Box::new(RandomBytesForger),
            Box::new(CorruptedUserForger),
            Box::new(ThresholdMinusOneForger),
            Box::new(MaulingForger),
        ];
        for mut f in forgers {
            let name = f.name();
            let out = traceability_game_with(&mk, 5, f.as_mut(), &mut labeled_rng(4, name)).unwrap();
            assert_eq!(out.wins, 0, "{name}");
        }
    }

    #[test]
    fn judge_counts_unknown_signer_as_win() {
        // An honestly generated signature from an identity the oracles never
        // issued would be a real forgery; the judge must count it.
        let mk = master(1, 2);
        let mut oracles = TraceOracles::new(&mk);
        let gvks = GroupVerifyKeys::derive(&mk.mpk, TRACE_GROUP);
        let gsk = grp_setup(TRACE_GROUP, mk.shares[0].manager, &mk.shares[0], mk.params).unwrap();
        let share = ext_share("ghost", &gsk);
        let key = reconst_key("ghost", &[share], &gvks, mk.params).unwrap().key;
        let mut rng = labeled_rng(5, "ghost");
        let forgery = Forgery {
            grp_id: TRACE_GROUP.into(),
            message: b"m".to_vec(),
            signature: sign(b"m", &key, &mut rng).to_bytes(),
        };
        assert!(oracles.judge(&forgery).unwrap());
    }
}
