//! Ordinary signatures and public-key encryption over secp256k1.
//!
//! Signatures are recoverable ECDSA over SHA-256 in the 65-byte `r‖s‖v`
//! form, with low-s enforced so each (key, message) pair has exactly one
//! accepted encoding per nonce. Encryption is ECIES: ephemeral ECDH,
//! HKDF-SHA256 and ChaCha20-Poly1305. A ciphertext carries only a fresh
//! ephemeral key and the sealed body, never the recipient key.

use std::fmt;

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use hkdf::Hkdf;
use k256::ecdsa::{RecoveryId, Signature, SigningKey, VerifyingKey};
use k256::elliptic_curve::sec1::ToEncodedPoint;
use rand::{CryptoRng, RngCore};
use sha2::Sha256;

use crate::codec::{CodecError, Reader, Writer};

pub const PUBLIC_KEY_LEN: usize = 33;
pub const SECRET_KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 65;
const KDF_INFO: &[u8] = b"openpub-enc-v1";
const TAG_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SuiteError {
    #[error("malformed public key")]
    InvalidPublicKey,
    #[error("malformed secret key")]
    InvalidSecretKey,
    #[error("malformed signature")]
    InvalidSignature,
    #[error("decryption failed")]
    DecryptionFailed,
}

/// Compressed SEC1 public key; doubles as the account identifier.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PublicKey(pub [u8; PUBLIC_KEY_LEN]);

impl PublicKey {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SuiteError> {
        let vk = VerifyingKey::from_sec1_bytes(bytes).map_err(|_| SuiteError::InvalidPublicKey)?;
        Ok(Self::from_verifying_key(&vk))
    }

    fn from_verifying_key(vk: &VerifyingKey) -> Self {
        let enc = vk.to_encoded_point(true);
        let mut out = [0u8; PUBLIC_KEY_LEN];
        out.copy_from_slice(enc.as_bytes());
        Self(out)
    }

    pub fn as_bytes(&self) -> &[u8; PUBLIC_KEY_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.to_hex())
    }
}

#[derive(Clone)]
pub struct KeyPair {
    sk: SigningKey,
    pub pk: PublicKey,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("pk", &self.pk)
            .finish_non_exhaustive()
    }
}

impl PartialEq for KeyPair {
    fn eq(&self, other: &Self) -> bool {
        self.secret_bytes() == other.secret_bytes()
    }
}

impl Eq for KeyPair {}

impl KeyPair {
    pub fn from_secret_bytes(bytes: &[u8]) -> Result<Self, SuiteError> {
        let sk = SigningKey::from_slice(bytes).map_err(|_| SuiteError::InvalidSecretKey)?;
        let pk = PublicKey::from_verifying_key(sk.verifying_key());
        Ok(Self { sk, pk })
    }

    pub fn secret_bytes(&self) -> [u8; SECRET_KEY_LEN] {
        self.sk.to_bytes().into()
    }
}

pub fn sig_keygen<R: RngCore + CryptoRng>(rng: &mut R) -> KeyPair {
    let sk = SigningKey::random(rng);
    let pk = PublicKey::from_verifying_key(sk.verifying_key());
    KeyPair { sk, pk }
}

/// Encryption keys are ordinary secp256k1 key pairs; an account's signing
/// key also receives ciphertexts.
pub fn enc_keygen<R: RngCore + CryptoRng>(rng: &mut R) -> KeyPair {
    sig_keygen(rng)
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PlainSignature(pub [u8; SIGNATURE_LEN]);

impl PlainSignature {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SuiteError> {
        bytes
            .try_into()
            .map(Self)
            .map_err(|_| SuiteError::InvalidSignature)
    }

    pub fn as_bytes(&self) -> &[u8; SIGNATURE_LEN] {
        &self.0
    }
}

impl fmt::Debug for PlainSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PlainSignature({})", hex::encode(self.0))
    }
}

pub fn sig_sign(message: &[u8], key: &KeyPair) -> PlainSignature {
    let (sig, recid) = key
        .sk
        .sign_recoverable(message)
        .expect("signing with a valid key cannot fail");
    let mut out = [0u8; SIGNATURE_LEN];
    out[..64].copy_from_slice(&sig.to_bytes());
    out[64] = recid.to_byte();
    PlainSignature(out)
}

fn parse_signature(sig: &PlainSignature) -> Result<(Signature, RecoveryId), SuiteError> {
    let s = Signature::from_slice(&sig.0[..64]).map_err(|_| SuiteError::InvalidSignature)?;
    if s.normalize_s().is_some() {
        return Err(SuiteError::InvalidSignature);
    }
    let recid = RecoveryId::from_byte(sig.0[64]).ok_or(SuiteError::InvalidSignature)?;
    Ok((s, recid))
}

/// Recovers the signer from the signature and compares it with `pk`.
pub fn sig_verify(pk: &PublicKey, message: &[u8], sig: &PlainSignature) -> bool {
    let Ok((s, recid)) = parse_signature(sig) else {
        return false;
    };
    match VerifyingKey::recover_from_msg(message, &s, recid) {
        Ok(vk) => PublicKey::from_verifying_key(&vk) == *pk,
        Err(_) => false,
    }
}

/// Recovers the public key that produced a signature.
pub fn sig_recover(message: &[u8], sig: &PlainSignature) -> Result<PublicKey, SuiteError> {
    let (s, recid) = parse_signature(sig)?;
    VerifyingKey::recover_from_msg(message, &s, recid)
        .map(|vk| PublicKey::from_verifying_key(&vk))
        .map_err(|_| SuiteError::InvalidSignature)
}

#[derive(Clone, PartialEq, Eq)]
pub struct Ciphertext {
    pub ephemeral: [u8; PUBLIC_KEY_LEN],
    pub body: Vec<u8>,
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ciphertext({} bytes)", self.encoded_len())
    }
}

impl Ciphertext {
    pub fn encoded_len(&self) -> usize {
        PUBLIC_KEY_LEN + 4 + self.body.len()
    }

    pub fn encode(&self, w: &mut Writer) {
        w.put_fixed(&self.ephemeral).put_bytes(&self.body);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let ephemeral = r.take_array()?;
        let body = r.get_bytes()?.to_vec();
        if body.len() < TAG_LEN {
            return Err(CodecError::InvalidValue("ciphertext shorter than its tag"));
        }
        Ok(Self { ephemeral, body })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let c = Self::decode(&mut r)?;
        r.finish()?;
        Ok(c)
    }
}

fn derive_cipher(shared: &[u8], ephemeral: &[u8; PUBLIC_KEY_LEN]) -> ChaCha20Poly1305 {
    let hk = Hkdf::<Sha256>::new(Some(ephemeral), shared);
    let mut key = [0u8; 32];
    hk.expand(KDF_INFO, &mut key)
        .expect("32 bytes is a valid HKDF output length");
    ChaCha20Poly1305::new(Key::from_slice(&key))
}

pub fn enc<R: RngCore + CryptoRng>(
    message: &[u8],
    pk: &PublicKey,
    rng: &mut R,
) -> Result<Ciphertext, SuiteError> {
    let recipient = k256::PublicKey::from_sec1_bytes(&pk.0).map_err(|_| SuiteError::InvalidPublicKey)?;
    let eph = k256::ecdh::EphemeralSecret::random(rng);
    let eph_pk = PublicKey::from_bytes(eph.public_key().to_encoded_point(true).as_bytes())?;
    let shared = eph.diffie_hellman(&recipient);
    // Every ephemeral key is fresh, so a fixed nonce never repeats under a key.
    let body = derive_cipher(shared.raw_secret_bytes(), &eph_pk.0)
        .encrypt(
            Nonce::from_slice(&[0u8; 12]),
            Payload {
                msg: message,
                aad: &eph_pk.0,
            },
        )
        .expect("encryption of in-memory buffers cannot fail");
    Ok(Ciphertext {
        ephemeral: eph_pk.0,
        body,
    })
}

pub fn dec(c: &Ciphertext, key: &KeyPair) -> Result<Vec<u8>, SuiteError> {
    let eph = k256::PublicKey::from_sec1_bytes(&c.ephemeral).map_err(|_| SuiteError::DecryptionFailed)?;
    let shared = k256::ecdh::diffie_hellman(key.sk.as_nonzero_scalar(), eph.as_affine());
    derive_cipher(shared.raw_secret_bytes(), &c.ephemeral)
        .decrypt(
            Nonce::from_slice(&[0u8; 12]),
            Payload {
                msg: &c.body,
                aad: &c.ephemeral,
            },
        )
        .map_err(|_| SuiteError::DecryptionFailed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn sign_verify_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let a = sig_keygen(&mut rng);
        let b = sig_keygen(&mut rng);
        let sig = sig_sign(b"hello", &a);
        assert_eq!(sig.as_bytes().len(), 65);
        assert!(sig_verify(&a.pk, b"hello", &sig));
        assert!(!sig_verify(&b.pk, b"hello", &sig));
        assert!(!sig_verify(&a.pk, b"hellp", &sig));
        assert_eq!(sig_recover(b"hello", &sig).unwrap(), a.pk);
    }

    #[test]
    fn malformed_signatures_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let a = sig_keygen(&mut rng);
        let mut sig = sig_sign(b"m", &a);
        sig.0[64] = 9;
        assert!(!sig_verify(&a.pk, b"m", &sig));
        assert!(PlainSignature::from_bytes(&[0u8; 64]).is_err());
        assert!(!sig_verify(&a.pk, b"m", &PlainSignature([0u8; 65])));
    }

    #[test]
    fn high_s_is_rejected() {
        use k256::elliptic_curve::ops::Neg;
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let a = sig_keygen(&mut rng);
        let sig = sig_sign(b"m", &a);
        let parsed = Signature::from_slice(&sig.0[..64]).unwrap();
        let (r, s) = parsed.split_scalars();
        let high = Signature::from_scalars(r, s.as_ref().neg()).unwrap();
        let mut out = sig.0;
        out[..64].copy_from_slice(&high.to_bytes());
        out[64] ^= 1;
        assert!(!sig_verify(&a.pk, b"m", &PlainSignature(out)));
    }

    #[test]
    fn key_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let a = sig_keygen(&mut rng);
        let b = KeyPair::from_secret_bytes(&a.secret_bytes()).unwrap();
        assert_eq!(a.pk, b.pk);
        assert_eq!(PublicKey::from_bytes(&a.pk.0).unwrap(), a.pk);
        assert!(PublicKey::from_bytes(&[7u8; 33]).is_err());
    }

    #[test]
    fn encryption_round_trip_and_randomized() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let a = enc_keygen(&mut rng);
        let c1 = enc(b"secret", &a.pk, &mut rng).unwrap();
        let c2 = enc(b"secret", &a.pk, &mut rng).unwrap();
        assert_ne!(c1, c2);
        assert_eq!(dec(&c1, &a).unwrap(), b"secret");
        assert_eq!(Ciphertext::from_bytes(&c1.to_bytes()).unwrap(), c1);
    }

    #[test]
    fn tampering_fails_decryption() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let a = enc_keygen(&mut rng);
        let mut c = enc(b"secret", &a.pk, &mut rng).unwrap();
        c.body[0] ^= 1;
        assert_eq!(dec(&c, &a), Err(SuiteError::DecryptionFailed));
    }
}
