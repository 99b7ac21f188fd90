use std::collections::HashSet;

use group::Curve;
use num_bigint::BigUint;
use openpub::pairing::*;
use openpub::tsig;
use openpub::vss::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn q() -> BigUint {
    BigUint::parse_bytes(GROUP_ORDER_HEX.as_bytes(), 16).unwrap()
}

fn to_scalar(v: &BigUint) -> Scalar {
    let be = v.to_bytes_be();
    let mut buf = [0u8; SCALAR_LEN];
    buf[SCALAR_LEN - be.len()..].copy_from_slice(&be);
    scalar_from_bytes(&buf).expect("reduced below q")
}

fn to_big(s: &Scalar) -> BigUint {
    BigUint::from_bytes_be(&scalar_to_bytes(s))
}

fn idx(i: u32) -> ShareIndex {
    ShareIndex::new(i).unwrap()
}

fn s(v: u64) -> Scalar {
    scalar_from_u64(v)
}

fn subsets(n: u32) -> impl Iterator<Item = Vec<ShareIndex>> {
    (0u32..1 << n).map(move |mask| (1..=n).filter(|i| mask & (1 << (i - 1)) != 0).map(idx).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn scalar_field_matches_bigint(a in any::<[u8; 32]>(), b in any::<[u8; 32]>()) {
        let q = q();
        let (x, y) = (BigUint::from_bytes_be(&a) % &q, BigUint::from_bytes_be(&b) % &q);
        let (sx, sy) = (to_scalar(&x), to_scalar(&y));
        prop_assert_eq!(to_big(&(sx + sy)), (&x + &y) % &q);
        prop_assert_eq!(to_big(&(sx - sy)), (&x + &q - &y) % &q);
        prop_assert_eq!(to_big(&(sx * sy)), (&x * &y) % &q);
        if x != BigUint::from(0u8) {
            let inv = x.modpow(&(&q - 2u8), &q);
            prop_assert_eq!(to_big(&sx.invert().unwrap()), inv);
        }
        prop_assert_eq!(scalar_from_bytes(&scalar_to_bytes(&sx)), Some(sx));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn pairing_is_bilinear(a in any::<u64>(), b in any::<u64>(), seed in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let p = (G1Projective::generator() * scalar_random(&mut rng)).to_affine();
        let q2 = (G2Projective::generator() * scalar_random(&mut rng)).to_affine();
        let (sa, sb) = (s(a), s(b));
        let lhs = bls12_381::pairing(&(p * sa).to_affine(), &(q2 * sb).to_affine());
        prop_assert_eq!(lhs, bls12_381::pairing(&p, &q2) * (sa * sb));
    }

    #[test]
    fn any_k_subset_reconstructs(k in 1u32..=6, extra in 0u32..=4, seed in any::<u64>()) {
        let n = k + extra;
        let p = Params::new(k, n).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let secret = scalar_random(&mut rng);
        let d = deal(p, idx(1), secret, &mut rng).unwrap();
        let mut all: Vec<(ShareIndex, Scalar)> = ShareIndex::all(n).map(|i| (i, d.sub_share(i).unwrap())).collect();
        for i in (1..all.len()).rev() {
            all.swap(i, rng.gen_range(0..=i));
        }
        prop_assert_eq!(reconstruct(p, &all[..k as usize]).unwrap(), secret);
        if k > 1 {
            let short = reconstruct(p, &all[..k as usize - 1]);
            let is_insufficient = matches!(short, Err(VssError::InsufficientShares { .. }));
            prop_assert!(is_insufficient);
        }
    }

    #[test]
    fn lagrange_coefficients_sum_to_one(mask in 1u32..256) {
        let subset: Vec<ShareIndex> = (1..=8).filter(|i| mask & (1 << (i - 1)) != 0).map(idx).collect();
        let sum = lagrange_at_zero(&subset).unwrap().into_iter().fold(Scalar::zero(), |a, l| a + l);
        prop_assert_eq!(sum, Scalar::one());
    }
}

#[test]
fn hashing_has_no_collisions_over_1000_inputs() {
    let mut g1 = HashSet::new();
    let mut g2 = HashSet::new();
    let mut zp = HashSet::new();
    for i in 0..1000u32 {
        let m = format!("message-{i}");
        g1.insert(hash_to_g1(b"test", m.as_bytes()).to_affine().to_compressed().to_vec());
        zp.insert(scalar_to_bytes(&hash_to_scalar(b"test", m.as_bytes())));
        if i < 200 {
            g2.insert(hash_to_g2(b"test", m.as_bytes()).to_affine().to_compressed().to_vec());
        }
    }
    assert_eq!((g1.len(), zp.len(), g2.len()), (1000, 1000, 200));
    assert_eq!(hash_to_g1(b"test", b"x"), hash_to_g1(b"test", b"x"));
}

#[test]
fn linear_polynomial_shares() {
    let poly = Polynomial::from_coefficients(vec![s(5), s(3)]);
    let d = deal_polynomial(Params::new(2, 3).unwrap(), idx(1), &poly).unwrap();
    let got: Vec<Scalar> = ShareIndex::all(3).map(|i| d.sub_share(i).unwrap()).collect();
    assert_eq!(got, vec![s(8), s(11), s(14)]);
    for i in ShareIndex::all(3) {
        assert!(verify_share(&d, i, &d.sub_share(i).unwrap()));
        assert_eq!(d.public_share(i), G1Projective::generator() * d.sub_share(i).unwrap());
    }
}

#[test]
fn two_dealers_share_the_sum() {
    let p = Params::new(2, 3).unwrap();
    let d1 = deal_polynomial(p, idx(1), &Polynomial::from_coefficients(vec![s(5), s(3)])).unwrap();
    let d2 = deal_polynomial(p, idx(2), &Polynomial::from_coefficients(vec![s(10), s(1)])).unwrap();
    let t = finish_sharing(p, vec![d1, d2]).unwrap();
    assert_eq!(t.share(idx(1)), Some(s(19)));
    let shares: Vec<_> = t.final_shares[1..].to_vec();
    assert_eq!(reconstruct(p, &shares).unwrap(), s(15));
    assert_eq!(t.public_key(), (G1Projective::generator() * s(15)).to_affine());
}

#[test]
fn quadratic_reconstructs_from_any_three() {
    let p = Params::new(3, 5).unwrap();
    let poly = Polynomial::from_coefficients(vec![s(7), s(4), s(1)]);
    let d = deal_polynomial(p, idx(1), &poly).unwrap();
    assert_eq!(d.sub_share(idx(2)), Some(s(7 + 8 + 4)));
    for sub in subsets(5).filter(|v| v.len() == 3) {
        let shares: Vec<_> = sub.iter().map(|i| (*i, d.sub_share(*i).unwrap())).collect();
        assert_eq!(reconstruct(p, &shares).unwrap(), s(7));
    }
}

#[test]
fn lagrange_for_indices_one_and_two() {
    let l = lagrange_at_zero(&[idx(1), idx(2)]).unwrap();
    assert_eq!(l, vec![s(2), -s(1)]);
}

#[test]
fn exhaustive_subset_agreement_up_to_eight() {
    let mut rng = ChaCha20Rng::seed_from_u64(41);
    for n in 1..=8 {
        for k in 1..=n {
            let p = Params::new(k, n).unwrap();
            let t = DealerlessRun::new(p).unwrap().run(&mut rng).unwrap();
            assert_eq!(t.final_shares.len(), n as usize);
            let expected = reconstruct(p, &t.final_shares).unwrap();
            assert_eq!((G1Projective::generator() * expected).to_affine(), t.public_key());
            for sub in subsets(n).filter(|v| v.len() == k as usize) {
                let shares: Vec<_> = sub.iter().map(|i| (*i, t.share(*i).unwrap())).collect();
                assert_eq!(reconstruct(p, &shares).unwrap(), expected, "k={k} n={n} {sub:?}");
            }
        }
    }
}

#[test]
fn tampering_is_always_detected() {
    let mut rng = ChaCha20Rng::seed_from_u64(42);
    let mut detected = 0;
    for trial in 0..200 {
        let n = rng.gen_range(2..=8);
        let k = rng.gen_range(1..=n);
        let p = Params::new(k, n).unwrap();
        let mut d = deal(p, idx(1), scalar_random(&mut rng), &mut rng).unwrap();
        let victim = idx(rng.gen_range(1..=n));
        let delta = scalar_random_nonzero(&mut rng);
        if trial % 2 == 0 {
            d.sub_shares[victim.get() as usize - 1] += delta;
        } else {
            let c = rng.gen_range(0..k as usize);
            d.commitments[c] = (G1Projective::from(d.commitments[c]) + G1Projective::generator() * delta).to_affine();
        }
        let caught = !verify_share(&d, victim, &d.sub_share(victim).unwrap());
        let excluded = match finish_sharing(p, vec![d]) {
            Ok(t) => t.disqualified == vec![idx(1)],
            Err(VssError::TooFewQualifiedDealers { .. }) => true,
            Err(_) => false,
        };
        if caught && excluded {
            detected += 1;
        }
    }
    assert_eq!(detected, 200);
}

#[test]
fn faulty_dealer_is_disqualified_and_shares_stay_consistent() {
    let mut rng = ChaCha20Rng::seed_from_u64(43);
    let p = Params::new(3, 5).unwrap();
    let t = DealerlessRun::new(p).unwrap().with_faulty([idx(2)]).run(&mut rng).unwrap();
    assert_eq!(t.disqualified, vec![idx(2)]);
    for (i, share) in &t.final_shares {
        assert_eq!((G1Projective::generator() * share).to_affine(), t.public_share(*i));
    }
}

#[test]
fn threshold_signature_iff_k_signers() {
    let msg = b"pay reviewer-0";
    let mut rng = ChaCha20Rng::seed_from_u64(44);
    for n in 1..=5u32 {
        for k in 1..=n {
            let p = Params::new(k, n).unwrap();
            let keys = tsig::thres_keygen(p, &mut rng).unwrap();
            let pk = keys.pk;
            let shares: Vec<tsig::SigShare> = ShareIndex::all(n)
                .map(|i| tsig::thres_sign(msg, keys.share(i).unwrap()))
                .collect();
            for (i, sh) in ShareIndex::all(n).zip(&shares) {
                assert!(tsig::sig_share_ver(&pk, keys.verify_key(i).unwrap(), msg, sh));
            }
            let reference = tsig::sig_share_comb(&shares, p).unwrap();
            assert!(tsig::ts_verify(&pk, msg, &reference));
            let mut verifying_below_k = 0;
            for sub in subsets(n) {
                let picked: Vec<tsig::SigShare> = sub.iter().map(|i| shares[i.get() as usize - 1]).collect();
                if sub.len() >= k as usize {
                    let sig = tsig::sig_share_comb(&picked, p).unwrap();
                    assert_eq!(sig.to_bytes(), reference.to_bytes(), "k={k} n={n} {sub:?}");
                } else {
                    if tsig::sig_share_comb(&picked, p).is_ok() {
                        verifying_below_k += 1;
                    }
                    // Interpolating what is there as if the threshold were lower.
                    if let Ok(lower) = Params::new(sub.len() as u32, n) {
                        let forced = tsig::sig_share_comb(&picked, lower).unwrap();
                        if tsig::ts_verify(&pk, msg, &forced) {
                            verifying_below_k += 1;
                        }
                    }
                }
            }
            assert_eq!(verifying_below_k, 0, "k={k} n={n}");
        }
    }
}
