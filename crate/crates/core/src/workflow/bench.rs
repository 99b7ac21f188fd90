//! Wall-clock timings of the eight TIBGS operations at a given threshold.

use std::fmt::Write as _;
use std::time::Instant;

use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::tibgs::{self, GroupVerifyKeys, TibgsError};
use crate::vss::Params;

pub const OPS: [&str; 8] = [
    "setup",
    "grp_setup",
    "ext_share",
    "reconst_key",
    "sign",
    "verify",
    "open_part",
    "open",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpTiming {
    pub k: u32,
    pub n: u32,
    pub op: &'static str,
    pub iters: usize,
    /// Median wall-clock time per call.
    pub wall_us: f64,
}

fn time<T>(iters: usize, mut f: impl FnMut(usize) -> T) -> (f64, T) {
    let mut samples = Vec::with_capacity(iters.max(1));
    let mut call = |i| {
        let start = Instant::now();
        let out = f(i);
        samples.push(start.elapsed().as_secs_f64() * 1e6);
        out
    };
    let mut last = call(0);
    for i in 1..iters {
        last = call(i);
    }
    (median(samples), last)
}

fn median(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(f64::total_cmp);
    let mid = samples.len() / 2;
    if samples.len() % 2 == 0 {
        (samples[mid - 1] + samples[mid]) / 2.0
    } else {
        samples[mid]
    }
}

/// Sign and verify timings for several thresholds, measured round-robin so
/// that drift in machine speed hits every threshold alike.
pub fn bench_sign_verify(
    thresholds: &[Params],
    iters: usize,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<OpTiming>, TibgsError> {
    let grp = "bench-venue";
    let user = "bench-author";
    let mut keys = Vec::new();
    for &p in thresholds {
        let master = tibgs::setup(p, rng)?;
        let gvks = GroupVerifyKeys::derive(&master.mpk, grp);
        let shares: Vec<_> = master
            .group_key_shares(grp)
            .iter()
            .map(|g| tibgs::ext_share(user, g))
            .collect();
        keys.push(tibgs::reconst_key(user, &shares, &gvks, p)?.key);
    }
    let msg = b"benchmark submission";
    let mut samples = vec![(Vec::new(), Vec::new()); thresholds.len()];
    for _ in 0..iters.max(1) {
        for (key, (sign, verify)) in keys.iter().zip(&mut samples) {
            let start = Instant::now();
            let sig = tibgs::sign(msg, key, rng);
            sign.push(start.elapsed().as_secs_f64() * 1e6);
            let start = Instant::now();
            let ok = tibgs::verify_with(msg, &sig, &key.gpk);
            verify.push(start.elapsed().as_secs_f64() * 1e6);
            if !ok {
                return Err(TibgsError::InvalidSignature);
            }
        }
    }
    let mut rows = Vec::new();
    for (p, (sign, verify)) in thresholds.iter().zip(samples) {
        for (op, xs) in [(OPS[4], sign), (OPS[5], verify)] {
            rows.push(OpTiming {
                k: p.k,
                n: p.n,
                op,
                iters: xs.len(),
                wall_us: median(xs),
            });
        }
    }
    Ok(rows)
}

/// Times every operation. Setup runs `setup_iters` times, the others
/// `iters` times. Per-manager operations (GrpSetUp, ExtShare, OpenPart) are
/// timed for one manager.
pub fn bench_tibgs(
    params: Params,
    setup_iters: usize,
    iters: usize,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<OpTiming>, TibgsError> {
    let grp = "bench-venue";
    let user = "bench-author";
    let (setup_us, master) = time(setup_iters, |_| tibgs::setup(params, rng));
    let master = master?;
    let msk = &master.shares[0];
    let (grp_us, _) = time(iters, |_| tibgs::grp_setup(grp, msk.manager, msk, params));
    let gsks = master.group_key_shares(grp);
    let gvks = GroupVerifyKeys::derive(&master.mpk, grp);
    let gpk = master.mpk.group_public_key(grp);
    let (ext_us, _) = time(iters, |_| tibgs::ext_share(user, &gsks[0]));
    let ushares: Vec<_> = gsks.iter().map(|g| tibgs::ext_share(user, g)).collect();
    let (rec_us, key) = time(iters, |_| tibgs::reconst_key(user, &ushares[..params.k as usize], &gvks, params));
    let key = key?.key;
    let msg = b"benchmark submission";
    let (sign_us, sig) = time(iters, |_| tibgs::sign(msg, &key, rng));
    let (verify_us, ok) = time(iters, |_| tibgs::verify_with(msg, &sig, &gpk));
    if !ok {
        return Err(TibgsError::InvalidSignature);
    }
    let (part_us, _) = time(iters, |_| tibgs::open_part(&gsks[0], &sig, msg, &gpk));
    let oshares = gsks
        .iter()
        .take(params.k as usize)
        .map(|g| tibgs::open_part(g, &sig, msg, &gpk))
        .collect::<Result<Vec<_>, _>>()?;
    let registry = tibgs::IdentityRegistry::new(grp, [user]);
    let (open_us, opened) = time(iters, |_| {
        let (good, _) = tibgs::filter_open_shares(&gvks, &sig, &oshares);
        tibgs::open(params, &sig, &good, &registry)
    });
    if opened? != user {
        return Err(TibgsError::UnknownSigner);
    }
    let row = |op, iters, wall_us| OpTiming {
        k: params.k,
        n: params.n,
        op,
        iters,
        wall_us,
    };
    Ok(vec![
        row(OPS[0], setup_iters.max(1), setup_us),
        row(OPS[1], iters.max(1), grp_us),
        row(OPS[2], iters.max(1), ext_us),
        row(OPS[3], iters.max(1), rec_us),
        row(OPS[4], iters.max(1), sign_us),
        row(OPS[5], iters.max(1), verify_us),
        row(OPS[6], iters.max(1), part_us),
        row(OPS[7], iters.max(1), open_us),
    ])
}

pub fn to_csv(rows: &[OpTiming]) -> String {
    let mut out = String::from("k,n,op,iters,wall_us\n");
    for r in rows {
        writeln!(out, "{},{},{},{},{:.1}", r.k, r.n, r.op, r.iters, r.wall_us).expect("string write");
    }
    out
}

/// Parses `"11,16;15,22"` or `"11/16,15/22"` into parameter pairs.
pub fn parse_thresholds(s: &str) -> Result<Vec<Params>, String> {
    let s = s.trim();
    let pairs: Vec<&str> = if s.contains(';') {
        s.split(';').collect()
    } else if s.contains('/') {
        s.split(',').collect()
    } else {
        let nums: Vec<&str> = s.split(',').collect();
        if nums.len() % 2 != 0 {
            return Err(format!("odd number of values in {s:?}"));
        }
        return nums
            .chunks(2)
            .map(|c| parse_pair(c[0], c[1]))
            .collect();
    };
    pairs
        .into_iter()
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (k, n) = p
                .split_once([',', '/'])
                .ok_or_else(|| format!("expected k,n in {p:?}"))?;
            parse_pair(k, n)
        })
        .collect()
}

fn parse_pair(k: &str, n: &str) -> Result<Params, String> {
    let k: u32 = k.trim().parse().map_err(|_| format!("bad threshold {k:?}"))?;
    let n: u32 = n.trim().parse().map_err(|_| format!("bad validator count {n:?}"))?;
    Params::new(k, n).map_err(|e| e.to_string())
}

/// True iff `(k, n) = (2f+1, 3f+1)` for some `f`.
pub fn is_pbft_consistent(p: Params) -> bool {
    p.n >= 1 && (p.n - 1) % 3 == 0 && p.k == 2 * ((p.n - 1) / 3) + 1
}
