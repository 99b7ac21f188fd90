//! One PASS/FAIL line per acceptance criterion. Runs without the libtest
//! harness so the lines always print; exits nonzero if any criterion fails.

use std::time::Instant;

use openpub::consensus::*;
use openpub::ledger::{Block, TxClass};
use openpub::tibgs::games::{self, AnonymityAdversary};
use openpub::tibgs::{self, GroupVerifyKeys, IdentityRegistry, TibgsError, VerifiedSignature};
use openpub::tsig;
use openpub::vss::{self, DealerlessRun, Params, ShareIndex, VssError};
use openpub::workflow::anonymity::{self, ChainAdversary};
use openpub::workflow::bench::{bench_sign_verify, bench_tibgs, OpTiming};
use openpub::workflow::corrupt_user_share;
use openpub::workflow::scenario::{run_scenario, ScenarioConfig};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha20Rng;

const ROUND_TRIPS: usize = 1000;
const ROBUSTNESS_TRIALS: usize = 200;
const TAMPERINGS: usize = 200;
const ANONYMITY_TRIALS: usize = 2000;
const MAX_ADVANTAGE: f64 = 0.05;
const SIGN_VERIFY_SPREAD: f64 = 2.0;
const GSIG_SIG_BYTES_RATIO: f64 = 1.5;
const TPS_THRESHOLDS_F: [u32; 3] = [1, 2, 5];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn rng(label: &str) -> ChaCha20Rng {
    games::labeled_rng(20_240_601, label)
}

fn idx(i: u32) -> ShareIndex {
    ShareIndex::new(i).unwrap()
}

fn tibgs_correctness() -> Verdict {
    let thresholds = [(1, 1), (3, 4), (3, 5), (11, 16)];
    let start = Instant::now();
    let results: Vec<Result<String, String>> = std::thread::scope(|s| {
        let handles: Vec<_> = thresholds
            .iter()
            .map(|&(k, n)| s.spawn(move || correctness_at(Params::new(k, n).unwrap())))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let secs = start.elapsed().as_secs_f64();
    let mut failures = Vec::new();
    let mut parts = Vec::new();
    for ((k, n), r) in thresholds.iter().zip(results) {
        match r {
            Ok(s) => parts.push(format!("({k},{n}) {s}")),
            Err(e) => failures.push(format!("({k},{n}) {e}")),
        }
    }
    if secs >= 300.0 {
        failures.push(format!("runtime {secs:.0}s"));
    }
    if failures.is_empty() {
        verdict(true, format!("{}; {secs:.0}s", parts.join("; ")))
    } else {
        verdict(false, failures.join("; "))
    }
}

fn correctness_at(p: Params) -> Result<String, String> {
    let mut rng = rng(&format!("correctness-{}-{}", p.k, p.n));
    let grp = "acceptance-venue";
    let master = tibgs::setup(p, &mut rng).map_err(|e| e.to_string())?;
    let gsks = master.group_key_shares(grp);
    let gvks = GroupVerifyKeys::derive(&master.mpk, grp);
    let users: Vec<String> = (0..8).map(|i| format!("author-{i}@example.org")).collect();
    let registry = IdentityRegistry::new(grp, &users);
    let mut keys = Vec::new();
    let mut ushares = Vec::new();
    for u in &users {
        let shares: Vec<_> = gsks.iter().map(|g| tibgs::ext_share(u, g)).collect();
        keys.push(tibgs::reconst_key(u, &shares, &gvks, p).map_err(|e| e.to_string())?.key);
        ushares.push(shares);
    }
    let k = p.k as usize;
    let (mut verified, mut opened, mut below_refused) = (0, 0, 0);
    let managers: Vec<usize> = (0..p.n as usize).collect();
    for trial in 0..ROUND_TRIPS {
        let who = rng.gen_range(0..users.len());
        let msg = format!("submission {trial}").into_bytes();
        let sig = tibgs::sign(&msg, &keys[who], &mut rng);
        let Ok(checked) = VerifiedSignature::check(&msg, &sig, &gvks.gpk) else {
            continue;
        };
        if !tibgs::verify_with(b"other", &sig, &gvks.gpk) {
            verified += 1;
        }
        let chosen: Vec<usize> = managers.choose_multiple(&mut rng, k).copied().collect();
        let oshares: Vec<_> = chosen
            .iter()
            .map(|&m| tibgs::open_part_verified(&gsks[m], checked))
            .collect();
        let (good, bad) = tibgs::filter_open_shares(&gvks, &sig, &oshares);
        if bad.is_empty() && tibgs::open(p, &sig, &good, &registry).as_deref() == Ok(users[who].as_str()) {
            opened += 1;
        }
        let open_refused = matches!(
            tibgs::open(p, &sig, &good[..k - 1], &registry),
            Err(TibgsError::InsufficientShares { .. })
        );
        let forced_open_fails = match Params::new(p.k - 1, p.n) {
            Ok(lower) => tibgs::open(lower, &sig, &good[..k - 1], &registry).is_err(),
            Err(_) => true,
        };
        let reconst_refused = matches!(
            tibgs::reconst_key(&users[who], &ushares[who][..k - 1], &gvks, p),
            Err(TibgsError::InsufficientValidShares { .. })
        );
        if open_refused && forced_open_fails && reconst_refused {
            below_refused += 1;
        }
    }
    let summary = format!("verify {verified}/{ROUND_TRIPS}, open {opened}/{ROUND_TRIPS}, k-1 fails {below_refused}/{ROUND_TRIPS}");
    if verified == ROUND_TRIPS && opened == ROUND_TRIPS && below_refused == ROUND_TRIPS {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn robustness() -> Verdict {
    let p = Params::new(3, 5).unwrap();
    let mut rng = rng("robustness");
    let grp = "robust-venue";
    let master = tibgs::setup(p, &mut rng).unwrap();
    let gsks = master.group_key_shares(grp);
    let gvks = GroupVerifyKeys::derive(&master.mpk, grp);
    let managers: Vec<usize> = (0..5).collect();
    let mut run = |corrupt: usize| {
        let mut ok = 0;
        let mut failed_or_detected = 0;
        for t in 0..ROBUSTNESS_TRIALS {
            let user = format!("author-{t}");
            let bad: Vec<usize> = managers.choose_multiple(&mut rng, corrupt).copied().collect();
            let mut shares: Vec<_> = gsks
                .iter()
                .enumerate()
                .map(|(i, g)| {
                    let s = tibgs::ext_share(&user, g);
                    if bad.contains(&i) {
                        corrupt_user_share(s)
                    } else {
                        s
                    }
                })
                .collect();
            shares.shuffle(&mut rng);
            match tibgs::reconst_key(&user, &shares, &gvks, p) {
                Ok(r) => {
                    let mut flagged: Vec<u32> = r.rejected.iter().map(|i| i.get()).collect();
                    flagged.sort_unstable();
                    let mut expect: Vec<u32> = bad.iter().map(|i| *i as u32 + 1).collect();
                    expect.sort_unstable();
                    let sig = tibgs::sign(b"m", &r.key, &mut rng);
                    if r.key.is_valid() && tibgs::verify_with(b"m", &sig, &gvks.gpk) && flagged == expect {
                        ok += 1;
                    }
                    if flagged == expect && !flagged.is_empty() {
                        failed_or_detected += 1;
                    }
                }
                Err(_) => failed_or_detected += 1,
            }
        }
        (ok, failed_or_detected)
    };
    let (two_ok, _) = run(2);
    let (_, three_caught) = run(3);
    verdict(
        two_ok == ROBUSTNESS_TRIALS && three_caught == ROBUSTNESS_TRIALS,
        format!("2 corrupt: reconst ok {two_ok}/{ROBUSTNESS_TRIALS}; 3 corrupt: failed or detected {three_caught}/{ROBUSTNESS_TRIALS}"),
    )
}

fn subsets(n: u32) -> impl Iterator<Item = Vec<u32>> {
    (0u32..1 << n).map(move |mask| (1..=n).filter(|i| mask & (1 << (i - 1)) != 0).collect())
}

fn tsig_iff() -> Verdict {
    let mut rng = rng("tsig");
    let msg = b"acc_pub payout";
    let (mut at_least_k, mut identical, mut below_k, mut below_verifying) = (0, 0, 0, 0);
    for n in 1..=5u32 {
        for k in 1..=n {
            let p = Params::new(k, n).unwrap();
            let keys = tsig::thres_keygen(p, &mut rng).unwrap();
            let shares: Vec<_> = ShareIndex::all(n).map(|i| tsig::thres_sign(msg, keys.share(i).unwrap())).collect();
            let mut reference: Option<[u8; tsig::SIGNATURE_LEN]> = None;
            for sub in subsets(n) {
                let picked: Vec<_> = sub.iter().map(|i| shares[*i as usize - 1]).collect();
                if sub.len() >= k as usize {
                    at_least_k += 1;
                    if let Ok(sig) = tsig::sig_share_comb(&picked, p) {
                        let bytes = sig.to_bytes();
                        let same = *reference.get_or_insert(bytes) == bytes;
                        if same && tsig::ts_verify(&keys.pk, msg, &sig) {
                            identical += 1;
                        }
                    }
                } else {
                    below_k += 1;
                    if tsig::sig_share_comb(&picked, p).is_ok_and(|s| tsig::ts_verify(&keys.pk, msg, &s)) {
                        below_verifying += 1;
                    }
                    if let Ok(lower) = Params::new(sub.len() as u32, n) {
                        if tsig::sig_share_comb(&picked, lower).is_ok_and(|s| tsig::ts_verify(&keys.pk, msg, &s)) {
                            below_verifying += 1;
                        }
                    }
                }
            }
        }
    }
    verdict(
        identical == at_least_k && below_verifying == 0,
        format!("{identical}/{at_least_k} >=k subsets verify byte-identically; {below_verifying} verifying of {below_k} <k subsets"),
    )
}

fn vss_suite() -> Verdict {
    let mut rng = rng("vss");
    let (mut agree, mut total) = (0, 0);
    for n in 1..=8u32 {
        for k in 1..=n {
            let p = Params::new(k, n).unwrap();
            let t = DealerlessRun::new(p).unwrap().run(&mut rng).unwrap();
            let secret = vss::reconstruct(p, &t.final_shares).unwrap();
            for sub in subsets(n).filter(|s| s.len() == k as usize) {
                total += 1;
                let shares: Vec<_> = sub.iter().map(|i| (idx(*i), t.share(idx(*i)).unwrap())).collect();
                if vss::reconstruct(p, &shares) == Ok(secret) {
                    agree += 1;
                }
            }
        }
    }
    let mut detected = 0;
    for _ in 0..TAMPERINGS {
        let n = rng.gen_range(2..=8);
        let k = rng.gen_range(1..=n);
        let p = Params::new(k, n).unwrap();
        let mut d = vss::deal(p, idx(1), openpub::pairing::scalar_random(&mut rng), &mut rng).unwrap();
        let victim = rng.gen_range(1..=n);
        d.sub_shares[victim as usize - 1] += openpub::pairing::scalar_random_nonzero(&mut rng);
        let caught = !vss::verify_share(&d, idx(victim), &d.sub_share(idx(victim)).unwrap());
        let refused = matches!(vss::aggregate_shares(&[d], idx(victim)), Err(VssError::UnverifiedDealing(_)));
        if caught && refused {
            detected += 1;
        }
    }
    verdict(
        agree == total && detected == TAMPERINGS,
        format!("{agree}/{total} k-subsets agree (n<=8); {detected}/{TAMPERINGS} tamperings detected"),
    )
}

fn anonymity() -> Verdict {
    let p = Params::new(3, 4).unwrap();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    let mut errors = Vec::new();
    let master = tibgs::setup(p, &mut rng("anonymity-setup")).unwrap();
    let scheme: Vec<Box<dyn AnonymityAdversary>> = vec![
        Box::new(games::RandomGuess),
        Box::new(games::ByteInspection),
        Box::new(games::PairingLinkage::default()),
        Box::new(games::PartialOpen::default()),
    ];
    for mut adv in scheme {
        let name = adv.name();
        match games::anonymity_game_with(&master, ANONYMITY_TRIALS, adv.as_mut(), &mut rng(name)) {
            Ok(o) => {
                worst = worst.max(o.score);
                parts.push(format!("{name} {:.3}", o.score));
            }
            Err(e) => errors.push(format!("{name}: {e}")),
        }
    }
    let chain: Vec<Box<dyn ChainAdversary>> = vec![Box::new(anonymity::RandomGuess), Box::new(anonymity::ChainScraping)];
    for mut adv in chain {
        let name = adv.name();
        match anonymity::anonymity_game_e2e(p, ANONYMITY_TRIALS, adv.as_mut(), &mut rng(name)) {
            Ok(o) => {
                worst = worst.max(o.score);
                parts.push(format!("workflow/{name} {:.3}", o.score));
            }
            Err(e) => errors.push(format!("workflow/{name}: {e}")),
        }
    }
    verdict(
        errors.is_empty() && worst <= MAX_ADVANTAGE,
        format!("max advantage {worst:.3} <= {MAX_ADVANTAGE} over {ANONYMITY_TRIALS} trials [{}]{}", parts.join(", "), errors.join("; ")),
    )
}

fn end_to_end() -> Verdict {
    let report = match run_scenario(&ScenarioConfig::demo()) {
        Ok(r) => r,
        Err(e) => return verdict(false, e.to_string()),
    };
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/demo_events.jsonl");
    let golden_ok = std::fs::read_to_string(&path).is_ok_and(|g| g == report.events_jsonl());
    let again = run_scenario(&ScenarioConfig::demo()).is_ok_and(|r| r.events_jsonl() == report.events_jsonl() && r.chain_export() == report.chain_export());
    let required = [
        "token_conservation",
        "deposit_refund",
        "reviewer_fees",
        "author_incentive",
        "opened_identities",
        "pre_open_secrecy",
    ];
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.holds).map(|c| c.name.as_str()).collect();
    let missing: Vec<&&str> = required.iter().filter(|r| report.check(r).is_none()).collect();
    let decisions: Vec<_> = report
        .final_state
        .papers
        .values()
        .filter_map(|p| p.outcome.as_ref().map(|o| o.result))
        .collect();
    let one_each = decisions.len() == 2 && decisions[0] != decisions[1];
    verdict(
        failed.is_empty() && missing.is_empty() && golden_ok && again && one_each,
        format!(
            "{} invariants hold, failed {failed:?}; decisions {decisions:?}; golden log {}; replay identical {}",
            report.checks.len() - failed.len(),
            if golden_ok { "matches" } else { "differs" },
            again
        ),
    )
}

fn consensus() -> Verdict {
    let fx = LoadFixture::new(1, 4, &mut rng("consensus-fixture")).unwrap();
    let spec = StreamSpec {
        mix: vec![(TxClass::TxSig, 2), (TxClass::TxTsig, 1), (TxClass::TxGsig, 1)],
        rate_per_s: 50.0,
        count: 40,
        start_us: 0,
    };
    let stream = inject_tx(&fx, &spec, &mut rng("consensus-stream"));
    let mut parts = Vec::new();
    let mut pass = true;
    for (i, behavior) in Behavior::ALL.into_iter().enumerate() {
        let byz = 1 + (i as u32 % 4);
        let mut cfg = SimConfig::new(1, 100 + i as u64);
        cfg.faults = FaultPlan::single(byz, behavior);
        let mut sim = Simulation::new(cfg, fx.validator_keys.clone(), fx.state()).unwrap();
        stream.submit_to(&mut sim);
        sim.run_until(30_000_000);
        let m = measure(&sim);
        let ok = sim.honest_logs_consistent() && m.committed_txs == stream.len();
        pass &= ok;
        parts.push(format!("{} at {byz}: {}/{} committed", behavior.name(), m.committed_txs, stream.len()));
    }
    verdict(pass, format!("honest logs identical; {}", parts.join(", ")))
}

fn performance() -> Verdict {
    let mut failures = Vec::new();
    let mut parts = Vec::new();

    // (a) wall-clock op timings
    let mut rows = Vec::new();
    for (k, n) in [(7, 10), (11, 16), (15, 22)] {
        rows.push(bench_tibgs(Params::new(k, n).unwrap(), 2, 30, &mut rng("bench")).unwrap());
    }
    let get = |r: &[OpTiming], op: &str| r.iter().find(|t| t.op == op).unwrap().wall_us;
    let pair = [Params::new(11, 16).unwrap(), Params::new(15, 22).unwrap()];
    let interleaved = bench_sign_verify(&pair, 60, &mut rng("bench-sign-verify")).unwrap();
    let spread = |op: &str| {
        let a = get(&interleaved[..2], op);
        let b = get(&interleaved[2..], op);
        a.max(b) / a.min(b)
    };
    let (sign_spread, verify_spread) = (spread("sign"), spread("verify"));
    let setups: Vec<f64> = rows.iter().map(|r| get(r, "setup")).collect();
    let increasing = setups.windows(2).all(|w| w[1] > w[0]);
    if sign_spread >= SIGN_VERIFY_SPREAD || verify_spread >= SIGN_VERIFY_SPREAD || !increasing {
        failures.push("a");
    }
    parts.push(format!(
        "(a) sign x{sign_spread:.2}, verify x{verify_spread:.2}, setup {:.0}/{:.0}/{:.0} ms for k=7/11/15",
        setups[0] / 1e3,
        setups[1] / 1e3,
        setups[2] / 1e3
    ));

    // (b) block bytes at equal tx count
    let fx = LoadFixture::new(1, 4, &mut rng("perf-fixture")).unwrap();
    let mut r = rng("blocks");
    let block = |class: Option<TxClass>, r: &mut ChaCha20Rng| {
        let txs = match class {
            Some(c) => (0..100).map(|i| fx.make_tx(c, i, r)).collect(),
            None => Vec::new(),
        };
        Block::new(1, fx.state().last_hash, idx(1), 0, 0, txs).size_bytes() as f64
    };
    let (gsig, sig, empty) = (block(Some(TxClass::TxGsig), &mut r), block(Some(TxClass::TxSig), &mut r), block(None, &mut r));
    if !(gsig > sig && sig > empty && gsig / sig > GSIG_SIG_BYTES_RATIO) {
        failures.push("b");
    }
    parts.push(format!("(b) 100-tx blocks gsig {gsig} B > sig {sig} B > empty {empty} B, ratio {:.2}", gsig / sig));

    // (c) saturated throughput per class under measured costs
    let mut tps_parts = Vec::new();
    for f in TPS_THRESHOLDS_F {
        let fx = LoadFixture::new(f, 4, &mut rng(&format!("tps-{f}"))).unwrap();
        let costs = fx.calibrate(20, &mut rng("calibrate"));
        let tps = |class: TxClass| {
            let stream = inject_tx(&fx, &StreamSpec::only(class, 1500, 20_000.0), &mut rng("tps-stream"));
            let mut cfg = SimConfig::new(f, 7);
            cfg.costs = costs;
            let (_, m) = run_consensus(cfg, &fx, &stream, 60_000_000).unwrap();
            m.tps
        };
        let (s, t, g) = (tps(TxClass::TxSig), tps(TxClass::TxTsig), tps(TxClass::TxGsig));
        if !(s >= t && t > g) {
            failures.push("c");
        }
        tps_parts.push(format!("({},{}) sig {s:.0} tsig {t:.0} gsig {g:.0}", 2 * f + 1, 3 * f + 1));
    }
    parts.push(format!("(c) TPS {}", tps_parts.join("; ")));

    // (d) signature length
    let mut lengths = std::collections::BTreeSet::new();
    for (k, n) in [(1, 1), (3, 4), (11, 16)] {
        let p = Params::new(k, n).unwrap();
        let mut r = rng("lengths");
        let master = tibgs::setup(p, &mut r).unwrap();
        let gsks = master.group_key_shares("g");
        let gvks = GroupVerifyKeys::derive(&master.mpk, "g");
        for u in ["a", "bob@example.org", "a-much-longer-identifier@reviews.example.org"] {
            let shares: Vec<_> = gsks.iter().map(|g| tibgs::ext_share(u, g)).collect();
            let key = tibgs::reconst_key(u, &shares, &gvks, p).unwrap().key;
            lengths.insert(tibgs::sign(b"paper", &key, &mut r).to_bytes().len());
        }
    }
    if lengths.len() != 1 {
        failures.push("d");
    }
    parts.push(format!("(d) signature lengths {lengths:?}"));
    verdict(failures.is_empty(), format!("{}{}", parts.join("; "), if failures.is_empty() { String::new() } else { format!("; failed {failures:?}") }))
}

fn main() {
    // Numeric arguments pick criteria (`cargo test --test acceptance -- 1 5`);
    // other libtest flags are ignored.
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("tibgs correctness", tibgs_correctness),
        ("robustness", robustness),
        ("tsig iff", tsig_iff),
        ("vss", vss_suite),
        ("anonymity", anonymity),
        ("end-to-end scenario", end_to_end),
        ("consensus", consensus),
        ("performance trends", performance),
    ];
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let picked: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !picked.is_empty() && !picked.contains(&(i + 1)) {
            continue;
        }
        let start = Instant::now();
        let v = f();
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {} {:<20} {} ({:.1}s): {}",
            i + 1,
            name,
            if v.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            v.detail
        );
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
