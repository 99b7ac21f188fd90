use openpub::consensus::*;
use openpub::ledger::TxClass;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn fixture(f: u32, seed: u64) -> LoadFixture {
    LoadFixture::new(f, 4, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap()
}

fn mixed_stream(fx: &LoadFixture, count: usize, seed: u64) -> TxStream {
    let spec = StreamSpec {
        mix: vec![(TxClass::TxSig, 2), (TxClass::TxTsig, 1), (TxClass::TxGsig, 1)],
        rate_per_s: 40.0,
        count,
        start_us: 0,
    };
    inject_tx(fx, &spec, &mut ChaCha20Rng::seed_from_u64(seed))
}

#[test]
fn honest_run_commits_everything() {
    let fx = fixture(1, 1);
    let stream = mixed_stream(&fx, 20, 2);
    let mut sim = Simulation::new(SimConfig::new(1, 3), fx.validator_keys.clone(), fx.state()).unwrap();
    stream.submit_to(&mut sim);
    sim.run_until(5_000_000);
    let m = measure(&sim);
    assert_eq!(m.committed_txs, 20, "pending {}", m.pending_txs);
    assert!(sim.honest_logs_consistent());
    let logs = sim.honest_logs();
    let shortest = logs.iter().map(|(_, l)| l.len()).min().unwrap();
    assert!(shortest > 10);
}

#[test]
fn each_behavior_keeps_safety_and_liveness() {
    let fx = fixture(1, 4);
    let stream = mixed_stream(&fx, 16, 5);
    for behavior in Behavior::ALL {
        for byz in 1..=4u32 {
            let mut cfg = SimConfig::new(1, 10 + byz as u64);
            cfg.faults = FaultPlan::single(byz, behavior);
            let mut sim = Simulation::new(cfg, fx.validator_keys.clone(), fx.state()).unwrap();
            stream.submit_to(&mut sim);
            sim.run_until(20_000_000);
            let m = measure(&sim);
            assert!(sim.honest_logs_consistent(), "{behavior:?} at {byz}");
            assert_eq!(m.committed_txs, 16, "{behavior:?} at {byz}: pending {}", m.pending_txs);
            if matches!(behavior, Behavior::Silent | Behavior::Delay) {
                assert!(m.blocks.iter().any(|b| b.view > 0), "{behavior:?}: no view change");
                assert!(m.blocks.iter().all(|b| b.proposer != byz));
            }
        }
    }
}

#[test]
fn config_guard_rejects_too_many_faults() {
    let fx = fixture(1, 6);
    let mut cfg = SimConfig::new(1, 1);
    cfg.faults = FaultPlan::single(1, Behavior::Silent);
    cfg.faults.byzantine.insert(2, Behavior::Equivocate);
    assert!(matches!(
        Simulation::new(cfg, fx.validator_keys.clone(), fx.state()),
        Err(SimError::SafetyViolationPossible { byzantine: 2, f: 1 })
    ));
    let mut cfg = SimConfig::new(1, 1);
    cfg.n = 5;
    assert!(matches!(cfg.validate(), Err(SimError::ConfigInvalid(_))));
}

#[test]
fn zero_latency_block_interval_equals_proposal_interval() {
    let fx = fixture(1, 7);
    let mut cfg = SimConfig::new(1, 1);
    cfg.network = NetworkModel::instant();
    cfg.costs = CostModel::zero();
    let mut sim = Simulation::new(cfg.clone(), fx.validator_keys.clone(), fx.state()).unwrap();
    sim.run_until(2_050_000);
    let m = measure(&sim);
    assert_eq!(m.blocks.len(), 20);
    for w in m.blocks.windows(2) {
        assert_eq!(w[1].proposed_at_us - w[0].proposed_at_us, cfg.block_interval_us);
        assert_eq!(w[1].committed_at_us - w[0].committed_at_us, cfg.block_interval_us);
    }
}

#[test]
fn deterministic_for_fixed_seed() {
    let fx = fixture(1, 8);
    let stream = mixed_stream(&fx, 12, 9);
    let run = || {
        let mut cfg = SimConfig::new(1, 77);
        cfg.faults = FaultPlan::single(3, Behavior::Delay);
        cfg.network.drop_rate = 0.02;
        let (chain, m) = run_consensus(cfg, &fx, &stream, 8_000_000).unwrap();
        (chain.iter().map(|b| b.to_bytes()).collect::<Vec<_>>(), m.to_json())
    };
    assert_eq!(run(), run());
}

#[test]
fn lossy_network_with_partition_recovers() {
    let fx = fixture(1, 11);
    let stream = mixed_stream(&fx, 12, 12);
    let mut cfg = SimConfig::new(1, 5);
    cfg.network.drop_rate = 0.05;
    cfg.network.partitions.push(Partition {
        start_us: 200_000,
        end_us: 1_500_000,
        side: [4].into_iter().collect(),
    });
    let mut sim = Simulation::new(cfg, fx.validator_keys.clone(), fx.state()).unwrap();
    stream.submit_to(&mut sim);
    sim.run_until(15_000_000);
    assert!(sim.honest_logs_consistent());
    assert_eq!(measure(&sim).committed_txs, 12);
    let lens: Vec<usize> = sim.honest_logs().iter().map(|(_, l)| l.len()).collect();
    let (lo, hi) = (lens.iter().min().unwrap(), lens.iter().max().unwrap());
    assert!(hi - lo <= 2, "{lens:?}");
}

#[test]
fn empty_stream_for_zero_rate() {
    let fx = fixture(1, 13);
    let spec = StreamSpec::only(TxClass::TxSig, 50, 0.0);
    assert!(inject_tx(&fx, &spec, &mut ChaCha20Rng::seed_from_u64(1)).is_empty());
    let spec = StreamSpec::only(TxClass::TxGsig, 100, 1000.0);
    let s = inject_tx(&fx, &spec, &mut ChaCha20Rng::seed_from_u64(1));
    assert_eq!(s.count(TxClass::TxGsig), 100);
    let spec = StreamSpec {
        mix: vec![(TxClass::TxSig, 1), (TxClass::TxTsig, 1)],
        rate_per_s: 1000.0,
        count: 200,
        start_us: 0,
    };
    let s = inject_tx(&fx, &spec, &mut ChaCha20Rng::seed_from_u64(2));
    assert_eq!(s.count(TxClass::TxSig) + s.count(TxClass::TxTsig), 200);
    assert!(s.count(TxClass::TxSig) > 70 && s.count(TxClass::TxTsig) > 70);
    let state = fx.state();
    assert!(s.items.iter().all(|(_, t)| state.ver_tx(t)));
}
