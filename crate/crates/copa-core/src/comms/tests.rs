use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bound::{verify_bound, MdpSpec, TabularMdp};
use super::{theorem_bound, BoundInputs, CommsConfig, CommsError, StrategyLedger};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn boundary_inclusive_three_four_five() {
    let cfg = CommsConfig::new(4, 5.0, 2).unwrap();
    let mut ledger = StrategyLedger::new(2);
    let out = ledger.tick(0, &cfg, &[(1, vec![3.0, 4.0])]).unwrap();
    assert!(out[0].sent, "norm exactly 5 must deliver at β = 5");
    assert_eq!(out[0].z, vec![3.0, 4.0]);

    // Same proposal again: distance 0 < β, retained.
    let out = ledger.tick(4, &cfg, &[(1, vec![3.0, 4.0])]).unwrap();
    assert!(!out[0].sent);
    assert_eq!(out[0].z, vec![3.0, 4.0]);

    // Slightly under the threshold from the last delivery: retained.
    let out = ledger.tick(8, &cfg, &[(1, vec![3.0, 8.999])]).unwrap();
    assert!(!out[0].sent);
    assert_eq!(out[0].z, vec![3.0, 4.0]);
}

#[test]
fn beta_zero_always_delivers() {
    let cfg = CommsConfig::new(2, 0.0, 3).unwrap();
    let mut ledger = StrategyLedger::new(3);
    let mut r = rng(40);
    for t in 0..20 {
        let props: Vec<(u64, Vec<f64>)> = (0..4)
            .map(|id| (id, (0..3).map(|_| r.gen_range(-1.0..1.0)).collect()))
            .collect();
        let out = ledger.tick(t * 2, &cfg, &props).unwrap();
        assert!(out.iter().all(|d| d.sent));
    }
    assert_eq!(ledger.deliveries, 80);
}

#[test]
fn off_tick_invocation_rejected() {
    let cfg = CommsConfig::new(4, 0.0, 2).unwrap();
    let mut ledger = StrategyLedger::new(2);
    let err = ledger.tick(3, &cfg, &[]).unwrap_err();
    assert!(matches!(err, CommsError::OffTick { step: 3, period: 4 }));
    assert_eq!(ledger.ticks, 0, "rejected tick must not count");
}

#[test]
fn fixed_team_quarter_frequency() {
    let cfg = CommsConfig::new(4, 0.0, 2).unwrap();
    let mut ledger = StrategyLedger::new(2);
    let ids = [0u64, 1, 2];
    let mut r = rng(41);
    for t in 0..100 {
        if t % cfg.period == 0 {
            let props: Vec<(u64, Vec<f64>)> = ids
                .iter()
                .map(|&id| (id, vec![r.gen_range(-1.0..1.0), r.gen()]))
                .collect();
            ledger.tick(t, &cfg, &props).unwrap();
        }
        ledger.note_step(&ids);
    }
    assert_eq!(ledger.frequency(), 0.25);

    // Per-step broadcasting normalizes to exactly 1.
    let cfg1 = CommsConfig::new(1, 0.0, 2).unwrap();
    let mut ledger1 = StrategyLedger::new(2);
    for t in 0..17 {
        ledger1.tick(t, &cfg1, &[(0, vec![0.1, 0.2])]).unwrap();
        ledger1.note_step(&[0]);
    }
    assert_eq!(ledger1.frequency(), 1.0);
}

#[test]
fn huge_beta_delivers_nothing() {
    let cfg = CommsConfig::new(1, 10.0, 2).unwrap();
    let mut ledger = StrategyLedger::new(2);
    let mut r = rng(42);
    for t in 0..50 {
        let props = vec![(0u64, vec![r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)])];
        let out = ledger.tick(t, &cfg, &props).unwrap();
        assert!(!out[0].sent);
        assert_eq!(out[0].z, vec![0.0, 0.0], "zero init never replaced");
        ledger.note_step(&[0]);
    }
    assert_eq!(ledger.deliveries, 0);
    assert_eq!(ledger.frequency(), 0.0);
}

#[test]
fn delivered_is_fresh_or_previous_never_third() {
    let cfg = CommsConfig::new(1, 1.2, 3).unwrap();
    let mut ledger = StrategyLedger::new(3);
    let mut r = rng(43);
    let mut walk = vec![0.0; 3];
    let mut last_delivered = vec![0.0; 3];
    for t in 0..200 {
        for w in walk.iter_mut() {
            *w += r.gen_range(-0.8..0.8);
        }
        let out = ledger.tick(t, &cfg, &[(7, walk.clone())]).unwrap();
        if out[0].sent {
            assert_eq!(out[0].z, walk);
            last_delivered = walk.clone();
        } else {
            assert_eq!(out[0].z, last_delivered);
        }
    }
    assert!(ledger.deliveries > 0);
}

#[test]
fn newborn_passes_same_gate_from_zero() {
    let cfg = CommsConfig::new(4, 2.0, 2).unwrap();
    let mut ledger = StrategyLedger::new(2);
    ledger.note_step(&[5]);
    assert_eq!(ledger.z_for(5).unwrap(), &[0.0, 0.0]);

    // Proposal of norm 1 < β from the zero vector: retained.
    let out = ledger.tick(0, &cfg, &[(5, vec![1.0, 0.0])]).unwrap();
    assert!(!out[0].sent);
    // Norm 2.5 ≥ β: delivered.
    let out = ledger.tick(4, &cfg, &[(5, vec![1.5, 2.0])]).unwrap();
    assert!(out[0].sent);
}

#[test]
fn beta_zero_delivery_count_dominates_any_beta() {
    let mut r = rng(44);
    for _ in 0..50 {
        let steps = 40;
        let props: Vec<Vec<f64>> = {
            let mut walk = vec![0.0; 2];
            (0..steps)
                .map(|_| {
                    for w in walk.iter_mut() {
                        *w += r.gen_range(-1.0..1.0);
                    }
                    walk.clone()
                })
                .collect()
        };
        let count = |beta: f64| {
            let cfg = CommsConfig::new(1, beta, 2).unwrap();
            let mut ledger = StrategyLedger::new(2);
            for (t, p) in props.iter().enumerate() {
                ledger.tick(t, &cfg, &[(0, p.clone())]).unwrap();
            }
            ledger.deliveries
        };
        let at_zero = count(0.0);
        assert_eq!(at_zero, steps as u64);
        let beta = r.gen_range(0.0..4.0);
        assert!(count(beta) <= at_zero);
    }
}

#[test]
fn aggregate_frequency_nonincreasing_over_sweep() {
    // The per-trajectory delivery count is NOT exactly monotone in β (the
    // retained-strategy feedback can flip individual decisions), but the
    // aggregate frequency over a batch of trajectories is, for the spread-out
    // sweep values used in evaluation.
    let betas = [0.0, 2.0, 3.0, 5.0, 8.0];
    let mut freqs = Vec::new();
    for &beta in &betas {
        let cfg = CommsConfig::new(4, beta, 4).unwrap();
        let mut ledger = StrategyLedger::new(4);
        let mut r = rng(45);
        for _episode in 0..60 {
            let mut walk = vec![0.0; 4];
            for t in 0..100usize {
                if t % 4 == 0 {
                    for w in walk.iter_mut() {
                        *w += r.gen_range(-1.5..1.5);
                    }
                    ledger.tick(t, &cfg, &[(0, walk.clone())]).unwrap();
                }
                ledger.note_step(&[0]);
            }
            ledger.retire(0);
        }
        freqs.push(ledger.frequency());
    }
    assert_eq!(freqs[0], 0.25, "β = 0 delivers at every tick: f = 1/T");
    for pair in freqs.windows(2) {
        assert!(pair[1] <= pair[0], "sweep must not increase f: {freqs:?}");
    }
    assert!(freqs[4] < 0.05, "large β should rarely deliver: {freqs:?}");
}

#[test]
fn bound_formula_examples() {
    let b = theorem_bound(&BoundInputs { n_a: 2, eta: 1.0, beta: 0.5, kappa: 0.1, gamma: 0.9 })
        .unwrap();
    assert!((b - 22.0).abs() < 1e-12);

    let zero = theorem_bound(&BoundInputs { n_a: 5, eta: 3.0, beta: 0.0, kappa: 0.0, gamma: 0.7 })
        .unwrap();
    assert_eq!(zero, 0.0);

    let b1 = theorem_bound(&BoundInputs { n_a: 3, eta: 0.8, beta: 0.2, kappa: 0.0, gamma: 0.95 })
        .unwrap();
    let b2 = theorem_bound(&BoundInputs { n_a: 3, eta: 0.8, beta: 0.4, kappa: 0.0, gamma: 0.95 })
        .unwrap();
    assert!((b2 - 2.0 * b1).abs() < 1e-12);

    for gamma in [1.0, 1.5, -0.1] {
        let r = theorem_bound(&BoundInputs { n_a: 1, eta: 1.0, beta: 1.0, kappa: 0.0, gamma });
        assert!(r.is_err(), "γ = {gamma} must be rejected");
    }
    let r = theorem_bound(&BoundInputs { n_a: 1, eta: -1.0, beta: 1.0, kappa: 0.0, gamma: 0.9 });
    assert!(r.is_err());
}

#[test]
fn value_iteration_closed_form_single_state() {
    let spec = MdpSpec::new(1, 1, 2, 0.9).unwrap();
    let mut mdp = TabularMdp::random(spec, &mut rng(46));
    // Overwrite with the deterministic self-loop: action 0 pays 1, action 1
    // pays 0.
    mdp.set_reward(0, 0, 1.0);
    mdp.set_reward(0, 1, 0.0);
    mdp.set_transition_deterministic(0, 0, 0);
    mdp.set_transition_deterministic(0, 1, 0);
    let q = mdp.value_iteration();
    assert!((q[0] - 10.0).abs() < 1e-9, "Q(a0) = 1/(1−γ), got {}", q[0]);
    assert!((q[1] - 9.0).abs() < 1e-9, "Q(a1) = γ/(1−γ), got {}", q[1]);
    let v = mdp.policy_value(&[0]);
    assert!((v[0] - 10.0).abs() < 1e-9);
}

#[test]
fn exact_inputs_give_exactly_zero_gap() {
    for seed in 0..20u64 {
        let spec = MdpSpec::new(12, 2, 3, 0.9).unwrap();
        let report = verify_bound(spec, 0.0, 1.0, 0.0, 1, seed, false).unwrap();
        assert_eq!(report.max_gap, 0.0, "seed {seed}");
        assert_eq!(report.bound, 0.0);
        assert!(report.holds);
    }
}

#[test]
fn random_trials_respect_bound() {
    let spec = MdpSpec::new(20, 2, 3, 0.9).unwrap();
    let report = verify_bound(spec, 0.05, 1.0, 0.1, 100, 7, false).unwrap();
    assert!(report.holds, "max gap {} vs bound {}", report.max_gap, report.bound);
    assert!(report.max_gap >= 0.0);
    assert!((report.bound - 2.0 * (2.0 * 0.1 + 0.05) / 0.1).abs() < 1e-9);
}

#[test]
fn adversarial_surface_respects_bound_with_slack() {
    let spec = MdpSpec::new(15, 2, 3, 0.9).unwrap();
    let report = verify_bound(spec, 0.05, 1.0, 0.1, 50, 8, true).unwrap();
    assert!(report.holds);
    assert!(report.max_gap > 0.0, "adversarial case should bite");
    assert!(report.min_slack >= 0.0);
}

#[test]
fn oversized_mdps_rejected() {
    assert!(MdpSpec::new(51, 2, 2, 0.9).is_err());
    assert!(MdpSpec::new(10, 5, 2, 0.9).is_err());
    assert!(MdpSpec::new(10, 2, 4, 0.9).is_err());
    assert!(MdpSpec::new(10, 2, 2, 1.0).is_err());
    assert!(MdpSpec::new(50, 4, 3, 0.99).is_ok());
}

#[test]
fn config_invariants_enforced() {
    assert!(CommsConfig::new(0, 0.0, 4).is_err());
    assert!(CommsConfig::new(1, -0.5, 4).is_err());
    assert!(CommsConfig::new(1, f64::NAN, 4).is_err());
    assert!(CommsConfig::new(1, 0.0, 0).is_err());
    assert!(CommsConfig::new(4, 2.5, 16).is_ok());
}
