use bevsel_core::bandit::{
    stationary_means, Alg1, EnsembleParams, Phase, Policy, PolicyKind, RestlessChain, SlotContext, TransitionMatrix,
};
use bevsel_core::rng::stream_rng;
use bevsel_core::sim::{run_synthetic, SyntheticConfig};
use bevsel_core::{Error, KernelKind};
use proptest::prelude::*;
use rand::Rng;

fn policy_kind() -> impl Strategy<Value = PolicyKind> {
    prop::sample::select(vec![
        PolicyKind::Alg1,
        PolicyKind::Ecop,
        PolicyKind::Mass,
        PolicyKind::Random,
        PolicyKind::Optimal,
    ])
}

fn drive(policy: &mut dyn Policy, n: usize, slots: u64, seed: u64) -> Vec<(Vec<u32>, Phase, u32)> {
    let mut rng = stream_rng(seed, 42, 0);
    let levels: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
    let mut out = Vec::new();
    for t in 1..=slots {
        let hidden: Vec<f64> = levels.iter().map(|l| l + 0.1 * rng.gen::<f64>()).collect();
        let sel = policy
            .select(&SlotContext {
                t,
                hidden: Some(&hidden),
            })
            .unwrap();
        for &id in &sel.selected {
            policy.observe(id, hidden[id as usize - 1]).unwrap();
        }
        out.push((sel.selected, sel.phase, sel.epoch));
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_policy_respects_the_budget(kind in policy_kind(), n in 1usize..12, kf in 0.0..1.0f64, seed in 0..1000u64) {
        let k = 1 + ((n - 1) as f64 * kf) as usize;
        let mut p = kind.build(n, k, 0.5, stream_rng(seed, 6, 0)).unwrap();
        for (ids, _, _) in drive(p.as_mut(), n, 300, seed) {
            prop_assert_eq!(ids.len(), k);
            prop_assert!(ids.windows(2).all(|w| w[0] < w[1]), "{ids:?}");
            prop_assert!(ids.iter().all(|&i| i >= 1 && i as usize <= n));
        }
    }

    #[test]
    fn alg1_replays(n in 2usize..10, kf in 0.0..1.0f64, seed in 0..1000u64) {
        let k = 1 + ((n - 1) as f64 * kf) as usize;
        let a = drive(&mut Alg1::new(n, k, 0.5).unwrap(), n, 500, seed);
        let b = drive(&mut Alg1::new(n, k, 0.5).unwrap(), n, 500, seed);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn alg1_epochs_have_doubling_lengths(n in 2usize..10, kf in 0.0..1.0f64, d in 0.2..3.0f64, seed in 0..1000u64) {
        let k = 1 + ((n - 1) as f64 * kf) as usize;
        let groups = n.div_ceil(k) as u64;
        let trace = drive(&mut Alg1::new(n, k, d).unwrap(), n, 3000, seed);
        let mut blocks: Vec<(Phase, u32, u64)> = Vec::new();
        for (_, phase, epoch) in &trace {
            match blocks.last_mut() {
                Some(b) if b.0 == *phase && b.1 == *epoch => b.2 += 1,
                _ => blocks.push((*phase, *epoch, 1)),
            }
        }
        prop_assert_eq!(blocks[0], (Phase::Init, 0, groups));
        let last = blocks.len() - 1;
        for (i, &(phase, epoch, len)) in blocks.iter().enumerate().skip(1) {
            let want = match phase {
                Phase::Explore => groups << (epoch - 1),
                Phase::Exploit => 1u64 << (epoch - 1),
                other => return Err(TestCaseError::fail(format!("unexpected {other} after init"))),
            };
            if i == last {
                prop_assert!(len <= want);
            } else {
                prop_assert_eq!(len, want, "{} epoch {}", phase, epoch);
            }
        }
    }
}

#[test]
fn synthetic_regret_decomposes_per_slot() {
    let cfg = SyntheticConfig {
        ensemble: EnsembleParams::default(),
        k: 2,
        d: 0.5,
        horizon: 5000,
        policy: PolicyKind::Alg1,
        check_bounds: true,
    };
    for seed in 0..5 {
        let mut sum = 0.0;
        run_synthetic(&cfg, seed, |s| {
            assert!((s.realized + s.regret_increment - s.optimal).abs() < 1e-12);
            assert_eq!(s.realized, s.rewards.iter().sum::<f64>());
            sum += s.regret_increment;
            assert!((sum - s.cumulative_regret).abs() < 1e-12 * s.t as f64 * s.optimal.max(1.0));
            Ok(())
        })
        .unwrap();
    }
}

#[test]
fn alg1_settles_on_the_stationary_top_k() {
    let t_max = 100_000u64;
    let mut fractions = Vec::new();
    for seed in 0..20 {
        let cfg = SyntheticConfig {
            ensemble: EnsembleParams::default(),
            k: 2,
            d: 0.5,
            horizon: t_max,
            policy: PolicyKind::Alg1,
            check_bounds: false,
        };
        let (mut hits, mut total) = (0u64, 0u64);
        let mut top = Vec::new();
        let out = run_synthetic(&cfg, seed, |s| {
            if top.is_empty() {
                top = bevsel_core::bandit::build_ensemble(&cfg.ensemble, seed)
                    .and_then(|c| stationary_means(&c, cfg.k))
                    .map(|a| a.top_ids())?;
            }
            if s.t >= t_max / 2 && s.selection.phase == Phase::Exploit {
                total += 1;
                hits += (s.selection.selected == top) as u64;
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(out.analysis.top_ids(), top);
        fractions.push(hits as f64 / total as f64);
    }
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    assert!(mean >= 0.95, "top-K fraction {mean:.3} ({fractions:?})");
}

#[test]
fn optimal_needs_hidden_values() {
    let mut p = PolicyKind::Optimal.build(3, 1, 0.5, stream_rng(0, 6, 0)).unwrap();
    assert!(p.select(&SlotContext { t: 1, hidden: None }).is_err());
    let sel = p
        .select(&SlotContext {
            t: 1,
            hidden: Some(&[0.1, 0.9, 0.5]),
        })
        .unwrap();
    assert_eq!(sel.selected, vec![2]);
}

#[test]
fn bad_budgets_are_rejected() {
    for kind in [PolicyKind::Alg1, PolicyKind::Ecop, PolicyKind::Random] {
        assert!(kind.build(4, 0, 0.5, stream_rng(0, 6, 0)).is_err());
        assert!(kind.build(4, 5, 0.5, stream_rng(0, 6, 0)).is_err());
    }
    assert!(Alg1::new(4, 2, 0.0).is_err());
    assert!("greedy".parse::<PolicyKind>().is_err());
}

#[test]
fn two_state_chain_stationary_law() {
    let (a, b) = (0.3, 0.1);
    let m = TransitionMatrix::new(vec![vec![1.0 - a, a], vec![b, 1.0 - b]]).unwrap();
    let pi = m.stationary().unwrap();
    assert!((pi[0] - b / (a + b)).abs() < 1e-10);
    assert!((pi[1] - a / (a + b)).abs() < 1e-10);
    let chain = RestlessChain::new(vec![0.0, 1.0], m.clone(), m, 0).unwrap();
    assert!((chain.stationary_mean().unwrap() - a / (a + b)).abs() < 1e-10);
}

#[test]
fn kernel_validation_errors() {
    let leaky = TransitionMatrix::new(vec![vec![0.5, 0.4], vec![0.5, 0.5]]).unwrap();
    assert!(matches!(
        leaky.validate(KernelKind::Passive),
        Err(Error::NotStochastic { row: 0, .. })
    ));
    assert!(TransitionMatrix::new(vec![vec![1.0], vec![0.5, 0.5]]).is_err());
    let reducible = TransitionMatrix::new(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
    assert!(matches!(
        reducible.validate(KernelKind::Active),
        Err(Error::ReducibleKernel { .. })
    ));
    let periodic = TransitionMatrix::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    assert!(matches!(
        periodic.validate(KernelKind::Active),
        Err(Error::PeriodicKernel { .. })
    ));
}
