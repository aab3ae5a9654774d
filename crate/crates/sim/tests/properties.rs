//! Properties that must hold for any scenario.

use proptest::prelude::*;
use snow_sim::config::{Action, Algorithm, ScenarioConfig};
use snow_sim::metrics::{compute_ldt, compute_rmr, scope_to_fixed_subset, unscoped, RunLabel, Scope};
use snow_sim::scenario::{initial_id, run};

fn algorithm() -> impl Strategy<Value = Algorithm> {
    prop::sample::select(Algorithm::ALL.to_vec())
}

/// Random crashes, joins and leaves among the first `n` nodes.
fn script(n: usize) -> impl Strategy<Value = Vec<Action>> {
    let action = prop_oneof![
        (0..8000u64, 0..n).prop_map(|(at, node)| Action::Crash { at, node }),
        (0..8000u64).prop_map(|at| Action::Join { at }),
        (0..8000u64, 0..n).prop_map(|(at, node)| Action::Leave { at, node, joiner: false }),
    ];
    prop::collection::vec(action, 0..4)
}

fn scenario() -> impl Strategy<Value = (ScenarioConfig, Algorithm, u64)> {
    (4usize..40, prop::sample::select(vec![2usize, 4, 6]), algorithm(), any::<u64>(), 1usize..5, any::<bool>())
        .prop_flat_map(|(n, k, alg, seed, messages, reliable)| {
            script(n).prop_map(move |script| {
                let mut c = ScenarioConfig::new(alg, n, k);
                c.messages = messages;
                c.reliable = reliable;
                c.script = script;
                (c, alg, seed)
            })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Conservation, clock monotonicity, at-most-once delivery and, for
    /// Snow, agreement of every surviving view with the live set.
    #[test]
    fn runs_keep_their_invariants((cfg, alg, seed) in scenario()) {
        let r = run(&cfg, alg, cfg.n, cfg.k, seed, Scope::Fixed).unwrap();
        prop_assert!(r.passed(), "{:?} {:?}", r.violations, cfg.script);
        prop_assert_eq!(r.stats.clock_regressions, 0);
        if alg.is_snow() {
            prop_assert_eq!(r.duplicate_deliveries, 0);
        }
    }

    #[test]
    fn fault_free_snow_is_exact(n in 2usize..120, k in prop::sample::select(vec![2usize, 4, 6, 8]), seed in any::<u64>()) {
        let cfg = ScenarioConfig::new(Algorithm::Snow, n, k);
        let r = run(&cfg, Algorithm::Snow, n, k, seed, Scope::All).unwrap();
        prop_assert!(r.passed(), "{:?}", r.violations);
        prop_assert_eq!(r.records[0].reliability, 1.0);
        prop_assert_eq!(r.records[0].rmr, Some(0.0));
        let bound = snow_core::routing::tree_height_bound(n, k) as u32;
        prop_assert!(r.records[0].max_hops.unwrap() < bound);
        // Every hop costs at most the largest processing and straggler delay.
        let hop = cfg.proc_delay_ms[1] + cfg.straggler_delay_ms;
        prop_assert!(r.records[0].ldt_ms.unwrap() <= hop * (bound as u64 - 1));
    }

    #[test]
    fn same_seed_same_trace(n in 4usize..30, alg in algorithm(), seed in any::<u64>()) {
        let mut cfg = ScenarioConfig::new(alg, n, 4);
        cfg.messages = 3;
        cfg.script = vec![Action::Join { at: 1500 }, Action::Crash { at: 2500, node: n / 2 }];
        let a = run(&cfg, alg, n, 4, seed, Scope::All).unwrap();
        let b = run(&cfg, alg, n, 4, seed, Scope::All).unwrap();
        prop_assert_eq!(a.trace_hash, b.trace_hash);
        prop_assert_eq!(a.records, b.records);
    }

    #[test]
    fn rmr_matches_its_formula(n in 2usize..10_000, m in 0u64..100_000) {
        let r = compute_rmr(m, n).unwrap();
        prop_assert!((r - (m as f64 / (n - 1) as f64 - 1.0)).abs() < 1e-12);
        prop_assert!(r >= -1.0);
    }

    #[test]
    fn ldt_is_latest_minus_start(times in prop::collection::vec(0u64..10_000, 1..50), t0 in 0u64..1000) {
        let shifted: Vec<Option<u64>> = times.iter().map(|t| Some(t + t0)).collect();
        prop_assert_eq!(compute_ldt(shifted.clone(), t0), Some(*times.iter().max().unwrap()));
        let mut missing = shifted;
        missing.push(None);
        prop_assert_eq!(compute_ldt(missing, t0), None);
    }
}

#[test]
fn degenerate_cluster_has_no_rmr() {
    assert!(compute_rmr(0, 1).is_err());
    assert_eq!(compute_rmr(9, 10).unwrap(), 0.0);
    assert_eq!(compute_rmr(18, 10).unwrap(), 1.0);
}

#[test]
fn fixed_scope_over_everyone_equals_unscoped() {
    let cfg = ScenarioConfig::new(Algorithm::Gossip, 60, 4);
    let r = run(&cfg, Algorithm::Gossip, 60, 4, 11, Scope::All).unwrap();
    let label = RunLabel {
        scenario: "scenario".into(),
        algorithm: "gossip".into(),
        k: 4,
        seed: 11,
    };
    let all: std::collections::BTreeSet<_> = (0..60).map(initial_id).collect();
    let a = unscoped(&r.logs, &label);
    let mut b = scope_to_fixed_subset(&r.logs, &all, &label);
    for x in &mut b {
        x.scope = Scope::All;
    }
    assert_eq!(a, b);
}
