mod support;

use proptest::prelude::*;
use support::oracle::{brute_force, samples_from_steps, Step};
use support::play::{check_conservation, check_fog, check_round_trip, check_zero_sum, Setup};
use textcraft_core::metrics::compute_samples;
use textcraft_core::record::TickSample;

fn setup_strategy() -> impl Strategy<Value = Setup> {
    prop_oneof![Just(Setup::Plain), Just(Setup::AgentRaid), Just(Setup::OpponentRaid)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fog_never_reveals_unseen_state(seed in 0u64..10_000, level in 1u8..=10, ticks in 150u32..500, setup in setup_strategy()) {
        let r = check_fog(seed, level, ticks, setup);
        prop_assert!(r.is_ok(), "{}", r.unwrap_err());
    }

    #[test]
    fn rewards_are_zero_sum(seed in 0u64..10_000, level in 1u8..=10, ticks in 150u32..700, setup in setup_strategy()) {
        let r = check_zero_sum(seed, level, ticks, setup);
        prop_assert!(r.is_ok(), "{}", r.unwrap_err());
    }

    #[test]
    fn resources_are_conserved(seed in 0u64..10_000, level in 1u8..=7, ticks in 100u32..400) {
        let r = check_conservation(seed, level, ticks);
        prop_assert!(r.is_ok(), "{}", r.unwrap_err());
    }

    #[test]
    fn rendered_counts_round_trip(seed in 0u64..10_000, level in 1u8..=7, ticks in 50u32..300) {
        let r = check_round_trip(seed, level, ticks);
        prop_assert!(r.is_ok(), "{}", r.unwrap_err());
    }
}

fn sample_strategy() -> impl Strategy<Value = Vec<TickSample>> {
    let step = (0u32..=3, 0u32..=60, 0u64..200, 0u64..120, prop::bool::weighted(0.1), prop::bool::weighted(0.05));
    prop::collection::vec(step, 1..300).prop_map(|steps: Vec<Step>| samples_from_steps(steps))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn metrics_match_brute_force(samples in sample_strategy(), extra_kinds in 0u32..20) {
        let total = samples.iter().map(|s| s.completed_kinds).max().unwrap() + extra_kinds;
        let r = compute_samples("x", &samples, total, 1).unwrap();
        let (pbr, rur, apu, tr) = brute_force(&samples, total);
        prop_assert!((r.pbr - pbr).abs() < 1e-9, "pbr {} vs {}", r.pbr, pbr);
        prop_assert!((r.rur - rur).abs() < 1e-9, "rur {} vs {}", r.rur, rur);
        prop_assert!((r.apu - apu).abs() < 1e-9, "apu {} vs {}", r.apu, apu);
        prop_assert!((r.tr - tr).abs() < 1e-9, "tr {} vs {}", r.tr, tr);
        prop_assert!((0.0..=1.0).contains(&r.pbr) && (0.0..=1.0).contains(&r.apu) && (0.0..=1.0).contains(&r.tr));
    }
}
