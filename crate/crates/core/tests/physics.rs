mod common;

use common::physics::{mask_sweep, physics_sweep, random_spec};
use microgrid_core::grid::{compute_shedding, dispatch_generators, step_soc, GeneratorSpec, MicrogridConfig};
use microgrid_core::maddpg::{mask_action, power_bounds};
use microgrid_core::rng::SeedStreams;
use proptest::prelude::*;

#[test]
fn random_slots_keep_every_invariant() {
    let s = physics_sweep(20_000, 3);
    assert_eq!(s.failures(), 0, "{s:?}");
}

#[test]
fn random_masks_keep_every_invariant() {
    let s = mask_sweep(20_000, 3);
    assert_eq!(s.failures(), 0, "{s:?}");
}

#[test]
fn worked_mask_bound() {
    let mg = MicrogridConfig::default();
    // (0.9 - 0.88) * 6 MWh / 0.25 h is below the 2 MW rating.
    let (_, hi) = power_bounds(&mg.ess[0], 0.88, 0.25);
    assert!((hi - 0.48).abs() < 1e-12);
}

#[test]
fn soc_examples_match_hand_evaluation() {
    let e = &MicrogridConfig::default().ess[0];
    let up = step_soc(e, 0.5, 2.0, 0.25).unwrap().soc;
    assert!((up - (0.5 + 0.999 * 0.5 / 6.0)).abs() < 1e-15);
    assert!((up - 0.583250).abs() < 1e-6);
    let down = step_soc(e, 0.5, -2.0, 0.25).unwrap().soc;
    assert!((down - (0.5 - 1.001 * 0.5 / 6.0)).abs() < 1e-15);
    assert!((down - 0.4165833333).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn generators_share_in_proportion_to_capacity(caps in proptest::collection::vec(0.1..3.0f64, 1..6), load in 0.0..15.0f64) {
        let gens: Vec<GeneratorSpec> = caps.iter().enumerate()
            .map(|(i, &c)| GeneratorSpec { id: format!("g{i}"), p_min: 0.0, p_max: c }).collect();
        let out = dispatch_generators(&gens, load);
        let cap: f64 = caps.iter().sum();
        let total: f64 = out.iter().sum();
        prop_assert!((total - load.min(cap)).abs() < 1e-9);
        for (p, c) in out.iter().zip(&caps) {
            prop_assert!(*p >= 0.0 && *p <= c + 1e-12);
            prop_assert!((p / c - total / cap).abs() < 1e-9);
        }
    }

    #[test]
    fn shedding_fraction_is_a_clamped_imbalance(load in 0.01..10.0f64, ess in -5.0..5.0f64, pv in 0.0..10.0f64, gen in 0.0..6.0f64) {
        let (alpha, curtail) = compute_shedding(load, ess, pv, gen).unwrap();
        prop_assert!((0.0..=1.0).contains(&alpha));
        prop_assert!(curtail >= 0.0);
        let raw = (load + ess - pv - gen) / load;
        if raw >= 0.0 && raw <= 1.0 {
            prop_assert!((alpha - raw).abs() < 1e-12 && curtail == 0.0);
        }
        if raw < 0.0 {
            prop_assert!(alpha == 0.0 && (curtail + raw * load).abs() < 1e-9);
        }
    }

    #[test]
    fn mask_is_monotone_and_feasible(seed in any::<u64>(), a in -1.0..=1.0f64, b in -1.0..=1.0f64) {
        let mut rng = SeedStreams::new(seed).stream("prop.mask");
        let spec = random_spec(&mut rng);
        let soc = spec.soc_min + (spec.soc_max - spec.soc_min) * (a + 1.0) / 2.0;
        let (lo, hi) = (a.min(b), a.max(b));
        let p_lo = mask_action(lo, &spec, soc, 0.25);
        let p_hi = mask_action(hi, &spec, soc, 0.25);
        prop_assert!(p_lo.p <= p_hi.p);
        prop_assert!(p_lo.lo <= 0.0 && p_lo.hi >= 0.0);
        for p in [p_lo.p, p_hi.p] {
            let next = step_soc(&spec, soc, p, 0.25).unwrap();
            prop_assert!(next.saturation.abs() <= 1e-12);
        }
    }

    #[test]
    fn slots_hold_balance_and_bounds(seed in any::<u64>()) {
        let s = physics_sweep(50, seed);
        prop_assert_eq!(s.failures(), 0, "{:?}", s);
    }
}
