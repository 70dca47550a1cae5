mod common;

use std::collections::BTreeMap;

use common::distflow;
use microgrid_core::grid::{resolve_slot, MicrogridConfig, SimState};
use microgrid_core::powerflow::{check_dispatch, slack_for, solve_bfs, Branch, FeederTopology, FlowLimits};
use num_complex::Complex64;
use proptest::prelude::*;

fn injections(topo: &FeederTopology, load: &BTreeMap<usize, (f64, f64)>) -> Vec<Complex64> {
    let mut s = topo.zero_injections();
    for (&bus, &(p, q)) in load {
        s[topo.bus_index(bus).unwrap()] -= Complex64::new(p, q);
    }
    s
}

#[test]
fn base_case_matches_distflow_at_every_bus() {
    let topo = FeederTopology::ieee33();
    let load = distflow::loads(distflow::IEEE33_LOADS);
    let sol = solve_bfs(&topo, &injections(&topo, &load), 1, 1e-12, 100).unwrap();
    let oracle = distflow::solve(&distflow::lines(distflow::IEEE33_BRANCHES, 10.0), 1, &load, 10.0);
    assert!(sol.converged && oracle.converged);
    for (bus, v) in &oracle.v {
        let got = sol.voltage_at(*bus).unwrap();
        assert!((got - v).abs() < 1e-4, "bus {bus}: {got} vs {v}");
    }
    assert!((sol.losses_mw - oracle.losses_mw).abs() < 1e-6);
}

#[test]
fn inflated_load_is_flagged() {
    let mg = MicrogridConfig::default();
    let topo = FeederTopology::ieee33();
    let state = |k: f64| SimState {
        slot: 0,
        soc: vec![0.5; mg.ess.len()],
        connected: true,
        outage_slots_remaining: 0,
        pv_now: vec![0.0; mg.pv.len()],
        load_now: mg.loads.iter().map(|l| k * 0.1 * l.p_max).collect(),
    };
    let idle = vec![0.0; mg.ess.len()];
    let light = check_dispatch(&topo, &resolve_slot(&mg, &state(1.0), &idle).unwrap(), &FlowLimits::default()).unwrap();
    assert!(light.feasible(), "{light:?}");
    let heavy = check_dispatch(&topo, &resolve_slot(&mg, &state(10.0), &idle).unwrap(), &FlowLimits::default()).unwrap();
    assert!(!heavy.violations.is_empty());

    // The independent solver agrees the inflated case leaves the band.
    let mut load = BTreeMap::new();
    for (bus, l) in topo.devices.loads.iter().zip(&mg.loads) {
        load.entry(*bus).or_insert((0.0, 0.0)).0 += 10.0 * 0.1 * l.p_max;
    }
    let oracle = distflow::solve(&distflow::lines(distflow::IEEE33_BRANCHES, 10.0), 1, &load, 10.0);
    assert!(oracle.v.values().any(|&v| v < 0.9));
}

#[test]
fn islanded_slot_uses_largest_generator_as_slack() {
    let mg = MicrogridConfig::default();
    let topo = FeederTopology::ieee33();
    let state = SimState {
        slot: 0,
        soc: vec![0.5; mg.ess.len()],
        connected: false,
        outage_slots_remaining: 3,
        pv_now: vec![0.0; mg.pv.len()],
        load_now: mg.loads.iter().map(|l| 0.2 * l.p_max).collect(),
    };
    let r = resolve_slot(&mg, &state, &vec![0.0; mg.ess.len()]).unwrap();
    // Gen1 has the largest rating, so it carries the largest share.
    assert_eq!(slack_for(&topo, &r), topo.devices.generators[0]);
    let rep = check_dispatch(&topo, &r, &FlowLimits::default()).unwrap();
    assert_eq!(rep.slack_bus, topo.devices.generators[0]);
    assert!(!rep.connected);
    let sol = solve_bfs(&topo, &microgrid_core::powerflow::bus_injections(&topo, &r).unwrap(), rep.slack_bus, 1e-12, 100)
        .unwrap();
    assert_eq!(sol.voltage_at(rep.slack_bus), Some(1.0));
}

fn random_loads() -> impl Strategy<Value = BTreeMap<usize, (f64, f64)>> {
    proptest::collection::vec((0.0..0.3f64, 0.0..0.2f64), 32)
        .prop_map(|v| v.into_iter().enumerate().map(|(i, pq)| (i + 2, pq)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_loading_matches_distflow(load in random_loads()) {
        let topo = FeederTopology::ieee33();
        let sol = solve_bfs(&topo, &injections(&topo, &load), 1, 1e-12, 200).unwrap();
        let oracle = distflow::solve(&distflow::lines(distflow::IEEE33_BRANCHES, 10.0), 1, &load, 10.0);
        prop_assert!(sol.converged);
        for (bus, v) in &oracle.v {
            prop_assert!((sol.voltage_at(*bus).unwrap() - v).abs() < 1e-8);
        }
    }

    #[test]
    fn losses_are_nonnegative_and_power_balances(load in random_loads()) {
        let topo = FeederTopology::ieee33();
        let sol = solve_bfs(&topo, &injections(&topo, &load), 1, 1e-12, 200).unwrap();
        prop_assert!(sol.losses_mw >= 0.0);
        prop_assert!(sol.branch_loss_mw.iter().all(|l| *l >= 0.0));
        let demand: f64 = load.values().map(|(p, _)| p).sum();
        prop_assert!((sol.slack_injection.re - demand - sol.losses_mw).abs() < 1e-8);
        prop_assert!(sol.max_mismatch_mva < 1e-8);
    }

    #[test]
    fn voltage_falls_away_from_the_slack(scale in 0.01..0.3f64) {
        let topo = FeederTopology::ieee33();
        let load: BTreeMap<usize, (f64, f64)> = (2..=33).map(|b| (b, (scale, 0.5 * scale))).collect();
        let sol = solve_bfs(&topo, &injections(&topo, &load), 1, 1e-12, 200).unwrap();
        let tree = topo.rooted(1).unwrap();
        for i in 0..topo.len() {
            if let Some(p) = tree.parent[i] {
                prop_assert!(sol.v_mag[i] <= sol.v_mag[p] + 1e-12);
            }
        }
    }

    #[test]
    fn branch_order_and_direction_do_not_matter(load in random_loads(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let topo = FeederTopology::ieee33();
        let mut branches: Vec<Branch> = topo.branches.clone();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        branches.shuffle(&mut rng);
        for b in branches.iter_mut().step_by(2) {
            std::mem::swap(&mut b.from, &mut b.to);
        }
        let shuffled = FeederTopology::new(branches, 1, 10.0, topo.devices.clone()).unwrap();
        let a = solve_bfs(&topo, &injections(&topo, &load), 1, 1e-13, 200).unwrap();
        let b = solve_bfs(&shuffled, &injections(&shuffled, &load), 1, 1e-13, 200).unwrap();
        prop_assert_eq!(&a.bus_ids, &b.bus_ids);
        for (x, y) in a.v_mag.iter().zip(&b.v_mag) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert!((a.losses_mw - b.losses_mw).abs() < 1e-10);
    }
}
