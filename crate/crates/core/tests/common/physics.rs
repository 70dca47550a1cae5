//! Randomized sweeps over the slot physics and the action mask, checking
//! each result against values recomputed here from first principles.

use microgrid_core::grid::{
    compute_cost, resolve_slot, reward_for_agent, step_soc, CostParams, DispatchResult, EssSpec, MicrogridConfig,
    SimState,
};
use microgrid_core::maddpg::mask_action;
use microgrid_core::rng::SeedStreams;
use rand::Rng;

pub const BALANCE_TOL: f64 = 1e-9;
/// Relative slack for comparisons that differ only by rounding.
pub const ROUND_TOL: f64 = 1e-12;

#[derive(Debug, Default, Clone)]
pub struct PhysicsStats {
    pub calls: usize,
    pub max_residual: f64,
    pub soc_violations: usize,
    pub alpha_out_of_range: usize,
    pub connected_shedding: usize,
    pub islanded_import: usize,
    pub generator_violations: usize,
    pub cost_mismatches: usize,
    pub negative_costs: usize,
    pub reward_mismatches: usize,
    pub round_trip_gains: usize,
}

impl PhysicsStats {
    pub fn failures(&self) -> usize {
        self.soc_violations
            + self.alpha_out_of_range
            + self.connected_shedding
            + self.islanded_import
            + self.generator_violations
            + self.cost_mismatches
            + self.negative_costs
            + self.reward_mismatches
            + self.round_trip_gains
            + usize::from(self.max_residual > BALANCE_TOL)
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= ROUND_TOL * (1.0 + a.abs().max(b.abs()))
}

/// Cost recomputed from the resolved powers.
fn cost_oracle(r: &DispatchResult, c: &CostParams) -> f64 {
    let dt = c.slot_hours;
    let discharge: f64 = r.p_ess.iter().filter(|p| **p < 0.0).map(|p| -p).sum();
    let shed: f64 = r.alpha.iter().zip(&r.p_load).map(|(a, l)| a * l).sum();
    dt * (c.lambda_ess * discharge + c.lambda_gen * r.p_gen.iter().sum::<f64>() + c.lambda_grid * r.p_grid.abs()
        + c.lambda_load * shed)
}

/// `calls` random slots of the default microgrid: random SoC, mode, PV, load
/// and raw actions, each masked, resolved, costed and stepped.
pub fn physics_sweep(calls: usize, seed: u64) -> PhysicsStats {
    let mg = MicrogridConfig::default();
    let dt = mg.dt();
    let mut rng = SeedStreams::new(seed).stream("acceptance.physics");
    let mut s = PhysicsStats { calls, ..Default::default() };
    let gen_cap: f64 = mg.generators.iter().map(|g| g.p_max).sum();
    for _ in 0..calls {
        let soc: Vec<f64> = mg.ess.iter().map(|e| rng.random_range(e.soc_min..=e.soc_max)).collect();
        let connected = rng.random_bool(0.5);
        let pv: Vec<f64> = mg.pv.iter().map(|p| rng.random_range(0.0..=p.p_max)).collect();
        let load: Vec<f64> = mg.loads.iter().map(|l| rng.random_range(0.0..=l.p_max)).collect();
        let cmds: Vec<f64> =
            mg.ess.iter().zip(&soc).map(|(e, &x)| mask_action(rng.random_range(-1.0..=1.0), e, x, dt).p).collect();
        let state = SimState {
            slot: 0,
            soc: soc.clone(),
            connected,
            outage_slots_remaining: usize::from(!connected),
            pv_now: pv,
            load_now: load,
        };
        let r = resolve_slot(&mg, &state, &cmds).expect("masked commands are admissible");
        s.max_residual = s.max_residual.max(r.residual().abs()).max(r.balance_residual.abs());
        for ((e, &x), &p) in mg.ess.iter().zip(&soc).zip(&r.p_ess) {
            let next = step_soc(e, x, p, dt).expect("applied power within rating");
            if next.saturation.abs() > ROUND_TOL || next.soc < e.soc_min || next.soc > e.soc_max {
                s.soc_violations += 1;
            }
        }
        if r.alpha.iter().any(|a| !(0.0..=1.0).contains(a)) {
            s.alpha_out_of_range += 1;
        }
        if connected && (r.alpha.iter().any(|a| *a != 0.0) || r.p_gen.iter().any(|g| *g != 0.0)) {
            s.connected_shedding += 1;
        }
        if !connected && r.p_grid != 0.0 {
            s.islanded_import += 1;
        }
        let in_bounds = r.p_gen.iter().zip(&mg.generators).all(|(p, g)| *p >= g.p_min - ROUND_TOL && *p <= g.p_max + ROUND_TOL);
        let total_load: f64 = state.load_now.iter().sum();
        let expected_gen = if connected { 0.0 } else { gen_cap.min(total_load) };
        if !in_bounds || !close(r.p_gen.iter().sum(), expected_gen) {
            s.generator_violations += 1;
        }
        let cost = compute_cost(&r, &mg.costs).total();
        if !close(cost, cost_oracle(&r, &mg.costs)) || !close(r.cost_total(), cost) {
            s.cost_mismatches += 1;
        }
        if cost < 0.0 {
            s.negative_costs += 1;
        }
        let shared = cost - mg.costs.lambda_ess * dt * r.p_ess.iter().filter(|p| **p < 0.0).map(|p| -p).sum::<f64>();
        for (n, p) in r.p_ess.iter().enumerate() {
            let own = mg.costs.lambda_ess * dt * (-p).max(0.0);
            if !close(reward_for_agent(n, &r, &mg.costs), -(own + shared)) {
                s.reward_mismatches += 1;
            }
        }
        // Charge some energy, then discharge the same energy back.
        let e = &mg.ess[rng.random_range(0..mg.ess.len())];
        let x = rng.random_range(e.soc_min..=e.soc_max);
        let (_, hi) = microgrid_core::maddpg::power_bounds(e, x, dt);
        let p = rng.random_range(0.0..=hi);
        let up = step_soc(e, x, p, dt).unwrap().soc;
        let stored = (up - x) * e.energy_cap;
        let back = (-stored / dt).max(e.p_min);
        let down = step_soc(e, up, back, dt).unwrap().soc;
        if down > x + ROUND_TOL {
            s.round_trip_gains += 1;
        }
    }
    s
}

#[derive(Debug, Default, Clone)]
pub struct MaskStats {
    pub triples: usize,
    pub bound_mismatches: usize,
    pub endpoint_failures: usize,
    pub affinity_failures: usize,
    pub monotonicity_failures: usize,
    pub soc_violations: usize,
}

impl MaskStats {
    pub fn failures(&self) -> usize {
        self.bound_mismatches
            + self.endpoint_failures
            + self.affinity_failures
            + self.monotonicity_failures
            + self.soc_violations
    }
}

pub fn random_spec<R: Rng>(rng: &mut R) -> EssSpec {
    let p_max = rng.random_range(0.2..4.0);
    EssSpec {
        id: "rand".into(),
        p_min: -p_max * rng.random_range(0.5..1.5),
        p_max,
        energy_cap: rng.random_range(0.5..12.0),
        soc_min: rng.random_range(0.0..0.3),
        soc_max: rng.random_range(0.7..=1.0),
        eff_charge: rng.random_range(0.85..=1.0),
        eff_discharge: rng.random_range(1.0..1.15),
    }
}

/// `triples` random (spec, SoC, raw action) draws.
pub fn mask_sweep(triples: usize, seed: u64) -> MaskStats {
    let mut rng = SeedStreams::new(seed).stream("acceptance.mask");
    let mut s = MaskStats { triples, ..Default::default() };
    for _ in 0..triples {
        let spec = random_spec(&mut rng);
        let soc = rng.random_range(spec.soc_min..=spec.soc_max);
        let pi = rng.random_range(-1.0..=1.0);
        let dt = if rng.random_bool(0.5) { 0.25 } else { rng.random_range(0.05..1.0) };
        // Bounds straight from the SoC update solved for power.
        let hi = ((spec.soc_max - soc) * spec.energy_cap / dt).min(spec.p_max);
        let lo = (-(soc - spec.soc_min) * spec.energy_cap / (spec.eff_discharge * dt)).max(spec.p_min);
        let m = mask_action(pi, &spec, soc, dt);
        if !close(m.lo, lo) || !close(m.hi, hi) {
            s.bound_mismatches += 1;
        }
        let scale = 1.0 + hi.abs() + lo.abs();
        let at = |x: f64| mask_action(x, &spec, soc, dt).p;
        if (at(-1.0) - lo).abs() > ROUND_TOL * scale || (at(1.0) - hi).abs() > ROUND_TOL * scale {
            s.endpoint_failures += 1;
        }
        if (m.p - (lo + (hi - lo) * (pi + 1.0) / 2.0)).abs() > ROUND_TOL * scale
            || (at(0.0) - 0.5 * (lo + hi)).abs() > ROUND_TOL * scale
        {
            s.affinity_failures += 1;
        }
        let pi2 = rng.random_range(pi..=1.0);
        if at(pi2) < m.p {
            s.monotonicity_failures += 1;
        }
        let next = step_soc(&spec, soc, m.p, dt).unwrap();
        if next.saturation.abs() > ROUND_TOL {
            s.soc_violations += 1;
        }
    }
    s
}
