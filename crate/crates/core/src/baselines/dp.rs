//! Perfect-foresight dynamic programming over a discretized SoC grid.
//!
//! Every ESS moves between points of an evenly spaced SoC grid; the power a
//! move needs follows from inverting the SoC update, and moves outside the
//! power limits are dropped. Islanded moves that the balance rule would trim
//! are dropped as well, so each kept move is reproduced exactly by the
//! simulator. The reported cost is therefore achievable, and an upper bound
//! on the continuous optimum; `delta_grid` estimates the gap from a nested
//! refinement.

use serde::{Deserialize, Serialize};

use crate::env::{Observation, Scenario};
use crate::error::{Error, Result};
use crate::grid::{compute_shedding, dispatch_generators, island_trim, EssSpec, MicrogridConfig};
use crate::policy::Policy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpOracleConfig {
    /// Points per ESS between soc_min and soc_max inclusive.
    pub grid_points: usize,
    /// Treat the fleet as one ESS sharing power in proportion to energy.
    pub aggregate: bool,
    /// Upper bound on grid states per stage.
    pub max_states: usize,
    /// Also solve on the `2n - 1` grid to estimate the discretization gap.
    pub refine: bool,
}

impl Default for DpOracleConfig {
    fn default() -> Self {
        Self { grid_points: 21, aggregate: false, max_states: 20_000, refine: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpSolution {
    pub cost: f64,
    /// Commands `[slot][ess]` in MW.
    pub schedule: Vec<Vec<f64>>,
    /// Planned SoC after each slot.
    pub soc_path: Vec<Vec<f64>>,
    pub grid_points: usize,
    pub states: usize,
    /// Coarse cost minus refined cost; `None` when refinement was skipped.
    pub delta_grid: Option<f64>,
}

/// Slot totals the cost depends on.
#[derive(Debug, Clone, Copy)]
struct SlotInputs {
    connected: bool,
    load: f64,
    pv: f64,
    gen: f64,
}

/// Cost of a slot from aggregate charge and discharge, or `None` when the
/// islanded balance rule would trim the commands.
fn slot_cost(mg: &MicrogridConfig, s: SlotInputs, charge: f64, discharge: f64) -> Option<f64> {
    let c = &mg.costs;
    if s.connected {
        let grid = s.load - s.pv + (charge - discharge);
        return Some((c.lambda_ess * discharge + c.lambda_grid * grid.abs()) * c.slot_hours);
    }
    let trim = island_trim(s.load, s.pv, s.gen, charge, discharge);
    if trim.charge_scale != 1.0 || trim.discharge_scale != 1.0 {
        return None;
    }
    let (alpha, _) = compute_shedding(s.load, charge - discharge, s.pv, s.gen).ok()?;
    Some((c.lambda_ess * discharge + c.lambda_gen * s.gen + c.lambda_load * alpha * s.load) * c.slot_hours)
}

fn grid(spec: &EssSpec, n: usize) -> Vec<f64> {
    (0..n).map(|k| spec.soc_min + (spec.soc_max - spec.soc_min) * k as f64 / (n - 1) as f64).collect()
}

/// Power that moves `from` to `to` in one slot, if within limits.
fn move_power(spec: &EssSpec, from: f64, to: f64, dt: f64) -> Option<f64> {
    let d = to - from;
    let eff = if d > 0.0 { spec.eff_charge } else { spec.eff_discharge };
    let p = d * spec.energy_cap / (eff * dt);
    let tol = 1e-9;
    (p >= spec.p_min - tol && p <= spec.p_max + tol).then(|| p.clamp(spec.p_min, spec.p_max))
}

/// Single ESS standing in for the fleet: energy and SoC-band union, power
/// limits such that an energy-proportional split stays feasible per unit.
pub fn aggregate_fleet(ess: &[EssSpec]) -> Result<EssSpec> {
    let first = ess.first().ok_or_else(|| Error::InvalidInput("no ESS to aggregate".into()))?;
    if ess.iter().any(|e| {
        e.soc_min != first.soc_min
            || e.soc_max != first.soc_max
            || e.eff_charge != first.eff_charge
            || e.eff_discharge != first.eff_discharge
    }) {
        return Err(Error::InvalidInput("aggregation needs identical SoC bands and efficiencies".into()));
    }
    let energy: f64 = ess.iter().map(|e| e.energy_cap).sum();
    let p_max = ess.iter().map(|e| e.p_max * energy / e.energy_cap).fold(f64::INFINITY, f64::min);
    let p_min = ess.iter().map(|e| e.p_min * energy / e.energy_cap).fold(f64::NEG_INFINITY, f64::max);
    Ok(EssSpec { id: "fleet".into(), p_min, p_max, energy_cap: energy, ..first.clone() })
}

fn solve_grid(mg: &MicrogridConfig, scenario: &Scenario, cfg: &DpOracleConfig, n: usize) -> Result<DpSolution> {
    if n < 2 {
        return Err(Error::InvalidInput("DP grid needs at least 2 points".into()));
    }
    let fleet = if cfg.aggregate { vec![aggregate_fleet(&mg.ess)?] } else { mg.ess.clone() };
    let m = fleet.len();
    let states = (0..m).try_fold(1usize, |acc, _| acc.checked_mul(n)).unwrap_or(usize::MAX);
    if states > cfg.max_states {
        return Err(Error::StateSpace(format!("{n}^{m} = {states} grid states exceeds max_states {}", cfg.max_states)));
    }
    let dt = mg.dt();
    let slots = mg.slots_per_day;
    let grids: Vec<Vec<f64>> = fleet.iter().map(|e| grid(e, n)).collect();
    let inputs: Vec<SlotInputs> = (0..slots)
        .map(|t| {
            let load: f64 = scenario.actual.load_at(t).iter().sum();
            SlotInputs {
                connected: scenario.connected_at(t),
                load,
                pv: scenario.actual.pv_at(t).iter().sum(),
                gen: if scenario.connected_at(t) { 0.0 } else { dispatch_generators(&mg.generators, load).iter().sum() },
            }
        })
        .collect();

    let digits = |mut idx: usize| -> Vec<usize> {
        (0..m)
            .map(|_| {
                let d = idx % n;
                idx /= n;
                d
            })
            .collect()
    };
    // per-unit move powers between grid points: moves[j][from][to]
    let moves: Vec<Vec<Vec<Option<f64>>>> = fleet
        .iter()
        .zip(&grids)
        .map(|(e, g)| g.iter().map(|&a| g.iter().map(|&b| move_power(e, a, b, dt)).collect()).collect())
        .collect();

    let transition = |t: usize, powers: &[f64]| -> Option<f64> {
        let charge: f64 = powers.iter().filter(|p| **p > 0.0).sum();
        let discharge: f64 = -powers.iter().filter(|p| **p < 0.0).sum::<f64>();
        slot_cost(mg, inputs[t], charge, discharge)
    };

    let mut value = vec![0.0f64; states];
    let mut choice: Vec<Vec<u32>> = vec![Vec::new(); slots];
    let all: Vec<Vec<usize>> = (0..states).map(digits).collect();
    for t in (1..slots).rev() {
        let mut next_value = vec![f64::INFINITY; states];
        let mut best = vec![u32::MAX; states];
        for (s, ds) in all.iter().enumerate() {
            'next: for (s2, ds2) in all.iter().enumerate() {
                let mut powers = [0.0f64; 8];
                let mut pv = Vec::new();
                let powers: &[f64] = if m <= 8 {
                    for j in 0..m {
                        match moves[j][ds[j]][ds2[j]] {
                            Some(p) => powers[j] = p,
                            None => continue 'next,
                        }
                    }
                    &powers[..m]
                } else {
                    for j in 0..m {
                        match moves[j][ds[j]][ds2[j]] {
                            Some(p) => pv.push(p),
                            None => continue 'next,
                        }
                    }
                    &pv
                };
                if let Some(c) = transition(t, powers) {
                    let total = c + value[s2];
                    if total < next_value[s] {
                        next_value[s] = total;
                        best[s] = s2 as u32;
                    }
                }
            }
        }
        value = next_value;
        choice[t] = best;
    }

    // first slot starts from the true initial SoC, which may sit off-grid
    let init = mg.initial_soc;
    let mut best_cost = f64::INFINITY;
    let mut best_first = None;
    for (s2, ds2) in all.iter().enumerate() {
        let powers: Option<Vec<f64>> = (0..m).map(|j| move_power(&fleet[j], init, grids[j][ds2[j]], dt)).collect();
        let Some(powers) = powers else { continue };
        if let Some(c) = transition(0, &powers) {
            let total = c + value[s2];
            if total < best_cost {
                best_cost = total;
                best_first = Some((s2, powers));
            }
        }
    }
    let (mut s, first) = best_first.ok_or_else(|| Error::InvalidInput("no feasible first move".into()))?;

    let expand = |powers: &[f64]| -> Vec<f64> {
        if cfg.aggregate {
            let energy: f64 = mg.ess.iter().map(|e| e.energy_cap).sum();
            mg.ess.iter().map(|e| powers[0] * e.energy_cap / energy).collect()
        } else {
            powers.to_vec()
        }
    };
    let soc_of = |s: usize| -> Vec<f64> {
        let d = digits(s);
        if cfg.aggregate {
            vec![grids[0][d[0]]; mg.ess.len()]
        } else {
            (0..m).map(|j| grids[j][d[j]]).collect()
        }
    };
    let mut schedule = vec![expand(&first)];
    let mut soc_path = vec![soc_of(s)];
    for t in 1..slots {
        let s2 = choice[t][s] as usize;
        let (d, d2) = (digits(s), digits(s2));
        let powers: Vec<f64> = (0..m).map(|j| moves[j][d[j]][d2[j]].expect("chosen move is feasible")).collect();
        schedule.push(expand(&powers));
        soc_path.push(soc_of(s2));
        s = s2;
    }
    Ok(DpSolution { cost: best_cost, schedule, soc_path, grid_points: n, states, delta_grid: None })
}

/// Minimal cost and schedule for a fully known scenario.
pub fn dp_oracle(mg: &MicrogridConfig, scenario: &Scenario, cfg: &DpOracleConfig) -> Result<DpSolution> {
    let mut sol = solve_grid(mg, scenario, cfg, cfg.grid_points)?;
    if cfg.refine {
        let fine = solve_grid(mg, scenario, cfg, 2 * cfg.grid_points - 1)?;
        sol.delta_grid = Some((sol.cost - fine.cost).max(0.0));
    }
    Ok(sol)
}

/// Replays a precomputed schedule slot by slot.
#[derive(Debug, Clone)]
pub struct SchedulePolicy {
    pub label: String,
    pub schedule: Vec<Vec<f64>>,
}

impl Policy for SchedulePolicy {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn commands(&mut self, obs: &Observation, _config: &MicrogridConfig) -> Result<Vec<f64>> {
        self.schedule
            .get(obs.slot)
            .cloned()
            .ok_or_else(|| Error::InvalidInput(format!("schedule has no slot {}", obs.slot)))
    }
}
