//! Discrete-time microgrid physics.
//!
//! Sign conventions: ESS power is positive when charging, grid power is
//! positive when importing from the main grid. Reactive power is not modelled.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Tolerance used when checking commands against device limits.
pub const POWER_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssSpec {
    pub id: String,
    /// Discharge limit, MW (negative).
    pub p_min: f64,
    /// Charge limit, MW.
    pub p_max: f64,
    /// Usable energy capacity, MWh.
    pub energy_cap: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub eff_charge: f64,
    pub eff_discharge: f64,
}

impl EssSpec {
    pub fn validate(&self, errs: &mut Vec<String>) {
        let id = &self.id;
        if !(self.p_min < 0.0 && self.p_max > 0.0) {
            errs.push(format!("ess {id}: need p_min < 0 < p_max"));
        }
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            errs.push(format!("ess {id}: need 0 <= soc_min < soc_max <= 1"));
        }
        if !(self.energy_cap > 0.0) {
            errs.push(format!("ess {id}: energy_cap must be positive"));
        }
        if !(self.eff_charge > 0.0 && self.eff_charge <= 1.0 && self.eff_discharge >= 1.0) {
            errs.push(format!("ess {id}: need 0 < eff_charge <= 1 <= eff_discharge"));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub id: String,
    pub p_min: f64,
    pub p_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvSpec {
    pub id: String,
    pub p_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSpec {
    pub id: String,
    pub p_max: f64,
}

/// Cost coefficients in $/MWh and the slot length in hours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub lambda_ess: f64,
    pub lambda_gen: f64,
    pub lambda_grid: f64,
    pub lambda_load: f64,
    pub slot_hours: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            lambda_ess: 0.2,
            lambda_gen: 0.5,
            lambda_grid: 0.3,
            lambda_load: 1.5,
            slot_hours: 0.25,
        }
    }
}

/// Static description of the microgrid fleet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicrogridConfig {
    pub slots_per_day: usize,
    pub initial_soc: f64,
    pub costs: CostParams,
    pub ess: Vec<EssSpec>,
    pub generators: Vec<GeneratorSpec>,
    pub pv: Vec<PvSpec>,
    pub loads: Vec<LoadSpec>,
}

fn ess(id: &str, p: f64, e: f64) -> EssSpec {
    EssSpec {
        id: id.into(),
        p_min: -p,
        p_max: p,
        energy_cap: e,
        soc_min: 0.1,
        soc_max: 0.9,
        eff_charge: 0.999,
        eff_discharge: 1.001,
    }
}

impl Default for MicrogridConfig {
    /// Five ESS, five generators, six PV modules and twenty loads on a
    /// 15-minute grid.
    fn default() -> Self {
        let gens = [2.0, 1.0, 1.0, 1.0, 1.0];
        let pv = [1.0, 2.0, 2.0, 1.0, 1.0, 2.0];
        let loads = [
            0.23, 0.51, 0.32, 0.46, 0.23, 1.14, 0.51, 0.46, 0.23, 0.51, 0.46, 0.32, 0.51, 0.46,
            1.14, 0.23, 0.51, 0.23, 0.51, 0.46,
        ];
        Self {
            slots_per_day: 96,
            initial_soc: 0.5,
            costs: CostParams::default(),
            ess: vec![
                ess("ESS1", 2.0, 6.0),
                ess("ESS2", 1.5, 4.0),
                ess("ESS3", 2.0, 6.0),
                ess("ESS4", 1.0, 3.0),
                ess("ESS5", 1.0, 3.0),
            ],
            generators: gens
                .iter()
                .enumerate()
                .map(|(k, &p)| GeneratorSpec { id: format!("Gen{}", k + 1), p_min: 0.0, p_max: p })
                .collect(),
            pv: pv
                .iter()
                .enumerate()
                .map(|(k, &p)| PvSpec { id: format!("PV{}", k + 1), p_max: p })
                .collect(),
            loads: loads
                .iter()
                .enumerate()
                .map(|(k, &p)| LoadSpec { id: format!("Load{}", k + 1), p_max: p })
                .collect(),
        }
    }
}

impl MicrogridConfig {
    pub fn dt(&self) -> f64 {
        self.costs.slot_hours
    }

    pub fn validate(&self, errs: &mut Vec<String>) {
        if self.slots_per_day == 0 {
            errs.push("microgrid.slots_per_day must be positive".into());
        }
        let c = &self.costs;
        for (name, v) in [
            ("lambda_ess", c.lambda_ess),
            ("lambda_gen", c.lambda_gen),
            ("lambda_grid", c.lambda_grid),
            ("lambda_load", c.lambda_load),
        ] {
            if !(v >= 0.0) {
                errs.push(format!("costs.{name} must be >= 0"));
            }
        }
        if !(c.slot_hours > 0.0) {
            errs.push("costs.slot_hours must be > 0".into());
        }
        if self.ess.is_empty() {
            errs.push("at least one ESS is required".into());
        }
        for e in &self.ess {
            e.validate(errs);
            if !(self.initial_soc >= e.soc_min && self.initial_soc <= e.soc_max) {
                errs.push(format!("initial_soc outside SoC band of {}", e.id));
            }
        }
        for g in &self.generators {
            if !(0.0 <= g.p_min && g.p_min <= g.p_max) {
                errs.push(format!("generator {}: need 0 <= p_min <= p_max", g.id));
            }
        }
        for p in &self.pv {
            if !(p.p_max > 0.0) {
                errs.push(format!("pv {}: p_max must be positive", p.id));
            }
        }
        for l in &self.loads {
            if !(l.p_max > 0.0) {
                errs.push(format!("load {}: p_max must be positive", l.id));
            }
        }
    }
}

/// Per-slot dynamic state of the microgrid.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub slot: usize,
    pub soc: Vec<f64>,
    pub connected: bool,
    pub outage_slots_remaining: usize,
    pub pv_now: Vec<f64>,
    pub load_now: Vec<f64>,
}

impl SimState {
    pub fn pv_sum(&self) -> f64 {
        self.pv_now.iter().sum()
    }

    pub fn load_sum(&self) -> f64 {
        self.load_now.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub ess: f64,
    pub gen: f64,
    pub grid: f64,
    pub shed: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.ess + self.gen + self.grid + self.shed
    }
}

/// Resolved powers of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchResult {
    pub connected: bool,
    /// Applied ESS powers (may be trimmed from the commands when islanded).
    pub p_ess: Vec<f64>,
    pub p_gen: Vec<f64>,
    pub p_grid: f64,
    /// Shed fraction per load; islanded shedding applies one fraction to every load.
    pub alpha: Vec<f64>,
    pub pv_curtailed: f64,
    pub p_pv: Vec<f64>,
    pub p_load: Vec<f64>,
    /// True when islanded balancing had to trim ESS powers.
    pub ess_trimmed: bool,
    pub balance_residual: f64,
    pub cost: CostBreakdown,
}

impl DispatchResult {
    pub fn cost_total(&self) -> f64 {
        self.cost.total()
    }

    /// Shed power summed over loads, MW.
    pub fn shed_mw(&self) -> f64 {
        self.alpha.iter().zip(&self.p_load).map(|(a, p)| a * p).sum()
    }

    /// Served-load balance: demand + charging - supply - import.
    pub fn residual(&self) -> f64 {
        let served: f64 = self.alpha.iter().zip(&self.p_load).map(|(a, p)| (1.0 - a) * p).sum();
        let pv: f64 = self.p_pv.iter().sum::<f64>() - self.pv_curtailed;
        let ess: f64 = self.p_ess.iter().sum();
        let gen: f64 = self.p_gen.iter().sum();
        served - pv + ess - gen - self.p_grid
    }
}

/// Result of one SoC update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocUpdate {
    pub soc: f64,
    /// Unclamped minus clamped SoC; zero when the band was respected.
    pub saturation: f64,
}

impl SocUpdate {
    pub fn saturated(&self) -> bool {
        self.saturation != 0.0
    }
}

/// Advances the state of charge by one slot.
pub fn step_soc(spec: &EssSpec, soc: f64, p_ess: f64, dt: f64) -> Result<SocUpdate> {
    ensure_finite("step_soc", &[soc, p_ess, dt])?;
    if p_ess < spec.p_min - POWER_TOL || p_ess > spec.p_max + POWER_TOL {
        return Err(Error::InvalidInput(format!(
            "{}: power {p_ess} MW outside [{}, {}]",
            spec.id, spec.p_min, spec.p_max
        )));
    }
    let eff = if p_ess > 0.0 { spec.eff_charge } else { spec.eff_discharge };
    let raw = soc + eff * p_ess * dt / spec.energy_cap;
    let clamped = raw.clamp(spec.soc_min, spec.soc_max);
    Ok(SocUpdate { soc: clamped, saturation: raw - clamped })
}

/// Islanded generator rule: run flat out when the fleet cannot cover the
/// load, otherwise share the load in proportion to capacity.
pub fn dispatch_generators(gens: &[GeneratorSpec], total_load: f64) -> Vec<f64> {
    let cap: f64 = gens.iter().map(|g| g.p_max).sum();
    if gens.is_empty() {
        return Vec::new();
    }
    if cap <= total_load {
        gens.iter().map(|g| g.p_max).collect()
    } else {
        gens.iter().map(|g| total_load * g.p_max / cap).collect()
    }
}

/// Islanded shed fraction. Returns `(alpha, pv_curtailed)`; a negative raw
/// fraction becomes zero shedding plus curtailment of the surplus.
pub fn compute_shedding(load_sum: f64, ess_net: f64, pv_sum: f64, gen_sum: f64) -> Result<(f64, f64)> {
    ensure_finite("compute_shedding", &[load_sum, ess_net, pv_sum, gen_sum])?;
    let imbalance = load_sum + ess_net - pv_sum - gen_sum;
    if load_sum <= 0.0 {
        return Ok((0.0, (-imbalance).max(0.0)));
    }
    let raw = imbalance / load_sum;
    if raw < 0.0 {
        Ok((0.0, -raw * load_sum))
    } else {
        Ok((raw.min(1.0), 0.0))
    }
}

/// Scale factors applied to ESS charging/discharging so an islanded slot
/// balances. Charging beyond what supply can carry even with every load shed
/// is trimmed; a surplus larger than the PV output trims discharging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IslandTrim {
    pub charge_scale: f64,
    pub discharge_scale: f64,
}

pub fn island_trim(load_sum: f64, pv_sum: f64, gen_sum: f64, charge: f64, discharge: f64) -> IslandTrim {
    let mut trim = IslandTrim { charge_scale: 1.0, discharge_scale: 1.0 };
    let supply = pv_sum + gen_sum + discharge;
    if charge > supply {
        trim.charge_scale = supply / charge;
        return trim;
    }
    let surplus = supply - load_sum - charge;
    if surplus > pv_sum && discharge > 0.0 {
        let cut = (surplus - pv_sum).min(discharge);
        trim.discharge_scale = (discharge - cut) / discharge;
    }
    trim
}

/// Resolves one slot given masked ESS commands.
pub fn resolve_slot(config: &MicrogridConfig, state: &SimState, ess_commands: &[f64]) -> Result<DispatchResult> {
    if ess_commands.len() != config.ess.len() {
        return Err(Error::Contract(format!(
            "{} ESS commands for {} ESS",
            ess_commands.len(),
            config.ess.len()
        )));
    }
    ensure_finite("resolve_slot commands", ess_commands)?;
    ensure_finite("resolve_slot pv", &state.pv_now)?;
    ensure_finite("resolve_slot load", &state.load_now)?;
    for (spec, &p) in config.ess.iter().zip(ess_commands) {
        if p < spec.p_min - POWER_TOL || p > spec.p_max + POWER_TOL {
            return Err(Error::Contract(format!(
                "{} command {p} MW outside [{}, {}]; masking failed upstream",
                spec.id, spec.p_min, spec.p_max
            )));
        }
    }
    let load_sum = state.load_sum();
    let pv_sum = state.pv_sum();
    let n_loads = state.load_now.len();

    let mut result = if state.connected {
        let ess_net: f64 = ess_commands.iter().sum();
        DispatchResult {
            connected: true,
            p_ess: ess_commands.to_vec(),
            p_gen: vec![0.0; config.generators.len()],
            p_grid: load_sum - pv_sum + ess_net,
            alpha: vec![0.0; n_loads],
            pv_curtailed: 0.0,
            p_pv: state.pv_now.clone(),
            p_load: state.load_now.clone(),
            ess_trimmed: false,
            balance_residual: 0.0,
            cost: CostBreakdown::default(),
        }
    } else {
        let p_gen = dispatch_generators(&config.generators, load_sum);
        let gen_sum: f64 = p_gen.iter().sum();
        let charge: f64 = ess_commands.iter().filter(|p| **p > 0.0).sum();
        let discharge: f64 = -ess_commands.iter().filter(|p| **p < 0.0).sum::<f64>();
        let trim = island_trim(load_sum, pv_sum, gen_sum, charge, discharge);
        let p_ess: Vec<f64> = ess_commands
            .iter()
            .map(|&p| if p > 0.0 { p * trim.charge_scale } else { p * trim.discharge_scale })
            .collect();
        let ess_net: f64 = p_ess.iter().sum();
        let (alpha, curtail) = compute_shedding(load_sum, ess_net, pv_sum, gen_sum)?;
        DispatchResult {
            connected: false,
            p_ess,
            p_gen,
            p_grid: 0.0,
            alpha: vec![alpha; n_loads],
            pv_curtailed: curtail.min(pv_sum),
            p_pv: state.pv_now.clone(),
            p_load: state.load_now.clone(),
            ess_trimmed: trim.charge_scale != 1.0 || trim.discharge_scale != 1.0,
            balance_residual: 0.0,
            cost: CostBreakdown::default(),
        }
    };
    result.balance_residual = result.residual();
    result.cost = compute_cost(&result, &config.costs);
    Ok(result)
}

/// Slot operating cost with its four components.
pub fn compute_cost(result: &DispatchResult, costs: &CostParams) -> CostBreakdown {
    let dt = costs.slot_hours;
    let discharge: f64 = result.p_ess.iter().map(|p| p.min(0.0).abs()).sum();
    let gen: f64 = result.p_gen.iter().sum();
    CostBreakdown {
        ess: costs.lambda_ess * discharge * dt,
        gen: costs.lambda_gen * gen * dt,
        grid: costs.lambda_grid * result.p_grid.abs() * dt,
        shed: costs.lambda_load * result.shed_mw() * dt,
    }
}

/// Reward of agent `n`: its own degradation term plus the shared
/// generator, grid and shedding terms, negated.
pub fn reward_for_agent(n: usize, result: &DispatchResult, costs: &CostParams) -> f64 {
    let own = costs.lambda_ess * result.p_ess[n].min(0.0).abs() * costs.slot_hours;
    let c = compute_cost(result, costs);
    -(own + c.gen + c.grid + c.shed)
}

/// Negated shedding cost over an episode; larger is more resilient.
pub fn resilience_metric(results: &[DispatchResult], costs: &CostParams) -> f64 {
    -results
        .iter()
        .map(|r| costs.lambda_load * r.shed_mw() * costs.slot_hours)
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn ess6() -> EssSpec {
        MicrogridConfig::default().ess[0].clone()
    }

    fn state(connected: bool, pv: Vec<f64>, load: Vec<f64>, n_ess: usize) -> SimState {
        SimState {
            slot: 0,
            soc: vec![0.5; n_ess],
            connected,
            outage_slots_remaining: if connected { 0 } else { 12 },
            pv_now: pv,
            load_now: load,
        }
    }

    #[test]
    fn soc_charge_and_discharge_examples() {
        let s = ess6();
        let up = step_soc(&s, 0.5, 2.0, 0.25).unwrap();
        assert!(close(up.soc, 0.5 + 0.999 * 0.5 / 6.0, 1e-15));
        assert!(close(up.soc, 0.583250, 1e-12));
        assert!(!up.saturated());
        assert_eq!(step_soc(&s, 0.5, 0.0, 0.25).unwrap().soc, 0.5);
        let down = step_soc(&s, 0.5, -2.0, 0.25).unwrap();
        assert!(close(down.soc, 0.5 - 1.001 * 0.5 / 6.0, 1e-15));
        assert!(close(down.soc, 0.416_583_333_333_333_3, 1e-12));
    }

    #[test]
    fn soc_saturates_instead_of_failing() {
        let s = ess6();
        let u = step_soc(&s, 0.89, 2.0, 0.25).unwrap();
        assert_eq!(u.soc, 0.9);
        assert!(u.saturation > 0.0);
        assert!(matches!(step_soc(&s, f64::NAN, 0.0, 0.25), Err(Error::NonFinite(_))));
        assert!(step_soc(&s, 0.5, 2.5, 0.25).is_err());
    }

    #[test]
    fn generator_rule_examples() {
        let gens = MicrogridConfig::default().generators;
        assert_eq!(dispatch_generators(&gens, 7.2), vec![2.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(dispatch_generators(&gens, 0.0), vec![0.0; 5]);
        assert_eq!(dispatch_generators(&gens, 3.0), vec![1.0, 0.5, 0.5, 0.5, 0.5]);
        assert!(dispatch_generators(&[], 3.0).is_empty());
    }

    #[test]
    fn shedding_examples() {
        let (a, c) = compute_shedding(5.0, 1.0, 2.0, 3.0).unwrap();
        assert!(close(a, 0.2, 1e-15) && c == 0.0);
        assert_eq!(compute_shedding(5.0, 0.0, 2.0, 3.0).unwrap(), (0.0, 0.0));
        assert_eq!(compute_shedding(2.0, 0.0, 4.0, 0.0).unwrap(), (0.0, 2.0));
        assert_eq!(compute_shedding(0.0, 0.0, 0.0, 0.0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn connected_grid_closes_balance() {
        let mut cfg = MicrogridConfig::default();
        cfg.ess.truncate(1);
        let st = state(true, vec![1.0], vec![4.0], 1);
        let r = resolve_slot(&cfg, &st, &[1.0]).unwrap();
        assert!(close(r.p_grid, 4.0, 1e-12));
        assert!(r.p_gen.iter().all(|g| *g == 0.0));
        assert!(r.balance_residual.abs() <= 1e-9);
    }

    #[test]
    fn islanded_idle_slot_is_all_zero() {
        let cfg = MicrogridConfig::default();
        let st = state(false, vec![0.0; 6], vec![0.0; 20], 5);
        let r = resolve_slot(&cfg, &st, &[0.0; 5]).unwrap();
        assert_eq!(r.p_grid, 0.0);
        assert_eq!(r.cost_total(), 0.0);
        assert!(r.alpha.iter().all(|a| *a == 0.0));
    }

    #[test]
    fn islanded_surplus_is_curtailed() {
        let mut cfg = MicrogridConfig::default();
        cfg.ess.truncate(1);
        let st = state(false, vec![2.0], vec![5.0], 1);
        let r = resolve_slot(&cfg, &st, &[1.0]).unwrap();
        let gen: f64 = r.p_gen.iter().sum();
        assert!(close(gen, 5.0, 1e-12));
        assert!(close(r.p_gen[0], 5.0 / 3.0, 1e-12));
        assert_eq!(r.alpha[0], 0.0);
        assert!(close(r.pv_curtailed, 1.0, 1e-12));
        assert_eq!(r.p_grid, 0.0);
        assert!(r.balance_residual.abs() <= 1e-9);
    }

    #[test]
    fn islanded_overcharge_is_trimmed() {
        let mut cfg = MicrogridConfig::default();
        cfg.ess.truncate(1);
        let st = state(false, vec![0.0], vec![1.0], 1);
        let r = resolve_slot(&cfg, &st, &[2.0]).unwrap();
        assert!(r.ess_trimmed);
        assert_eq!(r.alpha[0], 1.0);
        assert!(r.balance_residual.abs() <= 1e-9);
    }

    #[test]
    fn out_of_bounds_command_is_contract_violation() {
        let cfg = MicrogridConfig::default();
        let st = state(true, vec![0.0; 6], vec![1.0; 20], 5);
        let e = resolve_slot(&cfg, &st, &[3.0, 0.0, 0.0, 0.0, 0.0]).unwrap_err();
        assert!(matches!(e, Error::Contract(_)));
    }

    fn worked_slot() -> DispatchResult {
        DispatchResult {
            connected: false,
            p_ess: vec![-2.0, 0.0],
            p_gen: vec![3.0],
            p_grid: 0.0,
            alpha: vec![0.2],
            pv_curtailed: 0.0,
            p_pv: vec![],
            p_load: vec![5.0],
            ess_trimmed: false,
            balance_residual: 0.0,
            cost: CostBreakdown::default(),
        }
    }

    #[test]
    fn cost_examples() {
        let costs = CostParams::default();
        let c = compute_cost(&worked_slot(), &costs);
        assert!(close(c.ess, 0.10, 1e-12));
        assert!(close(c.gen, 0.375, 1e-12));
        assert_eq!(c.grid, 0.0);
        assert!(close(c.shed, 0.375, 1e-12));
        assert!(close(c.total(), 0.85, 1e-12));

        let mut grid_only = worked_slot();
        grid_only.p_ess = vec![0.0, 0.0];
        grid_only.p_gen = vec![0.0];
        grid_only.alpha = vec![0.0];
        assert_eq!(compute_cost(&grid_only, &costs).total(), 0.0);
        grid_only.p_grid = 4.0;
        assert!(close(compute_cost(&grid_only, &costs).total(), 0.30, 1e-12));
    }

    #[test]
    fn reward_examples() {
        let costs = CostParams::default();
        let r = worked_slot();
        assert!(close(reward_for_agent(0, &r, &costs), -0.85, 1e-12));
        assert!(close(reward_for_agent(1, &r, &costs), -0.75, 1e-12));
    }

    #[test]
    fn resilience_examples() {
        let costs = CostParams::default();
        let mut r = worked_slot();
        assert!(close(resilience_metric(&[r.clone()], &costs), -0.375, 1e-12));
        r.alpha = vec![0.4];
        assert!(close(resilience_metric(&[r.clone()], &costs), -0.75, 1e-12));
        r.alpha = vec![0.0];
        assert_eq!(resilience_metric(&[r], &costs), 0.0);
    }
}
