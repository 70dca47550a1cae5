//! Post-hoc deliverability check of a resolved dispatch.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::sweep::solve_bfs;
use super::topology::FeederTopology;
use crate::error::{Error, Result};
use crate::grid::DispatchResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowLimits {
    pub v_min: f64,
    pub v_max: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FlowLimits {
    fn default() -> Self {
        Self { v_min: 0.90, v_max: 1.05, tol: 1e-10, max_iter: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageViolation {
    pub bus: usize,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub connected: bool,
    pub slack_bus: usize,
    pub converged: bool,
    pub iterations: usize,
    pub v_min: f64,
    pub v_min_bus: usize,
    pub v_max: f64,
    pub v_max_bus: usize,
    pub losses_mw: f64,
    pub violations: Vec<VoltageViolation>,
}

impl FeasibilityReport {
    pub fn feasible(&self) -> bool {
        self.converged && self.violations.is_empty()
    }
}

/// Net active injection per bus (MW, generation positive). PV curtailment is
/// spread over modules in proportion to their output.
pub fn bus_injections(topo: &FeederTopology, r: &DispatchResult) -> Result<Vec<Complex64>> {
    let d = &topo.devices;
    if d.ess.len() != r.p_ess.len()
        || d.generators.len() != r.p_gen.len()
        || d.pv.len() != r.p_pv.len()
        || d.loads.len() != r.p_load.len()
    {
        return Err(Error::InvalidInput("device-to-bus map does not match the dispatch's device counts".into()));
    }
    let mut s = topo.zero_injections();
    let mut add = |bus: usize, p: f64| -> Result<()> {
        let i = topo.bus_index(bus).ok_or_else(|| Error::Topology(format!("unknown bus {bus}")))?;
        s[i] += Complex64::new(p, 0.0);
        Ok(())
    };
    let pv_total: f64 = r.p_pv.iter().sum();
    let pv_kept = if pv_total > 0.0 { (pv_total - r.pv_curtailed).max(0.0) / pv_total } else { 0.0 };
    for (&bus, &p) in d.pv.iter().zip(&r.p_pv) {
        add(bus, p * pv_kept)?;
    }
    for (&bus, &p) in d.generators.iter().zip(&r.p_gen) {
        add(bus, p)?;
    }
    for (&bus, &p) in d.ess.iter().zip(&r.p_ess) {
        add(bus, -p)?;
    }
    for ((&bus, &p), &a) in d.loads.iter().zip(&r.p_load).zip(&r.alpha) {
        add(bus, -(1.0 - a) * p)?;
    }
    Ok(s)
}

/// The voltage reference for a slot: the substation while connected,
/// otherwise the bus of the generator with the largest output (first on ties).
pub fn slack_for(topo: &FeederTopology, r: &DispatchResult) -> usize {
    if r.connected || topo.devices.generators.is_empty() {
        return topo.slack;
    }
    let mut best = 0;
    for (k, &p) in r.p_gen.iter().enumerate() {
        if p > r.p_gen[best] {
            best = k;
        }
    }
    topo.devices.generators[best]
}

/// Advisory: never alters the dispatch.
pub fn check_dispatch(topo: &FeederTopology, r: &DispatchResult, limits: &FlowLimits) -> Result<FeasibilityReport> {
    let s = bus_injections(topo, r)?;
    let slack = slack_for(topo, r);
    let sol = solve_bfs(topo, &s, slack, limits.tol, limits.max_iter)?;
    let (v_min_bus, v_min) = sol.v_min();
    let (v_max_bus, v_max) = sol.v_max();
    let violations = sol
        .bus_ids
        .iter()
        .zip(&sol.v_mag)
        .filter(|(_, &v)| !(limits.v_min..=limits.v_max).contains(&v))
        .map(|(&bus, &v)| VoltageViolation { bus, v })
        .collect();
    Ok(FeasibilityReport {
        connected: r.connected,
        slack_bus: slack,
        converged: sol.converged,
        iterations: sol.iterations,
        v_min,
        v_min_bus,
        v_max,
        v_max_bus,
        losses_mw: sol.losses_mw,
        violations,
    })
}
