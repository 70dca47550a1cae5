//! Backward/forward sweep on branch currents.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::topology::FeederTopology;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    /// Aligned with `FeederTopology::buses`.
    pub bus_ids: Vec<usize>,
    pub v_mag: Vec<f64>,
    /// Radians.
    pub v_angle: Vec<f64>,
    /// Aligned with `FeederTopology::branches`, per unit.
    pub branch_current: Vec<f64>,
    pub branch_loss_mw: Vec<f64>,
    pub losses_mw: f64,
    /// Power delivered by the slack bus, MW + j MVAr.
    pub slack_injection: Complex64,
    pub slack: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Largest per-bus complex power mismatch after the final sweep, MVA.
    pub max_mismatch_mva: f64,
}

impl PowerFlowSolution {
    pub fn v_min(&self) -> (usize, f64) {
        self.extreme(|a, b| a < b)
    }

    pub fn v_max(&self) -> (usize, f64) {
        self.extreme(|a, b| a > b)
    }

    fn extreme(&self, better: impl Fn(f64, f64) -> bool) -> (usize, f64) {
        let mut best = (self.bus_ids[0], self.v_mag[0]);
        for (&id, &v) in self.bus_ids.iter().zip(&self.v_mag) {
            if better(v, best.1) {
                best = (id, v);
            }
        }
        best
    }

    pub fn voltage_at(&self, bus: usize) -> Option<f64> {
        self.bus_ids.iter().position(|&b| b == bus).map(|i| self.v_mag[i])
    }
}

/// Solves the radial power flow with the slack held at 1.0 pu.
///
/// `injections` are net bus injections in MW + j MVAr (generation positive),
/// aligned with `topo.buses`; the slack bus entry is ignored. Iterates until
/// the largest voltage update is below `tol` pu or `max_iter` sweeps.
pub fn solve_bfs(
    topo: &FeederTopology,
    injections: &[Complex64],
    slack: usize,
    tol: f64,
    max_iter: usize,
) -> Result<PowerFlowSolution> {
    let n = topo.len();
    if injections.len() != n {
        return Err(Error::Shape { op: "solve_bfs", left: vec![injections.len()], right: vec![n] });
    }
    if injections.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
        return Err(Error::NonFinite("bus injection".into()));
    }
    let tree = topo.rooted(slack)?;
    let z: Vec<Complex64> = (0..topo.branches.len()).map(|k| topo.branch_z_pu(k)).collect();
    let load_pu: Vec<Complex64> = injections.iter().map(|s| -s / topo.base_mva).collect();
    let one = Complex64::new(1.0, 0.0);
    let mut v = vec![one; n];
    let mut j_branch = vec![Complex64::new(0.0, 0.0); topo.branches.len()];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut acc: Vec<Complex64> = (0..n).map(|i| (load_pu[i] / v[i]).conj()).collect();
        for &i in tree.order.iter().rev() {
            if let (Some(p), Some(k)) = (tree.parent[i], tree.parent_branch[i]) {
                j_branch[k] = acc[i];
                let carried = acc[i];
                acc[p] += carried;
            }
        }
        let mut max_dv: f64 = 0.0;
        for &i in &tree.order {
            if let (Some(p), Some(k)) = (tree.parent[i], tree.parent_branch[i]) {
                let next = v[p] - z[k] * j_branch[k];
                max_dv = max_dv.max((next - v[i]).norm());
                v[i] = next;
            }
        }
        if !max_dv.is_finite() {
            break;
        }
        if max_dv < tol {
            converged = true;
            break;
        }
    }

    let mut net_in = vec![Complex64::new(0.0, 0.0); n];
    for &i in &tree.order {
        if let (Some(p), Some(k)) = (tree.parent[i], tree.parent_branch[i]) {
            net_in[i] += j_branch[k];
            net_in[p] -= j_branch[k];
        }
    }
    let max_mismatch_mva = (0..n)
        .filter(|&i| i != tree.root)
        .map(|i| (v[i] * net_in[i].conj() - load_pu[i]).norm() * topo.base_mva)
        .fold(0.0, f64::max);
    let branch_loss_mw: Vec<f64> = j_branch
        .iter()
        .zip(&z)
        .map(|(j, zk)| j.norm_sqr() * zk.re * topo.base_mva)
        .collect();
    let slack_injection = -v[tree.root] * net_in[tree.root].conj() * topo.base_mva;
    Ok(PowerFlowSolution {
        bus_ids: topo.buses.iter().map(|b| b.id).collect(),
        v_mag: v.iter().map(|x| x.norm()).collect(),
        v_angle: v.iter().map(|x| x.arg()).collect(),
        branch_current: j_branch.iter().map(|j| j.norm()).collect(),
        losses_mw: branch_loss_mw.iter().sum(),
        branch_loss_mw,
        slack_injection,
        slack,
        converged,
        iterations,
        max_mismatch_mva,
    })
}
