//! SoC-aware mapping of actor outputs in (-1, 1) onto feasible ESS power.

use serde::{Deserialize, Serialize};

use crate::grid::EssSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    #[default]
    Soc,
    /// Raw output used as the command; only for equivalence tests.
    Bypass,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskedAction {
    pub p: f64,
    pub lo: f64,
    pub hi: f64,
}

impl MaskedAction {
    /// Derivative of the command with respect to the raw output.
    pub fn slope(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }
}

/// Feasible power interval at `soc`. The discharge bound is divided by the
/// discharge efficiency so the post-step SoC never drops below `soc_min`.
pub fn power_bounds(spec: &EssSpec, soc: f64, dt: f64) -> (f64, f64) {
    let hi = ((spec.soc_max - soc) * spec.energy_cap / dt).min(spec.p_max).max(0.0);
    let lo = ((spec.soc_min - soc) * spec.energy_cap / (spec.eff_discharge * dt)).max(spec.p_min).min(0.0);
    (lo, hi)
}

pub fn mask_action(pi: f64, spec: &EssSpec, soc: f64, dt: f64) -> MaskedAction {
    let (lo, hi) = power_bounds(spec, soc, dt);
    let p = (hi - lo) * (pi + 1.0) / 2.0 + lo;
    MaskedAction { p: p.clamp(lo, hi), lo, hi }
}

pub fn apply(mode: MaskMode, pi: f64, spec: &EssSpec, soc: f64, dt: f64) -> MaskedAction {
    match mode {
        MaskMode::Soc => mask_action(pi, spec, soc, dt),
        MaskMode::Bypass => MaskedAction { p: pi, lo: -1.0, hi: 1.0 },
    }
}

/// Inverse of [`mask_action`] inside the feasible interval; degenerate
/// intervals map to 0.
pub fn unmask(p: f64, spec: &EssSpec, soc: f64, dt: f64) -> f64 {
    let (lo, hi) = power_bounds(spec, soc, dt);
    if hi - lo <= 0.0 {
        0.0
    } else {
        (2.0 * (p - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
    }
}
