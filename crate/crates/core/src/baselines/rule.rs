//! SoC-hold controller: track a SoC setpoint while connected, discharge to
//! serve the residual demand while islanded.

use serde::{Deserialize, Serialize};

use crate::env::Observation;
use crate::error::Result;
use crate::grid::{dispatch_generators, MicrogridConfig};
use crate::maddpg::mask::power_bounds;
use crate::policy::Policy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RulePolicyConfig {
    pub target_soc: f64,
    pub gain: f64,
}

impl Default for RulePolicyConfig {
    fn default() -> Self {
        Self { target_soc: 0.5, gain: 1.0 }
    }
}

/// Splits `amount` across units in proportion to `headroom`, never
/// exceeding any unit's headroom.
pub fn proportional_split(amount: f64, headroom: &[f64]) -> Vec<f64> {
    let total: f64 = headroom.iter().sum();
    if total <= 0.0 || amount <= 0.0 {
        return vec![0.0; headroom.len()];
    }
    let served = amount.min(total);
    headroom.iter().map(|h| served * h / total).collect()
}

#[derive(Debug, Clone, Default)]
pub struct RulePolicy {
    pub config: RulePolicyConfig,
}

impl RulePolicy {
    pub fn new(config: RulePolicyConfig) -> Self {
        Self { config }
    }

    pub fn decide(&self, soc: &[f64], connected: bool, pv: f64, load: f64, mg: &MicrogridConfig) -> Vec<f64> {
        let dt = mg.dt();
        let bounds: Vec<(f64, f64)> = mg.ess.iter().zip(soc).map(|(e, &s)| power_bounds(e, s, dt)).collect();
        if connected {
            return mg
                .ess
                .iter()
                .zip(soc)
                .zip(&bounds)
                .map(|((e, &s), &(lo, hi))| (self.config.gain * (self.config.target_soc - s) * e.energy_cap / dt).clamp(lo, hi))
                .collect();
        }
        let gen: f64 = dispatch_generators(&mg.generators, load).iter().sum();
        let residual = load - pv - gen;
        if residual > 0.0 {
            let headroom: Vec<f64> = bounds.iter().map(|(lo, _)| -lo).collect();
            proportional_split(residual, &headroom).into_iter().map(|p| -p).collect()
        } else {
            let headroom: Vec<f64> = bounds.iter().map(|(_, hi)| *hi).collect();
            proportional_split(-residual, &headroom)
        }
    }
}

impl Policy for RulePolicy {
    fn name(&self) -> String {
        "rule_based".into()
    }

    fn commands(&mut self, obs: &Observation, config: &MicrogridConfig) -> Result<Vec<f64>> {
        Ok(self.decide(&obs.soc, obs.connected, obs.pv_now.iter().sum(), obs.load_now.iter().sum(), config))
    }
}
