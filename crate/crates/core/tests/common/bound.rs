//! Deterministic outage scenarios on one- and two-ESS microgrids, solved by
//! the dynamic-programming reference, the rule-based controller and MADDPG.

use microgrid_core::baselines::{dp_oracle, DpOracleConfig, RulePolicy};
use microgrid_core::env::{Environment, Scenario};
use microgrid_core::grid::MicrogridConfig;
use microgrid_core::maddpg::{Maddpg, SharedEncoder, TrainConfig, Trainer};
use microgrid_core::policy::{run_day, LearnedPolicy, Policy};
use microgrid_core::rng::SeedStreams;

use super::tiny;

pub const SCENARIOS_PER_FAMILY: usize = 5;

fn bump(t: f64, c: f64, w: f64) -> f64 {
    (-(t - c) * (t - c) / (2.0 * w * w)).exp()
}

/// Five scenarios sharing one microgrid with `n_ess` storage units.
pub fn family(n_ess: usize, window: usize) -> (MicrogridConfig, Vec<Scenario>) {
    let ess = [tiny::ess("B1", 1.0, 3.0), tiny::ess("B2", 0.5, 1.5)];
    let mg = tiny::microgrid(96, ess[..n_ess].to_vec(), 0.5, 2.0, 2.5);
    let onsets = [28, 44, 60, 70, 76];
    let scenarios = (0..SCENARIOS_PER_FAMILY)
        .map(|k| {
            let weather = 0.6 + 0.08 * k as f64;
            let size = 0.85 + 0.04 * (k + n_ess) as f64;
            let pv = (0..96)
                .map(|t| {
                    let x = (t as f64 - 24.0) / 56.0;
                    if (0.0..=1.0).contains(&x) { 2.0 * weather * (std::f64::consts::PI * x).sin() } else { 0.0 }
                })
                .collect();
            let load = (0..96)
                .map(|t| {
                    let t = t as f64;
                    (2.5 * size * (0.35 + 0.3 * bump(t, 34.0, 6.0) + 0.5 * bump(t, 78.0, 7.0))).min(2.5)
                })
                .collect();
            let outage = tiny::outage(onsets[k], 12 + (k + n_ess) % 4);
            tiny::scenario(&mg, pv, load, Some(outage), window)
        })
        .collect();
    (mg, scenarios)
}

pub fn day_cost(mg: &MicrogridConfig, sc: &Scenario, window: usize, policy: &mut dyn Policy) -> f64 {
    let mut env = Environment::new(mg.clone(), sc.clone(), window).unwrap();
    run_day(&mut env, policy, 0).unwrap().cost
}

/// Trains MADDPG on the family's scenarios in rotation.
pub fn train_family(mg: &MicrogridConfig, scenarios: &[Scenario], cfg: &TrainConfig, seed: u64) -> LearnedPolicy<Maddpg> {
    let mut init = SeedStreams::new(seed).stream("init");
    let encoder = SharedEncoder::new(cfg.encoder_shape(), mg, cfg.lr_gru, &mut init);
    let learner = Maddpg::new(cfg.learner(), mg.ess.clone(), mg.dt(), cfg.v_dim, &mut init);
    let mut trainer = Trainer::new(cfg.clone(), mg.clone(), learner, encoder, seed);
    for ep in 0..cfg.episodes {
        trainer.run_episode(scenarios[ep % scenarios.len()].clone()).unwrap();
    }
    LearnedPolicy { label: "proposed".into(), encoder: trainer.encoder, learner: trainer.learner }
}

#[derive(Debug, Clone)]
pub struct BoundRow {
    pub n_ess: usize,
    pub scenario: usize,
    pub dp: f64,
    pub delta_grid: f64,
    pub rule: f64,
    /// Seed-averaged.
    pub maddpg: f64,
}

pub fn dp_config() -> DpOracleConfig {
    DpOracleConfig { grid_points: 41, aggregate: false, max_states: 10_000, refine: true }
}

pub fn bound_rows(cfg: &TrainConfig, seeds: &[u64]) -> Vec<BoundRow> {
    let mut rows = Vec::new();
    for n_ess in [1, 2] {
        let (mg, scenarios) = family(n_ess, cfg.window);
        let mut learned = vec![0.0; scenarios.len()];
        for &seed in seeds {
            let mut policy = train_family(&mg, &scenarios, cfg, seed);
            for (k, sc) in scenarios.iter().enumerate() {
                learned[k] += day_cost(&mg, sc, cfg.window, &mut policy) / seeds.len() as f64;
            }
        }
        for (k, sc) in scenarios.iter().enumerate() {
            let sol = dp_oracle(&mg, sc, &dp_config()).unwrap();
            rows.push(BoundRow {
                n_ess,
                scenario: k,
                dp: sol.cost,
                delta_grid: sol.delta_grid.unwrap_or(0.0),
                rule: day_cost(&mg, sc, cfg.window, &mut RulePolicy::default()),
                maddpg: learned[k],
            });
        }
    }
    rows
}
