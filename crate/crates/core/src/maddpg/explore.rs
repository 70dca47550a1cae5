use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Largest magnitude an explored output may take.
pub const PI_LIMIT: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub warmup_steps: u64,
    pub sigma_start: f64,
    pub sigma_end: f64,
    /// Step at which `sigma_end` is reached.
    pub total_steps: u64,
}

impl NoiseSchedule {
    /// Linear decay from `sigma_start` at the end of warmup to `sigma_end`.
    pub fn sigma(&self, step: u64) -> f64 {
        let span = self.total_steps.saturating_sub(self.warmup_steps).max(1) as f64;
        let frac = (step.saturating_sub(self.warmup_steps) as f64 / span).min(1.0);
        self.sigma_start + (self.sigma_end - self.sigma_start) * frac
    }
}

/// Uniform draws during warmup, Gaussian perturbation afterwards.
pub fn explore<R: Rng + ?Sized>(pi: f64, rng: &mut R, step: u64, schedule: &NoiseSchedule) -> f64 {
    if step < schedule.warmup_steps {
        return rng.random_range(-PI_LIMIT..PI_LIMIT);
    }
    let sigma = schedule.sigma(step);
    let z: f64 = StandardNormal.sample(rng);
    (pi + sigma * z).clamp(-PI_LIMIT, PI_LIMIT)
}
