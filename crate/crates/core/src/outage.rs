//! Storm outage model: bell-shaped disconnection probabilities over the day
//! at several grid-tie breakpoints, one sampled outage per episode.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageParams {
    /// Disconnection probability at the peak slot.
    pub peak_prob: f64,
    /// Bell width in slots.
    pub width_slots: f64,
    /// Primary breakpoint plus shifted companions.
    pub breakpoints: usize,
    /// Companion peaks are shifted uniformly within +-this many slots.
    pub max_shift_slots: i64,
    pub min_duration: usize,
    pub max_duration: usize,
}

impl Default for OutageParams {
    fn default() -> Self {
        Self {
            peak_prob: 0.3,
            width_slots: 4.0,
            breakpoints: 4,
            max_shift_slots: 3,
            min_duration: 12,
            max_duration: 15,
        }
    }
}

impl OutageParams {
    pub fn validate(&self, errs: &mut Vec<String>) {
        if !(0.0..=1.0).contains(&self.peak_prob) {
            errs.push("outage.peak_prob must lie in [0, 1]".into());
        }
        if !(self.width_slots > 0.0) {
            errs.push("outage.width_slots must be > 0".into());
        }
        if self.breakpoints == 0 {
            errs.push("outage.breakpoints must be >= 1".into());
        }
        if self.max_shift_slots < 0 {
            errs.push("outage.max_shift_slots must be >= 0".into());
        }
        if self.min_duration == 0 || self.min_duration > self.max_duration {
            errs.push("outage durations need 1 <= min_duration <= max_duration".into());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub peak_slot: i64,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisconnectionProfile {
    pub peak_prob: f64,
    pub width_slots: f64,
    /// Index 0 is the primary breakpoint.
    pub breakpoints: Vec<Breakpoint>,
}

/// Gaussian bell in slot index.
pub fn bell(peak_prob: f64, width: f64, peak_slot: i64, t: usize) -> f64 {
    let d = t as f64 - peak_slot as f64;
    peak_prob * (-(d * d) / (2.0 * width * width)).exp()
}

impl DisconnectionProfile {
    /// Profile with explicitly placed breakpoint peaks.
    pub fn with_peaks(slots: usize, peak_prob: f64, width_slots: f64, peaks: &[i64]) -> Self {
        let breakpoints = peaks
            .iter()
            .map(|&p| Breakpoint {
                peak_slot: p,
                probs: (0..slots).map(|t| bell(peak_prob, width_slots, p, t)).collect(),
            })
            .collect();
        Self { peak_prob, width_slots, breakpoints }
    }

    /// Profile that never trips.
    pub fn calm(slots: usize) -> Self {
        Self::with_peaks(slots, 0.0, 1.0, &[0])
    }

    pub fn slots(&self) -> usize {
        self.breakpoints.first().map_or(0, |b| b.probs.len())
    }

    pub fn primary_peak(&self) -> i64 {
        self.breakpoints[0].peak_slot
    }

    /// Probability that at least one breakpoint trips in slot `t`.
    pub fn combined(&self, t: usize) -> f64 {
        1.0 - self.breakpoints.iter().map(|b| 1.0 - b.probs[t]).product::<f64>()
    }

    /// Probability that an outage starts at some slot of the day.
    pub fn outage_probability(&self) -> f64 {
        1.0 - (0..self.slots()).map(|t| 1.0 - self.combined(t)).product::<f64>()
    }
}

/// Primary peak uniform over the day; companions shifted uniformly within
/// `max_shift_slots`.
pub fn build_profile<R: Rng + ?Sized>(rng: &mut R, slots_per_day: usize, params: &OutageParams) -> Result<DisconnectionProfile> {
    if !(params.peak_prob > 0.0 && params.peak_prob <= 1.0) {
        return Err(Error::InvalidInput(format!("peak_prob {} not in (0, 1]", params.peak_prob)));
    }
    if !(params.width_slots > 0.0) || slots_per_day == 0 {
        return Err(Error::InvalidInput("width and day length must be positive".into()));
    }
    let primary = rng.random_range(0..slots_per_day) as i64;
    let mut peaks = vec![primary];
    for _ in 1..params.breakpoints {
        let shift = rng.random_range(-params.max_shift_slots..=params.max_shift_slots);
        peaks.push(primary + shift);
    }
    Ok(DisconnectionProfile::with_peaks(slots_per_day, params.peak_prob, params.width_slots, &peaks))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutageDraw {
    pub onset_slot: usize,
    pub duration_slots: usize,
    pub breakpoint: usize,
}

impl OutageDraw {
    /// Whether slot `t` falls inside the outage.
    pub fn covers(&self, t: usize) -> bool {
        t >= self.onset_slot && t < self.onset_slot + self.duration_slots
    }
}

/// Walks the day drawing one uniform number per breakpoint per slot; the
/// first draw below its breakpoint's probability starts the outage.
pub fn sample_outage<R: Rng + ?Sized>(
    rng: &mut R,
    profile: &DisconnectionProfile,
    params: &OutageParams,
) -> Option<OutageDraw> {
    for t in 0..profile.slots() {
        for (b, bp) in profile.breakpoints.iter().enumerate() {
            let u: f64 = rng.random();
            if u < bp.probs[t] {
                let duration_slots = rng.random_range(params.min_duration..=params.max_duration);
                return Some(OutageDraw { onset_slot: t, duration_slots, breakpoint: b });
            }
        }
    }
    None
}

/// Slots left until the primary peak; zero once the outage has begun.
pub fn counter(t: usize, primary_peak: i64, outage_begun: bool) -> usize {
    if outage_begun {
        0
    } else {
        (primary_peak - t as i64).max(0) as usize
    }
}
