//! Small hand-built microgrids and scenarios with fixed outages.

use microgrid_core::data::{make_forecasts, DaySeries, ForecastModel};
use microgrid_core::env::Scenario;
use microgrid_core::grid::{CostParams, EssSpec, GeneratorSpec, LoadSpec, MicrogridConfig, PvSpec};
use microgrid_core::outage::OutageDraw;
use microgrid_core::rng::SeedStreams;

pub fn ess(id: &str, p: f64, e: f64) -> EssSpec {
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

/// One generator, one PV module and one load around the given ESS.
pub fn microgrid(slots: usize, ess: Vec<EssSpec>, gen: f64, pv: f64, load: f64) -> MicrogridConfig {
    MicrogridConfig {
        slots_per_day: slots,
        initial_soc: 0.5,
        costs: CostParams::default(),
        ess,
        generators: vec![GeneratorSpec { id: "G".into(), p_min: 0.0, p_max: gen }],
        pv: vec![PvSpec { id: "PV".into(), p_max: pv }],
        loads: vec![LoadSpec { id: "L".into(), p_max: load }],
    }
}

pub fn outage(onset: usize, duration: usize) -> OutageDraw {
    OutageDraw { onset_slot: onset, duration_slots: duration, breakpoint: 0 }
}

/// Scenario with perfect forecasts over `horizon` leads.
pub fn scenario(mg: &MicrogridConfig, pv: Vec<f64>, load: Vec<f64>, outage: Option<OutageDraw>, horizon: usize) -> Scenario {
    let day = DaySeries { date: chrono::NaiveDate::from_ymd_opt(2022, 7, 1).unwrap(), pv: vec![pv], load: vec![load] };
    let exact = ForecastModel { pv_std: 0.0, load_std: 0.0 };
    let forecasts = make_forecasts(&day, mg, &exact, horizon, &mut SeedStreams::new(0).stream("unused"));
    Scenario::with_outage(day, forecasts, outage)
}
