//! Radial power flow over the distribution feeder, used to audit dispatches
//! after the fact. Reactive injections are zero apart from explicit base-case
//! studies.

pub mod audit;
pub mod sweep;
pub mod topology;

pub use audit::{bus_injections, check_dispatch, slack_for, FeasibilityReport, FlowLimits, VoltageViolation};
pub use sweep::{solve_bfs, PowerFlowSolution};
pub use topology::{parse_branches, parse_bus_loads, Branch, Bus, DeviceBuses, FeederTopology, RootedTree};
