//! Reference controllers the learned policy is compared against.

pub mod ddpg;
pub mod dp;
pub mod rule;

pub use ddpg::DdpgSingle;
pub use dp::{dp_oracle, DpOracleConfig, DpSolution, SchedulePolicy};
pub use rule::{RulePolicy, RulePolicyConfig};
