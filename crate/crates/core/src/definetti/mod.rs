//! Large-population limit of the dice process and its moment dual.

mod convergence;
mod dual;
mod sde;

pub use convergence::{
    convergence_check, initial_configuration, ConvergenceEntry, ConvergenceReport, SLOPE_RANGE,
};
pub use dual::{
    dual_generator_apply, dual_rates, generator_apply, moment_duality_check, simulate_dual,
    DualChain, DualPath, DualityReport,
};
pub use sde::{
    coordination_jump, drift_flow, frequency_path, mean_frequency, simulate_frequency_sde,
    FrequencyPath, FrequencyState,
};
