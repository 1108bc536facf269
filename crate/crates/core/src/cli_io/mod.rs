//! Config files, scenario runs and machine-readable output.

mod config;
mod output;
mod run;

pub use config::{
    AtomConfig, BlockConfig, CoalescenceConfig, ExchangeConfig, HarmonicConfig, MapConfig,
    MeasureConfig, MergerAtomConfig, Scenario, ScenarioConfig, ScenarioKind, DEFAULT_CONVERGENCE_PATHS,
    DEFAULT_HORIZON, DEFAULT_N_LIST, DEFAULT_N_MAX, DEFAULT_PATHS, SCHEMA_VERSION,
};
pub use output::{format_f64, to_json_line, RoundTripFormatter};
pub use run::{
    config_hash, exit_code, main_with_args, run_scenario, Cli, ResultRecord, DEFAULT_OUT_DIR,
    ERROR_EXIT, OUT_DIR_ENV,
};
