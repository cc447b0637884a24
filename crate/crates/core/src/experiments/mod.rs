//! Scenario configs, synthetic data, runs and their artifacts.

pub mod artifacts;
pub mod config;
pub mod noise;
pub mod scenario;
pub mod verify;

pub use config::{load_scenario, parse_scenario, NoiseSpec, ScenarioConfig, SchemeKind, SchemeSpec};
pub use noise::add_noise;
pub use scenario::{
    execute_scenario, run_scenario, sweep_overlap, synthesize_observation, write_overlap_sweep, RunArtifacts, RunReport,
    RunSummary,
};
