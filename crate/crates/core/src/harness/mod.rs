//! Experiment configuration, presets, and result persistence.

mod config;
mod experiment;
mod presets;

pub use config::{ExperimentConfig, InitialData, InitialSection, ModelSection, OutputSection, Route, RunSection};
pub use experiment::{compare_routes, run_experiment, ResultBundle, RouteComparison, ROUTE_CONSTANT, VERIFY_DT_FACTOR};
pub use presets::{preset, PRESETS, PRESET_PERIODS, PRESET_STEPS_PER_SIGMA};

