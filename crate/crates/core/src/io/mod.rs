//! Configuration and data-file schemas.

pub mod config;
pub mod files;

pub use config::{
    EnvironmentSpec, PipelineConfig, PipelineTestSection, PipelineTrainSection, Scenario,
    ScenarioConfig, TrajectorySpec,
};
